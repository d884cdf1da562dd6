// Command-line front end: synth, train, process, eval, sweep, report.
// Exit codes: 0 success, 1 runtime failure, 2 configuration/usage error.
#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vtc/config.hpp"
#include "vtc/dataset.hpp"
#include "vtc/evaluation.hpp"
#include "vtc/image_io.hpp"
#include "vtc/training.hpp"
#include "vtc/transform_net.hpp"

namespace vtc::cli {

namespace fs = std::filesystem;

struct CommonArgs {
  std::string config;
  std::vector<std::string> overrides;
  bool dump = false;
};

inline nlohmann::json run_stamp(const nlohmann::json& cfg, const std::string& command) {
  return {{"command", command}, {"config_hash", config_hash(cfg)}, {"seed", cfg.at("seed")}, {"config", cfg}};
}

inline void write_stamp(const fs::path& dir, const nlohmann::json& cfg, const std::string& command,
                        const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json s = run_stamp(cfg, command);
  for (auto it = extra.begin(); it != extra.end(); ++it) s[it.key()] = it.value();
  write_text(dir / "run.json", s.dump(2) + "\n");
}

inline PerceptualMetric<float> metric_from_config(const nlohmann::json& cfg) {
  return PerceptualMetric<float>{FeatureExtractor<float>(extractor_from_config(cfg.at("metric")))};
}

inline int cmd_synth(const nlohmann::json& cfg, const fs::path& out, std::ostream& os) {
  const auto task = synth_task_from_config(cfg);
  const auto pattern = cfg.at("io").at("pattern").get<std::string>();
  const int bits = cfg.at("synth").at("bit_depth").get<int>();
  const auto d = make_synth_dataset(task);
  write_synth_dataset(d, out, pattern, bits, run_stamp(cfg, "synth"));
  os << "wrote " << d.train.size() << " train and " << d.eval.size() << " eval sequences to " << out.string() << "\n";
  return 0;
}

inline int cmd_train(const nlohmann::json& cfg, const fs::path& data, const fs::path& out,
                     const std::optional<fs::path>& resume, std::ostream& os) {
  TrainingConfig tc = training_from_config(cfg);
  tc.checkpoint_dir = out;
  tc.log_path = out / "train_log.jsonl";
  auto samples = load_samples(data, "train", cfg);
  if (samples.empty()) samples = load_samples(data, "", cfg);
  fs::create_directories(out);
  write_stamp(out, cfg, "train");
  const auto r = train(tc, samples, resume, &os);
  os << "trained " << r.iterations << " iterations; checkpoint " << (out / "final.vtc").string() << "\n";
  return 0;
}

inline int cmd_process(const nlohmann::json& cfg, const fs::path& checkpoint, const fs::path& original,
                       const fs::path& processed, const fs::path& out, std::ostream& os) {
  const auto pattern = cfg.at("io").at("pattern").get<std::string>();
  const int bits = cfg.at("io").at("bit_depth").get<int>();
  const auto params = load_params<float>(checkpoint);
  const auto I = load_frame_sequence(original, pattern);
  const auto P = load_frame_sequence(processed, pattern);
  auto O = process_video(params, I, P);
  for (int t = 1; t <= O.length(); ++t) clamp_unit(O.at(t));
  save_frame_sequence(O, out, pattern, bits);
  os << "wrote " << O.length() << " frames to " << out.string() << "\n";
  return 0;
}

struct EvalArgs {
  std::string output, processed, original, flow_dir, data, sequence, report;
};

inline int cmd_eval(const nlohmann::json& cfg, const EvalArgs& a, std::ostream& os) {
  const auto pattern = cfg.at("io").at("pattern").get<std::string>();
  const auto backend = cfg.at("flow").at("backend").get<std::string>();
  fs::path processed_dir = a.processed, original_dir = a.original;
  std::optional<FlowProvider> provider;
  if (!a.data.empty()) {
    std::string manifest_pattern;
    const auto entries = read_manifest(a.data, &manifest_pattern);
    const ManifestEntry* hit = nullptr;
    for (const auto& e : entries)
      if (e.id == a.sequence) hit = &e;
    if (!hit) throw ConfigError("sequence '" + a.sequence + "' not in manifest " + a.data);
    if (processed_dir.empty()) processed_dir = hit->processed;
    if (original_dir.empty()) original_dir = hit->original;
    provider = provider_for(backend, *hit, cfg);
  } else if (backend == "file") {
    if (a.flow_dir.empty()) throw ConfigError("flow.backend=file needs --flow-dir");
    provider = FlowProvider::files(a.flow_dir, occlusion_from_config(cfg));
  } else if (backend == "estimated") {
    provider = FlowProvider::estimated(estimator_from_config(cfg), occlusion_from_config(cfg));
  } else {
    throw ConfigError("flow.backend=" + backend + " needs --data and --sequence");
  }
  if (processed_dir.empty()) throw ConfigError("eval needs --processed (or --data/--sequence)");
  const auto O = load_frame_sequence(a.output, pattern);
  const auto P = load_frame_sequence(processed_dir, pattern);
  std::optional<FrameSequence<float>> I;
  if (!original_dir.empty()) I = load_frame_sequence(original_dir, pattern);
  auto report = evaluate(O, P, *provider, metric_from_config(cfg), I ? &*I : nullptr,
                         a.sequence.empty() ? fs::path(a.output).filename().string() : a.sequence);
  report.extra["config_hash"] = config_hash(cfg);
  report.extra["seed"] = cfg.at("seed");
  save_report(report, a.report);
  os << "E_warp: " << format_number(*report.warp_error) << "\nD_perceptual: " << format_number(*report.perceptual_distance)
     << "\n";
  return 0;
}

inline nlohmann::json sweep_json(const std::vector<SweepRow>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    j.push_back({{"lambda_t", r.lambda_t},
                 {"lambda_p", r.lambda_p},
                 {"r", r.ratio},
                 {"E_warp", r.warp_error},
                 {"D_perceptual", r.perceptual_distance}});
  }
  return j;
}

inline std::string sweep_plot(const nlohmann::json& rows) {
  std::vector<ScatterPoint> pts;
  for (const auto& r : rows) {
    pts.push_back({r.at("E_warp").get<double>(), r.at("D_perceptual").get<double>(),
                   "r=" + format_number(r.at("r").get<double>())});
  }
  return scatter_svg(pts, "E_warp", "D_perceptual");
}

inline int cmd_sweep(const nlohmann::json& cfg, const fs::path& data, const fs::path& out, std::ostream& os) {
  SweepSpec spec;
  spec.base = training_from_config(cfg);
  spec.base.checkpoint_dir = out;
  spec.pairs = sweep_pairs_from_config(cfg);
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const auto train_set = load_samples(data, "train", cfg);
  const auto eval_set = load_samples(data, "eval", cfg);
  fs::create_directories(out);
  write_stamp(out, cfg, "sweep");
  const auto rows = run_sweep(spec, train_set, eval_set, metric_from_config(cfg), &os);
  const auto j = sweep_json(rows);
  write_text(out / "sweep.tsv", render_sweep_table(rows));
  write_text(out / "sweep.json", nlohmann::json{{"config_hash", config_hash(cfg)}, {"seed", cfg.at("seed")}, {"rows", j}}.dump(2) + "\n");
  write_text(out / "sweep.svg", sweep_plot(j));
  for (const auto& r : rows)
    for (const auto& rep : r.reports) save_report(rep, out / ("r_" + format_number(r.ratio)) / (rep.sequence_id + ".txt"));
  os << render_sweep_table(rows);
  return 0;
}

// Renders a sweep directory or a set of report JSON files.
inline int cmd_report(const std::vector<std::string>& inputs, const fs::path& out, std::ostream& os) {
  if (inputs.empty()) throw ConfigError("report needs at least one input");
  std::ostringstream table;
  nlohmann::json rows = nlohmann::json::array();
  bool sweep = false;
  for (const auto& in : inputs) {
    fs::path p = in;
    if (fs::is_directory(p)) p /= "sweep.json";
    std::ifstream f(p);
    if (!f) throw IoError("cannot read " + p.string());
    const auto j = nlohmann::json::parse(f);
    if (j.contains("rows")) {
      sweep = true;
      for (const auto& r : j.at("rows")) rows.push_back(r);
    } else {
      rows.push_back({{"sequence", j.value("sequence_id", p.stem().string())},
                      {"E_warp", j.at("E_warp")},
                      {"D_perceptual", j.at("D_perceptual")}});
    }
  }
  if (sweep) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return a.at("r").template get<double>() < b.at("r").template get<double>(); });
    table << "| lambda_t | lambda_p | r | E_warp | D_perceptual |\n|---|---|---|---|---|\n";
    for (const auto& r : rows) {
      table << "| " << format_number(r.at("lambda_t").get<double>()) << " | " << format_number(r.at("lambda_p").get<double>())
            << " | " << format_number(r.at("r").get<double>()) << " | " << format_number(r.at("E_warp").get<double>())
            << " | " << format_number(r.at("D_perceptual").get<double>()) << " |\n";
    }
  } else {
    double e = 0.0, d = 0.0;
    table << "| sequence | E_warp | D_perceptual |\n|---|---|---|\n";
    for (const auto& r : rows) {
      table << "| " << r.at("sequence").get<std::string>() << " | " << format_number(r.at("E_warp").get<double>()) << " | "
            << format_number(r.at("D_perceptual").get<double>()) << " |\n";
      e += r.at("E_warp").get<double>();
      d += r.at("D_perceptual").get<double>();
    }
    table << "| mean | " << format_number(e / rows.size()) << " | " << format_number(d / rows.size()) << " |\n";
  }
  if (!out.empty()) {
    fs::create_directories(out);
    write_text(out / "summary.md", table.str());
    if (sweep) write_text(out / "tradeoff.svg", sweep_plot(rows));
  }
  os << table.str();
  return 0;
}

inline int run(int argc, const char* const* argv, std::ostream& os = std::cout, std::ostream& es = std::cerr) {
  CLI::App app{"Temporal consistency for per-frame processed video"};
  app.require_subcommand(1);
  CommonArgs common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config, "JSON config file");
    sub->add_option("-s,--set", common.overrides, "override, key.path=value")->take_all()->allow_extra_args(true);
    sub->add_flag("--dump-config", common.dump, "print the effective config and exit");
  };

  std::string out, data, checkpoint, original, processed, resume;
  EvalArgs ea;
  std::vector<std::string> report_inputs;

  auto* synth = app.add_subcommand("synth", "generate a synthetic flicker dataset");
  add_common(synth);
  synth->add_option("-o,--out", out, "dataset directory");

  auto* trn = app.add_subcommand("train", "train a model on a dataset");
  add_common(trn);
  trn->add_option("-d,--data", data, "dataset directory (with manifest.json)");
  trn->add_option("-o,--out", out, "run directory");
  trn->add_option("--resume", resume, "checkpoint to resume from");

  auto* proc = app.add_subcommand("process", "run a trained model over a video");
  add_common(proc);
  proc->add_option("--checkpoint", checkpoint, "model checkpoint");
  proc->add_option("--original", original, "original frame directory");
  proc->add_option("--processed", processed, "processed frame directory");
  proc->add_option("-o,--out", out, "output frame directory");

  auto* ev = app.add_subcommand("eval", "compute warping error and perceptual distance");
  add_common(ev);
  ev->add_option("--output", ea.output, "frames to evaluate");
  ev->add_option("--processed", ea.processed, "per-frame processed frames");
  ev->add_option("--original", ea.original, "original frames (flow source)");
  ev->add_option("--flow-dir", ea.flow_dir, "directory of .flo files");
  ev->add_option("-d,--data", ea.data, "dataset directory");
  ev->add_option("--sequence", ea.sequence, "sequence id in the dataset manifest");
  ev->add_option("-r,--report", ea.report, "report path");

  auto* sw = app.add_subcommand("sweep", "train and evaluate one model per (lambda_t, lambda_p)");
  add_common(sw);
  sw->add_option("-d,--data", data, "dataset directory");
  sw->add_option("-o,--out", out, "sweep directory");

  auto* rep = app.add_subcommand("report", "render tables and plots from sweep or report outputs");
  add_common(rep);
  rep->add_option("inputs", report_inputs, "sweep directories or report .json files");
  rep->add_option("-o,--out", out, "directory for summary.md / tradeoff.svg");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, os, es);
    return code == 0 ? 0 : 2;
  }

  auto need = [](const std::string& v, const char* flag) {
    if (v.empty()) throw ConfigError(std::string("missing required option ") + flag);
  };
  try {
    const auto cfg = load_config(common.config, common.overrides);
    if (common.dump) {
      os << cfg.dump(2) << "\n";
      return 0;
    }
    if (*synth) {
      need(out, "--out");
      return cmd_synth(cfg, out, os);
    }
    if (*trn) {
      need(data, "--data");
      need(out, "--out");
      return cmd_train(cfg, data, out, resume.empty() ? std::nullopt : std::optional<fs::path>(resume), os);
    }
    if (*proc) {
      need(checkpoint, "--checkpoint");
      need(original, "--original");
      need(processed, "--processed");
      need(out, "--out");
      return cmd_process(cfg, checkpoint, original, processed, out, os);
    }
    if (*ev) {
      need(ea.output, "--output");
      need(ea.report, "--report");
      if (!ea.data.empty()) need(ea.sequence, "--sequence");
      return cmd_eval(cfg, ea, os);
    }
    if (*sw) {
      need(data, "--data");
      need(out, "--out");
      return cmd_sweep(cfg, data, out, os);
    }
    if (*rep) return cmd_report(report_inputs, out, os);
  } catch (const ConfigError& e) {
    es << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    es << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace vtc::cli
