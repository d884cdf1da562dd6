// Synthetic flicker datasets: in-memory generation, on-disk layout and the
// manifest that ties frames, flows and schedules together.
//
// <root>/manifest.json
// <root>/<split>/<id>/original/%05d.png
// <root>/<split>/<id>/processed/%05d.png
// <root>/<split>/<id>/ideal/%05d.png
// <root>/<split>/<id>/flow/flow_t{t}_ref{ref}.flo
#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "vtc/config.hpp"
#include "vtc/flo_io.hpp"
#include "vtc/image_io.hpp"
#include "vtc/synthgen.hpp"
#include "vtc/training.hpp"

namespace vtc {

struct SynthTaskSpec {
  int train_sequences = 4;
  int eval_sequences = 2;
  int frames = 12;
  int height = 48;
  int width = 48;
  TextureKind texture = TextureKind::noise;
  int max_shift = 2;
  FlickerMode flicker = FlickerMode::brightness_sinusoid;
  double amplitude = 0.2;
  double period = 4.0;
  bool random_phase = true;
  std::uint64_t seed = 0;
};

inline SynthTaskSpec synth_task_from_config(const nlohmann::json& cfg) {
  return config_get(
      [&] {
        const auto& s = cfg.at("synth");
        SynthTaskSpec t;
        t.train_sequences = s.at("train_sequences").get<int>();
        t.eval_sequences = s.at("eval_sequences").get<int>();
        t.frames = s.at("frames").get<int>();
        t.height = s.at("height").get<int>();
        t.width = s.at("width").get<int>();
        t.texture = parse_texture(s.at("texture").get<std::string>());
        t.max_shift = s.at("max_shift").get<int>();
        t.flicker = parse_flicker_mode(s.at("flicker_mode").get<std::string>());
        t.amplitude = s.at("amplitude").get<double>();
        t.period = s.at("period").get<double>();
        t.random_phase = s.at("random_phase").get<bool>();
        t.seed = cfg.at("seed").get<std::uint64_t>();
        if (t.train_sequences < 0 || t.eval_sequences < 0) throw std::invalid_argument("sequence counts must be >= 0");
        if (t.max_shift < 0) throw std::invalid_argument("max_shift must be >= 0");
        return t;
      },
      "synth");
}

struct SynthVideo {
  std::string id;
  std::string split;
  MotionSpec motion;
  FlickerSpec flicker;
  SyntheticSequence sequence;
  FlickerResult flickered;
  FrameSequence<float> ideal;

  VideoSample sample() const { return {id, sequence.frames, flickered.processed, FlowProvider::analytic(sequence.motion)}; }
};

// Integer-translation sequences with a seeded flicker schedule per video.
inline SynthVideo make_synth_video(const SynthTaskSpec& task, const std::string& split, int index) {
  Rng rng(task.seed * 1000003ull + (split == "eval" ? 500009ull : 0ull) + static_cast<std::uint64_t>(index));
  SynthVideo v;
  v.split = split;
  v.id = split + "_" + detail::format_index("%03d", index);
  v.motion.texture = task.texture;
  v.motion.seed = rng.next();
  v.motion.frames = task.frames;
  v.motion.height = task.height;
  v.motion.width = task.width;
  v.motion.dx = rng.uniform_int(-task.max_shift, task.max_shift);
  v.motion.dy = rng.uniform_int(-task.max_shift, task.max_shift);
  v.flicker.mode = task.flicker;
  v.flicker.amplitude = task.amplitude;
  v.flicker.period = task.period;
  v.flicker.phase = task.random_phase ? rng.uniform(0.0, 2.0 * std::numbers::pi) : 0.0;
  v.flicker.seed = rng.next();
  v.sequence = generate_sequence(v.motion);
  v.flickered = apply_flicker(v.sequence.frames, v.flicker);
  v.ideal = ideal_output(v.sequence.frames, v.flickered.schedule);
  return v;
}

struct SynthDataset {
  std::vector<SynthVideo> train;
  std::vector<SynthVideo> eval;

  std::vector<VideoSample> train_samples() const {
    std::vector<VideoSample> out;
    for (const auto& v : train) out.push_back(v.sample());
    return out;
  }
  std::vector<VideoSample> eval_samples() const {
    std::vector<VideoSample> out;
    for (const auto& v : eval) out.push_back(v.sample());
    return out;
  }
};

inline SynthDataset make_synth_dataset(const SynthTaskSpec& task) {
  SynthDataset d;
  for (int i = 0; i < task.train_sequences; ++i) d.train.push_back(make_synth_video(task, "train", i));
  for (int i = 0; i < task.eval_sequences; ++i) d.eval.push_back(make_synth_video(task, "eval", i));
  return d;
}

inline nlohmann::json to_json(const SynthVideo& v) {
  nlohmann::json transforms = nlohmann::json::array();
  for (const auto& t : v.sequence.motion.transforms) transforms.push_back(to_json(t));
  nlohmann::json schedule = nlohmann::json::array();
  for (const auto& f : v.flickered.schedule) schedule.push_back(to_json(f));
  return {{"id", v.id},
          {"split", v.split},
          {"frames", v.motion.frames},
          {"height", v.motion.height},
          {"width", v.motion.width},
          {"original", v.split + "/" + v.id + "/original"},
          {"processed", v.split + "/" + v.id + "/processed"},
          {"ideal", v.split + "/" + v.id + "/ideal"},
          {"flow", v.split + "/" + v.id + "/flow"},
          {"motion", {{"dx", v.motion.dx}, {"dy", v.motion.dy}, {"texture_seed", v.motion.seed}, {"transforms", transforms}}},
          {"flicker",
           {{"mode", to_string(v.flicker.mode)},
            {"amplitude", v.flicker.amplitude},
            {"period", v.flicker.period},
            {"phase", v.flicker.phase},
            {"seed", v.flicker.seed},
            {"schedule", schedule}}}};
}

// Writes frames, flows for (t, t-1), (t, 1) and (t, t+1) plus (t+1, t), and the manifest.
inline void write_synth_dataset(const SynthDataset& d, const std::filesystem::path& root, const std::string& pattern,
                                int bit_depth, const nlohmann::json& stamp) {
  nlohmann::json seqs = nlohmann::json::array();
  for (const auto* split : {&d.train, &d.eval}) {
    for (const auto& v : *split) {
      const auto dir = root / v.split / v.id;
      save_frame_sequence(v.sequence.frames, dir / "original", pattern, bit_depth);
      save_frame_sequence(v.flickered.processed, dir / "processed", pattern, bit_depth);
      save_frame_sequence(v.ideal, dir / "ideal", pattern, bit_depth);
      std::filesystem::create_directories(dir / "flow");
      const int T = v.sequence.frames.length();
      for (int t = 1; t <= T; ++t)
        for (int ref = 1; ref <= T; ++ref) {
          if (t == ref) continue;
          if (ref == t - 1 || ref == t + 1 || ref == 1) {
            write_flo(v.sequence.motion.flow(t, ref), dir / "flow" / FlowProvider::flow_filename(t, ref));
          }
        }
      seqs.push_back(to_json(v));
    }
  }
  nlohmann::json manifest = stamp;
  manifest["pattern"] = pattern;
  manifest["sequences"] = seqs;
  write_text(root / "manifest.json", manifest.dump(2) + "\n");
}

struct ManifestEntry {
  std::string id;
  std::string split;
  std::filesystem::path original, processed, ideal, flow;
  AnalyticMotion motion;
};

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& root, std::string* pattern = nullptr) {
  const auto path = root / "manifest.json";
  std::ifstream f(path);
  if (!f) throw IoError("missing dataset manifest " + path.string());
  const auto j = nlohmann::json::parse(f);
  if (pattern) *pattern = j.value("pattern", std::string("%05d.png"));
  std::vector<ManifestEntry> out;
  for (const auto& s : j.at("sequences")) {
    ManifestEntry e;
    e.id = s.at("id").get<std::string>();
    e.split = s.at("split").get<std::string>();
    e.original = root / s.at("original").get<std::string>();
    e.processed = root / s.at("processed").get<std::string>();
    e.ideal = root / s.value("ideal", std::string());
    e.flow = root / s.at("flow").get<std::string>();
    e.motion.height = s.at("height").get<int>();
    e.motion.width = s.at("width").get<int>();
    for (const auto& t : s.at("motion").at("transforms")) e.motion.transforms.push_back(affine_from_json(t));
    out.push_back(std::move(e));
  }
  return out;
}

inline FlowProvider provider_for(const std::string& backend, const ManifestEntry& e, const nlohmann::json& cfg) {
  if (backend == "analytic") return FlowProvider::analytic(e.motion);
  if (backend == "file") return FlowProvider::files(e.flow, occlusion_from_config(cfg));
  if (backend == "estimated") return FlowProvider::estimated(estimator_from_config(cfg), occlusion_from_config(cfg));
  throw ConfigError("unknown flow backend: " + backend);
}

inline std::vector<VideoSample> load_samples(const std::filesystem::path& root, const std::string& split,
                                             const nlohmann::json& cfg) {
  std::string pattern;
  const auto entries = read_manifest(root, &pattern);
  const auto backend = cfg.at("flow").at("backend").get<std::string>();
  std::vector<VideoSample> out;
  for (const auto& e : entries) {
    if (!split.empty() && e.split != split) continue;
    out.push_back({e.id, load_frame_sequence(e.original, pattern), load_frame_sequence(e.processed, pattern),
                   provider_for(backend, e, cfg)});
  }
  return out;
}

}  // namespace vtc
