// Unrolled recurrent training, checkpoints and the loss-ratio sweep.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "vtc/evaluation.hpp"
#include "vtc/flow.hpp"
#include "vtc/optimizer.hpp"
#include "vtc/perception.hpp"
#include "vtc/rng.hpp"
#include "vtc/temporal_losses.hpp"
#include "vtc/transform_net.hpp"
#include "vtc/warping.hpp"

namespace vtc {

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainingConfig {
  int unroll = 10;
  int batch_size = 1;
  int crop = 0;  // square crop side; 0 = full frame
  int iterations = 1000;
  std::uint64_t seed = 0;
  AdamConfig adam{};
  LossWeights weights{};
  double alpha = 50.0;
  bool truncate_previous = false;  // treat O_{t-1} and O_1 as constants inside the losses
  NetworkConfig network{};
  ExtractorSpec perception{};
  int log_every = 50;
  int checkpoint_every = 0;  // 0 = final only
  std::filesystem::path checkpoint_dir;
  std::filesystem::path log_path;
  std::string config_hash;

  void validate() const {
    if (unroll < 2) throw std::invalid_argument("training: unroll length must be >= 2");
    if (batch_size < 1) throw std::invalid_argument("training: batch size must be >= 1");
    if (crop < 0 || (crop > 0 && crop < kMinFrameSide)) throw std::invalid_argument("training: crop must be 0 or >= 8");
    if (iterations < 0) throw std::invalid_argument("training: iterations must be >= 0");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("training: alpha must be > 0");
    if (log_every < 1) throw std::invalid_argument("training: log_every must be >= 1");
    if (checkpoint_every < 0) throw std::invalid_argument("training: checkpoint_every must be >= 0");
    adam.validate();
    weights.validate();
    network.validate();
  }
};

// One aligned video with its flow source.
struct VideoSample {
  std::string id;
  FrameSequence<float> original;
  FrameSequence<float> processed;
  FlowProvider flow;
};

// A T-frame window with the flows the losses need.
struct Window {
  std::vector<Tensor<float>> original;
  std::vector<Tensor<float>> processed;
  std::vector<FlowField<float>> to_previous;  // [k] is flow (k+2) => (k+1)
  std::vector<FlowField<float>> to_first;     // [k] is flow (k+2) => 1
};

namespace detail {

inline Tensor<float> crop_tensor(const Tensor<float>& t, int y0, int x0, int h, int w) {
  if (y0 == 0 && x0 == 0 && h == t.height() && w == t.width()) return t;
  Tensor<float> out(Shape{t.channels(), h, w});
  for (int c = 0; c < t.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out(c, y, x) = t(c, y0 + y, x0 + x);
  return out;
}

}  // namespace detail

struct WindowSpec {
  std::size_t sequence = 0;
  int first = 1;  // 1-based
  int y = 0, x = 0, size_y = 0, size_x = 0;
};

// Uniform window start that keeps first + T - 1 <= length, plus an optional crop.
inline WindowSpec sample_window(Rng& rng, std::size_t sequences, const std::vector<int>& lengths, int height, int width,
                                int unroll, int crop) {
  WindowSpec w;
  w.sequence = sequences > 1 ? static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(sequences) - 1)) : 0;
  const int len = lengths.at(w.sequence);
  if (len < unroll) throw std::invalid_argument("sample_window: sequence shorter than unroll length");
  w.first = rng.uniform_int(1, len - unroll + 1);
  w.size_y = crop > 0 ? std::min(crop, height) : height;
  w.size_x = crop > 0 ? std::min(crop, width) : width;
  w.y = rng.uniform_int(0, height - w.size_y);
  w.x = rng.uniform_int(0, width - w.size_x);
  return w;
}

// Flows keyed by (sequence, t, ref); filled lazily.
class FlowCache {
 public:
  const FlowField<float>& get(const VideoSample& s, std::size_t index, int t, int ref) {
    const auto key = std::make_tuple(index, t, ref);
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, s.flow.backward_flow(s.original, t, ref)).first;
    return it->second;
  }

 private:
  std::map<std::tuple<std::size_t, int, int>, FlowField<float>> cache_;
};

inline Window make_window(const VideoSample& s, std::size_t index, const WindowSpec& ws, int unroll, FlowCache* cache = nullptr) {
  if (ws.first < 1 || ws.first + unroll - 1 > s.original.length()) {
    throw std::out_of_range("window crosses the end of sequence " + s.id);
  }
  FlowCache local;
  FlowCache& fc = cache ? *cache : local;
  Window w;
  for (int k = 0; k < unroll; ++k) {
    const int t = ws.first + k;
    w.original.push_back(detail::crop_tensor(s.original.at(t), ws.y, ws.x, ws.size_y, ws.size_x));
    w.processed.push_back(detail::crop_tensor(s.processed.at(t), ws.y, ws.x, ws.size_y, ws.size_x));
    if (k == 0) continue;
    w.to_previous.emplace_back(detail::crop_tensor(fc.get(s, index, t, t - 1).uv, ws.y, ws.x, ws.size_y, ws.size_x));
    w.to_first.emplace_back(detail::crop_tensor(fc.get(s, index, t, ws.first).uv, ws.y, ws.x, ws.size_y, ws.size_x));
  }
  return w;
}

inline Window make_window(const VideoSample& s, int first, int unroll) {
  WindowSpec ws;
  ws.first = first;
  ws.size_y = s.original.height();
  ws.size_x = s.original.width();
  return make_window(s, 0, ws, unroll);
}

struct LossSettings {
  LossWeights weights{};
  double alpha = 50.0;
  bool truncate_previous = false;
};

struct UnrollResult {
  // Per-element means, the quantities the optimizer sees.
  double perceptual = 0.0;
  double short_term = 0.0;
  double long_term = 0.0;
  double total = 0.0;
  // Raw sums.
  double perceptual_sum = 0.0;
  double short_term_sum = 0.0;
  double long_term_sum = 0.0;
  std::vector<Tensor<float>> outputs;
};

// Forward pass over the window, the three losses, and backward into the
// parameter gradients (accumulated; the caller zeroes them). loss_scale
// multiplies the differentiated total, e.g. 1/batch.
template <class T>
UnrollResult unroll_window(const ModelParameters<T>& params, const LossSettings& ls, const Window& w,
                           const FeatureExtractor<T>& fe, double loss_scale = 1.0, bool run_backward = true) {
  const int n = static_cast<int>(w.processed.size());
  if (n < 2) throw std::invalid_argument("unroll_window: window needs at least 2 frames");
  if (static_cast<int>(w.original.size()) != n || static_cast<int>(w.to_previous.size()) != n - 1 ||
      static_cast<int>(w.to_first.size()) != n - 1) {
    throw std::invalid_argument("unroll_window: inconsistent window");
  }
  auto as_t = [](const Tensor<float>& x) {
    if constexpr (std::is_same_v<T, float>) return x;
    else return x.template cast<T>();
  };
  std::vector<Tensor<T>> I, P;
  for (int k = 0; k < n; ++k) {
    I.push_back(as_t(w.original[k]));
    P.push_back(as_t(w.processed[k]));
  }

  std::vector<Var<T>> outputs{Var<T>::constant(P[0])};
  auto state = init_state<T>(params.config(), P[0].height(), P[0].width());
  for (int k = 1; k < n; ++k) {
    const Var<T> prev = ls.truncate_previous ? Var<T>::constant(outputs.back().value()) : outputs.back();
    auto r = step(params, I[k], I[k - 1], P[k], prev, state);
    outputs.push_back(r.output);
    state = r.state;
  }
  auto held = [&](const Var<T>& v) { return ls.truncate_previous ? Var<T>::constant(v.value()) : v; };

  const auto lp = perceptual_loss(outputs, P, fe);

  const T alpha = static_cast<T>(ls.alpha);
  std::vector<Var<T>> st_terms;
  std::size_t st_count = 0;
  std::vector<FlowField<T>> first_flows;
  std::vector<Var<T>> first_masks, lt_outputs{held(outputs[0])};
  for (int k = 1; k < n; ++k) {
    const FlowField<T> fp = w.to_previous[k - 1].template cast<T>();
    const Var<T> warped_in = bilinear_warp(Var<T>::constant(I[k - 1]), Var<T>::constant(fp.uv));
    const Var<T> mask = visibility_mask(Var<T>::constant(I[k]), warped_in, alpha);
    const auto term = short_term_loss(outputs[k], held(outputs[k - 1]), fp, mask);
    st_terms.push_back(term.sum);
    st_count += term.count;

    FlowField<T> ff = w.to_first[k - 1].template cast<T>();
    const Var<T> warped_first = bilinear_warp(Var<T>::constant(I[0]), Var<T>::constant(ff.uv));
    first_masks.push_back(visibility_mask(Var<T>::constant(I[k]), warped_first, alpha));
    first_flows.push_back(std::move(ff));
    lt_outputs.push_back(outputs[k]);
  }
  const Var<T> st_sum = ops::sum_scalars(st_terms);
  const auto lt = long_term_loss(lt_outputs, first_flows, first_masks);

  const T inv_p = lp.count ? T(1) / static_cast<T>(lp.count) : T(0);
  const T inv_st = T(1) / static_cast<T>(st_count);
  const T inv_lt = T(1) / static_cast<T>(lt.count);
  const Var<T> mp = ops::scale(lp.sum, inv_p);
  const Var<T> mst = ops::scale(st_sum, inv_st);
  const Var<T> mlt = ops::scale(lt.sum, inv_lt);

  UnrollResult r;
  r.perceptual_sum = static_cast<double>(lp.sum.item());
  r.short_term_sum = static_cast<double>(st_sum.item());
  r.long_term_sum = static_cast<double>(lt.sum.item());
  r.perceptual = static_cast<double>(mp.item());
  r.short_term = static_cast<double>(mst.item());
  r.long_term = static_cast<double>(mlt.item());
  r.total = total_loss(r.perceptual, r.short_term, r.long_term, ls.weights);
  for (const auto& o : outputs) {
    if constexpr (std::is_same_v<T, float>) r.outputs.push_back(o.value());
    else r.outputs.push_back(o.value().template cast<float>());
  }
  if (run_backward) {
    const Var<T> total = ops::scale(total_loss(mp, mst, mlt, ls.weights), static_cast<T>(loss_scale));
    backward(total);
  }
  return r;
}

inline Window provider_window(const VideoSample& s) { return make_window(s, 1, s.original.length()); }

struct LogRecord {
  int iteration = 0;
  double perceptual = 0.0, short_term = 0.0, long_term = 0.0, total = 0.0, grad_norm = 0.0;
};

inline nlohmann::json to_json(const LogRecord& r) {
  return {{"iteration", r.iteration}, {"L_p", r.perceptual}, {"L_st", r.short_term},
          {"L_lt", r.long_term},      {"total", r.total},     {"grad_norm", r.grad_norm}};
}

inline nlohmann::json to_json(const TrainingConfig& c) {
  return {{"unroll", c.unroll},
          {"batch_size", c.batch_size},
          {"crop", c.crop},
          {"iterations", c.iterations},
          {"seed", c.seed},
          {"adam", c.adam},
          {"lambda_p", c.weights.perceptual},
          {"lambda_st", c.weights.short_term},
          {"lambda_lt", c.weights.long_term},
          {"alpha", c.alpha},
          {"truncate_previous", c.truncate_previous},
          {"network", c.network},
          {"perception", {{"kind", to_string(c.perception.kind)}, {"seed", c.perception.seed}, {"layers", c.perception.layers}}}};
}

struct TrainingState {
  ModelParameters<float> params;
  Adam optimizer;
  Rng rng;
  int iteration = 0;
};

inline Container checkpoint_container(const TrainingState& s, const TrainingConfig& cfg) {
  nlohmann::json extra = {{"iteration", s.iteration},
                          {"rng", s.rng.state()},
                          {"adam_steps", s.optimizer.steps()},
                          {"config_hash", cfg.config_hash},
                          {"seed", cfg.seed},
                          {"training", to_json(cfg)}};
  Container c = params_container(s.params, extra);
  s.optimizer.save_to(c);
  return c;
}

inline void save_checkpoint(const TrainingState& s, const TrainingConfig& cfg, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  save_container(checkpoint_container(s, cfg), path);
}

inline TrainingState load_checkpoint(const std::filesystem::path& path, const AdamConfig& adam) {
  const Container c = load_container(path);
  TrainingState s{params_from_container<float>(c), Adam(adam), Rng(0), 0};
  const auto meta = nlohmann::json::parse(c.metadata);
  if (!meta.contains("iteration") || !meta.contains("rng")) {
    throw ContainerError("checkpoint " + path.string() + " has no training state");
  }
  s.iteration = meta.at("iteration").get<int>();
  s.rng.restore(meta.at("rng").get<std::string>());
  s.optimizer.load_from(c, meta.value("adam_steps", std::int64_t{0}));
  return s;
}

struct TrainingResult {
  ModelParameters<float> params;
  std::vector<LogRecord> log;
  int iterations = 0;
};

inline std::filesystem::path checkpoint_path(const TrainingConfig& cfg, int iteration) {
  return cfg.checkpoint_dir / ("ckpt_" + detail::format_index("%06d", iteration) + ".vtc");
}

// Adam over random windows. When resume is set, training continues from
// that checkpoint until cfg.iterations total.
inline TrainingResult train(const TrainingConfig& cfg, const std::vector<VideoSample>& dataset,
                            const std::optional<std::filesystem::path>& resume = std::nullopt,
                            std::ostream* progress = nullptr) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  std::vector<int> lengths;
  for (const auto& s : dataset) {
    if (s.original.length() != s.processed.length()) throw DimensionMismatch("train: sequence " + s.id + " misaligned");
    if (s.original.frame_shape() != dataset.front().original.frame_shape()) {
      throw DimensionMismatch("train: sequences must share one frame size");
    }
    lengths.push_back(s.original.length());
  }
  if (*std::max_element(lengths.begin(), lengths.end()) < cfg.unroll) {
    throw std::invalid_argument("train: no sequence has at least " + std::to_string(cfg.unroll) + " frames");
  }
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (lengths[i] >= cfg.unroll) eligible.push_back(i);
  std::vector<int> eligible_lengths;
  for (auto i : eligible) eligible_lengths.push_back(lengths[i]);

  TrainingState st = resume ? load_checkpoint(*resume, cfg.adam)
                            : TrainingState{init_params<float>(cfg.network), Adam(cfg.adam), Rng(cfg.seed), 0};
  if (resume && !(st.params.config() == cfg.network)) {
    throw std::invalid_argument("resume: checkpoint network config differs from the training config");
  }
  const FeatureExtractor<float> fe(cfg.perception);
  const LossSettings ls{cfg.weights, cfg.alpha, cfg.truncate_previous};
  FlowCache cache;
  std::ofstream log_file;
  if (!cfg.log_path.empty()) {
    if (cfg.log_path.has_parent_path()) std::filesystem::create_directories(cfg.log_path.parent_path());
    log_file.open(cfg.log_path, std::ios::app);
    if (!log_file) throw IoError("cannot open training log " + cfg.log_path.string());
  }

  TrainingResult result;
  const int H = dataset.front().original.height(), W = dataset.front().original.width();
  while (st.iteration < cfg.iterations) {
    st.params.zero_grad();
    LogRecord rec;
    rec.iteration = st.iteration + 1;
    for (int b = 0; b < cfg.batch_size; ++b) {
      WindowSpec ws = sample_window(st.rng, eligible.size(), eligible_lengths, H, W, cfg.unroll, cfg.crop);
      const std::size_t idx = eligible[ws.sequence];
      const Window w = make_window(dataset[idx], idx, ws, cfg.unroll, &cache);
      const auto r = unroll_window(st.params, ls, w, fe, 1.0 / cfg.batch_size);
      rec.perceptual += r.perceptual / cfg.batch_size;
      rec.short_term += r.short_term / cfg.batch_size;
      rec.long_term += r.long_term / cfg.batch_size;
    }
    rec.total = total_loss(rec.perceptual, rec.short_term, rec.long_term, cfg.weights);
    rec.grad_norm = Adam::grad_norm(st.params);
    const bool finite = std::isfinite(rec.total) && std::isfinite(rec.grad_norm);
    if (finite) st.optimizer.step(st.params);
    if (!finite || !st.params.all_finite()) {
      const auto dir = cfg.checkpoint_dir.empty() ? std::filesystem::path(".") : cfg.checkpoint_dir;
      const auto diag = dir / "diverged.vtc";
      try {
        save_checkpoint(st, cfg, diag);
      } catch (const std::exception&) {
      }
      throw TrainingDiverged("training diverged at iteration " + std::to_string(rec.iteration) +
                             " (non-finite loss or parameters); diagnostic checkpoint " + diag.string());
    }
    ++st.iteration;
    result.log.push_back(rec);
    if (log_file) log_file << to_json(rec).dump() << "\n" << std::flush;
    if (progress && (st.iteration % cfg.log_every == 0 || st.iteration == cfg.iterations)) {
      *progress << "iter " << st.iteration << " total " << rec.total << " L_p " << rec.perceptual << " L_st "
                << rec.short_term << " L_lt " << rec.long_term << "\n";
    }
    if (!cfg.checkpoint_dir.empty() && cfg.checkpoint_every > 0 && st.iteration % cfg.checkpoint_every == 0) {
      save_checkpoint(st, cfg, checkpoint_path(cfg, st.iteration));
    }
  }
  if (!cfg.checkpoint_dir.empty()) save_checkpoint(st, cfg, cfg.checkpoint_dir / "final.vtc");
  result.params = std::move(st.params);
  result.iterations = st.iteration;
  return result;
}

struct SweepSpec {
  std::vector<std::pair<double, double>> pairs;  // (lambda_t, lambda_p)
  TrainingConfig base;

  void validate() const {
    if (pairs.size() < 2) throw std::invalid_argument("sweep: need at least 2 (lambda_t, lambda_p) pairs");
    for (const auto& [lt, lp] : pairs) {
      if (!(lp > 0.0) || !(lt >= 0.0)) throw std::invalid_argument("sweep: lambda_p must be > 0 and lambda_t >= 0");
    }
  }
};

struct SweepRow {
  double lambda_t = 0.0, lambda_p = 0.0, ratio = 0.0;
  double warp_error = 0.0, perceptual_distance = 0.0;
  std::vector<MetricsReport> reports;
};

// Mean metrics of a model over an evaluation set (unweighted across videos).
inline std::pair<double, double> evaluate_model(const ModelParameters<float>& params,
                                                const std::vector<VideoSample>& eval_set,
                                                const PerceptualMetric<float>& metric,
                                                std::vector<MetricsReport>* reports = nullptr) {
  if (eval_set.empty()) throw std::invalid_argument("evaluation set is empty");
  double e = 0.0, d = 0.0;
  for (const auto& s : eval_set) {
    const auto out = process_video(params, s.original, s.processed);
    auto rep = evaluate(out, s.processed, s.flow, metric, &s.original, s.id);
    e += *rep.warp_error;
    d += *rep.perceptual_distance;
    if (reports) reports->push_back(std::move(rep));
  }
  return {e / eval_set.size(), d / eval_set.size()};
}

// One trained model per pair, rows sorted by r = lambda_t / lambda_p.
inline std::vector<SweepRow> run_sweep(const SweepSpec& spec, const std::vector<VideoSample>& train_set,
                                       const std::vector<VideoSample>& eval_set, const PerceptualMetric<float>& metric,
                                       std::ostream* progress = nullptr,
                                       const std::function<void(const SweepRow&, const ModelParameters<float>&)>& on_row = {}) {
  spec.validate();
  if (eval_set.empty()) throw std::invalid_argument("sweep: evaluation set is empty");
  std::vector<SweepRow> rows;
  for (const auto& [lt, lp] : spec.pairs) {
    TrainingConfig cfg = spec.base;
    cfg.weights = {lp, lt, lt};
    if (!cfg.checkpoint_dir.empty()) {
      cfg.checkpoint_dir /= "r_" + format_number(lt / lp);
    }
    if (progress) *progress << "sweep: lambda_t=" << lt << " lambda_p=" << lp << "\n";
    const auto trained = train(cfg, train_set, std::nullopt, progress);
    SweepRow row;
    row.lambda_t = lt;
    row.lambda_p = lp;
    row.ratio = lt / lp;
    std::tie(row.warp_error, row.perceptual_distance) = evaluate_model(trained.params, eval_set, metric, &row.reports);
    if (on_row) on_row(row, trained.params);
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) { return a.ratio < b.ratio; });
  return rows;
}

inline std::string render_sweep_table(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "lambda_t\tlambda_p\tr\tE_warp\tD_perceptual\n";
  for (const auto& r : rows) {
    os << format_number(r.lambda_t) << "\t" << format_number(r.lambda_p) << "\t" << format_number(r.ratio) << "\t"
       << format_number(r.warp_error) << "\t" << format_number(r.perceptual_distance) << "\n";
  }
  return os.str();
}

}  // namespace vtc
