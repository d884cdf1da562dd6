// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include "support.hpp"
#include "vtc/config.hpp"
#include "vtc/dataset.hpp"
#include "vtc/evaluation.hpp"
#include "vtc/flo_io.hpp"
#include "vtc/training.hpp"

using namespace vtc;
namespace fs = std::filesystem;

namespace {

struct Check {
  std::string name;
  bool ok;
  std::string detail;
};

class Criterion {
 public:
  void add(const std::string& name, bool ok, const std::string& detail = "") { checks_.push_back({name, ok, detail}); }
  bool ok() const {
    for (const auto& c : checks_)
      if (!c.ok) return false;
    return !checks_.empty();
  }
  void print(const std::string& label, const std::string& title, double seconds) const {
    std::printf("%s %-28s %s  (%zu checks, %.1fs)\n", label.c_str(), title.c_str(), ok() ? "PASS" : "FAIL", checks_.size(),
                seconds);
    for (const auto& c : checks_) {
      if (!c.ok || !c.detail.empty()) {
        std::printf("    %s %s%s%s\n", c.ok ? "ok  " : "FAIL", c.name.c_str(), c.detail.empty() ? "" : ": ", c.detail.c_str());
      }
    }
    std::fflush(stdout);
  }

 private:
  std::vector<Check> checks_;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Tensor<double> pixel(double r, double g, double b) {
  Tensor<double> t(Shape{3, 1, 1});
  t[0] = r;
  t[1] = g;
  t[2] = b;
  return t;
}

MotionSpec translation(double dx, int frames, int size) {
  MotionSpec m;
  m.frames = frames;
  m.height = size;
  m.width = size;
  m.dx = dx;
  m.seed = 11;
  return m;
}

bool constant_flow(const FlowField<float>& f, float u, float v) {
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x)
      if (f.u(y, x) != u || f.v(y, x) != v) return false;
  return true;
}

Var<double> weighted(const Var<double>& x, std::uint64_t seed) {
  const auto w = test::random_tensor(x.shape(), seed, -1.0, 1.0);
  return ops::masked_l1(ops::mul(x, Var<double>::constant(w)), Var<double>::constant(Tensor<double>(x.shape())));
}

// ---------------------------------------------------------------- 1
Criterion formula_suite() {
  Criterion c;
  {
    Tensor<float> f(Shape{3, 1, 2});
    for (int ch = 0; ch < 3; ++ch) {
      f(ch, 0, 0) = 0.2f + ch;
      f(ch, 0, 1) = 0.7f + ch;
    }
    FlowField<float> one(1, 2), half(1, 2);
    one.u(0, 0) = 1.0f;
    half.u(0, 0) = 0.5f;
    const auto a = bilinear_warp(f, one), b = bilinear_warp(f, half);
    c.add("warp integer shift", a(0, 0, 0) == 0.7f && a(2, 0, 0) == 2.7f);
    c.add("warp half shift", std::abs(b(1, 0, 0) - 1.45f) <= 1e-6);
    c.add("warp zero flow identity", bilinear_warp(f, FlowField<float>(1, 2)) == f);
  }
  {
    Tensor<double> a(Shape{3, 1, 1}), b(Shape{3, 1, 1}), u(Shape{3, 1, 1});
    a[0] = std::sqrt(0.02);
    u[1] = 1.0;
    c.add("visibility exp(-1)", std::abs(visibility_mask(a, b, WarpConfig{50.0}).values[0] - std::exp(-1.0)) <= 1e-6);
    c.add("visibility identical = 1", visibility_mask(a, a).values[0] == 1.0);
    c.add("visibility unit diff <= e^-50", visibility_mask(u, b).values[0] <= std::exp(-50.0));
  }
  {
    FrameSequence<double> o, p;
    o.push_back(pixel(0.5, 0.5, 0.5));
    p.push_back(pixel(0.5, 0.5, 0.5));
    o.push_back(pixel(0.4, 0.6, 0.4));
    p.push_back(pixel(0.3, 0.4, 0.5));
    c.add("L_p identity pixel example 0.4",
          std::abs(perceptual_loss(o, p, FeatureExtractor<double>::identity()) - 0.4) <= 1e-6);
    c.add("L_p identical sequences 0", perceptual_loss(o, o, FeatureExtractor<double>::identity()) == 0.0);
    Tensor<double> cur(Shape{3, 1, 1}, 0.7), prev(Shape{3, 1, 1}, 0.4);
    c.add("L_st single pixel 0.9",
          std::abs(short_term_loss(cur, prev, FlowField<double>(1, 1), Mask<double>(1, 1, 1.0, MaskKind::visibility)) - 0.9) <= 1e-6);
    c.add("L_st zero mask 0",
          short_term_loss(cur, prev, FlowField<double>(1, 1), Mask<double>(1, 1, 0.0, MaskKind::visibility)) == 0.0);
    FrameSequence<double> s;
    for (int t = 0; t < 3; ++t) s.push_back(pixel(0.3, 0.2, 0.1));
    c.add("L_lt static 0", long_term_loss(s, std::vector<FlowField<double>>(2, FlowField<double>(1, 1)),
                                          std::vector<Mask<double>>(2, Mask<double>(1, 1, 1.0, MaskKind::visibility))) == 0.0);
    c.add("total (1,0,0) 0.5", total_loss(0.5, 0.0, 0.0, LossWeights{1, 0, 0}) == 0.5);
    c.add("total (10,100,100) 5.0", std::abs(total_loss(0.2, 0.01, 0.02, LossWeights{10, 100, 100}) - 5.0) <= 1e-6);
  }
  {
    Tensor<float> a(Shape{3, 1, 1}, 0.5f), b(Shape{3, 1, 1}, 0.6f);
    const Mask<float> one(1, 1, 1.0f, MaskKind::occlusion), none(1, 1, 0.0f, MaskKind::occlusion);
    c.add("pair error 1x1 0.03", std::abs(warp_error_pair(a, b, FlowField<float>(1, 1), one).value - 0.03) <= 1e-6);
    const auto d = warp_error_pair(a, b, FlowField<float>(1, 1), none);
    c.add("pair error all occluded flagged", d.value == 0.0 && d.degenerate);
  }
  {
    const auto s = generate_sequence(translation(2, 3, 64));
    c.add("flow(3=>2) = (-2,0)", constant_flow(s.flows.at({3, 2}), -2.0f, 0.0f));
    c.add("flow(3=>1) = (-4,0)", constant_flow(s.flows.at({3, 1}), -4.0f, 0.0f));
    bool strip = true;
    const auto& occ = s.occlusion.at({2, 1});
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) strip &= occ(y, x) == (x < 2 ? 0.0f : 1.0f);
    c.add("occlusion 2px strip", strip);
    const auto st = generate_sequence(translation(0, 3, 16));
    c.add("static sequence identical frames", st.frames.at(3) == st.frames.at(1) && constant_flow(st.flows.at({3, 1}), 0, 0));
  }
  {
    FlickerSpec f;
    bool gains = true;
    const auto sched = flicker_schedule(f, 8);
    for (int t = 1; t <= 8; ++t) gains &= sched[t - 1].gain[0] == 1.0 + 0.2 * std::sin(2.0 * std::numbers::pi * t / 4.0);
    c.add("flicker gains 1+0.2 sin(2 pi t/4)", gains);
    const auto s = generate_sequence(translation(1, 4, 16));
    f.amplitude = 0.0;
    c.add("flicker amplitude 0 identity", apply_flicker(s.frames, f).processed == s.frames);
  }
  {
    const auto st = init_state<float>(NetworkConfig{}, 64, 64);
    c.add("state 64x64 -> 16x16", st.hidden.shape().height == 16 && st.hidden.shape().width == 16);
    NetworkConfig small;
    small.base_channels = 4;
    small.residual_blocks = 1;
    FrameSequence<float> I;
    for (int t = 0; t < 2; ++t) I.push_back(test::random_frame(63, 63, t));
    const auto O = process_video(init_params<float>(small), I, I);
    c.add("63x63 in -> 63x63 out", O.at(2).shape() == (Shape{3, 63, 63}));
    c.add(".flo 2x1 is 28 bytes", encode_flo(FlowField<float>::constant(1, 2, 1.0f, 2.0f)).size() == 28u);
  }
  {
    const auto zero = occlusion_mask(FlowField<float>(4, 4), FlowField<float>(4, 4));
    const auto far = occlusion_mask(FlowField<float>(4, 4), FlowField<float>::constant(4, 4, -5.0f, 0.0f));
    c.add("occlusion zero flows all ones", zero(2, 2) == 1.0f);
    c.add("occlusion inconsistent all zeros", far(2, 2) == 0.0f);
  }
  return c;
}

// ---------------------------------------------------------------- 2
Criterion gradient_suite() {
  Criterion c;
  auto add = [&](const std::string& name, const test::GradCheck& g, double tol) {
    c.add(name, g.max_rel < tol, fmt("max rel err %.3g (< %.0e)", g.max_rel, tol));
  };
  const auto frame = test::random_tensor(Shape{3, 8, 8}, 1);
  Tensor<double> uv(Shape{2, 8, 8});
  Rng rng(2);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      uv(0, y, x) = std::clamp(x + rng.uniform(-1.8, 1.8), 0.3, 6.7) - x;
      uv(1, y, x) = std::clamp(y + rng.uniform(-1.8, 1.8), 0.3, 6.7) - y;
      for (int k = 0; k < 2; ++k) {
        const double pos = (k == 0 ? x : y) + uv(k, y, x);
        if (std::abs(pos - std::round(pos)) < 0.05) uv(k, y, x) += 0.1;
      }
    }
  const auto flow = Var<double>::constant(uv);
  add("warp d/dframe", test::check_gradient([&](const Var<double>& f) { return weighted(bilinear_warp(f, flow), 3); }, frame), 1e-4);
  const auto fr = Var<double>::constant(frame);
  add("warp d/dflow", test::check_gradient([&](const Var<double>& u) { return weighted(bilinear_warp(fr, u), 4); }, uv), 1e-4);
  const auto other = Var<double>::constant(test::random_tensor(Shape{3, 8, 8}, 5, 0.0, 0.3));
  add("visibility", test::check_gradient([&](const Var<double>& x) { return weighted(visibility_mask(x, other, 50.0), 6); },
                                         test::random_tensor(Shape{3, 8, 8}, 7, 0.0, 0.3)),
      1e-4);
  // Targets sit above every warped input so the L1 terms stay away from their kinks.
  const auto p1 = Var<double>::constant(test::random_tensor(Shape{3, 8, 8}, 8, 0.55, 1.0));
  const auto p2 = test::random_tensor(Shape{3, 8, 8}, 9, 0.55, 1.0);
  const FeatureExtractor<double> fe(ExtractorSpec{ExtractorKind::fixed_random, 1234, {16, 32, 32}, {}, {}});
  add("L_p", test::check_gradient([&](const Var<double>& x) { return perceptual_loss<double>({p1, x}, {p1.value(), p2}, fe).sum; },
                                  test::random_tensor(Shape{3, 8, 8}, 10)),
      1e-4);
  const FlowField<double> ff(test::random_tensor(Shape{2, 8, 8}, 11, -1.7, 1.7));
  const auto mask = Var<double>::constant(test::random_tensor(Shape{1, 8, 8}, 12));
  add("L_st", test::check_gradient([&](const Var<double>& x) { return short_term_loss(p1, x, ff, mask).sum; },
                                   test::random_tensor(Shape{3, 8, 8}, 15, 0.0, 0.45)),
      1e-4);
  add("L_lt", test::check_gradient(
                  [&](const Var<double>& x) {
                    return long_term_loss<double>({x, p1, Var<double>::constant(p2)}, {ff, ff}, {mask, mask}).sum;
                  },
                  test::random_tensor(Shape{3, 8, 8}, 13, 0.0, 0.45)),
      1e-4);

  // End to end: 8x8, B=1, 4 channels, every weight jittered.
  NetworkConfig cfg;
  cfg.base_channels = 4;
  cfg.residual_blocks = 1;
  const auto base = init_params<double>(cfg);
  ModelParameters<double> params(cfg);
  Rng jr(14);
  for (const auto& [name, v] : base.all()) {
    Tensor<double> t = v.value();
    for (auto& x : t.values()) x += jr.uniform(-0.2, 0.2);
    params.add(name, t);
  }
  const auto seq = generate_sequence(translation(1, 3, 8));
  FlickerSpec fs;
  fs.phase = 0.7;
  const VideoSample sample{"e2e", seq.frames, apply_flicker(seq.frames, fs).processed, FlowProvider::analytic(seq.motion)};
  const Window w = make_window(sample, 1, 3);
  LossSettings ls;
  ls.weights = {10, 100, 100};
  params.zero_grad();
  unroll_window(params, ls, w, fe);
  double worst = 0.0;
  int n = 0;
  for (const auto& [name, v] : params.all()) {
    const auto& g = v.grad();
    for (std::size_t i = 0; i < g.size(); i += std::max<std::size_t>(1, g.size() / 3)) {
      auto total = [&](double d) {
        ModelParameters<double> q(cfg);
        for (const auto& [k, pv] : params.all()) {
          Tensor<double> t = pv.value();
          if (k == name) t[i] += d;
          q.add(k, t);
        }
        return unroll_window(q, ls, w, fe, 1.0, false).total;
      };
      const double num = (total(1e-6) - total(-1e-6)) / 2e-6;
      worst = std::max(worst, std::abs(g[i] - num) / std::max({std::abs(g[i]), std::abs(num), 1e-6}));
      ++n;
    }
  }
  c.add("end-to-end d(total)/d(weight)", worst < 1e-3, fmt("%.0f weights, max rel err %.3g (< 1e-3)", n, worst));
  return c;
}

// ---------------------------------------------------------------- 3
Criterion identity_at_init() {
  Criterion c;
  const auto d = make_synth_dataset(SynthTaskSpec{});
  NetworkConfig cfg;
  cfg.base_channels = 16;
  cfg.residual_blocks = 2;
  const auto p = init_params<float>(cfg);
  const PerceptualMetric<float> metric{FeatureExtractor<float>(ExtractorSpec{ExtractorKind::fixed_random, 4321, {16, 32, 32}, {}, {}})};
  const FeatureExtractor<float> fe{};
  for (const auto& s : d.eval_samples()) {
    const auto O = process_video(p, s.original, s.processed);
    c.add(s.id + " process_video == P", O == s.processed);
    FrameSequence<float> Of = O;
    c.add(s.id + " L_p == 0", perceptual_loss(Of, s.processed, fe) == 0.0f);
    const auto eo = warp_error_video(O, s.flow, &s.original).mean;
    const auto ep = warp_error_video(s.processed, s.flow, &s.original).mean;
    c.add(s.id + " E_warp(O) == E_warp(P)", eo == ep, fmt("%.10g", eo));
  }
  return c;
}

// ---------------------------------------------------------------- 4
Criterion coincidence() {
  Criterion c;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto o1 = test::random_tensor(Shape{3, 12, 10}, seed * 7 + 1);
    const auto o2 = test::random_tensor(Shape{3, 12, 10}, seed * 7 + 2);
    const FlowField<double> flow(test::random_tensor(Shape{2, 12, 10}, seed * 7 + 3, -4, 4));
    const Mask<double> mask(test::random_tensor(Shape{1, 12, 10}, seed * 7 + 4), MaskKind::visibility);
    FrameSequence<double> o;
    o.push_back(o1);
    o.push_back(o2);
    worst = std::max(worst, std::abs(long_term_loss(o, {flow}, {mask}) - short_term_loss(o2, o1, flow, mask)));
  }
  c.add("50 random T=2 fixtures", worst <= 1e-9, fmt("max |L_lt - L_st| = %.3g (<= 1e-9)", worst));
  return c;
}

// ---------------------------------------------------------------- 5 and 6
struct TrainedPoint {
  double lambda_p, ratio, e, d;
  double st_before, st_after;  // mean L_st over the full training sequences
  int iterations;
};

double sequence_short_term(const ModelParameters<float>& params, const TrainingConfig& tc,
                           const std::vector<VideoSample>& samples) {
  LossSettings ls;
  ls.weights = tc.weights;
  ls.alpha = tc.alpha;
  const FeatureExtractor<float> fe{};
  double total = 0.0;
  for (const auto& s : samples) total += unroll_window(params, ls, provider_window(s), fe, 1.0, false).short_term;
  return total / static_cast<double>(samples.size());
}

nlohmann::json acceptance_config() {
  auto cfg = default_config();
  for (const char* o : {"network.base_channels=16", "network.residual_blocks=2", "train.learning_rate=0.001",
                        "train.iterations=500", "train.log_every=200"})
    apply_override(cfg, o);
  return cfg;
}

TrainedPoint train_point(const nlohmann::json& base, const SynthDataset& d, double lambda_p,
                         const PerceptualMetric<float>& metric) {
  auto cfg = base;
  cfg["loss"]["lambda_p"] = lambda_p;
  const auto tc = training_from_config(cfg);
  std::cout << "  training lambda_p=" << lambda_p << " lambda_t=" << tc.weights.short_term << " for " << tc.iterations
            << " iterations\n"
            << std::flush;
  const auto r = train(tc, d.train_samples(), std::nullopt, &std::cout);
  const auto [e, dist] = evaluate_model(r.params, d.eval_samples(), metric);
  const auto train_set = d.train_samples();
  return {lambda_p,
          tc.weights.short_term / lambda_p,
          e,
          dist,
          sequence_short_term(init_params<float>(tc.network), tc, train_set),
          sequence_short_term(r.params, tc, train_set),
          r.iterations};
}

// ---------------------------------------------------------------- 7
Criterion metric_oracles() {
  Criterion c;
  const auto s = generate_sequence(translation(0, 8, 32));
  FlickerSpec f;
  const auto fl = apply_flicker(s.frames, f);
  const auto& I = s.frames.at(1);
  double energy = 0.0;
  for (float v : I.values()) energy += static_cast<double>(v) * v;
  energy /= I.shape().plane();
  double oracle = 0.0;
  for (int t = 1; t < 8; ++t) {
    const double g0 = 1.0 + 0.2 * std::sin(2.0 * std::numbers::pi * t / 4.0);
    const double g1 = 1.0 + 0.2 * std::sin(2.0 * std::numbers::pi * (t + 1) / 4.0);
    oracle += (g0 - g1) * (g0 - g1) * energy / 7.0;
  }
  const double e = warp_error_video(fl.processed, FlowProvider::analytic(s.motion)).mean;
  c.add("static flicker E_warp vs schedule oracle", std::abs(e - oracle) <= 1e-6,
        fmt("E_warp %.9g oracle %.9g |diff| %.2g (<= 1e-6)", e, oracle, std::abs(e - oracle)));

  bool exact = true;
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    Rng rng(seed);
    FlowField<float> ff(1 + rng.uniform_int(0, 20), 1 + rng.uniform_int(0, 20));
    for (auto& v : ff.uv.values()) v = static_cast<float>(rng.uniform(-300.0, 300.0));
    const auto back = decode_flo(encode_flo(ff));
    exact &= back.uv.shape() == ff.uv.shape() && std::memcmp(back.uv.data(), ff.uv.data(), ff.uv.size() * 4) == 0;
  }
  c.add(".flo round trip bit-exact (25 fields)", exact);

  bool thresholds = true;
  for (double dev : {0.0, 0.3, 0.5, 0.7, 0.71, 0.72, 1.0, 3.0}) {
    for (double base : {0.0, 2.0, -5.0}) {
      // forward base + dev, backward -base: |w~ + w^|^2 = dev^2 against 0.01 (|w~|^2 + |w^|^2) + 0.5
      const auto m = occlusion_mask(FlowField<float>::constant(4, 4, static_cast<float>(base + dev), 0.0f),
                                    FlowField<float>::constant(4, 4, static_cast<float>(-base), 0.0f));
      const double fwd = static_cast<float>(base + dev), bwd = static_cast<float>(-base);
      const double lhs = (fwd + bwd) * (fwd + bwd);
      const double rhs = 0.01 * (fwd * fwd + bwd * bwd) + 0.5;
      thresholds &= m(2, 2) == (lhs > rhs ? 0.0f : 1.0f);
    }
  }
  c.add("occlusion threshold cases (24)", thresholds);
  return c;
}

// ---------------------------------------------------------------- 8
Criterion determinism() {
  Criterion c;
  const auto root = test::temp_dir("acceptance_determinism");
  SynthTaskSpec task;
  task.train_sequences = 2;
  task.eval_sequences = 1;
  task.frames = 6;
  task.height = task.width = 24;
  auto cfg = default_config();
  for (const char* o : {"network.base_channels=8", "network.residual_blocks=1", "train.unroll=4", "train.iterations=10",
                        "train.learning_rate=0.001"})
    apply_override(cfg, o);
  const PerceptualMetric<float> metric{FeatureExtractor<float>(extractor_from_config(cfg.at("metric")))};
  std::vector<std::string> ckpt, rendered, outputs;
  for (int run = 0; run < 2; ++run) {
    const auto d = make_synth_dataset(task);
    auto tc = training_from_config(cfg);
    tc.checkpoint_dir = root / ("run" + std::to_string(run));
    const auto r = train(tc, d.train_samples());
    ckpt.push_back(test::slurp(tc.checkpoint_dir / "final.vtc"));
    const auto eval = d.eval_samples();
    const auto& s = eval.front();
    const auto O = process_video(r.params, s.original, s.processed);
    save_frame_sequence(O, tc.checkpoint_dir / "out", "%05d.png", 16);
    std::string bytes;
    for (int t = 1; t <= O.length(); ++t) bytes += test::slurp(tc.checkpoint_dir / "out" / detail::format_index("%05d.png", t));
    outputs.push_back(bytes);
    const auto rep = evaluate(O, s.processed, s.flow, metric, &s.original, s.id);
    save_report(rep, tc.checkpoint_dir / "report.txt");
    rendered.push_back(test::slurp(tc.checkpoint_dir / "report.txt") + test::slurp(tc.checkpoint_dir / "report.txt.json"));
  }
  c.add("checkpoints bit-identical", !ckpt[0].empty() && ckpt[0] == ckpt[1]);
  c.add("output frames bit-identical", !outputs[0].empty() && outputs[0] == outputs[1]);
  c.add("reports bit-identical", !rendered[0].empty() && rendered[0] == rendered[1]);
  return c;
}

template <class F>
bool run_checks(const std::string& label, const std::string& title, F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  Criterion c;
  try {
    c = f();
  } catch (const std::exception& e) {
    c.add("exception", false, e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.print(label, title, secs);
  return c.ok();
}

template <class F>
bool run_criterion(int id, const std::string& title, F&& f) {
  return run_checks("criterion " + std::to_string(id), title, std::forward<F>(f));
}

}  // namespace

int main() {
  std::vector<bool> results;
  results.push_back(run_criterion(1, "formula suite", formula_suite));
  results.push_back(run_criterion(2, "gradient suite", gradient_suite));
  results.push_back(run_criterion(3, "identity at init", identity_at_init));
  results.push_back(run_criterion(4, "long/short coincidence", coincidence));

  // Criteria 5 and 6 share the r=10 model.
  const auto cfg = acceptance_config();
  const auto data = make_synth_dataset(synth_task_from_config(cfg));
  const PerceptualMetric<float> metric{FeatureExtractor<float>(extractor_from_config(cfg.at("metric")))};
  std::vector<TrainedPoint> points;
  const auto t0 = std::chrono::steady_clock::now();
  std::string train_error;
  try {
    for (double lp : {10.0, 100.0, 1.0}) points.push_back(train_point(cfg, data, lp, metric));
  } catch (const std::exception& e) {
    train_error = e.what();
  }
  const double train_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  results.push_back(run_criterion(5, "toy training (r=10)", [&] {
    Criterion c;
    if (points.empty()) {
      c.add("training", false, train_error);
      return c;
    }
    const auto& p = points[0];
    double e_p = 0.0, d_ideal = 0.0;
    const auto eval = data.eval_samples();
    for (std::size_t i = 0; i < eval.size(); ++i) {
      e_p += warp_error_video(eval[i].processed, eval[i].flow, &eval[i].original).mean / eval.size();
      d_ideal += *evaluate(data.eval[i].ideal, eval[i].processed, eval[i].flow, metric, &eval[i].original).perceptual_distance /
                 eval.size();
    }
    c.add("E_warp(output) <= 0.5 E_warp(processed)", p.e <= 0.5 * e_p,
          fmt("%.6g vs %.6g (ratio %.3f)", p.e, e_p, p.e / e_p));
    c.add("D(output,P) <= 3 D(ideal,P)", p.d <= 3.0 * d_ideal, fmt("%.6g vs %.6g (ratio %.3f)", p.d, d_ideal, p.d / d_ideal));
    c.add("iterations <= 2000", p.iterations <= 2000, fmt("%.0f iterations, %.0fs for three models", p.iterations, train_secs));
    return c;
  }));

  results.push_back(run_criterion(6, "trade-off trend r=1,10,100", [&] {
    Criterion c;
    if (points.size() != 3) {
      c.add("training", false, train_error);
      return c;
    }
    std::vector<TrainedPoint> byr = points;
    std::sort(byr.begin(), byr.end(), [](const auto& a, const auto& b) { return a.ratio < b.ratio; });
    for (const auto& p : byr) c.add(fmt("r=%g", p.ratio), true, fmt("E_warp %.6g  D %.6g", p.e, p.d));
    c.add("E_warp non-increasing in r", byr[0].e >= byr[1].e && byr[1].e >= byr[2].e);
    c.add("D non-decreasing in r", byr[0].d <= byr[1].d && byr[1].d <= byr[2].d);
    return c;
  }));

  // Training example: r=10 for 2000 iterations, L_st over the full training sequences.
  results.push_back(run_checks("example    ", "L_st reduction (r=10, 2000)", [&] {
    Criterion c;
    auto long_cfg = cfg;
    long_cfg["train"]["iterations"] = 2000;
    const auto p = train_point(long_cfg, data, 10.0, metric);
    c.add("final L_st < 0.2 initial L_st", p.st_after < 0.2 * p.st_before,
          fmt("%.5g -> %.5g (ratio %.3f)", p.st_before, p.st_after, p.st_after / p.st_before));
    return c;
  }));

  results.push_back(run_criterion(7, "metric oracles", metric_oracles));
  results.push_back(run_criterion(8, "determinism", determinism));

  int passed = 0;
  for (bool r : results) passed += r ? 1 : 0;
  std::printf("acceptance: %d/%zu checks passed (criteria 1-8 and the L_st example)\n", passed, results.size());
  return passed == static_cast<int>(results.size()) ? 0 : 1;
}
