#include <gtest/gtest.h>

#include "support.hpp"
#include "vtc/synthgen.hpp"
#include "vtc/training.hpp"
#include "vtc/transform_net.hpp"

using namespace vtc;

namespace {

NetworkConfig tiny() {
  NetworkConfig c;
  c.base_channels = 4;
  c.residual_blocks = 1;
  return c;
}

// Every weight, including the zero output layer, jittered so all paths carry gradient.
template <class T>
ModelParameters<T> jittered(const NetworkConfig& cfg, std::uint64_t seed, double amount = 0.1) {
  const auto base = init_params<T>(cfg);
  ModelParameters<T> p(cfg);
  Rng rng(seed);
  for (const auto& [name, v] : base.all()) {
    Tensor<T> t = v.value();
    for (auto& x : t.values()) x += static_cast<T>(rng.uniform(-amount, amount));
    p.add(name, std::move(t));
  }
  return p;
}

FrameSequence<float> random_video(int n, int h, int w, std::uint64_t seed) {
  FrameSequence<float> s;
  for (int t = 0; t < n; ++t) s.push_back(test::random_frame(h, w, seed + 31 * t));
  return s;
}

VideoSample flicker_sample(int frames, int size) {
  MotionSpec m;
  m.frames = frames;
  m.height = size;
  m.width = size;
  m.dx = 1;
  m.seed = 3;
  const auto seq = generate_sequence(m);
  FlickerSpec f;
  f.phase = 0.7;
  return {"tiny", seq.frames, apply_flicker(seq.frames, f).processed, FlowProvider::analytic(seq.motion)};
}

}  // namespace

TEST(InitState, ShapesAndZeros) {
  NetworkConfig cfg;
  const auto s = init_state<float>(cfg, 64, 64);
  EXPECT_EQ(s.hidden.shape(), (Shape{64, 16, 16}));
  EXPECT_EQ(s.cell.shape(), (Shape{64, 16, 16}));
  for (float v : s.hidden.value().values()) EXPECT_EQ(v, 0.0f);
  for (float v : s.cell.value().values()) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(init_state<float>(cfg, 63, 63).hidden.shape(), (Shape{64, 16, 16}));
  EXPECT_THROW(init_state<float>(cfg, 3, 8), std::invalid_argument);
}

TEST(Step, IdentityAtInitBitExact) {
  const auto p = init_params<float>(tiny());
  const auto I = random_video(2, 16, 16, 1);
  const auto P = random_video(2, 16, 16, 50);
  const auto r = step(p, I.at(2), I.at(1), P.at(2), Var<float>::constant(P.at(1)), init_state<float>(tiny(), 16, 16));
  EXPECT_EQ(r.output.value(), P.at(2));
  auto I2 = I.at(2);
  I2(0, 5, 5) += 0.3f;
  const auto r2 = step(p, I2, I.at(1), P.at(2), Var<float>::constant(P.at(1)), init_state<float>(tiny(), 16, 16));
  EXPECT_EQ(r2.output.value(), P.at(2));
}

TEST(Step, ShapePreservedIncludingPadding) {
  const auto p = jittered<float>(tiny(), 2);
  for (auto [h, w] : {std::pair{64, 64}, {63, 63}, {13, 18}}) {
    const auto I = random_video(2, h, w, 1);
    const auto r = step(p, I.at(2), I.at(1), I.at(2), Var<float>::constant(I.at(1)), init_state<float>(tiny(), h, w));
    EXPECT_EQ(r.output.shape(), (Shape{3, h, w}));
    EXPECT_TRUE(r.output.value().all_finite());
  }
}

TEST(Step, Errors) {
  const auto p = init_params<float>(tiny());
  const auto I = random_video(2, 16, 16, 1);
  EXPECT_THROW(step(p, I.at(2), I.at(1), test::random_frame(16, 12, 3), Var<float>::constant(I.at(1)),
                    init_state<float>(tiny(), 16, 16)),
               DimensionMismatch);
  EXPECT_THROW(step(p, I.at(2), I.at(1), I.at(2), Var<float>::constant(I.at(1)), init_state<float>(tiny(), 32, 32)),
               DimensionMismatch);
  auto bad = jittered<float>(tiny(), 1);
  ModelParameters<float> nan_params(tiny());
  for (const auto& [name, v] : bad.all()) {
    Tensor<float> t = v.value();
    if (name == "merge.bias") t[0] = std::nanf("");
    nan_params.add(name, t);
  }
  EXPECT_THROW(step(nan_params, I.at(2), I.at(1), I.at(2), Var<float>::constant(I.at(1)), init_state<float>(tiny(), 16, 16)),
               std::invalid_argument);
}

TEST(Step, OutputDependsOnRecurrentState) {
  const auto p = jittered<double>(tiny(), 4, 0.3);
  const auto I = test::random_tensor(Shape{3, 8, 8}, 1), Ip = test::random_tensor(Shape{3, 8, 8}, 2);
  const auto P = test::random_tensor(Shape{3, 8, 8}, 3);
  auto s0 = init_state<double>(tiny(), 8, 8);
  auto s1 = s0;
  s1.hidden = Var<double>::constant(test::random_tensor(s0.hidden.shape(), 5, -1, 1));
  s1.cell = Var<double>::constant(test::random_tensor(s0.cell.shape(), 6, -1, 1));
  const auto a = step(p, I, Ip, P, Var<double>::constant(Ip), s0).output.value();
  const auto b = step(p, I, Ip, P, Var<double>::constant(Ip), s1).output.value();
  EXPECT_GT(max_abs_diff(a, b), 1e-6);
}

TEST(ProcessVideo, IdentityAtInitAndFirstFrame) {
  const auto p = init_params<float>(tiny());
  const auto I = random_video(5, 16, 20, 1), P = random_video(5, 16, 20, 90);
  EXPECT_EQ(process_video(p, I, P), P);
  const auto q = jittered<float>(tiny(), 7);
  const auto O = process_video(q, I, P);
  ASSERT_EQ(O.length(), 5);
  EXPECT_EQ(O.at(1), P.at(1));
  EXPECT_NE(O.at(3), P.at(3));
  EXPECT_EQ(process_video(q, I, P), O);
}

TEST(ProcessVideo, SingleFrameAndMismatch) {
  const auto p = jittered<float>(tiny(), 7);
  const auto I = random_video(1, 8, 8, 1), P = random_video(1, 8, 8, 2);
  EXPECT_EQ(process_video(p, I, P), P);
  EXPECT_THROW(process_video(p, random_video(3, 8, 8, 1), random_video(2, 8, 8, 1)), DimensionMismatch);
}

TEST(EndToEnd, WeightGradientMatchesFiniteDifferences) {
  const auto sample = flicker_sample(3, 8);
  const Window w = make_window(sample, 1, 3);
  const auto fe = FeatureExtractor<double>::identity();
  LossSettings ls;
  ls.weights = {10, 100, 100};
  const auto p = jittered<double>(tiny(), 11, 0.2);
  p.zero_grad();
  unroll_window(p, ls, w, fe);

  auto total_with = [&](const std::string& name, std::size_t i, double delta) {
    ModelParameters<double> q(tiny());
    for (const auto& [k, v] : p.all()) {
      Tensor<double> t = v.value();
      if (k == name) t[i] += delta;
      q.add(k, std::move(t));
    }
    return unroll_window(q, ls, w, fe, 1.0, false).total;
  };
  const double h = 1e-6;
  int checked = 0;
  for (const std::string name : {"decoder.out.weight", "decoder.up1.weight", "lstm.gates.weight", "merge.weight",
                                 "res0.conv1.weight", "stream_a.conv0.weight", "stream_b.conv2.bias"}) {
    const auto& grad = p.at(name).grad();
    for (std::size_t i = 0; i < grad.size(); i += std::max<std::size_t>(1, grad.size() / 4)) {
      const double num = (total_with(name, i, h) - total_with(name, i, -h)) / (2 * h);
      const double rel = std::abs(grad[i] - num) / std::max({std::abs(grad[i]), std::abs(num), 1e-6});
      EXPECT_LT(rel, 1e-3) << name << "[" << i << "] analytic " << grad[i] << " numeric " << num;
      ++checked;
    }
  }
  EXPECT_GT(checked, 20);
}

TEST(Params, SaveLoadRoundTripBitExact) {
  const auto dir = test::temp_dir("params");
  const auto p = jittered<float>(tiny(), 5);
  save_params(p, dir / "m.vtc");
  const auto q = load_params<float>(dir / "m.vtc");
  EXPECT_EQ(q.config(), p.config());
  EXPECT_EQ(q.values(), p.values());
  save_params(q, dir / "m2.vtc");
  EXPECT_EQ(test::slurp(dir / "m.vtc"), test::slurp(dir / "m2.vtc"));
}

TEST(Params, MissingKeyNamed) {
  const auto dir = test::temp_dir("params_missing");
  auto c = params_container(init_params<float>(tiny()));
  c.f32.erase("lstm.gates.bias");
  save_container(c, dir / "m.vtc");
  try {
    load_params<float>(dir / "m.vtc");
    FAIL();
  } catch (const ContainerError& e) {
    EXPECT_NE(std::string(e.what()).find("missing parameter: lstm.gates.bias"), std::string::npos);
  }
}

TEST(Params, OlderVersionRefused) {
  const auto dir = test::temp_dir("params_old");
  auto c = params_container(init_params<float>(tiny()), {{"model_version", 0}});
  save_container(c, dir / "m.vtc");
  try {
    load_params<float>(dir / "m.vtc");
    FAIL();
  } catch (const VersionMismatch& e) {
    EXPECT_NE(std::string(e.what()).find("convert"), std::string::npos);
  }
}

TEST(Params, ZeroFinalLayerAndLayout) {
  const auto p = init_params<float>(NetworkConfig{});
  for (float v : p.at("decoder.out.weight").value().values()) EXPECT_EQ(v, 0.0f);
  for (float v : p.at("decoder.out.bias").value().values()) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(p.at("lstm.gates.weight").shape(), (Shape{256, 128, 9}));
  EXPECT_EQ(init_params<float>(NetworkConfig{}).values(), p.values());
  NetworkConfig bad;
  bad.residual_blocks = 0;
  EXPECT_THROW(init_params<float>(bad), std::invalid_argument);
}
