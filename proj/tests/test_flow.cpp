#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "support.hpp"
#include "vtc/flow.hpp"
#include "vtc/synthgen.hpp"

using namespace vtc;

namespace {

SyntheticSequence translating(double dx, double dy, int frames = 4, int size = 32) {
  MotionSpec m;
  m.frames = frames;
  m.height = size;
  m.width = size;
  m.dx = dx;
  m.dy = dy;
  m.seed = 5;
  return generate_sequence(m);
}

void expect_constant(const FlowField<float>& f, float u, float v) {
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) {
      ASSERT_EQ(f.u(y, x), u);
      ASSERT_EQ(f.v(y, x), v);
    }
}

}  // namespace

TEST(AnalyticFlow, NeighbourAndFirstFrame) {
  const auto s = translating(2, 0);
  const auto p = FlowProvider::analytic(s.motion);
  expect_constant(get_backward_flow(p, s.frames, 3, 2), -2.0f, 0.0f);
  expect_constant(get_backward_flow(p, s.frames, 3, 1), -4.0f, 0.0f);
  EXPECT_EQ(get_backward_flow(p, s.frames, 3, 2).direction, FlowDirection::backward);
}

TEST(AnalyticFlow, StaticSceneIsZero) {
  const auto s = translating(0, 0);
  const auto p = FlowProvider::analytic(s.motion);
  for (int t = 2; t <= 4; ++t)
    for (int ref = 1; ref < t; ++ref) expect_constant(get_backward_flow(p, s.frames, t, ref), 0.0f, 0.0f);
}

TEST(AnalyticFlow, OutOfRangeAndBadPairs) {
  const auto s = translating(1, 0);
  const auto p = FlowProvider::analytic(s.motion);
  EXPECT_THROW(get_backward_flow(p, s.frames, 2, 2), std::out_of_range);
  EXPECT_THROW(get_backward_flow(p, s.frames, 2, 3), std::out_of_range);
  EXPECT_THROW(get_backward_flow(p, s.frames, 5, 1), std::out_of_range);
  EXPECT_THROW(p.flow(FrameSequence<float>{}, 9, 1), FlowUnavailable);
}

TEST(AnalyticFlow, ExactReconstructionForIntegerShifts) {
  for (auto [dx, dy] : {std::pair{2.0, 0.0}, {-1.0, 3.0}, {0.0, -2.0}}) {
    const auto s = translating(dx, dy, 5);
    const auto p = FlowProvider::analytic(s.motion);
    for (int t = 2; t <= 5; ++t)
      for (int ref : {t - 1, 1}) {
        const auto warped = bilinear_warp(s.frames.at(ref), get_backward_flow(p, s.frames, t, ref));
        const auto valid = p.occlusion(s.frames, t, ref);
        for (int c = 0; c < 3; ++c)
          for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x)
              if (valid(y, x) == 1.0f) {
                ASSERT_EQ(warped(c, y, x), s.frames.at(t)(c, y, x));
              }
      }
  }
}

TEST(FileFlow, ReturnsWhatWasWritten) {
  const auto dir = test::temp_dir("fileflow");
  Rng rng(3);
  FlowField<float> f(8, 8);
  for (auto& v : f.uv.values()) v = static_cast<float>(rng.uniform(-3.0, 3.0));
  write_flo(f, dir / FlowProvider::flow_filename(4, 3));
  const auto p = FlowProvider::files(dir);
  FrameSequence<float> seq;
  for (int t = 0; t < 4; ++t) seq.push_back(test::random_frame(8, 8, t));
  EXPECT_EQ(get_backward_flow(p, seq, 4, 3).uv, f.uv);
  EXPECT_THROW(get_backward_flow(p, seq, 4, 1), FlowUnavailable);
}

TEST(Occlusion, ZeroFlowsAllOnes) {
  const auto m = occlusion_mask(FlowField<float>(8, 8), FlowField<float>(8, 8));
  for (float v : m.values.values()) EXPECT_EQ(v, 1.0f);
  EXPECT_TRUE(m.is_binary());
}

TEST(Occlusion, ConsistentOppositeFlowsAllOnes) {
  const auto m = occlusion_mask(FlowField<float>::constant(8, 8, 2.0f, 0.0f), FlowField<float>::constant(8, 8, -2.0f, 0.0f));
  for (float v : m.values.values()) EXPECT_EQ(v, 1.0f);
}

TEST(Occlusion, InconsistentFlowsAllZeros) {
  // 25 > 0.01 * 25 + 0.5
  const auto m = occlusion_mask(FlowField<float>(8, 8), FlowField<float>::constant(8, 8, -5.0f, 0.0f));
  for (float v : m.values.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Occlusion, ThresholdBoundary) {
  // |w~ + w^|^2 = d^2 against 0.01 * |w^|^2 + 0.5 with w~ = 0.
  for (double d : {0.5, 0.7, 0.71, 0.8, 1.0}) {
    const auto m = occlusion_mask(FlowField<float>(8, 8), FlowField<float>::constant(8, 8, static_cast<float>(d), 0.0f));
    const float expected = d * d > 0.01 * d * d + 0.5 ? 0.0f : 1.0f;
    EXPECT_EQ(m(4, 4), expected) << d;
  }
  EXPECT_THROW(occlusion_mask(FlowField<float>(8, 8), FlowField<float>(8, 9)), DimensionMismatch);
}

TEST(Estimator, IdenticalFramesGiveNearZeroFlow) {
  const auto s = translating(0, 0, 2, 40);
  const auto f = estimate_flow(s.frames.at(1), s.frames.at(1), EstimatorParams{});
  double mean = 0.0;
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) mean += std::hypot(f.u(y, x), f.v(y, x));
  EXPECT_LT(mean / (f.height() * f.width()), 0.1);
}

TEST(Estimator, RecoversIntegerShift) {
  const auto s = translating(3, 0, 2, 48);
  const auto f = estimate_flow(s.frames.at(1), s.frames.at(2), EstimatorParams{});
  std::vector<float> us;
  for (int y = 6; y < 42; ++y)
    for (int x = 6; x < 42; ++x) us.push_back(f.u(y, x));
  std::nth_element(us.begin(), us.begin() + us.size() / 2, us.end());
  EXPECT_NEAR(us[us.size() / 2], -3.0, 0.5);
}

TEST(Estimator, FlatFramesGiveFiniteField) {
  Tensor<float> flat(Shape{3, 16, 16}, 0.4f);
  const auto f = estimate_flow(flat, flat, EstimatorParams{});
  EXPECT_TRUE(f.all_finite());
  EXPECT_THROW(estimate_flow(flat, Tensor<float>(Shape{3, 16, 12}), EstimatorParams{}), DimensionMismatch);
}

TEST(Estimator, ParamsValidated) {
  EstimatorParams p;
  p.levels = 0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.iterations = 0;
  EXPECT_THROW(FlowProvider::estimated(p), std::invalid_argument);
}
