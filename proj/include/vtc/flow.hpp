// Optical flow providers, a classical coarse-to-fine estimator, and the
// forward-backward consistency occlusion test.
#pragma once

#include <cmath>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "vtc/flo_io.hpp"
#include "vtc/image_io.hpp"
#include "vtc/video_data.hpp"
#include "vtc/warping.hpp"

namespace vtc {

class FlowUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Row-major 2x3 affine map p -> A p + t in pixel coordinates.
struct Affine2 {
  double a11 = 1, a12 = 0, a21 = 0, a22 = 1, tx = 0, ty = 0;

  static Affine2 translation(double dx, double dy) { return {1, 0, 0, 1, dx, dy}; }

  std::pair<double, double> apply(double x, double y) const {
    return {a11 * x + a12 * y + tx, a21 * x + a22 * y + ty};
  }
  // (*this) after (other)
  Affine2 compose(const Affine2& o) const {
    return {a11 * o.a11 + a12 * o.a21, a11 * o.a12 + a12 * o.a22, a21 * o.a11 + a22 * o.a21,
            a21 * o.a12 + a22 * o.a22, a11 * o.tx + a12 * o.ty + tx, a21 * o.tx + a22 * o.ty + ty};
  }
  Affine2 inverse() const {
    const double det = a11 * a22 - a12 * a21;
    if (std::abs(det) < 1e-12) throw std::invalid_argument("Affine2: singular transform");
    const double i11 = a22 / det, i12 = -a12 / det, i21 = -a21 / det, i22 = a11 / det;
    return {i11, i12, i21, i22, -(i11 * tx + i12 * ty), -(i21 * tx + i22 * ty)};
  }
  bool is_translation() const { return a11 == 1 && a12 == 0 && a21 == 0 && a22 == 1; }
};

// Exact motion of a synthetic sequence: frame t shows base content moved by
// transforms[t-1] (base coordinates -> frame coordinates).
struct AnalyticMotion {
  int height = 0;
  int width = 0;
  std::vector<Affine2> transforms;

  int length() const { return static_cast<int>(transforms.size()); }

  // Displacement that takes pixel x of frame t to its position in frame ref.
  FlowField<float> flow(int t, int ref) const {
    check(t);
    check(ref);
    const Affine2 to_ref = transforms[ref - 1].compose(transforms[t - 1].inverse());
    FlowField<float> f(height, width, ref < t ? FlowDirection::backward : FlowDirection::forward);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const auto [rx, ry] = to_ref.apply(x, y);
        f.u(y, x) = static_cast<float>(rx - x);
        f.v(y, x) = static_cast<float>(ry - y);
      }
    return f;
  }

  // 1 where the corresponding point in frame ref lies on the canvas.
  Mask<float> valid(int t, int ref) const {
    const auto f = flow(t, ref);
    Mask<float> m(height, width, 0.0f, MaskKind::occlusion);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double sx = x + static_cast<double>(f.u(y, x));
        const double sy = y + static_cast<double>(f.v(y, x));
        const bool inside = sx >= 0.0 && sx <= width - 1 && sy >= 0.0 && sy <= height - 1;
        m(y, x) = inside ? 1.0f : 0.0f;
      }
    return m;
  }

 private:
  void check(int t) const {
    if (t < 1 || t > length()) {
      throw FlowUnavailable("analytic flow: frame " + std::to_string(t) + " outside generated range 1.." +
                            std::to_string(length()));
    }
  }
};

struct OcclusionConfig {
  double relative = 0.01;
  double offset = 0.5;
};

// Non-occlusion mask for frame t: fw is the flow ref=>t, bw the flow t=>ref.
// A pixel is occluded (0) when |fw(x + bw(x)) + bw(x)|^2 exceeds
// relative * (|fw(x + bw(x))|^2 + |bw(x)|^2) + offset.
inline Mask<float> occlusion_mask(const FlowField<float>& fw, const FlowField<float>& bw,
                                  const OcclusionConfig& cfg = {}) {
  require_same_shape(fw.uv.shape(), bw.uv.shape(), "occlusion_mask");
  const Tensor<float> fw_at = bilinear_warp(fw.uv, bw);
  const int H = bw.height(), W = bw.width();
  Mask<float> m(H, W, 1.0f, MaskKind::occlusion);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double wu = fw_at(0, y, x), wv = fw_at(1, y, x);
      const double hu = bw.u(y, x), hv = bw.v(y, x);
      const double su = wu + hu, sv = wv + hv;
      const double lhs = su * su + sv * sv;
      const double rhs = cfg.relative * (wu * wu + wv * wv + hu * hu + hv * hv) + cfg.offset;
      if (lhs > rhs) m(y, x) = 0.0f;
    }
  return m;
}

struct EstimatorParams {
  int levels = 3;
  int iterations = 5;    // warping iterations per level
  int inner_sweeps = 30;  // Jacobi sweeps per warping iteration
  double smoothness = 0.02;

  void validate() const {
    if (levels < 1) throw std::invalid_argument("EstimatorParams: levels must be >= 1");
    if (iterations < 1 || inner_sweeps < 1) throw std::invalid_argument("EstimatorParams: iterations must be >= 1");
    if (!(smoothness > 0.0)) throw std::invalid_argument("EstimatorParams: smoothness must be > 0");
  }
};

namespace detail {

inline Tensor<float> to_gray(const Tensor<float>& f) {
  Tensor<float> g(Shape{1, f.height(), f.width()});
  for (int c = 0; c < f.channels(); ++c) {
    auto ch = f.channel(c);
    for (std::size_t i = 0; i < ch.size(); ++i) g[i] += ch[i] / static_cast<float>(f.channels());
  }
  return g;
}

inline Tensor<float> downsample2(const Tensor<float>& f) {
  const int h = std::max(1, f.height() / 2), w = std::max(1, f.width() / 2);
  Tensor<float> out(Shape{f.channels(), h, w});
  for (int c = 0; c < f.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int y1 = std::min(2 * y + 1, f.height() - 1), x1 = std::min(2 * x + 1, f.width() - 1);
        out(c, y, x) = 0.25f * (f(c, 2 * y, 2 * x) + f(c, 2 * y, x1) + f(c, y1, 2 * x) + f(c, y1, x1));
      }
  return out;
}

// Resample a flow field to h x w, scaling the vectors accordingly.
inline FlowField<float> upsample_flow(const FlowField<float>& f, int h, int w) {
  FlowField<float> out(h, w);
  const double sy = static_cast<double>(f.height()) / h, sx = static_cast<double>(f.width()) / w;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, f.height() - 1.0);
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, f.width() - 1.0);
      const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
      const int y1 = std::min(y0 + 1, f.height() - 1), x1 = std::min(x0 + 1, f.width() - 1);
      const double ay = fy - y0, ax = fx - x0;
      for (int c = 0; c < 2; ++c) {
        const double v = (1 - ay) * ((1 - ax) * f.uv(c, y0, x0) + ax * f.uv(c, y0, x1)) +
                         ay * ((1 - ax) * f.uv(c, y1, x0) + ax * f.uv(c, y1, x1));
        out.uv(c, y, x) = static_cast<float>(v / (c == 0 ? sx : sy));
      }
    }
  return out;
}

}  // namespace detail

// Backward flow b => a (sampling a at x + F(x) approximates b(x)) from a
// coarse-to-fine Horn-Schunck scheme with iterative warping. Best effort.
inline FlowField<float> estimate_flow(const Tensor<float>& a, const Tensor<float>& b,
                                      const EstimatorParams& params = {}) {
  params.validate();
  require_same_shape(a.shape(), b.shape(), "estimate_flow");

  std::vector<Tensor<float>> pa{detail::to_gray(a)}, pb{detail::to_gray(b)};
  for (int l = 1; l < params.levels; ++l) {
    if (pa.back().height() < 16 || pa.back().width() < 16) break;
    pa.push_back(detail::downsample2(pa.back()));
    pb.push_back(detail::downsample2(pb.back()));
  }

  FlowField<float> flow(pa.back().height(), pa.back().width());
  const double lambda = params.smoothness;
  for (int level = static_cast<int>(pa.size()) - 1; level >= 0; --level) {
    const auto& ga = pa[level];
    const auto& gb = pb[level];
    const int H = ga.height(), W = ga.width();
    if (flow.height() != H || flow.width() != W) flow = detail::upsample_flow(flow, H, W);

    for (int it = 0; it < params.iterations; ++it) {
      const Tensor<float> warped = bilinear_warp(ga, flow);
      Tensor<float> ix(Shape{1, H, W}), iy(Shape{1, H, W}), itd(Shape{1, H, W});
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const int xl = std::max(x - 1, 0), xr = std::min(x + 1, W - 1);
          const int yu = std::max(y - 1, 0), yd = std::min(y + 1, H - 1);
          ix(0, y, x) = (warped(0, y, xr) - warped(0, y, xl)) / std::max(1, xr - xl);
          iy(0, y, x) = (warped(0, yd, x) - warped(0, yu, x)) / std::max(1, yd - yu);
          itd(0, y, x) = warped(0, y, x) - gb(0, y, x);
        }
      const FlowField<float> base = flow;
      FlowField<float> next = flow;
      for (int sweep = 0; sweep < params.inner_sweeps; ++sweep) {
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x) {
            const int xl = std::max(x - 1, 0), xr = std::min(x + 1, W - 1);
            const int yu = std::max(y - 1, 0), yd = std::min(y + 1, H - 1);
            const double ub = 0.25 * (flow.u(y, xl) + flow.u(y, xr) + flow.u(yu, x) + flow.u(yd, x));
            const double vb = 0.25 * (flow.v(y, xl) + flow.v(y, xr) + flow.v(yu, x) + flow.v(yd, x));
            const double gx = ix(0, y, x), gy = iy(0, y, x);
            const double r = itd(0, y, x) + gx * (ub - base.u(y, x)) + gy * (vb - base.v(y, x));
            const double den = lambda + gx * gx + gy * gy;
            next.u(y, x) = static_cast<float>(ub - gx * r / den);
            next.v(y, x) = static_cast<float>(vb - gy * r / den);
          }
        std::swap(flow, next);
      }
    }
  }
  return flow;
}

// Flow source for a sequence. All backends answer flow(t, ref) for any pair of
// distinct frames; the backward queries used by the losses have ref < t.
class FlowProvider {
 public:
  struct Analytic {
    AnalyticMotion motion;
  };
  struct Files {
    std::filesystem::path directory;
    OcclusionConfig occlusion;
  };
  struct Estimated {
    EstimatorParams params;
    OcclusionConfig occlusion;
  };

  static FlowProvider analytic(AnalyticMotion motion) { return FlowProvider(Analytic{std::move(motion)}); }
  static FlowProvider files(std::filesystem::path dir, OcclusionConfig occ = {}) {
    return FlowProvider(Files{std::move(dir), occ});
  }
  static FlowProvider estimated(EstimatorParams params = {}, OcclusionConfig occ = {}) {
    params.validate();
    return FlowProvider(Estimated{params, occ});
  }

  static std::string flow_filename(int t, int ref) {
    return "flow_t" + std::to_string(t) + "_ref" + std::to_string(ref) + ".flo";
  }

  std::string id() const {
    if (std::holds_alternative<Analytic>(backend_)) return "analytic";
    if (const auto* f = std::get_if<Files>(&backend_)) return "file:" + f->directory.string();
    return "estimated";
  }

  // Displacement from frame t to frame ref (sampling ref at x + F(x) gives t).
  FlowField<float> flow(const FrameSequence<float>& seq, int t, int ref) const {
    if (t == ref) throw std::invalid_argument("FlowProvider: t == ref");
    if (const auto* a = std::get_if<Analytic>(&backend_)) {
      if (!seq.empty() && (seq.height() != a->motion.height || seq.width() != a->motion.width)) {
        throw DimensionMismatch("FlowProvider: analytic motion does not match sequence size");
      }
      return a->motion.flow(t, ref);
    }
    if (const auto* f = std::get_if<Files>(&backend_)) {
      const auto path = f->directory / flow_filename(t, ref);
      if (!std::filesystem::exists(path)) throw FlowUnavailable("missing flow file " + path.string());
      auto field = read_flo(path);
      if (!seq.empty() && (field.height() != seq.height() || field.width() != seq.width())) {
        throw DimensionMismatch("flow file " + path.string() + " does not match sequence size");
      }
      field.direction = ref < t ? FlowDirection::backward : FlowDirection::forward;
      return field;
    }
    const auto& e = std::get<Estimated>(backend_);
    auto field = estimate_flow(seq.at(ref), seq.at(t), e.params);
    field.direction = ref < t ? FlowDirection::backward : FlowDirection::forward;
    return field;
  }

  FlowField<float> backward_flow(const FrameSequence<float>& seq, int t, int ref) const {
    const int n = seq.empty() ? t : seq.length();
    if (!(1 <= ref && ref < t && t <= n)) {
      throw std::out_of_range("backward flow requires 1 <= ref < t <= T (t=" + std::to_string(t) +
                              ", ref=" + std::to_string(ref) + ")");
    }
    return flow(seq, t, ref);
  }

  // Binary non-occlusion mask in frame t coordinates for the pair (t, ref).
  Mask<float> occlusion(const FrameSequence<float>& seq, int t, int ref) const {
    if (const auto* a = std::get_if<Analytic>(&backend_)) return a->motion.valid(t, ref);
    const OcclusionConfig cfg = std::holds_alternative<Files>(backend_) ? std::get<Files>(backend_).occlusion
                                                                        : std::get<Estimated>(backend_).occlusion;
    return occlusion_mask(flow(seq, ref, t), flow(seq, t, ref), cfg);
  }

  const std::variant<Analytic, Files, Estimated>& backend() const { return backend_; }

 private:
  template <class B>
  explicit FlowProvider(B b) : backend_(std::move(b)) {}

  std::variant<Analytic, Files, Estimated> backend_;
};

inline FlowField<float> get_backward_flow(const FlowProvider& provider, const FrameSequence<float>& seq, int t,
                                          int ref) {
  return provider.backward_flow(seq, t, ref);
}

}  // namespace vtc
