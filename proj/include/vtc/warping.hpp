// Bilinear backward warping and the exponential visibility mask.
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vtc/autograd.hpp"
#include "vtc/video_data.hpp"

namespace vtc {

struct WarpConfig {
  double alpha = 50.0;

  void validate() const {
    if (!std::isfinite(alpha) || alpha <= 0.0) throw std::invalid_argument("WarpConfig: alpha must be finite and > 0");
  }
};

namespace detail {

// Sample position along one axis, clamped to [0, n-1]. `live` is false when
// the raw coordinate fell outside and the derivative w.r.t. flow vanishes.
template <class T>
struct AxisSample {
  int i0, i1;
  T frac;
  bool live;
};

template <class T>
AxisSample<T> axis_sample(T raw, int n) {
  const T hi = static_cast<T>(n - 1);
  bool live = true;
  T s = raw;
  if (s < T(0)) {
    s = T(0);
    live = false;
  } else if (s > hi) {
    s = hi;
    live = false;
  }
  int i0 = static_cast<int>(std::floor(s));
  if (i0 > n - 1) i0 = n - 1;
  const int i1 = std::min(i0 + 1, n - 1);
  return {i0, i1, s - static_cast<T>(i0), live};
}

}  // namespace detail

// output(c, y, x) = bilinear sample of frame(c) at (x + u(y,x), y + v(y,x)),
// coordinates clamped to the image rectangle. Differentiable w.r.t. both the
// frame and the flow (flow is a 2-channel Var).
template <class T>
Var<T> bilinear_warp(const Var<T>& frame, const Var<T>& flow) {
  const Shape s = frame.shape();
  if (flow.shape().channels != 2) throw DimensionMismatch("bilinear_warp: flow must have 2 channels");
  require_same_plane(s, flow.shape(), "bilinear_warp");
  if (!flow.value().all_finite()) throw std::invalid_argument("bilinear_warp: non-finite flow");

  const int H = s.height, W = s.width;
  const std::size_t plane = s.plane();
  Tensor<T> out(s);
  const auto& f = frame.value();
  const auto& uv = flow.value();
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * W + x;
      const auto sx = detail::axis_sample<T>(static_cast<T>(x) + uv[p], W);
      const auto sy = detail::axis_sample<T>(static_cast<T>(y) + uv[plane + p], H);
      const T w00 = (T(1) - sx.frac) * (T(1) - sy.frac), w01 = sx.frac * (T(1) - sy.frac);
      const T w10 = (T(1) - sx.frac) * sy.frac, w11 = sx.frac * sy.frac;
      for (int c = 0; c < s.channels; ++c) {
        const T* img = f.data() + c * plane;
        out[c * plane + p] = w00 * img[sy.i0 * W + sx.i0] + w01 * img[sy.i0 * W + sx.i1] +
                             w10 * img[sy.i1 * W + sx.i0] + w11 * img[sy.i1 * W + sx.i1];
      }
    }

  return make_result<T>(std::move(out), {frame, flow}, [](Node<T>& n) {
    auto& pf = *n.parents[0];
    auto& pflow = *n.parents[1];
    const Shape s = pf.value.shape();
    const int H = s.height, W = s.width;
    const std::size_t plane = s.plane();
    Tensor<T>* gf = pf.requires_grad ? &pf.grad_buffer() : nullptr;
    Tensor<T>* guv = pflow.requires_grad ? &pflow.grad_buffer() : nullptr;
    const auto& uv = pflow.value;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * W + x;
        const auto sx = detail::axis_sample<T>(static_cast<T>(x) + uv[p], W);
        const auto sy = detail::axis_sample<T>(static_cast<T>(y) + uv[plane + p], H);
        const T w00 = (T(1) - sx.frac) * (T(1) - sy.frac), w01 = sx.frac * (T(1) - sy.frac);
        const T w10 = (T(1) - sx.frac) * sy.frac, w11 = sx.frac * sy.frac;
        T du = T(0), dv = T(0);
        for (int c = 0; c < s.channels; ++c) {
          const T g = n.grad[c * plane + p];
          if (g == T(0)) continue;
          if (gf) {
            T* gi = gf->data() + c * plane;
            gi[sy.i0 * W + sx.i0] += g * w00;
            gi[sy.i0 * W + sx.i1] += g * w01;
            gi[sy.i1 * W + sx.i0] += g * w10;
            gi[sy.i1 * W + sx.i1] += g * w11;
          }
          if (guv) {
            const T* img = pf.value.data() + c * plane;
            const T a = img[sy.i0 * W + sx.i0], b = img[sy.i0 * W + sx.i1];
            const T cc = img[sy.i1 * W + sx.i0], d = img[sy.i1 * W + sx.i1];
            if (sx.live && sx.i1 != sx.i0) du += g * ((T(1) - sy.frac) * (b - a) + sy.frac * (d - cc));
            if (sy.live && sy.i1 != sy.i0) dv += g * ((T(1) - sx.frac) * (cc - a) + sx.frac * (d - b));
          }
        }
        if (guv) {
          (*guv)[p] += du;
          (*guv)[plane + p] += dv;
        }
      }
  });
}

template <class T>
Tensor<T> bilinear_warp(const Tensor<T>& frame, const FlowField<T>& flow) {
  return bilinear_warp(Var<T>::constant(frame), Var<T>::constant(flow.uv)).value();
}

// M(x) = exp(-alpha * sum_c (a(x,c) - b(x,c))^2), differentiable in both inputs.
template <class T>
Var<T> visibility_mask(const Var<T>& current, const Var<T>& warped_previous, T alpha) {
  require_same_shape(current.shape(), warped_previous.shape(), "visibility_mask");
  const Shape s = current.shape();
  const std::size_t plane = s.plane();
  Tensor<T> out(Shape{1, s.height, s.width});
  for (std::size_t i = 0; i < plane; ++i) {
    T sq = T(0);
    for (int c = 0; c < s.channels; ++c) {
      const T d = current.value()[c * plane + i] - warped_previous.value()[c * plane + i];
      sq += d * d;
    }
    out[i] = std::exp(-alpha * sq);
  }
  return make_result<T>(std::move(out), {current, warped_previous}, [alpha](Node<T>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    const std::size_t plane = n.value.size();
    const int channels = pa.value.channels();
    Tensor<T>* ga = pa.requires_grad ? &pa.grad_buffer() : nullptr;
    Tensor<T>* gb = pb.requires_grad ? &pb.grad_buffer() : nullptr;
    for (std::size_t i = 0; i < plane; ++i) {
      const T k = n.grad[i] * n.value[i] * T(-2) * alpha;
      for (int c = 0; c < channels; ++c) {
        const T d = pa.value[c * plane + i] - pb.value[c * plane + i];
        if (ga) (*ga)[c * plane + i] += k * d;
        if (gb) (*gb)[c * plane + i] -= k * d;
      }
    }
  });
}

// Gradient-free visibility mask of frame t given the warped previous frame.
template <class T>
Mask<T> visibility_mask(const Tensor<T>& current, const Tensor<T>& warped_previous,
                        const WarpConfig& cfg = {}) {
  cfg.validate();
  auto m = visibility_mask(Var<T>::constant(current), Var<T>::constant(warped_previous),
                           static_cast<T>(cfg.alpha));
  return Mask<T>(m.value(), MaskKind::visibility);
}

}  // namespace vtc
