// Differentiable tensor operations.
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "vtc/autograd.hpp"
#include "vtc/conv.hpp"

namespace vtc::ops {

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "ops::add");
  return make_result<T>(a.value() + b.value(), {a, b}, [](Node<T>& n) {
    for (auto& p : n.parents)
      if (p->requires_grad) p->accumulate(n.grad);
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "ops::sub");
  return make_result<T>(a.value() - b.value(), {a, b}, [](Node<T>& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
    if (n.parents[1]->requires_grad) n.parents[1]->accumulate(T(-1) * n.grad);
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "ops::mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pa.value[i];
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  return make_result<T>(a.value() * s, {a}, [s](Node<T>& n) {
    n.parents[0]->accumulate(n.grad * s);
  });
}

template <class T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] > T(0) ? a.value()[i] : T(0);
  return make_result<T>(std::move(out), {a}, [](Node<T>& n) {
    auto& p = *n.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (p.value[i] > T(0)) g[i] += n.grad[i];
  });
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-a.value()[i]));
  return make_result<T>(std::move(out), {a}, [](Node<T>& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T s = n.value[i];
      g[i] += n.grad[i] * s * (T(1) - s);
    }
  });
}

template <class T>
Var<T> tanh(const Var<T>& a) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.value()[i]);
  return make_result<T>(std::move(out), {a}, [](Node<T>& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T y = n.value[i];
      g[i] += n.grad[i] * (T(1) - y * y);
    }
  });
}

template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("ops::concat_channels: no inputs");
  Shape s = parts.front().shape();
  int total = 0;
  for (const auto& p : parts) {
    require_same_plane(s, p.shape(), "ops::concat_channels");
    total += p.shape().channels;
  }
  Tensor<T> out(Shape{total, s.height, s.width});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(), out.data() + off);
    off += p.value().size();
  }
  return make_result<T>(std::move(out), parts, [](Node<T>& n) {
    std::size_t off = 0;
    for (auto& p : n.parents) {
      const std::size_t len = p->value.size();
      if (p->requires_grad) {
        auto& g = p->grad_buffer();
        for (std::size_t i = 0; i < len; ++i) g[i] += n.grad[off + i];
      }
      off += len;
    }
  });
}

template <class T>
Var<T> slice_channels(const Var<T>& a, int begin, int count) {
  const Shape s = a.shape();
  if (begin < 0 || count < 0 || begin + count > s.channels) {
    throw std::out_of_range("ops::slice_channels: range exceeds channel count");
  }
  const std::size_t off = static_cast<std::size_t>(begin) * s.plane();
  Tensor<T> out(Shape{count, s.height, s.width});
  std::copy(a.value().data() + off, a.value().data() + off + out.size(), out.data());
  return make_result<T>(std::move(out), {a}, [off](Node<T>& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[off + i] += n.grad[i];
  });
}

// Zero-padded 2-D convolution. w: {out, in, k*k}; bias: {out, 1, 1}.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int kernel, int stride,
              int pad) {
  const Shape s = x.shape();
  if (w.shape().height != s.channels || w.shape().width != kernel * kernel) {
    throw DimensionMismatch("ops::conv2d: weight " + to_string(w.shape()) +
                            " incompatible with input " + to_string(s));
  }
  const auto g = kernels::ConvGeometry::forward(s.channels, s.height, s.width, kernel, stride, pad);
  Tensor<T> out = kernels::conv2d(x.value(), w.value(), &bias.value(), g);
  return make_result<T>(std::move(out), {x, w, bias}, [g](Node<T>& n) {
    auto& px = *n.parents[0];
    auto& pw = *n.parents[1];
    auto& pb = *n.parents[2];
    if (pw.requires_grad) {
      kernels::conv2d_backward_params(px.value, n.grad, g, pw.grad_buffer(),
                                      pb.requires_grad ? &pb.grad_buffer() : nullptr);
    } else if (pb.requires_grad) {
      auto& db = pb.grad_buffer();
      for (int c = 0; c < n.value.channels(); ++c)
        for (T v : n.grad.channel(c)) db[c] += v;
    }
    if (px.requires_grad) px.accumulate(kernels::conv2d_backward_input(n.grad, pw.value, g));
  });
}

// Transposed convolution producing an out_h x out_w map. w: {in, out, k*k},
// i.e. the weight of the forward convolution this operation is the adjoint of.
template <class T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int kernel,
                        int stride, int pad, int out_h, int out_w) {
  const Shape s = x.shape();
  const int out_c = w.shape().height;
  if (w.shape().channels != s.channels || w.shape().width != kernel * kernel) {
    throw DimensionMismatch("ops::conv_transpose2d: weight " + to_string(w.shape()) +
                            " incompatible with input " + to_string(s));
  }
  const auto g = kernels::ConvGeometry::forward(out_c, out_h, out_w, kernel, stride, pad);
  if (g.out_h != s.height || g.out_w != s.width) {
    throw DimensionMismatch("ops::conv_transpose2d: target size inconsistent with input");
  }
  Tensor<T> out = kernels::conv2d_backward_input(x.value(), w.value(), g);
  for (int c = 0; c < out_c; ++c)
    for (auto& v : out.channel(c)) v += bias.value()[c];
  return make_result<T>(std::move(out), {x, w, bias}, [g, out_c](Node<T>& n) {
    auto& px = *n.parents[0];
    auto& pw = *n.parents[1];
    auto& pb = *n.parents[2];
    if (pw.requires_grad) kernels::conv2d_backward_params<T>(n.grad, px.value, g, pw.grad_buffer(), nullptr);
    if (pb.requires_grad) {
      auto& db = pb.grad_buffer();
      for (int c = 0; c < out_c; ++c)
        for (T v : n.grad.channel(c)) db[c] += v;
    }
    if (px.requires_grad) px.accumulate(kernels::conv2d<T>(n.grad, pw.value, nullptr, g));
  });
}

// 2x2 max pooling with stride 2 (odd trailing rows/cols dropped).
template <class T>
Var<T> max_pool2(const Var<T>& x) {
  const Shape s = x.shape();
  const int oh = s.height / 2, ow = s.width / 2;
  Tensor<T> out(Shape{s.channels, oh, ow});
  std::vector<std::size_t> argmax(out.size());
  const auto& v = x.value();
  for (int c = 0; c < s.channels; ++c)
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx) {
        std::size_t best = (static_cast<std::size_t>(c) * s.height + 2 * y) * s.width + 2 * xx;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t i =
                (static_cast<std::size_t>(c) * s.height + 2 * y + dy) * s.width + 2 * xx + dx;
            if (v[i] > v[best]) best = i;
          }
        const std::size_t o = (static_cast<std::size_t>(c) * oh + y) * ow + xx;
        out[o] = v[best];
        argmax[o] = best;
      }
  return make_result<T>(std::move(out), {x}, [argmax = std::move(argmax)](Node<T>& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += n.grad[i];
  });
}

namespace detail {
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}
}  // namespace detail

// Reflect padding on the bottom and right edges.
template <class T>
Var<T> reflect_pad(const Var<T>& x, int bottom, int right) {
  const Shape s = x.shape();
  if (bottom == 0 && right == 0) return x;
  if (bottom >= s.height || right >= s.width) {
    throw std::invalid_argument("ops::reflect_pad: padding exceeds image size");
  }
  const Shape o{s.channels, s.height + bottom, s.width + right};
  Tensor<T> out(o);
  std::vector<std::size_t> src(out.size());
  for (int c = 0; c < o.channels; ++c)
    for (int y = 0; y < o.height; ++y)
      for (int xx = 0; xx < o.width; ++xx) {
        const std::size_t i = (static_cast<std::size_t>(c) * o.height + y) * o.width + xx;
        src[i] = (static_cast<std::size_t>(c) * s.height + detail::reflect_index(y, s.height)) *
                     s.width +
                 detail::reflect_index(xx, s.width);
        out[i] = x.value()[src[i]];
      }
  return make_result<T>(std::move(out), {x}, [src = std::move(src)](Node<T>& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += n.grad[i];
  });
}

// Top-left h x w window.
template <class T>
Var<T> crop(const Var<T>& x, int h, int w) {
  const Shape s = x.shape();
  if (h == s.height && w == s.width) return x;
  if (h > s.height || w > s.width) throw std::invalid_argument("ops::crop: window exceeds image");
  Tensor<T> out(Shape{s.channels, h, w});
  for (int c = 0; c < s.channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) out(c, y, xx) = x.value()(c, y, xx);
  return make_result<T>(std::move(out), {x}, [](Node<T>& n) {
    auto& g = n.parents[0]->grad_buffer();
    const Shape os = n.value.shape();
    for (int c = 0; c < os.channels; ++c)
      for (int y = 0; y < os.height; ++y)
        for (int xx = 0; xx < os.width; ++xx) g(c, y, xx) += n.grad(c, y, xx);
  });
}

// Per-channel affine map x*scale[c] + shift[c] with constant coefficients.
template <class T>
Var<T> channel_affine(const Var<T>& x, const std::vector<T>& scale, const std::vector<T>& shift) {
  const Shape s = x.shape();
  if (static_cast<int>(scale.size()) != s.channels || static_cast<int>(shift.size()) != s.channels) {
    throw DimensionMismatch("ops::channel_affine: coefficient count != channels");
  }
  Tensor<T> out = x.value();
  for (int c = 0; c < s.channels; ++c)
    for (auto& v : out.channel(c)) v = v * scale[c] + shift[c];
  return make_result<T>(std::move(out), {x}, [scale](Node<T>& n) {
    auto& g = n.parents[0]->grad_buffer();
    const int channels = n.value.channels();
    const std::size_t plane = n.value.shape().plane();
    for (int c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < plane; ++i) g[c * plane + i] += n.grad[c * plane + i] * scale[c];
  });
}

// Sum over all channels and pixels of mask(y,x) * |a - b|. The mask has one
// channel; an undefined mask means all ones. Gradients reach the mask only if
// it requires them.
template <class T>
Var<T> masked_l1(const Var<T>& a, const Var<T>& b, const Var<T>& mask = {}) {
  require_same_shape(a.shape(), b.shape(), "ops::masked_l1");
  const Shape s = a.shape();
  const bool has_mask = mask.defined();
  if (has_mask) {
    require_same_plane(s, mask.shape(), "ops::masked_l1 (mask)");
    if (mask.shape().channels != 1) throw DimensionMismatch("ops::masked_l1: mask must have 1 channel");
  }
  const std::size_t plane = s.plane();
  T total = T(0);
  for (int c = 0; c < s.channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = c * plane + i;
      const T m = has_mask ? mask.value()[i] : T(1);
      total += m * std::abs(a.value()[k] - b.value()[k]);
    }
  std::vector<Var<T>> inputs{a, b};
  if (has_mask) inputs.push_back(mask);
  return make_result<T>(Tensor<T>(Shape{1, 1, 1}, total), std::move(inputs), [plane](Node<T>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    Node<T>* pm = n.parents.size() > 2 ? n.parents[2].get() : nullptr;
    const T g = n.grad[0];
    Tensor<T>* ga = pa.requires_grad ? &pa.grad_buffer() : nullptr;
    Tensor<T>* gb = pb.requires_grad ? &pb.grad_buffer() : nullptr;
    Tensor<T>* gm = (pm && pm->requires_grad) ? &pm->grad_buffer() : nullptr;
    for (std::size_t k = 0; k < pa.value.size(); ++k) {
      const T d = pa.value[k] - pb.value[k];
      const T sign = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
      const T m = pm ? pm->value[k % plane] : T(1);
      if (ga) (*ga)[k] += g * m * sign;
      if (gb) (*gb)[k] -= g * m * sign;
      if (gm) (*gm)[k % plane] += g * std::abs(d);
    }
  });
}

// Sum of scalar Vars.
template <class T>
Var<T> sum_scalars(const std::vector<Var<T>>& xs) {
  T total = T(0);
  for (const auto& x : xs) total += x.item();
  if (xs.empty()) return Var<T>::constant(Tensor<T>(Shape{1, 1, 1}, T(0)));
  return make_result<T>(Tensor<T>(Shape{1, 1, 1}, total), xs, [](Node<T>& n) {
    for (auto& p : n.parents)
      if (p->requires_grad) p->grad_buffer()[0] += n.grad[0];
  });
}

}  // namespace vtc::ops
