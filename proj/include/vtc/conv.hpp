// im2col convolution kernels backed by Eigen GEMM.
//
// Weights are stored as Tensor{out, in, k*k}, which reads as a row-major
// (out x in*k*k) matrix.
#pragma once

#include <Eigen/Core>

#include "vtc/tensor.hpp"

namespace vtc::kernels {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  int in_channels;
  int in_h, in_w;
  int kernel;
  int stride;
  int pad;
  int out_h, out_w;

  static ConvGeometry forward(int c, int h, int w, int k, int stride, int pad) {
    return {c, h, w, k, stride, pad, (h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1};
  }
  int rows() const { return in_channels * kernel * kernel; }
  int cols() const { return out_h * out_w; }
};

template <class T>
void im2col(const T* src, const ConvGeometry& g, T* col) {
  const int k = g.kernel;
  for (int c = 0; c < g.in_channels; ++c) {
    const T* plane = src + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + (static_cast<std::size_t>((c * k + ky) * k + kx)) * g.cols();
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * g.out_w;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* line = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.in_w) ? line[ix] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into the image.
template <class T>
void col2im(const T* col, const ConvGeometry& g, T* dst) {
  const int k = g.kernel;
  for (int c = 0; c < g.in_channels; ++c) {
    T* plane = dst + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + (static_cast<std::size_t>((c * k + ky) * k + kx)) * g.cols();
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          T* line = plane + static_cast<std::size_t>(iy) * g.in_w;
          const T* srow = row + static_cast<std::size_t>(oy) * g.out_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.in_w) line[ix] += srow[ox];
          }
        }
      }
    }
  }
}

// out = W * im2col(x) + b
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 const ConvGeometry& g) {
  const int out_c = w.channels();
  Tensor<T> col(Shape{1, g.rows(), g.cols()});
  im2col(x.data(), g, col.data());
  Tensor<T> out(Shape{out_c, g.out_h, g.out_w});
  MapMat<T> o(out.data(), out_c, g.cols());
  o.noalias() = ConstMapMat<T>(w.data(), out_c, g.rows()) *
                ConstMapMat<T>(col.data(), g.rows(), g.cols());
  if (bias) {
    for (int c = 0; c < out_c; ++c) o.row(c).array() += (*bias)[c];
  }
  return out;
}

// d(conv2d)/dx applied to dout.
template <class T>
Tensor<T> conv2d_backward_input(const Tensor<T>& dout, const Tensor<T>& w, const ConvGeometry& g) {
  const int out_c = w.channels();
  Tensor<T> col(Shape{1, g.rows(), g.cols()});
  MapMat<T>(col.data(), g.rows(), g.cols()).noalias() =
      ConstMapMat<T>(w.data(), out_c, g.rows()).transpose() *
      ConstMapMat<T>(dout.data(), out_c, g.cols());
  Tensor<T> dx(Shape{g.in_channels, g.in_h, g.in_w});
  col2im(col.data(), g, dx.data());
  return dx;
}

// Accumulate d(conv2d)/dW and d/db applied to dout.
template <class T>
void conv2d_backward_params(const Tensor<T>& x, const Tensor<T>& dout, const ConvGeometry& g,
                            Tensor<T>& dw, Tensor<T>* db) {
  const int out_c = dw.channels();
  Tensor<T> col(Shape{1, g.rows(), g.cols()});
  im2col(x.data(), g, col.data());
  ConstMapMat<T> d(dout.data(), out_c, g.cols());
  MapMat<T>(dw.data(), out_c, g.rows()).noalias() +=
      d * ConstMapMat<T>(col.data(), g.rows(), g.cols()).transpose();
  if (db) {
    for (int c = 0; c < out_c; ++c) (*db)[c] += d.row(c).sum();
  }
}

}  // namespace vtc::kernels
