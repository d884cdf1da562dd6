// Frames, frame sequences, flow fields and masks.
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "vtc/tensor.hpp"

namespace vtc {

inline constexpr int kMinFrameSide = 8;

// RGB frame with values in [0,1]. Any Tensor<T> with three channels.
template <class T = float>
using Frame = Tensor<T>;

template <class T>
void validate_frame(const Tensor<T>& f) {
  if (f.channels() != 3) throw std::invalid_argument("frame must have 3 channels, got " + to_string(f.shape()));
  if (f.height() < kMinFrameSide || f.width() < kMinFrameSide) {
    throw std::invalid_argument("frame must be at least 8x8, got " + to_string(f.shape()));
  }
  for (T v : f.values()) {
    if (!std::isfinite(v) || v < T(0) || v > T(1)) {
      throw std::invalid_argument("frame values must be finite and in [0,1]");
    }
  }
}

template <class T>
void clamp_unit(Tensor<T>& f) {
  for (auto& v : f.values()) v = std::isfinite(v) ? std::clamp(v, T(0), T(1)) : T(0);
}

// Ordered frames sharing one size. Indexing through at() is 1-based; frame 1
// is the reference frame of the sequence.
template <class T = float>
class FrameSequence {
 public:
  FrameSequence() = default;
  explicit FrameSequence(std::vector<Tensor<T>> frames) : frames_(std::move(frames)) {
    for (const auto& f : frames_) {
      if (f.channels() != 3) throw std::invalid_argument("FrameSequence: frames must be RGB");
      require_same_shape(frames_.front().shape(), f.shape(), "FrameSequence");
    }
  }

  int length() const { return static_cast<int>(frames_.size()); }
  bool empty() const { return frames_.empty(); }
  int height() const { return frames_.empty() ? 0 : frames_.front().height(); }
  int width() const { return frames_.empty() ? 0 : frames_.front().width(); }
  Shape frame_shape() const { return frames_.empty() ? Shape{} : frames_.front().shape(); }

  const Tensor<T>& at(int t) const { return frames_.at(checked(t)); }
  Tensor<T>& at(int t) { return frames_.at(checked(t)); }

  void push_back(Tensor<T> f) {
    if (!frames_.empty()) require_same_shape(frames_.front().shape(), f.shape(), "FrameSequence::push_back");
    frames_.push_back(std::move(f));
  }

  const std::vector<Tensor<T>>& frames() const { return frames_; }

  // Frames first..last inclusive (1-based) as a new sequence.
  FrameSequence window(int first, int last) const {
    if (first < 1 || last > length() || first > last) throw std::out_of_range("FrameSequence::window");
    return FrameSequence(std::vector<Tensor<T>>(frames_.begin() + (first - 1), frames_.begin() + last));
  }

  bool operator==(const FrameSequence&) const = default;

 private:
  std::size_t checked(int t) const {
    if (t < 1 || t > length()) {
      throw std::out_of_range("FrameSequence: index " + std::to_string(t) + " outside 1.." +
                              std::to_string(length()));
    }
    return static_cast<std::size_t>(t - 1);
  }

  std::vector<Tensor<T>> frames_;
};

enum class FlowDirection { backward, forward };

// Per-pixel displacement (u, v) in pixels. For a backward flow from frame t to
// frame ref, sampling frame ref at x + F(x) gives the content of frame t at x.
template <class T = float>
struct FlowField {
  Tensor<T> uv;  // channel 0 = u (x), channel 1 = v (y)
  FlowDirection direction = FlowDirection::backward;

  FlowField() = default;
  FlowField(int height, int width, FlowDirection dir = FlowDirection::backward)
      : uv(Shape{2, height, width}), direction(dir) {}
  explicit FlowField(Tensor<T> values, FlowDirection dir = FlowDirection::backward)
      : uv(std::move(values)), direction(dir) {
    if (uv.channels() != 2) throw std::invalid_argument("FlowField: expected 2 channels");
  }

  static FlowField constant(int height, int width, T u, T v,
                            FlowDirection dir = FlowDirection::backward) {
    FlowField f(height, width, dir);
    for (auto& x : f.uv.channel(0)) x = u;
    for (auto& x : f.uv.channel(1)) x = v;
    return f;
  }

  int height() const { return uv.height(); }
  int width() const { return uv.width(); }
  T& u(int y, int x) { return uv(0, y, x); }
  T& v(int y, int x) { return uv(1, y, x); }
  T u(int y, int x) const { return uv(0, y, x); }
  T v(int y, int x) const { return uv(1, y, x); }
  bool all_finite() const { return uv.all_finite(); }

  template <class U>
  FlowField<U> cast() const {
    return FlowField<U>(uv.template cast<U>(), direction);
  }

  bool operator==(const FlowField&) const = default;
};

enum class MaskKind { visibility, occlusion };

// Single-channel per-pixel weight. Visibility masks are continuous in [0,1];
// occlusion masks are binary with 1 = non-occluded.
template <class T = float>
struct Mask {
  Tensor<T> values;
  MaskKind kind = MaskKind::visibility;

  Mask() = default;
  Mask(int height, int width, T fill, MaskKind k) : values(Shape{1, height, width}, fill), kind(k) {}
  Mask(Tensor<T> v, MaskKind k) : values(std::move(v)), kind(k) {
    if (values.channels() != 1) throw std::invalid_argument("Mask: expected 1 channel");
  }

  int height() const { return values.height(); }
  int width() const { return values.width(); }
  T operator()(int y, int x) const { return values(0, y, x); }
  T& operator()(int y, int x) { return values(0, y, x); }

  bool is_binary() const {
    for (T v : values.values())
      if (v != T(0) && v != T(1)) return false;
    return true;
  }
  bool in_unit_range() const {
    for (T v : values.values())
      if (!(v >= T(0) && v <= T(1))) return false;
    return true;
  }

  template <class U>
  Mask<U> cast() const {
    return Mask<U>(values.template cast<U>(), kind);
  }

  bool operator==(const Mask&) const = default;
};

}  // namespace vtc
