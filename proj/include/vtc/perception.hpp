// Feature extractors for the content perceptual loss and the perceptual
// distance metric.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "vtc/ops.hpp"
#include "vtc/rng.hpp"
#include "vtc/serialization.hpp"
#include "vtc/video_data.hpp"

namespace vtc {

enum class ExtractorKind { identity, fixed_random, pretrained };

inline std::string to_string(ExtractorKind k) {
  switch (k) {
    case ExtractorKind::identity: return "identity";
    case ExtractorKind::fixed_random: return "fixed-random-stack";
    case ExtractorKind::pretrained: return "pretrained-classifier";
  }
  return "?";
}

inline ExtractorKind parse_extractor_kind(const std::string& s) {
  if (s == "identity") return ExtractorKind::identity;
  if (s == "fixed-random-stack" || s == "fixed_random") return ExtractorKind::fixed_random;
  if (s == "pretrained-classifier" || s == "pretrained") return ExtractorKind::pretrained;
  throw std::invalid_argument("unknown feature extractor kind: " + s);
}

class WeightsUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExtractorSpec {
  ExtractorKind kind = ExtractorKind::fixed_random;
  std::uint64_t seed = 1234;
  std::vector<int> random_channels{16, 32, 32};  // one entry per stride-2 stage
  std::filesystem::path weights;                  // pretrained kind only
  std::vector<int> layers;                         // 1-based stage/conv indices; empty = last
};

namespace detail {

struct ConvLayer {
  std::string name;
  int in = 0, out = 0;
  int stride = 1;
  bool pool_after = false;
};

// Convolutions of a VGG-19 prefix through the third conv of block 4.
inline std::vector<ConvLayer> vgg_prefix_layers() {
  return {{"conv1_1", 3, 64, 1, false},    {"conv1_2", 64, 64, 1, true},    {"conv2_1", 64, 128, 1, false},
          {"conv2_2", 128, 128, 1, true},  {"conv3_1", 128, 256, 1, false}, {"conv3_2", 256, 256, 1, false},
          {"conv3_3", 256, 256, 1, false}, {"conv3_4", 256, 256, 1, true},  {"conv4_1", 256, 512, 1, false},
          {"conv4_2", 512, 512, 1, false}, {"conv4_3", 512, 512, 1, false}};
}

}  // namespace detail

// Deterministic, immutable feature map phi(frame). Weights are constants, so
// gradients flow only into the input.
template <class T>
class FeatureExtractor {
 public:
  explicit FeatureExtractor(const ExtractorSpec& spec = {}) : spec_(spec) {
    switch (spec.kind) {
      case ExtractorKind::identity: break;
      case ExtractorKind::fixed_random: build_random(); break;
      case ExtractorKind::pretrained: load_pretrained(); break;
    }
    if (spec.kind != ExtractorKind::identity) {
      selected_ = spec.layers;
      std::sort(selected_.begin(), selected_.end());
      selected_.erase(std::unique(selected_.begin(), selected_.end()), selected_.end());
      for (int l : selected_) {
        if (l < 1 || l > static_cast<int>(layers_.size())) {
          throw std::invalid_argument("feature layer index " + std::to_string(l) + " out of range 1.." +
                                      std::to_string(layers_.size()));
        }
      }
      if (selected_.empty()) selected_.push_back(static_cast<int>(layers_.size()));
    }
  }

  static FeatureExtractor identity() { return FeatureExtractor(ExtractorSpec{ExtractorKind::identity, 1234, {16, 32, 32}, {}, {}}); }

  ExtractorKind kind() const { return spec_.kind; }
  const ExtractorSpec& spec() const { return spec_; }
  std::string id() const {
    std::string s = to_string(spec_.kind);
    if (spec_.kind == ExtractorKind::fixed_random) s += "(seed=" + std::to_string(spec_.seed) + ")";
    return s;
  }

  // Activations of the selected layers, in order.
  std::vector<Var<T>> extract_layers(const Var<T>& frame) const {
    if (frame.shape().channels != 3) throw DimensionMismatch("FeatureExtractor: expected RGB input");
    if (spec_.kind == ExtractorKind::identity) return {frame};
    std::vector<Var<T>> out;
    Var<T> x = ops::channel_affine(frame, scale_, shift_);
    const auto last = static_cast<std::size_t>(selected_.back());
    for (std::size_t i = 0; i < last; ++i) {
      x = ops::relu(ops::conv2d(x, weights_[i], biases_[i], 3, layers_[i].stride, 1));
      if (std::find(selected_.begin(), selected_.end(), static_cast<int>(i + 1)) != selected_.end()) out.push_back(x);
      if (layers_[i].pool_after) x = ops::max_pool2(x);
    }
    return out;
  }

  // Last selected layer.
  Var<T> extract(const Var<T>& frame) const { return extract_layers(frame).back(); }

  Tensor<T> extract(const Tensor<T>& frame) const { return extract(Var<T>::constant(frame)).value(); }
  std::vector<Tensor<T>> extract_layers(const Tensor<T>& frame) const {
    std::vector<Tensor<T>> out;
    for (const auto& v : extract_layers(Var<T>::constant(frame))) out.push_back(v.value());
    return out;
  }

  // Writes a weight file in the layout the pretrained kind expects.
  static void write_pretrained_weights(const std::filesystem::path& path, const NamedTensors<float>& tensors) {
    Container c;
    c.metadata = R"({"kind":"pretrained-classifier","layers":"vgg19 prefix through conv4_3"})";
    container_put(c, tensors);
    save_container(c, path);
  }

 private:
  void imagenet_normalization() {
    scale_ = {T(1 / 0.229), T(1 / 0.224), T(1 / 0.225)};
    shift_ = {T(-0.485 / 0.229), T(-0.456 / 0.224), T(-0.406 / 0.225)};
  }

  void build_random() {
    if (spec_.random_channels.size() != 3) {
      throw std::invalid_argument("fixed-random-stack uses exactly three stride-2 stages");
    }
    imagenet_normalization();
    Rng rng(spec_.seed);
    int in = 3;
    for (std::size_t i = 0; i < spec_.random_channels.size(); ++i) {
      const int out = spec_.random_channels[i];
      layers_.push_back({"stage" + std::to_string(i + 1), in, out, 2, false});
      const double bound = std::sqrt(6.0 / (in * 9));
      Tensor<T> w(Shape{out, in, 9});
      for (auto& v : w.values()) v = static_cast<T>(rng.uniform(-bound, bound));
      Tensor<T> b(Shape{out, 1, 1});
      for (auto& v : b.values()) v = static_cast<T>(rng.uniform(-0.1, 0.1));
      weights_.push_back(Var<T>::constant(std::move(w)));
      biases_.push_back(Var<T>::constant(std::move(b)));
      in = out;
    }
  }

  void load_pretrained() {
    if (spec_.weights.empty() || !std::filesystem::exists(spec_.weights)) {
      throw WeightsUnavailable("pretrained classifier weights unavailable at '" + spec_.weights.string() +
                               "'; set perception.kind to fixed-random-stack to use the seeded random extractor");
    }
    const Container c = load_container(spec_.weights);
    imagenet_normalization();
    for (const auto& layer : detail::vgg_prefix_layers()) {
      auto w = container_get<T>(c, layer.name + ".weight");
      auto b = container_get<T>(c, layer.name + ".bias");
      if (w.shape() != Shape{layer.out, layer.in, 9} || b.shape() != Shape{layer.out, 1, 1}) {
        throw ContainerError("pretrained weights: unexpected shape for " + layer.name);
      }
      layers_.push_back(layer);
      weights_.push_back(Var<T>::constant(std::move(w)));
      biases_.push_back(Var<T>::constant(std::move(b)));
    }
  }

  ExtractorSpec spec_;
  std::vector<T> scale_, shift_;
  std::vector<detail::ConvLayer> layers_;
  std::vector<Var<T>> weights_, biases_;
  std::vector<int> selected_;
};

// Differentiable loss value with the element count for the mean view.
template <class T>
struct LossTerm {
  Var<T> sum;
  std::size_t count = 0;

  T value() const { return sum.item(); }
  T mean() const { return count ? sum.item() / static_cast<T>(count) : T(0); }
};

// sum_{t=2..T} || phi(O_t) - phi(P_t) ||_1 over all feature elements.
template <class T>
LossTerm<T> perceptual_loss(const std::vector<Var<T>>& outputs, const std::vector<Tensor<T>>& processed,
                            const FeatureExtractor<T>& fe) {
  if (outputs.size() != processed.size()) throw DimensionMismatch("perceptual_loss: sequence length mismatch");
  std::vector<Var<T>> terms;
  std::size_t count = 0;
  for (std::size_t t = 1; t < outputs.size(); ++t) {
    require_same_shape(outputs[t].shape(), processed[t].shape(), "perceptual_loss");
    const auto fo = fe.extract_layers(outputs[t]);
    const auto fp = fe.extract_layers(Var<T>::constant(processed[t]));
    for (std::size_t l = 0; l < fo.size(); ++l) {
      count += fo[l].value().size();
      terms.push_back(ops::masked_l1(fo[l], fp[l]));
    }
  }
  return {ops::sum_scalars(terms), count};
}

template <class T>
T perceptual_loss(const FrameSequence<T>& outputs, const FrameSequence<T>& processed, const FeatureExtractor<T>& fe) {
  if (outputs.length() != processed.length()) throw DimensionMismatch("perceptual_loss: sequence length mismatch");
  std::vector<Var<T>> o;
  for (const auto& f : outputs.frames()) o.push_back(Var<T>::constant(f));
  return perceptual_loss(o, processed.frames(), fe).value();
}

// Mean over positions of the squared distance between channel-normalized
// feature vectors.
template <class T>
T normalized_feature_distance(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "normalized_feature_distance");
  const Shape s = a.shape();
  const std::size_t plane = s.plane();
  constexpr double eps = 1e-10;
  double total = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    double na = 0.0, nb = 0.0;
    for (int c = 0; c < s.channels; ++c) {
      na += static_cast<double>(a[c * plane + i]) * a[c * plane + i];
      nb += static_cast<double>(b[c * plane + i]) * b[c * plane + i];
    }
    na = std::sqrt(na) + eps;
    nb = std::sqrt(nb) + eps;
    double d = 0.0;
    for (int c = 0; c < s.channels; ++c) {
      const double diff = a[c * plane + i] / na - b[c * plane + i] / nb;
      d += diff * diff;
    }
    total += d;
  }
  return static_cast<T>(total / static_cast<double>(plane));
}

// Uncalibrated stand-in for a learned perceptual similarity metric.
template <class T>
struct PerceptualMetric {
  FeatureExtractor<T> extractor;

  // Summed over the selected layers.
  T distance(const Tensor<T>& a, const Tensor<T>& b) const {
    const auto fa = extractor.extract_layers(a);
    const auto fb = extractor.extract_layers(b);
    T d = T(0);
    for (std::size_t l = 0; l < fa.size(); ++l) d += normalized_feature_distance(fa[l], fb[l]);
    return d;
  }
  std::string id() const { return "normalized-feature-distance/" + extractor.id(); }
};

// (1/(T-1)) sum_{t=2..T} d(O_t, P_t); the first frame is excluded.
template <class T>
T perceptual_distance(const FrameSequence<T>& processed, const FrameSequence<T>& outputs,
                      const PerceptualMetric<T>& metric) {
  if (processed.length() != outputs.length()) throw DimensionMismatch("perceptual_distance: length mismatch");
  if (processed.length() < 2) throw std::invalid_argument("perceptual_distance: need at least 2 frames");
  double total = 0.0;
  for (int t = 2; t <= processed.length(); ++t) total += metric.distance(outputs.at(t), processed.at(t));
  return static_cast<T>(total / (processed.length() - 1));
}

}  // namespace vtc
