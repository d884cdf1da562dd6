// Recurrent two-stream image transformation network.
//
//   stream A (P_t, O_{t-1}) --conv s1--> a0 --conv s2--> a1 --conv s2--> a2
//   stream B (I_t, I_{t-1}) --conv s1--> b0 --conv s2--> b1 --conv s2--> b2
//   merge(a2 | b2) -> B residual blocks -> ConvLSTM -> h
//   h --deconv--> + a1 --deconv--> + a0 --conv--> residual
//   O_t = P_t + residual
//
// Skip connections come from stream A only. The output convolution starts at
// zero, so a fresh model maps P_t to itself.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vtc/ops.hpp"
#include "vtc/rng.hpp"
#include "vtc/serialization.hpp"
#include "vtc/video_data.hpp"

namespace vtc {

inline constexpr int kModelVersion = 1;

struct NetworkConfig {
  int base_channels = 32;  // full and half resolution; the bottleneck uses twice this
  int residual_blocks = 5;
  int kernel = 3;
  double lstm_forget_bias = 1.0;
  std::uint64_t init_seed = 7;

  int bottleneck_channels() const { return 2 * base_channels; }

  void validate() const {
    if (base_channels < 1) throw std::invalid_argument("NetworkConfig: base_channels must be >= 1");
    if (residual_blocks < 1) throw std::invalid_argument("NetworkConfig: residual_blocks must be >= 1");
    if (kernel != 3) throw std::invalid_argument("NetworkConfig: only 3x3 kernels are supported");
  }

  bool operator==(const NetworkConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const NetworkConfig& c) {
  j = nlohmann::json{{"base_channels", c.base_channels},
                     {"residual_blocks", c.residual_blocks},
                     {"kernel", c.kernel},
                     {"lstm_forget_bias", c.lstm_forget_bias},
                     {"init_seed", c.init_seed}};
}

inline void from_json(const nlohmann::json& j, NetworkConfig& c) {
  c.base_channels = j.at("base_channels").get<int>();
  c.residual_blocks = j.at("residual_blocks").get<int>();
  c.kernel = j.at("kernel").get<int>();
  c.lstm_forget_bias = j.at("lstm_forget_bias").get<double>();
  c.init_seed = j.at("init_seed").get<std::uint64_t>();
}

// Spatial size the network runs at: the input padded up to a multiple of 4.
inline std::pair<int, int> padded_size(int height, int width) {
  if (height < 4 || width < 4) throw std::invalid_argument("transform network: frames must be at least 4x4");
  return {(height + 3) / 4 * 4, (width + 3) / 4 * 4};
}

template <class T>
struct RecurrentState {
  Var<T> hidden;
  Var<T> cell;
};

template <class T>
RecurrentState<T> init_state(const NetworkConfig& cfg, int height, int width) {
  cfg.validate();
  const auto [ph, pw] = padded_size(height, width);
  const Shape s{cfg.bottleneck_channels(), ph / 4, pw / 4};
  return {Var<T>::constant(Tensor<T>(s)), Var<T>::constant(Tensor<T>(s))};
}

// Named learnable tensors. Each entry is a leaf Var that accumulates gradients.
template <class T>
class ModelParameters {
 public:
  ModelParameters() = default;
  explicit ModelParameters(NetworkConfig cfg) : config_(cfg) { cfg.validate(); }

  const NetworkConfig& config() const { return config_; }
  int version() const { return version_; }

  void add(const std::string& name, Tensor<T> value) {
    if (!params_.emplace(name, Var<T>::parameter(std::move(value))).second) {
      throw std::logic_error("duplicate parameter " + name);
    }
  }
  const Var<T>& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContainerError("missing parameter: " + name);
    return it->second;
  }
  const std::map<std::string, Var<T>>& all() const { return params_; }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [k, v] : params_) n += v.value().size();
    return n;
  }

  void zero_grad() const {
    for (const auto& [k, v] : params_) v.zero_grad();
  }

  NamedTensors<T> values() const {
    NamedTensors<T> out;
    for (const auto& [k, v] : params_) out[k] = v.value();
    return out;
  }

  // Deep copy with fresh leaves.
  ModelParameters clone() const {
    ModelParameters p(config_);
    for (const auto& [k, v] : params_) p.add(k, v.value());
    return p;
  }

  template <class U>
  ModelParameters<U> cast() const {
    ModelParameters<U> p(config_);
    for (const auto& [k, v] : params_) p.add(k, v.value().template cast<U>());
    return p;
  }

  bool all_finite() const {
    for (const auto& [k, v] : params_)
      if (!v.value().all_finite()) return false;
    return true;
  }

 private:
  NetworkConfig config_{};
  int version_ = kModelVersion;
  std::map<std::string, Var<T>> params_;
};

namespace detail {

struct ParamSpec {
  std::string name;
  int out, in;
  bool transposed;
  bool zero;  // zero-initialized weight
};

inline std::vector<ParamSpec> parameter_layout(const NetworkConfig& cfg) {
  const int c = cfg.base_channels, c2 = cfg.bottleneck_channels();
  std::vector<ParamSpec> specs;
  for (const char* stream : {"stream_a", "stream_b"}) {
    const std::string s = stream;
    specs.push_back({s + ".conv0", c, 6, false, false});
    specs.push_back({s + ".conv1", c, c, false, false});
    specs.push_back({s + ".conv2", c2, c, false, false});
  }
  specs.push_back({"merge", c2, 2 * c2, false, false});
  for (int b = 0; b < cfg.residual_blocks; ++b) {
    const std::string s = "res" + std::to_string(b);
    specs.push_back({s + ".conv1", c2, c2, false, false});
    specs.push_back({s + ".conv2", c2, c2, false, false});
  }
  specs.push_back({"lstm.gates", 4 * c2, 2 * c2, false, false});
  specs.push_back({"decoder.up1", c2, c, true, false});
  specs.push_back({"decoder.up2", c, c, true, false});
  specs.push_back({"decoder.out", 3, c, false, true});
  return specs;
}

}  // namespace detail

// Fresh parameters: uniform fan-in scaled weights, zero biases, zero output layer.
template <class T>
ModelParameters<T> init_params(const NetworkConfig& cfg) {
  ModelParameters<T> p(cfg);
  Rng rng(cfg.init_seed);
  const int k2 = cfg.kernel * cfg.kernel;
  const int c2 = cfg.bottleneck_channels();
  for (const auto& spec : detail::parameter_layout(cfg)) {
    // Transposed layers list (in, out) swapped, matching their {in, out, k*k} storage.
    Tensor<T> w(Shape{spec.out, spec.in, k2});
    const int fan_in = spec.in * k2;
    const double bound = std::sqrt(6.0 / fan_in);
    if (!spec.zero) {
      for (auto& v : w.values()) v = static_cast<T>(rng.uniform(-bound, bound));
    }
    const int bias_channels = spec.transposed ? spec.in : spec.out;
    Tensor<T> b(Shape{bias_channels, 1, 1});
    if (spec.name == "lstm.gates") {
      for (int i = c2; i < 2 * c2; ++i) b[i] = static_cast<T>(cfg.lstm_forget_bias);
    }
    p.add(spec.name + ".weight", std::move(w));
    p.add(spec.name + ".bias", std::move(b));
  }
  return p;
}

template <class T>
struct StepResult {
  Var<T> output;
  RecurrentState<T> state;
};

namespace detail {

template <class T>
Var<T> conv(const ModelParameters<T>& p, const std::string& name, const Var<T>& x, int stride) {
  return ops::conv2d(x, p.at(name + ".weight"), p.at(name + ".bias"), 3, stride, 1);
}

template <class T>
Var<T> deconv(const ModelParameters<T>& p, const std::string& name, const Var<T>& x, int out_h, int out_w) {
  return ops::conv_transpose2d(x, p.at(name + ".weight"), p.at(name + ".bias"), 3, 2, 1, out_h, out_w);
}

template <class T>
struct Encoded {
  Var<T> full, half, quarter;
};

template <class T>
Encoded<T> encode(const ModelParameters<T>& p, const std::string& stream, const Var<T>& x) {
  Encoded<T> e;
  e.full = ops::relu(conv(p, stream + ".conv0", x, 1));
  e.half = ops::relu(conv(p, stream + ".conv1", e.full, 2));
  e.quarter = ops::relu(conv(p, stream + ".conv2", e.half, 2));
  return e;
}

}  // namespace detail

// One recurrent step. The original frames and P_t are constants; O_{t-1} may
// carry gradients from earlier steps.
template <class T>
StepResult<T> step(const ModelParameters<T>& params, const Tensor<T>& input_t, const Tensor<T>& input_prev,
                   const Tensor<T>& processed_t, const Var<T>& output_prev, const RecurrentState<T>& state) {
  const NetworkConfig& cfg = params.config();
  const Shape s = processed_t.shape();
  if (s.channels != 3) throw DimensionMismatch("step: frames must be RGB");
  if (!params.all_finite()) throw std::invalid_argument("step: non-finite parameters");
  require_same_shape(s, input_t.shape(), "step (I_t)");
  require_same_shape(s, input_prev.shape(), "step (I_{t-1})");
  require_same_shape(s, output_prev.shape(), "step (O_{t-1})");
  const auto [ph, pw] = padded_size(s.height, s.width);
  const Shape state_shape{cfg.bottleneck_channels(), ph / 4, pw / 4};
  if (state.hidden.shape() != state_shape || state.cell.shape() != state_shape) {
    throw DimensionMismatch("step: recurrent state " + to_string(state.hidden.shape()) + " does not match " +
                            to_string(state_shape));
  }

  const Var<T> p_t = Var<T>::constant(processed_t);
  const int bottom = ph - s.height, right = pw - s.width;
  const Var<T> in_a = ops::reflect_pad(ops::concat_channels<T>({p_t, output_prev}), bottom, right);
  const Var<T> in_b = ops::reflect_pad(
      ops::concat_channels<T>({Var<T>::constant(input_t), Var<T>::constant(input_prev)}), bottom, right);

  const auto a = detail::encode(params, "stream_a", in_a);
  const auto b = detail::encode(params, "stream_b", in_b);

  Var<T> x = ops::relu(detail::conv(params, "merge", ops::concat_channels<T>({a.quarter, b.quarter}), 1));
  for (int i = 0; i < cfg.residual_blocks; ++i) {
    const std::string name = "res" + std::to_string(i);
    const Var<T> r = detail::conv(params, name + ".conv2", ops::relu(detail::conv(params, name + ".conv1", x, 1)), 1);
    x = ops::add(x, r);
  }

  const int c2 = cfg.bottleneck_channels();
  const Var<T> gates = detail::conv(params, "lstm.gates", ops::concat_channels<T>({x, state.hidden}), 1);
  const Var<T> in_gate = ops::sigmoid(ops::slice_channels(gates, 0, c2));
  const Var<T> forget_gate = ops::sigmoid(ops::slice_channels(gates, c2, c2));
  const Var<T> out_gate = ops::sigmoid(ops::slice_channels(gates, 2 * c2, c2));
  const Var<T> candidate = ops::tanh(ops::slice_channels(gates, 3 * c2, c2));
  const Var<T> cell = ops::add(ops::mul(forget_gate, state.cell), ops::mul(in_gate, candidate));
  const Var<T> hidden = ops::mul(out_gate, ops::tanh(cell));

  Var<T> up = ops::relu(ops::add(detail::deconv(params, "decoder.up1", hidden, ph / 2, pw / 2), a.half));
  up = ops::relu(ops::add(detail::deconv(params, "decoder.up2", up, ph, pw), a.full));
  const Var<T> residual = ops::crop(detail::conv(params, "decoder.out", up, 1), s.height, s.width);

  return {ops::add(p_t, residual), {hidden, cell}};
}

template <class T>
void check_aligned(const FrameSequence<T>& inputs, const FrameSequence<T>& processed) {
  if (inputs.length() != processed.length()) {
    throw DimensionMismatch("sequence length mismatch: " + std::to_string(inputs.length()) + " original vs " +
                            std::to_string(processed.length()) + " processed frames");
  }
  if (inputs.frame_shape() != processed.frame_shape()) {
    throw DimensionMismatch("original and processed frames differ in size");
  }
}

// Runs the network over a whole video: O_1 = P_1, then one step per frame with
// the previous output fed back. No window limit.
template <class T>
FrameSequence<T> process_video(const ModelParameters<T>& params, const FrameSequence<T>& inputs,
                               const FrameSequence<T>& processed) {
  check_aligned(inputs, processed);
  if (processed.length() == 0) return {};
  if (processed.length() == 1) std::clog << "warning: single-frame video; output equals the processed frame\n";
  FrameSequence<T> out;
  out.push_back(processed.at(1));
  auto state = init_state<T>(params.config(), processed.height(), processed.width());
  Var<T> prev = Var<T>::constant(processed.at(1));
  for (int t = 2; t <= processed.length(); ++t) {
    auto r = step(params, inputs.at(t), inputs.at(t - 1), processed.at(t), prev, state);
    out.push_back(r.output.value());
    prev = Var<T>::constant(r.output.value());
    state = {Var<T>::constant(r.state.hidden.value()), Var<T>::constant(r.state.cell.value())};
  }
  return out;
}

template <class T>
nlohmann::json params_metadata(const ModelParameters<T>& p) {
  return {{"model_version", p.version()}, {"network", p.config()}};
}

template <class T>
Container params_container(const ModelParameters<T>& p, const nlohmann::json& extra = nlohmann::json::object()) {
  Container c;
  nlohmann::json meta = params_metadata(p);
  for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();
  c.metadata = meta.dump();
  container_put(c, p.values());
  return c;
}

template <class T>
ModelParameters<T> params_from_container(const Container& c) {
  const auto meta = nlohmann::json::parse(c.metadata);
  const int version = meta.value("model_version", 0);
  if (version != kModelVersion) {
    throw VersionMismatch("model version " + std::to_string(version) + " != supported " +
                          std::to_string(kModelVersion) + "; retrain or convert the checkpoint");
  }
  const auto cfg = meta.at("network").get<NetworkConfig>();
  ModelParameters<T> p(cfg);
  const auto layout = init_params<T>(cfg);
  for (const auto& [name, v] : layout.all()) {
    auto t = container_get<T>(c, name);
    if (t.shape() != v.shape()) throw ContainerError("parameter " + name + " has shape " + to_string(t.shape()));
    p.add(name, std::move(t));
  }
  return p;
}

template <class T>
void save_params(const ModelParameters<T>& p, const std::filesystem::path& path) {
  save_container(params_container(p), path);
}

template <class T>
ModelParameters<T> load_params(const std::filesystem::path& path) {
  return params_from_container<T>(load_container(path));
}

}  // namespace vtc
