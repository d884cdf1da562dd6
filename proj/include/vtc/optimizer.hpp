// Adam with serializable moment state.
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "vtc/serialization.hpp"
#include "vtc/transform_net.hpp"

namespace vtc {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double grad_clip = 0.0;  // global L2 norm; 0 disables

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw std::invalid_argument("adam: learning rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("adam: betas must be in [0,1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("adam: epsilon must be > 0");
    if (grad_clip < 0.0) throw std::invalid_argument("adam: grad_clip must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const AdamConfig& c) {
  j = {{"learning_rate", c.learning_rate}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"epsilon", c.epsilon},
       {"grad_clip", c.grad_clip}};
}

class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  const AdamConfig& config() const { return cfg_; }
  std::int64_t steps() const { return steps_; }
  const NamedTensors<float>& first_moment() const { return m_; }
  const NamedTensors<float>& second_moment() const { return v_; }

  // Global gradient L2 norm over all parameters.
  static double grad_norm(const ModelParameters<float>& params) {
    double s = 0.0;
    for (const auto& [name, p] : params.all()) {
      if (p.grad().empty()) continue;
      for (float g : p.grad().values()) s += static_cast<double>(g) * g;
    }
    return std::sqrt(s);
  }

  void step(ModelParameters<float>& params) {
    ++steps_;
    double clip_scale = 1.0;
    if (cfg_.grad_clip > 0.0) {
      const double n = grad_norm(params);
      if (n > cfg_.grad_clip) clip_scale = cfg_.grad_clip / n;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
    const double step_size = cfg_.learning_rate / bc1;
    for (const auto& [name, p] : params.all()) {
      Var<float> leaf = p;
      Tensor<float>& w = leaf.mutable_value();
      auto& m = slot(m_, name, w.shape());
      auto& v = slot(v_, name, w.shape());
      const Tensor<float>& g = leaf.grad();
      if (g.empty()) continue;
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = clip_scale * g[i];
        const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        m[i] = static_cast<float>(mi);
        v[i] = static_cast<float>(vi);
        w[i] = static_cast<float>(w[i] - step_size * mi / (std::sqrt(vi / bc2) + cfg_.epsilon));
      }
    }
  }

  void save_to(Container& c) const {
    NamedTensors<float> out;
    for (const auto& [k, t] : m_) out["adam.m." + k] = t;
    for (const auto& [k, t] : v_) out["adam.v." + k] = t;
    container_put(c, out);
  }

  void load_from(const Container& c, std::int64_t steps) {
    steps_ = steps;
    m_.clear();
    v_.clear();
    for (const auto& [k, t] : c.f32) {
      if (k.rfind("adam.m.", 0) == 0) m_[k.substr(7)] = t;
      if (k.rfind("adam.v.", 0) == 0) v_[k.substr(7)] = t;
    }
  }

 private:
  static Tensor<float>& slot(NamedTensors<float>& map, const std::string& name, Shape s) {
    auto it = map.find(name);
    if (it == map.end()) it = map.emplace(name, Tensor<float>(s)).first;
    return it->second;
  }

  AdamConfig cfg_{};
  std::int64_t steps_ = 0;
  NamedTensors<float> m_, v_;
};

}  // namespace vtc
