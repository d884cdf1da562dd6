// Run configuration: JSON file merged over defaults, dotted key=value
// overrides, and a stable hash stamped into every output.
#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "vtc/flow.hpp"
#include "vtc/perception.hpp"
#include "vtc/synthgen.hpp"
#include "vtc/training.hpp"

namespace vtc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline nlohmann::json default_config() {
  using nlohmann::json;
  return json{
      {"seed", 0},
      {"network", {{"base_channels", 32}, {"residual_blocks", 5}, {"kernel", 3}, {"lstm_forget_bias", 1.0}, {"init_seed", 7}}},
      {"perception",
       {{"kind", "fixed-random-stack"}, {"seed", 1234}, {"channels", {16, 32, 32}}, {"layers", json::array()}, {"weights", ""}}},
      {"metric", {{"kind", "fixed-random-stack"}, {"seed", 4321}, {"channels", {16, 32, 32}}, {"layers", json::array()}, {"weights", ""}}},
      {"loss", {{"lambda_p", 10.0}, {"lambda_st", 100.0}, {"lambda_lt", 100.0}, {"alpha", 50.0}, {"truncate_previous", false}}},
      {"train",
       {{"unroll", 10},
        {"batch_size", 1},
        {"crop", 0},
        {"iterations", 1000},
        {"learning_rate", 1e-4},
        {"beta1", 0.9},
        {"beta2", 0.999},
        {"epsilon", 1e-8},
        {"grad_clip", 0.0},
        {"log_every", 50},
        {"checkpoint_every", 0}}},
      {"flow",
       {{"backend", "analytic"},
        {"occlusion_relative", 0.01},
        {"occlusion_offset", 0.5},
        {"levels", 3},
        {"iterations", 5},
        {"inner_sweeps", 30},
        {"smoothness", 0.02}}},
      {"synth",
       {{"train_sequences", 4},
        {"eval_sequences", 2},
        {"frames", 12},
        {"height", 48},
        {"width", 48},
        {"texture", "noise"},
        {"max_shift", 2},
        {"flicker_mode", "brightness-sinusoid"},
        {"amplitude", 0.2},
        {"period", 4.0},
        {"random_phase", true},
        {"bit_depth", 16}}},
      {"io", {{"pattern", "%05d.png"}, {"bit_depth", 8}}},
      {"sweep", {{"pairs", {{100.0, 100.0}, {100.0, 10.0}, {100.0, 1.0}}}}},
  };
}

namespace detail {

// Copies user values over defaults; any key absent from the defaults is an error.
inline void merge_checked(nlohmann::json& base, const nlohmann::json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("config: expected an object at '" + (path.empty() ? "<root>" : path) + "'");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key: " + key);
    auto& slot = base[it.key()];
    if (slot.is_object()) {
      merge_checked(slot, it.value(), key);
    } else {
      const bool numeric = slot.is_number() && it.value().is_number();
      if (!numeric && slot.type() != it.value().type() && !(slot.is_array() && it.value().is_array())) {
        throw ConfigError("config key " + key + " expects " + std::string(slot.type_name()) + ", got " +
                          std::string(it.value().type_name()));
      }
      slot = it.value();
    }
  }
}

}  // namespace detail

// "a.b.c=value"; value parsed as JSON when possible, otherwise taken as a string.
inline void apply_override(nlohmann::json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must be key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  nlohmann::json patch = value;
  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = nlohmann::json{{*it, patch}};
  detail::merge_checked(cfg, patch, "");
}

inline nlohmann::json load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  nlohmann::json cfg = default_config();
  if (!path.empty()) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file " + path.string());
    nlohmann::json user;
    try {
      user = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config file " + path.string() + ": " + e.what());
    }
    detail::merge_checked(cfg, user, "");
  }
  for (const auto& o : overrides) apply_override(cfg, o);
  return cfg;
}

// FNV-1a 64 over the canonical dump.
inline std::string config_hash(const nlohmann::json& cfg) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : cfg.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

template <class F>
auto config_get(F&& f, const std::string& what) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + what + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config ") + what + ": " + e.what());
  }
}

inline ExtractorSpec extractor_from_config(const nlohmann::json& j) {
  return config_get(
      [&] {
        ExtractorSpec s;
        s.kind = parse_extractor_kind(j.at("kind").get<std::string>());
        s.seed = j.at("seed").get<std::uint64_t>();
        s.random_channels = j.at("channels").get<std::vector<int>>();
        s.layers = j.at("layers").get<std::vector<int>>();
        s.weights = j.at("weights").get<std::string>();
        if (s.weights.empty()) {
          if (const char* dir = std::getenv("VTC_WEIGHTS_DIR")) s.weights = std::filesystem::path(dir) / "vgg19_prefix.vtc";
        }
        return s;
      },
      "perception");
}

inline TrainingConfig training_from_config(const nlohmann::json& cfg) {
  return config_get(
      [&] {
        TrainingConfig t;
        const auto& tr = cfg.at("train");
        const auto& loss = cfg.at("loss");
        t.unroll = tr.at("unroll").get<int>();
        t.batch_size = tr.at("batch_size").get<int>();
        t.crop = tr.at("crop").get<int>();
        t.iterations = tr.at("iterations").get<int>();
        t.adam.learning_rate = tr.at("learning_rate").get<double>();
        t.adam.beta1 = tr.at("beta1").get<double>();
        t.adam.beta2 = tr.at("beta2").get<double>();
        t.adam.epsilon = tr.at("epsilon").get<double>();
        t.adam.grad_clip = tr.at("grad_clip").get<double>();
        t.log_every = tr.at("log_every").get<int>();
        t.checkpoint_every = tr.at("checkpoint_every").get<int>();
        t.seed = cfg.at("seed").get<std::uint64_t>();
        t.weights = {loss.at("lambda_p").get<double>(), loss.at("lambda_st").get<double>(),
                     loss.at("lambda_lt").get<double>()};
        t.alpha = loss.at("alpha").get<double>();
        t.truncate_previous = loss.at("truncate_previous").get<bool>();
        t.network = cfg.at("network").get<NetworkConfig>();
        t.perception = extractor_from_config(cfg.at("perception"));
        t.config_hash = config_hash(cfg);
        t.validate();
        return t;
      },
      "train");
}

inline OcclusionConfig occlusion_from_config(const nlohmann::json& cfg) {
  const auto& f = cfg.at("flow");
  return {f.at("occlusion_relative").get<double>(), f.at("occlusion_offset").get<double>()};
}

inline EstimatorParams estimator_from_config(const nlohmann::json& cfg) {
  const auto& f = cfg.at("flow");
  EstimatorParams p;
  p.levels = f.at("levels").get<int>();
  p.iterations = f.at("iterations").get<int>();
  p.inner_sweeps = f.at("inner_sweeps").get<int>();
  p.smoothness = f.at("smoothness").get<double>();
  return p;
}

inline std::vector<std::pair<double, double>> sweep_pairs_from_config(const nlohmann::json& cfg) {
  return config_get([&] { return cfg.at("sweep").at("pairs").get<std::vector<std::pair<double, double>>>(); }, "sweep");
}

}  // namespace vtc
