#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>

#include "vtc/autograd.hpp"
#include "vtc/rng.hpp"
#include "vtc/tensor.hpp"

namespace vtc::test {

inline Tensor<double> random_tensor(Shape s, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor<double> t(s);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline Tensor<float> random_frame(int h, int w, std::uint64_t seed) {
  return random_tensor(Shape{3, h, w}, seed, 0.05, 0.95).cast<float>();
}

// Max relative error between the analytic gradient of f at x and central
// differences, over `probes` entries (all when 0).
struct GradCheck {
  double max_rel = 0.0;
  double max_abs = 0.0;
};

inline GradCheck check_gradient(const std::function<Var<double>(const Var<double>&)>& f, const Tensor<double>& x,
                                double h = 1e-6, std::size_t probes = 0, double floor = 1e-7) {
  Var<double> xv = Var<double>::parameter(x);
  backward(f(xv));
  const Tensor<double> analytic = xv.grad();
  GradCheck r;
  const std::size_t n = x.size();
  const std::size_t stride = probes == 0 || probes >= n ? 1 : n / probes;
  for (std::size_t i = 0; i < n; i += stride) {
    Tensor<double> xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double num = (f(Var<double>::constant(xp)).item() - f(Var<double>::constant(xm)).item()) / (2 * h);
    const double a = analytic[i];
    const double abs_err = std::abs(a - num);
    const double rel = abs_err / std::max({std::abs(a), std::abs(num), floor});
    r.max_abs = std::max(r.max_abs, abs_err);
    r.max_rel = std::max(r.max_rel, rel);
  }
  return r;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("vtc_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace vtc::test
