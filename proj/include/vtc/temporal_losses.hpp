// Short-term, long-term and combined training losses.
#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "vtc/ops.hpp"
#include "vtc/perception.hpp"
#include "vtc/video_data.hpp"
#include "vtc/warping.hpp"

namespace vtc {

struct LossWeights {
  double perceptual = 10.0;
  double short_term = 100.0;
  double long_term = 100.0;

  void validate() const {
    for (double w : {perceptual, short_term, long_term}) {
      if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("LossWeights: weights must be finite and >= 0");
    }
    if (perceptual == 0.0 && short_term == 0.0 && long_term == 0.0) {
      throw std::invalid_argument("LossWeights: at least one weight must be positive");
    }
  }

  // Temporal-to-perceptual ratio, defined when both temporal weights agree.
  std::optional<double> ratio() const {
    if (perceptual > 0.0 && short_term == long_term) return short_term / perceptual;
    return std::nullopt;
  }

  LossWeights scaled(double c) const { return {perceptual * c, short_term * c, long_term * c}; }
};

// sum_i M_i * || O_t,i - warp(O_prev, flow)_i ||_1
template <class T>
LossTerm<T> short_term_loss(const Var<T>& current, const Var<T>& previous, const FlowField<T>& flow,
                            const Var<T>& mask) {
  require_same_shape(current.shape(), previous.shape(), "short_term_loss");
  require_same_plane(current.shape(), flow.uv.shape(), "short_term_loss (flow)");
  const Var<T> warped = bilinear_warp(previous, Var<T>::constant(flow.uv));
  return {ops::masked_l1(current, warped, mask), current.value().size()};
}

template <class T>
T short_term_loss(const Tensor<T>& current, const Tensor<T>& previous, const FlowField<T>& flow, const Mask<T>& mask) {
  if (!mask.in_unit_range()) throw std::invalid_argument("short_term_loss: mask values outside [0,1]");
  return short_term_loss(Var<T>::constant(current), Var<T>::constant(previous), flow, Var<T>::constant(mask.values))
      .value();
}

// sum_{t=2..T} sum_i M_{t=>1,i} || O_t,i - warp(O_1, F_{t=>1})_i ||_1.
// flows[k] and masks[k] belong to frame t = k + 2.
template <class T>
LossTerm<T> long_term_loss(const std::vector<Var<T>>& outputs, const std::vector<FlowField<T>>& flows_to_first,
                           const std::vector<Var<T>>& masks) {
  if (outputs.empty()) throw std::invalid_argument("long_term_loss: empty sequence");
  const std::size_t pairs = outputs.size() - 1;
  if (flows_to_first.size() != pairs || masks.size() != pairs) {
    throw std::invalid_argument("long_term_loss: need T-1 flows and masks (T=" + std::to_string(outputs.size()) + ")");
  }
  std::vector<Var<T>> terms;
  std::size_t count = 0;
  for (std::size_t k = 0; k < pairs; ++k) {
    auto term = short_term_loss(outputs[k + 1], outputs[0], flows_to_first[k], masks[k]);
    terms.push_back(term.sum);
    count += term.count;
  }
  return {ops::sum_scalars(terms), count};
}

template <class T>
T long_term_loss(const FrameSequence<T>& outputs, const std::vector<FlowField<T>>& flows_to_first,
                 const std::vector<Mask<T>>& masks) {
  std::vector<Var<T>> o, m;
  for (const auto& f : outputs.frames()) o.push_back(Var<T>::constant(f));
  for (const auto& x : masks) m.push_back(Var<T>::constant(x.values));
  return long_term_loss(o, flows_to_first, m).value();
}

template <class T>
T total_loss(T perceptual, T short_term, T long_term, const LossWeights& w) {
  if (perceptual < T(0) || short_term < T(0) || long_term < T(0)) {
    throw std::invalid_argument("total_loss: loss components must be non-negative");
  }
  return static_cast<T>(w.perceptual) * perceptual + static_cast<T>(w.short_term) * short_term +
         static_cast<T>(w.long_term) * long_term;
}

template <class T>
Var<T> total_loss(const Var<T>& perceptual, const Var<T>& short_term, const Var<T>& long_term, const LossWeights& w) {
  return ops::sum_scalars<T>({ops::scale(perceptual, static_cast<T>(w.perceptual)),
                              ops::scale(short_term, static_cast<T>(w.short_term)),
                              ops::scale(long_term, static_cast<T>(w.long_term))});
}

}  // namespace vtc
