// Minimal reverse-mode differentiation over Tensor values.
//
// Every Var owns a node in a dynamically built graph. Operations record a
// backward closure only when at least one input requires a gradient, so
// inference over constants builds no tape.
#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vtc/tensor.hpp"

namespace vtc {

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor<T>& grad_buffer() {
    if (grad.shape() != value.shape() || grad.empty() != value.empty()) {
      grad = Tensor<T>(value.shape());
    }
    return grad;
  }
  void accumulate(const Tensor<T>& g) {
    auto& buf = grad_buffer();
    require_same_shape(buf.shape(), g.shape(), "Node::accumulate");
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
  }
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var constant(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    return Var(std::move(n));
  }
  static Var parameter(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  // Gradient accumulated by backward(); zero-filled if never reached.
  const Tensor<T>& grad() const { return node_->grad_buffer(); }
  void zero_grad() const {
    if (node_) node_->grad = Tensor<T>(node_->value.shape());
  }

  // Scalar convenience for 1x1x1 values.
  T item() const {
    if (node_->value.size() != 1) throw std::logic_error("Var::item on non-scalar");
    return node_->value[0];
  }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Build the result node of an operation. `backward` receives the output node
// (whose grad is populated) and must push gradients into the parents that
// require them.
template <class T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    n->requires_grad = true;
    n->parents.reserve(inputs.size());
    for (const auto& in : inputs) n->parents.push_back(in.node());
    n->backward_fn = std::move(backward);
  }
  return Var<T>(std::move(n));
}

// Propagate d(root)/d(node) through the graph. Root must be a scalar.
template <class T>
void backward(const Var<T>& root) {
  if (!root.defined() || root.value().size() != 1) {
    throw std::logic_error("backward: root must be a scalar");
  }
  if (!root.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace vtc
