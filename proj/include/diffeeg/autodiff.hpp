#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "diffeeg/tensor.hpp"

namespace diffeeg::ad {

// One vertex of the computation graph. Parents are owned through shared
// pointers, so a graph lives exactly as long as its root is referenced.
struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily, same shape as value
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into the parents' grads.
  std::function<void(Node&)> backprop;
  std::string_view op = "leaf";
  bool requires_grad = false;

  Tensor& ensure_grad();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  // Leaf that collects gradients.
  static Var parameter(Tensor value) { return Var(std::move(value), true); }
  static Var constant(Tensor value) { return Var(std::move(value), false); }

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  double item() const { return node_->value.item(); }

  // Gradient of the last backward() root w.r.t. this node; zeros if none.
  const Tensor& grad() const;
  void zero_grad();
  bool requires_grad() const { return node_ && node_->requires_grad; }
  std::string_view op() const { return node_->op; }
  bool defined() const { return static_cast<bool>(node_); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Ordered list of named learnable leaves; the order is the serialization order.
using NamedParams = std::vector<std::pair<std::string, Var>>;

void zero_grad(const NamedParams& params);

// Reverse-mode sweep from a single-element root. Leaf gradients accumulate
// across calls; interior gradients are recomputed each call.
void backward(const Var& root);

bool grad_enabled();

// While alive, ops on this thread record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds an op node. When no parent needs a gradient (or grad mode is off)
// the result is a plain constant and `backprop` is dropped.
Var make_op(Tensor value, std::string_view op, std::vector<Var> parents,
            std::function<void(Node&)> backprop);

}  // namespace diffeeg::ad
