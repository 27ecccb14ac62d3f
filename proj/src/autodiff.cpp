#include "diffeeg/autodiff.hpp"

#include <stdexcept>
#include <unordered_set>

namespace diffeeg::ad {

namespace {
thread_local bool g_grad_enabled = true;
}

Tensor& Node::ensure_grad() {
  if (grad.size() != value.size()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

const Tensor& Var::grad() const { return node_->ensure_grad(); }

void Var::zero_grad() {
  if (node_) node_->ensure_grad().fill(0.0);
}

void zero_grad(const NamedParams& params) {
  for (const auto& [name, p] : params) {
    auto v = p;
    v.zero_grad();
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_op(Tensor value, std::string_view op, std::vector<Var> parents,
            std::function<void(Node&)> backprop) {
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.shared());
    node->backprop = std::move(backprop);
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  if (!root.defined()) throw std::invalid_argument("backward: undefined root");
  if (root.size() != 1) {
    throw std::invalid_argument("backward: root must be a scalar, got shape " +
                                shape_string(root.shape()));
  }
  Node* top = root.node();
  if (!top->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{top, 0}};
  visited.insert(top);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->parents.empty()) n->ensure_grad().fill(0.0);
  }
  top->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) {
      for (auto& p : n->parents) {
        if (p->requires_grad) p->ensure_grad();
      }
      n->backprop(*n);
    }
  }
}

}  // namespace diffeeg::ad
