#include "recal/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace recal {

std::string to_string(const Shape4& s) {
  return str_cat("(", s.n, ",", s.c, ",", s.h, ",", s.w, ")");
}

namespace {
thread_local bool g_grad_enabled = true;

void check_shape(const Shape4& s) {
  if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
    throw ConfigError(str_cat("negative dimension in shape ", to_string(s)));
  }
}
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

detail::Node& Tensor4::n() const {
  if (!node_) throw UsageError("operation on an undefined tensor");
  return *node_;
}

const Shape4& Tensor4::shape() const { return n().shape; }

std::span<const real> Tensor4::values() const { return n().value; }

std::span<real> Tensor4::values_mut() { return n().value; }

bool Tensor4::requires_grad() const { return n().requires_grad; }

void Tensor4::set_requires_grad(bool rg) { n().requires_grad = rg; }

bool Tensor4::has_grad() const { return !n().grad.empty(); }

std::span<const real> Tensor4::grad() const {
  if (n().grad.empty()) {
    throw UsageError("gradient requested but none has been accumulated");
  }
  return n().grad;
}

std::span<real> Tensor4::grad_mut() { return n().ensure_grad(); }

void Tensor4::zero_grad() {
  auto& node = n();
  std::fill(node.grad.begin(), node.grad.end(), real(0));
}

real Tensor4::scalar_value() const {
  const auto& node = n();
  if (node.shape.numel() != 1) {
    throw UsageError(str_cat("scalar_value on non-scalar tensor of shape ",
                             to_string(node.shape)));
  }
  return node.value[0];
}

Tensor4 Tensor4::zeros(const Shape4& shape, bool requires_grad) {
  check_shape(shape);
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->value.assign(static_cast<size_t>(shape.numel()), real(0));
  node->requires_grad = requires_grad;
  return Tensor4(std::move(node));
}

Tensor4 Tensor4::full(const Shape4& shape, real value, bool requires_grad) {
  Tensor4 t = zeros(shape, requires_grad);
  auto v = t.values_mut();
  std::fill(v.begin(), v.end(), value);
  return t;
}

Tensor4 Tensor4::from_data(const Shape4& shape, std::vector<real> values,
                           bool requires_grad) {
  check_shape(shape);
  if (static_cast<int64_t>(values.size()) != shape.numel()) {
    throw ConfigError(str_cat("data length ", values.size(),
                              " does not match shape ", to_string(shape)));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor4(std::move(node));
}

void Tensor4::backward() {
  auto& root = n();
  if (root.shape.numel() != 1) {
    throw UsageError(str_cat("backward() requires a scalar root, got shape ",
                             to_string(root.shape)));
  }
  if (root.backward_consumed) {
    throw UsageError(
        "backward() called twice on the same root; rebuild the forward pass "
        "or accumulate across distinct roots instead");
  }
  root.backward_consumed = true;
  if (!root.requires_grad) return;

  // Iterative post-order topological sort. The tape is a DAG by
  // construction (parents always predate children).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  struct Frame {
    detail::Node* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({&root, 0});
  visited.insert(&root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::Node* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && visited.insert(p).second) {
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  root.ensure_grad()[0] += real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backprop && !node->grad.empty()) {
      node->backprop(*node);
    }
  }
}

namespace detail {

Tensor4 make_op_node(const Shape4& shape, std::vector<Tensor4> parents,
                     std::function<void(Node&)> backprop) {
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value.assign(static_cast<size_t>(shape.numel()), real(0));
  bool track = grad_enabled();
  if (track) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    track = any;
  }
  if (track) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backprop = std::move(backprop);
  }
  return Tensor4(std::move(node));
}

}  // namespace detail

}  // namespace recal
