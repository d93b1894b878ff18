#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "recal/common.hpp"

namespace recal {

/// Dense rank-4 shape in (batch, channels, rows, cols) order.
struct Shape4 {
  int64_t n = 0;
  int64_t c = 0;
  int64_t h = 0;
  int64_t w = 0;

  int64_t numel() const { return n * c * h * w; }
  bool operator==(const Shape4&) const = default;
};

std::string to_string(const Shape4& s);

namespace detail {

/// One tape node. Holds the forward value and, when gradients are tracked,
/// the links needed to push adjoints back to its parents.
struct Node {
  Shape4 shape;
  std::vector<real> value;
  std::vector<real> grad;  // empty until first needed
  bool requires_grad = false;
  bool backward_consumed = false;  // set on a root after backward()
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node&)> backprop;
  // Op-specific integer scratch carried from forward to backward (argmax
  // indices and the like).
  std::vector<int32_t> aux;

  std::span<real> ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), real(0));
    return grad;
  }
};

}  // namespace detail

/// Returns whether new ops record tape links (thread-local).
bool grad_enabled();

/// RAII guard disabling tape recording, for inference paths.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Rank-4 tensor handle with reverse-mode gradient tracking.
///
/// Copies share the underlying node (shallow); values are written in place
/// only for leaf tensors (parameters, probe inputs). The tape is dynamic:
/// every forward pass rebuilds it, and backward() consumes it once.
class Tensor4 {
 public:
  Tensor4() = default;

  static Tensor4 zeros(const Shape4& shape, bool requires_grad = false);
  static Tensor4 full(const Shape4& shape, real value, bool requires_grad = false);
  static Tensor4 from_data(const Shape4& shape, std::vector<real> values,
                           bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape4& shape() const;
  int64_t numel() const { return shape().numel(); }

  std::span<const real> values() const;
  std::span<real> values_mut();

  bool requires_grad() const;
  void set_requires_grad(bool rg);

  bool has_grad() const;
  std::span<const real> grad() const;
  std::span<real> grad_mut();
  void zero_grad();

  /// Value of a (1,1,1,1) tensor.
  real scalar_value() const;

  /// Reverse-mode accumulation from this scalar root into every reachable
  /// tensor that requires grad. Calling twice on the same root throws;
  /// gradients of shared leaves accumulate across distinct roots, which is
  /// the explicit opt-in path for micro-batch accumulation.
  void backward();

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor4(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  detail::Node& n() const;
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

/// Creates a tape node for an op result. `parents` and `backprop` are
/// dropped when grad mode is off or no parent requires grad.
Tensor4 make_op_node(const Shape4& shape, std::vector<Tensor4> parents,
                     std::function<void(Node&)> backprop);

}  // namespace detail

}  // namespace recal
