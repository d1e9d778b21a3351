#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ftpg/parameter_set.hpp"
#include "ftpg/tensor.hpp"

namespace ftpg {

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;  // allocated by backward for nodes that require it
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> propagate;
  Parameter* param = nullptr;
  std::string_view op;
  bool requires_grad = false;
};

}  // namespace detail

/// Handle to a value in a recorded computation. Graphs are built eagerly by
/// the free functions below and consumed by backward().
class Var {
 public:
  Var() = default;

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::string_view op() const { return node_->op; }
  bool requires_grad() const { return node_->requires_grad; }
  bool valid() const noexcept { return static_cast<bool>(node_); }

  const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }

 private:
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  friend Var make_var(std::string_view op, Tensor value, std::vector<Var> parents,
                      std::function<void(detail::Node&)> propagate);
  friend Var constant(Tensor value);
  friend Var leaf(Parameter& param);

  std::shared_ptr<detail::Node> node_;
};

/// Builds a node. `propagate` is dropped when no parent requires a gradient.
/// Throws NumericError if `value` holds NaN or infinity.
Var make_var(std::string_view op, Tensor value, std::vector<Var> parents,
             std::function<void(detail::Node&)> propagate);

Var constant(Tensor value);

/// Leaf bound to a parameter; backward() writes into param.grad. The parameter
/// must outlive every graph built from it.
Var leaf(Parameter& param);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var sum(const Var& a);

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = kLayerNormEps);
Var softmax(const Var& x);
Var gelu(const Var& x);
Var geglu(const Var& x);
Var l2_normalize(const Var& x, double eps = kNormalizeEps);
Var cross_entropy(const Var& logits, std::span<const std::size_t> labels);

// Structural ops over the rows x last_dim view of rank-2 values.
Var slice_cols(const Var& x, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var mean_rows(const Var& x);
Var reshape(const Var& x, Shape shape);

/// Reverse sweep from a scalar. Every parameter reachable from `loss` has its
/// grad overwritten with d loss / d value (contributions from several leaves
/// bound to the same parameter are summed). Unreachable parameters are left
/// alone. Throws ContractError for non-scalar losses.
void backward(const Var& loss);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t failed = 0;  // coordinates above the tolerance

  bool passed() const noexcept { return failed == 0; }
};

/// Compares backward() against central differences for every coordinate of
/// `params`. The relative error denominator is max(|analytic|, |numeric|, 1e-8).
GradCheckResult grad_check(const std::function<Var(ParameterSet&)>& loss_fn, ParameterSet& params,
                           double h = 1e-5, double rel_tol = 1e-6);

}  // namespace ftpg
