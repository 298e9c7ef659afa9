#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "blgcn/matrix.hpp"

namespace blgcn {

enum class Op {
  Leaf,
  MatMul,
  Add,
  Sub,
  Hadamard,
  Div,
  Relu,
  Softplus,
  Log,
  Exp,
  Square,
  Sigmoid,
  Scale,
  AddScalar,
  AddRowBroadcast,
  Sum,
  LogSoftmaxRows,
  GatherSum,
  BceWithLogits,
};

const char* op_name(Op op) noexcept;

/// One vertex of the computation graph. Children own their parents, never the
/// other way round, so a graph is released as soon as its root goes away.
struct GradNode {
  Matrix value;
  Matrix grad;  // empty until something flows into it
  Op op = Op::Leaf;
  bool requires_grad = false;
  std::vector<std::shared_ptr<GradNode>> parents;
  // Pushes this->grad into the parents' grads.
  std::function<void(GradNode&)> backward_fn;

  void accumulate(const Matrix& g);
};

/// Handle to a graph node. Cheap to copy (shared ownership).
class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false);

  static Var parameter(Matrix value) { return Var(std::move(value), true); }
  static Var constant(Matrix value) { return Var(std::move(value), false); }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  // Only meaningful for leaves; mutating an interior node invalidates the graph.
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  Op op() const noexcept { return node_->op; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  double item() const;

  void zero_grad() { node_->grad = Matrix(); }

  const std::shared_ptr<GradNode>& node() const noexcept { return node_; }

 private:
  explicit Var(std::shared_ptr<GradNode> node) : node_(std::move(node)) {}
  friend Var make_op_node(Op, Matrix, std::vector<Var>, std::function<void(GradNode&)>);

  std::shared_ptr<GradNode> node_;
};

/// Disables graph recording on the current thread for its lifetime. Ops
/// still compute values but keep no parents, so nothing can be
/// back-propagated and no intermediate buffers are retained.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled() noexcept;

// Differentiable operations. Every op checks its result is finite and throws
// NumericError otherwise.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var relu(const Var& x);
Var softplus(const Var& x);
Var log(const Var& x);  // DomainError on entries <= 0
Var exp(const Var& x);
Var square(const Var& x);
Var sigmoid(const Var& x);
Var scale(const Var& x, double s);
Var add_scalar(const Var& x, double s);
// x (n×m) plus row vector b (1×m) added to every row.
Var add_row_broadcast(const Var& x, const Var& b);
// 1×1 sum of all entries.
Var sum(const Var& x);
Var log_softmax_rows(const Var& x);
// 1×1 sum of x[rows[k], cols[k]] over k.
Var gather_sum(const Var& x, std::span<const std::size_t> rows, std::span<const std::size_t> cols);
// Mean binary cross-entropy of sigmoid(logits) against constant 0/1 targets.
Var bce_with_logits(const Var& logits, const Matrix& targets);

/// Reverse sweep from a 1×1 root. Gradients accumulate into every reachable
/// node that requires them, so callers zero parameter grads between steps.
void backward(const Var& root);

}  // namespace blgcn
