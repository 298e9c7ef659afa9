#include "blgcn/autograd.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

#include "blgcn/errors.hpp"

namespace blgcn {
namespace {

thread_local bool t_grad_enabled = true;

void check_finite(const Matrix& m, Op op) {
  if (!m.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op_name(op));
  }
}

}  // namespace

const char* op_name(Op op) noexcept {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Hadamard: return "hadamard";
    case Op::Div: return "div";
    case Op::Relu: return "relu";
    case Op::Softplus: return "softplus";
    case Op::Log: return "log";
    case Op::Exp: return "exp";
    case Op::Square: return "square";
    case Op::Sigmoid: return "sigmoid";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::AddRowBroadcast: return "add_row_broadcast";
    case Op::Sum: return "sum";
    case Op::LogSoftmaxRows: return "log_softmax_rows";
    case Op::GatherSum: return "gather_sum";
    case Op::BceWithLogits: return "bce_with_logits";
  }
  return "?";
}

void GradNode::accumulate(const Matrix& g) {
  if (grad.empty()) {
    grad = g;
    return;
  }
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
}

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<GradNode>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

double Var::item() const {
  if (value().rows() != 1 || value().cols() != 1) {
    throw ContractError("item() on non-scalar " + value().shape_string());
  }
  return value()(0, 0);
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() noexcept { return t_grad_enabled; }

Var make_op_node(Op op, Matrix value, std::vector<Var> inputs,
                 std::function<void(GradNode&)> backward_fn) {
  check_finite(value, op);
  auto node = std::make_shared<GradNode>();
  node->value = std::move(value);
  node->op = op;
  bool any = false;
  if (t_grad_enabled) {
    for (const auto& v : inputs) any = any || v.requires_grad();
  }
  node->requires_grad = any;
  if (any) {
    node->parents.reserve(inputs.size());
    for (auto& v : inputs) node->parents.push_back(v.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

namespace {

// Parent accessor used inside backward closures.
inline GradNode& parent(GradNode& n, std::size_t i) { return *n.parents[i]; }

}  // namespace

Var matmul(const Var& a, const Var& b) {
  return make_op_node(Op::MatMul, matmul(a.value(), b.value()), {a, b}, [](GradNode& n) {
    GradNode& pa = parent(n, 0);
    GradNode& pb = parent(n, 1);
    if (pa.requires_grad) pa.accumulate(matmul_nt(n.grad, pb.value));
    if (pb.requires_grad) pb.accumulate(matmul_tn(pa.value, n.grad));
  });
}

Var add(const Var& a, const Var& b) {
  return make_op_node(Op::Add, add(a.value(), b.value()), {a, b}, [](GradNode& n) {
    for (std::size_t i = 0; i < 2; ++i)
      if (parent(n, i).requires_grad) parent(n, i).accumulate(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  return make_op_node(Op::Sub, sub(a.value(), b.value()), {a, b}, [](GradNode& n) {
    if (parent(n, 0).requires_grad) parent(n, 0).accumulate(n.grad);
    if (parent(n, 1).requires_grad) parent(n, 1).accumulate(scale(n.grad, -1.0));
  });
}

Var hadamard(const Var& a, const Var& b) {
  return make_op_node(Op::Hadamard, hadamard(a.value(), b.value()), {a, b}, [](GradNode& n) {
    GradNode& pa = parent(n, 0);
    GradNode& pb = parent(n, 1);
    if (pa.requires_grad) pa.accumulate(hadamard(n.grad, pb.value));
    if (pb.requires_grad) pb.accumulate(hadamard(n.grad, pa.value));
  });
}

Var div(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "div");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (b.value()[i] == 0.0) throw DomainError("div: division by zero");
    out[i] /= b.value()[i];
  }
  return make_op_node(Op::Div, std::move(out), {a, b}, [](GradNode& n) {
    GradNode& pa = parent(n, 0);
    GradNode& pb = parent(n, 1);
    if (pa.requires_grad) {
      Matrix g = n.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] /= pb.value[i];
      pa.accumulate(g);
    }
    if (pb.requires_grad) {
      // d(a/b)/db = -(a/b)/b
      Matrix g = n.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= -n.value[i] / pb.value[i];
      pb.accumulate(g);
    }
  });
}

Var relu(const Var& x) {
  Matrix out = x.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return make_op_node(Op::Relu, std::move(out), {x}, [](GradNode& n) {
    GradNode& px = parent(n, 0);
    Matrix g = n.grad;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!(px.value[i] > 0.0)) g[i] = 0.0;
    px.accumulate(g);
  });
}

Var softplus(const Var& x) {
  Matrix out = x.value();
  for (double& v : out.data()) v = softplus(v);
  return make_op_node(Op::Softplus, std::move(out), {x}, [](GradNode& n) {
    GradNode& px = parent(n, 0);
    Matrix g = n.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= sigmoid(px.value[i]);
    px.accumulate(g);
  });
}

Var log(const Var& x) {
  Matrix out = x.value();
  for (double& v : out.data()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive entry " + std::to_string(v));
    v = std::log(v);
  }
  return make_op_node(Op::Log, std::move(out), {x}, [](GradNode& n) {
    GradNode& px = parent(n, 0);
    Matrix g = n.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] /= px.value[i];
    px.accumulate(g);
  });
}

Var exp(const Var& x) {
  Matrix out = x.value();
  for (double& v : out.data()) v = std::exp(v);
  return make_op_node(Op::Exp, std::move(out), {x}, [](GradNode& n) {
    parent(n, 0).accumulate(hadamard(n.grad, n.value));
  });
}

Var square(const Var& x) {
  Matrix out = x.value();
  for (double& v : out.data()) v *= v;
  return make_op_node(Op::Square, std::move(out), {x}, [](GradNode& n) {
    GradNode& px = parent(n, 0);
    Matrix g = n.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 2.0 * px.value[i];
    px.accumulate(g);
  });
}

Var sigmoid(const Var& x) {
  Matrix out = x.value();
  for (double& v : out.data()) v = sigmoid(v);
  return make_op_node(Op::Sigmoid, std::move(out), {x}, [](GradNode& n) {
    Matrix g = n.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= n.value[i] * (1.0 - n.value[i]);
    parent(n, 0).accumulate(g);
  });
}

Var scale(const Var& x, double s) {
  return make_op_node(Op::Scale, scale(x.value(), s), {x},
                      [s](GradNode& n) { parent(n, 0).accumulate(scale(n.grad, s)); });
}

Var add_scalar(const Var& x, double s) {
  Matrix out = x.value();
  for (double& v : out.data()) v += s;
  return make_op_node(Op::AddScalar, std::move(out), {x},
                      [](GradNode& n) { parent(n, 0).accumulate(n.grad); });
}

Var add_row_broadcast(const Var& x, const Var& b) {
  const Matrix& xv = x.value();
  const Matrix& bv = b.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw DimensionError("add_row_broadcast: " + xv.shape_string() + " + " + bv.shape_string());
  }
  Matrix out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
  }
  return make_op_node(Op::AddRowBroadcast, std::move(out), {x, b}, [](GradNode& n) {
    GradNode& px = parent(n, 0);
    GradNode& pb = parent(n, 1);
    if (px.requires_grad) px.accumulate(n.grad);
    if (pb.requires_grad) {
      Matrix g(1, n.grad.cols());
      for (std::size_t r = 0; r < n.grad.rows(); ++r) {
        auto row = n.grad.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) g[c] += row[c];
      }
      pb.accumulate(g);
    }
  });
}

Var sum(const Var& x) {
  return make_op_node(Op::Sum, Matrix(1, 1, x.value().sum()), {x}, [](GradNode& n) {
    GradNode& px = parent(n, 0);
    px.accumulate(Matrix(px.value.rows(), px.value.cols(), n.grad[0]));
  });
}

Var log_softmax_rows(const Var& x) {
  return make_op_node(Op::LogSoftmaxRows, log_softmax_rows(x.value()), {x}, [](GradNode& n) {
    // dx = dy - softmax(x) * rowsum(dy)
    Matrix g = n.grad;
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto gr = g.row(r);
      const auto yr = n.value.row(r);
      double s = 0.0;
      for (double v : gr) s += v;
      for (std::size_t c = 0; c < gr.size(); ++c) gr[c] -= std::exp(yr[c]) * s;
    }
    parent(n, 0).accumulate(g);
  });
}

Var gather_sum(const Var& x, std::span<const std::size_t> rows, std::span<const std::size_t> cols) {
  if (rows.size() != cols.size()) throw DimensionError("gather_sum: index lists differ in length");
  const Matrix& xv = x.value();
  double s = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= xv.rows() || cols[k] >= xv.cols()) {
      throw ContractError("gather_sum: index (" + std::to_string(rows[k]) + "," +
                              std::to_string(cols[k]) + ") outside " + xv.shape_string());
    }
    s += xv(rows[k], cols[k]);
  }
  std::vector<std::size_t> r(rows.begin(), rows.end());
  std::vector<std::size_t> c(cols.begin(), cols.end());
  return make_op_node(Op::GatherSum, Matrix(1, 1, s), {x},
                      [r = std::move(r), c = std::move(c)](GradNode& n) {
                        GradNode& px = parent(n, 0);
                        Matrix g(px.value.rows(), px.value.cols());
                        for (std::size_t k = 0; k < r.size(); ++k) g(r[k], c[k]) += n.grad[0];
                        px.accumulate(g);
                      });
}

Var bce_with_logits(const Var& logits, const Matrix& targets) {
  require_same_shape(logits.value(), targets, "bce_with_logits");
  const Matrix& z = logits.value();
  const double count = static_cast<double>(z.size());
  if (z.empty()) throw ContractError("bce_with_logits on empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    // max(z,0) - z*t + log(1 + e^{-|z|})
    s += std::max(z[i], 0.0) - z[i] * targets[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  return make_op_node(Op::BceWithLogits, Matrix(1, 1, s / count), {logits},
                      [targets, count](GradNode& n) {
                        GradNode& pz = parent(n, 0);
                        Matrix g(pz.value.rows(), pz.value.cols());
                        for (std::size_t i = 0; i < g.size(); ++i)
                          g[i] = n.grad[0] * (sigmoid(pz.value[i]) - targets[i]) / count;
                        pz.accumulate(g);
                      });
}

void backward(const Var& root) {
  if (!root.defined()) throw ContractError("backward on undefined Var");
  if (root.rows() != 1 || root.cols() != 1) {
    throw ContractError("backward requires a scalar (1x1) root, got " +
                        root.value().shape_string());
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS so deep graphs cannot overflow the stack.
  std::vector<GradNode*> order;
  std::unordered_set<GradNode*> visited;
  std::vector<std::pair<GradNode*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      GradNode* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix(1, 1, 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    GradNode* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

}  // namespace blgcn
