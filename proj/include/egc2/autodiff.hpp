#pragma once

// Dense reverse-mode differentiation over Eigen matrices.
//
// A Tape records every primitive applied during one forward pass, in
// topological order (operands always precede results). backward() walks the
// record in reverse and accumulates d(loss)/d(node) into every node that
// requires a gradient. Shapes are explicit; nothing broadcasts.

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "egc2/error.hpp"
#include "egc2/graph.hpp"

namespace egc2::ad {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf owning a copy of `value`.
  Var leaf(Matrix value, bool requires_grad = false) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = requires_grad;
    return push(std::move(n));
  }

  // Leaf viewing external storage (typically a model parameter), which must
  // outlive the tape and stay unchanged until backward() returns.
  Var view(const Matrix& value, bool requires_grad = true) {
    Node n;
    n.external = &value;
    n.requires_grad = requires_grad;
    return push(std::move(n));
  }

  Var constant(Matrix value) { return leaf(std::move(value), false); }

  // Result of a primitive. `backward` runs only when the node needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward) {
    if (!value.allFinite()) throw DivergenceError("non-finite value produced by a primitive");
    Node n;
    n.owned = std::move(value);
    for (const Var& v : inputs) n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
    if (n.requires_grad) n.backward = std::move(backward);
    return push(std::move(n));
  }

  const Matrix& value(int id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.owned;
  }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  // Gradient of the last backward() target with respect to node `v`; zero
  // for nodes the loss does not depend on.
  Matrix grad(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.size() == 0) return Matrix::Zero(value(v.id).rows(), value(v.id).cols());
    return n.grad;
  }

  const Matrix& incoming(int self) const { return nodes_[self].grad; }

  // Adds `g` into the gradient of node `id` if that node tracks gradients.
  void accumulate(int id, const Matrix& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  void backward(Var loss) {
    const Matrix& lv = value(loss.id);
    if (lv.rows() != 1 || lv.cols() != 1) throw ContractError("backward() needs a 1x1 loss");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    if (!nodes_[loss.id].requires_grad) return;
    nodes_[loss.id].grad = Matrix::Ones(1, 1);
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.backward && n.grad.size() != 0) n.backward(*this, id);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix owned;
    const Matrix* external = nullptr;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape->value(id); }
inline bool Var::requires_grad() const { return tape->requires_grad(id); }

namespace detail {

inline void same_tape(const Var& a, const Var& b) {
  if (a.tape != b.tape) throw ContractError("operands live on different tapes");
}

[[noreturn]] inline void dim_error(const char* kind, const Var& a, const Var& b) {
  throw DimensionError(std::string(kind) + ": incompatible shapes " + std::to_string(a.rows()) + "x" +
                       std::to_string(a.cols()) + " and " + std::to_string(b.rows()) + "x" +
                       std::to_string(b.cols()));
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  detail::same_tape(a, b);
  if (a.cols() != b.rows()) detail::dim_error("matmul", a, b);
  Matrix out = a.value() * b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.incoming(self);
    if (a.requires_grad()) t.accumulate(a.id, g * b.value().transpose());
    if (b.requires_grad()) t.accumulate(b.id, a.value().transpose() * g);
  });
}

inline Var add(Var a, Var b) {
  detail::same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) detail::dim_error("add", a, b);
  Matrix out = a.value() + b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    t.accumulate(a.id, t.incoming(self));
    t.accumulate(b.id, t.incoming(self));
  });
}

inline Var transpose(Var a) {
  Matrix out = a.value().transpose();
  return a.tape->record(std::move(out), {a},
                        [a](Tape& t, int self) { t.accumulate(a.id, t.incoming(self).transpose()); });
}

inline Var relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape->record(std::move(out), {a}, [a](Tape& t, int self) {
    Matrix g = t.incoming(self);
    const Matrix& x = a.value();
    for (Eigen::Index k = 0; k < g.size(); ++k)
      if (!(x.data()[k] > 0.0)) g.data()[k] = 0.0;
    t.accumulate(a.id, g);
  });
}

// Softmax across each row, stabilised by subtracting the row maximum.
inline Var row_softmax(Var a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - mx).exp();
    y.row(r) /= y.row(r).sum();
  }
  return a.tape->record(std::move(y), {a}, [a](Tape& t, int self) {
    const Matrix& g = t.incoming(self);
    const Matrix& y = t.value(self);
    const Vector dot = (g.array() * y.array()).rowwise().sum();
    Matrix dx = y.array() * (g.colwise() - dot).array();
    t.accumulate(a.id, dx);
  });
}

// Stacks operands vertically; all must share a column count.
inline Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows needs at least one operand");
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    detail::same_tape(parts[0], p);
    if (p.cols() != parts[0].cols()) detail::dim_error("concat_rows", parts[0], p);
    rows += p.rows();
  }
  Matrix out(rows, parts[0].cols());
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> ops(parts.begin(), parts.end());
  Tape& tape = *parts[0].tape;
  // record() derives requires_grad from its operand list; pass a
  // representative operand that needs a gradient, if any.
  Var rep = parts[0];
  for (const Var& p : parts)
    if (p.requires_grad()) rep = p;
  return tape.record(std::move(out), {rep}, [ops = std::move(ops)](Tape& t, int self) {
    const Matrix& g = t.incoming(self);
    Eigen::Index r = 0;
    for (const Var& p : ops) {
      if (p.requires_grad()) t.accumulate(p.id, g.middleRows(r, p.rows()));
      r += p.rows();
    }
  });
}

inline Var concat_rows(std::initializer_list<Var> parts) {
  return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
}

inline constexpr double kProbabilityFloor = 1e-12;

// -log(max(p[label], 1e-12)) for a 1 x C probability row.
inline Var cross_entropy(Var probs, int label) {
  const Matrix& p = probs.value();
  if (p.rows() != 1) throw DimensionError("cross_entropy: expected a 1xC probability row");
  if (label < 0 || label >= p.cols()) throw ContractError("cross_entropy: label out of range");
  const double py = p(0, label);
  Matrix out(1, 1);
  out(0, 0) = -std::log(std::max(py, kProbabilityFloor));
  return probs.tape->record(std::move(out), {probs}, [probs, label](Tape& t, int self) {
    const double py = probs.value()(0, label);
    Matrix g = Matrix::Zero(1, probs.cols());
    if (py > kProbabilityFloor) g(0, label) = -t.incoming(self)(0, 0) / py;
    t.accumulate(probs.id, g);
  });
}

inline Var scalar_mul(Var a, double s) {
  Matrix out = s * a.value();
  return a.tape->record(std::move(out), {a}, [a, s](Tape& t, int self) { t.accumulate(a.id, s * t.incoming(self)); });
}

inline Var hadamard(Var a, Var b) {
  detail::same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) detail::dim_error("hadamard", a, b);
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.incoming(self);
    if (a.requires_grad()) t.accumulate(a.id, g.cwiseProduct(b.value()));
    if (b.requires_grad()) t.accumulate(b.id, g.cwiseProduct(a.value()));
  });
}

inline Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape->record(std::move(out), {a}, [a](Tape& t, int self) {
    t.accumulate(a.id, Matrix::Constant(a.rows(), a.cols(), t.incoming(self)(0, 0)));
  });
}

// Column means as a 1 x cols row.
inline Var col_mean(Var a) {
  if (a.rows() == 0) throw DimensionError("col_mean: no rows");
  Matrix out = a.value().colwise().mean();
  return a.tape->record(std::move(out), {a}, [a](Tape& t, int self) {
    const Matrix g = t.incoming(self) / static_cast<double>(a.rows());
    t.accumulate(a.id, g.replicate(a.rows(), 1));
  });
}

// Column maxima as a 1 x cols row; the gradient goes to the first maximal row.
inline Var col_max(Var a) {
  if (a.rows() == 0) throw DimensionError("col_max: no rows");
  const Matrix& x = a.value();
  Matrix out(1, x.cols());
  std::vector<Eigen::Index> arg(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) out(0, c) = x.col(c).maxCoeff(&arg[c]);
  return a.tape->record(std::move(out), {a}, [a, arg = std::move(arg)](Tape& t, int self) {
    const Matrix& g = t.incoming(self);
    Matrix dx = Matrix::Zero(a.rows(), a.cols());
    for (Eigen::Index c = 0; c < a.cols(); ++c) dx(arg[c], c) = g(0, c);
    t.accumulate(a.id, dx);
  });
}

// D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I. Rows of A must
// have a nonnegative sum.
inline Matrix normalize_adjacency_value(const Matrix& a, Vector* scale = nullptr) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) throw DimensionError("normalize_adjacency: adjacency is not square");
  Vector s(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = a.row(i).sum() + 1.0;
    if (!(d > 0.0)) throw ContractError("normalize_adjacency: non-positive degree");
    s(i) = 1.0 / std::sqrt(d);
  }
  Matrix out = s.asDiagonal() * (a + Matrix::Identity(n, n)) * s.asDiagonal();
  if (scale) *scale = std::move(s);
  return out;
}

inline Var normalize_adjacency(Var a) {
  Vector s;
  Matrix out = normalize_adjacency_value(a.value(), &s);
  return a.tape->record(std::move(out), {a}, [a, s = std::move(s)](Tape& t, int self) {
    // With s_i = (1 + sum_j A_ij)^-1/2 and At = A + I:
    //   dL/dA_ij = G_ij s_i s_j - 1/2 s_i^3 u_i,
    //   u_i = sum_b G_ib At_ib s_b + sum_a G_ai At_ai s_a.
    const Matrix& g = t.incoming(self);
    const Eigen::Index n = s.size();
    const Matrix at = a.value() + Matrix::Identity(n, n);
    const Matrix ga = g.cwiseProduct(at);
    const Vector u = ga * s + ga.transpose() * s;
    Matrix dx = s.asDiagonal() * g * s.asDiagonal();
    const Vector corr = (0.5 * s.array().cube() * u.array()).matrix();
    dx.colwise() -= corr;
    t.accumulate(a.id, dx);
  });
}

}  // namespace egc2::ad
