#include "hjid/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "hjid/error.hpp"

namespace hjid {

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), true, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), false, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, bool requires_grad,
                 std::function<void(Tape&, std::size_t)> backward) {
  nodes_.push_back(
      Node{std::move(value), Matrix(), requires_grad, requires_grad ? std::move(backward) : nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Matrix& delta) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  n.grad += delta;
}

void Tape::backward(const Var& root) {
  if (root.tape() != this) throw ArgumentError("backward: variable belongs to another tape");
  if (root.rows() != 1 || root.cols() != 1) throw ArgumentError("backward: root must be 1x1");
  for (auto& n : nodes_) {
    if (n.requires_grad) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
  accumulate(root.id(), Matrix::Ones(1, 1));
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backward) n.backward(*this, i);
  }
}

namespace ad {
namespace {

void check_same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw ArgumentError("autodiff: operands on different tapes");
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ArgumentError(std::string("autodiff ") + op + ": shape mismatch " +
                        std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                        std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

bool needs(const Var& v) { return v.tape()->requires_grad(v.id()); }

// Unary elementwise op with derivative expressed through input and output.
template <typename Fwd, typename Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  Tape& t = *a.tape();
  Matrix out = a.value().unaryExpr(fwd);
  std::size_t ia = a.id();
  return t.record(std::move(out), needs(a), [ia, deriv](Tape& tp, std::size_t self) {
    const Matrix& x = tp.value(ia);
    const Matrix& y = tp.value(self);
    Matrix d = x.binaryExpr(y, deriv);
    tp.accumulate(ia, tp.grad(self).cwiseProduct(d));
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  check_same_tape(a, b);
  if (a.cols() != b.rows())
    throw ArgumentError("autodiff matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                        std::to_string(b.rows()));
  Tape& t = *a.tape();
  std::size_t ia = a.id(), ib = b.id();
  return t.record(a.value() * b.value(), needs(a) || needs(b), [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

Var spmm(std::shared_ptr<const SparseMatrix> a, const Var& x) {
  if (a->cols() != x.rows())
    throw ArgumentError("autodiff spmm: operator has " + std::to_string(a->cols()) +
                        " columns, input has " + std::to_string(x.rows()) + " rows");
  Tape& t = *x.tape();
  std::size_t ix = x.id();
  Matrix out = (*a) * x.value();
  return t.record(std::move(out), needs(x), [a, ix](Tape& tp, std::size_t self) {
    tp.accumulate(ix, a->transpose() * tp.grad(self));
  });
}

Var add(const Var& a, const Var& b) {
  check_same_tape(a, b);
  check_same_shape(a, b, "add");
  std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() + b.value(), needs(a) || needs(b),
                          [ia, ib](Tape& tp, std::size_t self) {
                            tp.accumulate(ia, tp.grad(self));
                            tp.accumulate(ib, tp.grad(self));
                          });
}

Var sub(const Var& a, const Var& b) {
  check_same_tape(a, b);
  check_same_shape(a, b, "sub");
  std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() - b.value(), needs(a) || needs(b),
                          [ia, ib](Tape& tp, std::size_t self) {
                            tp.accumulate(ia, tp.grad(self));
                            tp.accumulate(ib, -tp.grad(self));
                          });
}

Var mul(const Var& a, const Var& b) {
  check_same_tape(a, b);
  check_same_shape(a, b, "mul");
  std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(a.value().cwiseProduct(b.value()), needs(a) || needs(b),
                          [ia, ib](Tape& tp, std::size_t self) {
                            const Matrix& g = tp.grad(self);
                            if (tp.requires_grad(ia)) tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
                            if (tp.requires_grad(ib)) tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
                          });
}

Var scale(const Var& a, double s) {
  std::size_t ia = a.id();
  return a.tape()->record(a.value() * s, needs(a), [ia, s](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self) * s);
  });
}

Var add_scalar(const Var& a, double s) {
  std::size_t ia = a.id();
  return a.tape()->record((a.value().array() + s).matrix(), needs(a), [ia](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
  });
}

Var add_row(const Var& a, const Var& row) {
  check_same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols())
    throw ArgumentError("autodiff add_row: expected 1x" + std::to_string(a.cols()) + " row");
  std::size_t ia = a.id(), ir = row.id();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape()->record(std::move(out), needs(a) || needs(row), [ia, ir](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
    if (tp.requires_grad(ir)) tp.accumulate(ir, tp.grad(self).colwise().sum());
  });
}

Var mul_const(const Var& a, const Matrix& m) {
  if (a.rows() != m.rows() || a.cols() != m.cols())
    throw ArgumentError("autodiff mul_const: shape mismatch");
  std::size_t ia = a.id();
  return a.tape()->record(a.value().cwiseProduct(m), needs(a), [ia, m](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self).cwiseProduct(m));
  });
}

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var elu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
      [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

Var sigmoid(const Var& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(const Var& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(const Var& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("autodiff concat_cols: no parts");
  Tape& t = *parts[0].tape();
  Eigen::Index rows = parts[0].rows(), cols = 0;
  bool any = false;
  for (const auto& p : parts) {
    if (p.tape() != &t) throw ArgumentError("autodiff concat_cols: operands on different tapes");
    if (p.rows() != rows) throw ArgumentError("autodiff concat_cols: row count mismatch");
    cols += p.cols();
    any = any || needs(p);
  }
  Matrix out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> layout;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    layout.emplace_back(p.id(), at);
    at += p.cols();
  }
  return t.record(std::move(out), any, [layout](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    for (auto [id, start] : layout) {
      if (tp.requires_grad(id)) tp.accumulate(id, g.middleCols(start, tp.value(id).cols()));
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("autodiff concat_rows: no parts");
  Tape& t = *parts[0].tape();
  Eigen::Index cols = parts[0].cols(), rows = 0;
  bool any = false;
  for (const auto& p : parts) {
    if (p.tape() != &t) throw ArgumentError("autodiff concat_rows: operands on different tapes");
    if (p.cols() != cols) throw ArgumentError("autodiff concat_rows: column count mismatch");
    rows += p.rows();
    any = any || needs(p);
  }
  Matrix out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> layout;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    layout.emplace_back(p.id(), at);
    at += p.rows();
  }
  return t.record(std::move(out), any, [layout](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    for (auto [id, start] : layout) {
      if (tp.requires_grad(id)) tp.accumulate(id, g.middleRows(start, tp.value(id).rows()));
    }
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw ArgumentError("autodiff slice_cols: range out of bounds");
  std::size_t ia = a.id();
  Eigen::Index total = a.cols();
  Matrix out = a.value().middleCols(start, count);
  return a.tape()->record(std::move(out), needs(a), [ia, start, count, total](Tape& tp, std::size_t self) {
    Matrix d = Matrix::Zero(tp.value(ia).rows(), total);
    d.middleCols(start, count) = tp.grad(self);
    tp.accumulate(ia, d);
  });
}

Var gather_rows(const Var& a, std::span<const std::size_t> rows) {
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Matrix out(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= static_cast<std::size_t>(a.rows()))
      throw ArgumentError("autodiff gather_rows: row index out of range");
    out.row(static_cast<Eigen::Index>(r)) = a.value().row(static_cast<Eigen::Index>(idx[r]));
  }
  std::size_t ia = a.id();
  return a.tape()->record(std::move(out), needs(a), [ia, idx](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix d = Matrix::Zero(tp.value(ia).rows(), tp.value(ia).cols());
    for (std::size_t r = 0; r < idx.size(); ++r)
      d.row(static_cast<Eigen::Index>(idx[r])) += g.row(static_cast<Eigen::Index>(r));
    tp.accumulate(ia, d);
  });
}

Var row_dot(const Var& a, const Var& b) {
  check_same_tape(a, b);
  check_same_shape(a, b, "row_dot");
  std::size_t ia = a.id(), ib = b.id();
  Matrix out = a.value().cwiseProduct(b.value()).rowwise().sum();
  return a.tape()->record(std::move(out), needs(a) || needs(b), [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, (tp.value(ib).array().colwise() * g.col(0).array()).matrix());
    if (tp.requires_grad(ib)) tp.accumulate(ib, (tp.value(ia).array().colwise() * g.col(0).array()).matrix());
  });
}

Var row_sum(const Var& a) {
  std::size_t ia = a.id();
  Matrix out = a.value().rowwise().sum();
  return a.tape()->record(std::move(out), needs(a), [ia](Tape& tp, std::size_t self) {
    Eigen::Index c = tp.value(ia).cols();
    tp.accumulate(ia, tp.grad(self).col(0).replicate(1, c));
  });
}

Var sum(const Var& a) {
  std::size_t ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->record(std::move(out), needs(a), [ia](Tape& tp, std::size_t self) {
    const Matrix& x = tp.value(ia);
    tp.accumulate(ia, Matrix::Constant(x.rows(), x.cols(), tp.grad(self)(0, 0)));
  });
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw ArgumentError("autodiff mean: empty input");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var pairwise_sqdist(const Var& a, const Var& b) {
  check_same_tape(a, b);
  if (a.cols() != b.cols()) throw ArgumentError("autodiff pairwise_sqdist: dimension mismatch");
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  Matrix out(x.rows(), y.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < y.rows(); ++j) out(i, j) = (x.row(i) - y.row(j)).squaredNorm();
  std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), needs(a) || needs(b), [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& x = tp.value(ia);
    const Matrix& y = tp.value(ib);
    // d/dx_i sum_j g_ij |x_i - y_j|^2 = 2 (rowsum(g)_i x_i - (g y)_i)
    if (tp.requires_grad(ia)) {
      Matrix d = 2.0 * (x.array().colwise() * g.rowwise().sum().array()).matrix() - 2.0 * g * y;
      tp.accumulate(ia, d);
    }
    if (tp.requires_grad(ib)) {
      Matrix d = 2.0 * (y.array().colwise() * g.colwise().sum().transpose().array()).matrix() -
                 2.0 * g.transpose() * x;
      tp.accumulate(ib, d);
    }
  });
}

Var detach(const Var& a) { return a.tape()->constant(a.value()); }

}  // namespace ad
}  // namespace hjid
