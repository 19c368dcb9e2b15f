#pragma once

// Minimal reverse-mode differentiation over dense Eigen matrices.
//
// A Tape records every operation applied to Var handles. Calling
// backward() on a 1x1 Var accumulates gradients into every node that
// requires them. Nodes live in a deque so references stay valid while
// the graph grows.

#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace hjid {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  bool valid() const { return tape_ != nullptr; }

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(Matrix value);  // leaf that receives a gradient
  Var constant(Matrix value);  // leaf excluded from differentiation

  // Records a derived node. `backward` reads this node's gradient and
  // adds into the gradients of its inputs.
  Var record(Matrix value, bool requires_grad, std::function<void(Tape&, std::size_t)> backward);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Adds `delta` into the gradient of node `id` if it requires one.
  void accumulate(std::size_t id, const Matrix& delta);

  void backward(const Var& root);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::function<void(Tape&, std::size_t)> backward;
  };
  std::deque<Node> nodes_;
};

namespace ad {

Var matmul(const Var& a, const Var& b);
// Constant sparse operator applied on the left: A * x.
Var spmm(std::shared_ptr<const SparseMatrix> a, const Var& x);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var add_row(const Var& a, const Var& row);  // broadcasts a 1 x c row over a
Var mul_const(const Var& a, const Matrix& m);  // elementwise by a constant
Var tanh(const Var& a);
Var elu(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var clamp(const Var& a, double lo, double hi);  // zero gradient outside [lo, hi]
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var gather_rows(const Var& a, std::span<const std::size_t> rows);
Var row_dot(const Var& a, const Var& b);  // n x 1 of per-row inner products
Var row_sum(const Var& a);                // n x 1
Var sum(const Var& a);                    // 1 x 1
Var mean(const Var& a);                   // 1 x 1
Var pairwise_sqdist(const Var& a, const Var& b);  // rows(a) x rows(b)
Var detach(const Var& a);

}  // namespace ad
}  // namespace hjid
