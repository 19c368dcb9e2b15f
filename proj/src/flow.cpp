#include "hjid/flow.hpp"

#include <cmath>
#include <numbers>

#include "hjid/encoder.hpp"
#include "hjid/error.hpp"

namespace hjid {

std::string to_string(BijectionKind k) {
  return k == BijectionKind::affine_coupling ? "affine_coupling" : "masked_autoregressive";
}

BijectionKind bijection_kind_from_string(const std::string& s) {
  if (s == "affine_coupling") return BijectionKind::affine_coupling;
  if (s == "masked_autoregressive") return BijectionKind::masked_autoregressive;
  throw ArgumentError("unknown flow kind '" + s + "' (expected affine_coupling or masked_autoregressive)");
}

namespace {

void check_finite(const Matrix& m, const char* what, std::size_t layer) {
  if (!m.allFinite())
    throw NumericError(std::string("flow: non-finite ") + what + " at layer " + std::to_string(layer));
}

Matrix tile_row(const Matrix& row, Eigen::Index n) { return row.replicate(n, 1); }

}  // namespace

Bijection Bijection::affine_coupling(std::size_t dim, std::size_t hidden, std::size_t parity, Rng& rng) {
  if (dim == 0 || hidden == 0) throw ArgumentError("affine_coupling: dim and hidden must be >= 1");
  Bijection b;
  b.kind_ = BijectionKind::affine_coupling;
  b.dim_ = dim;
  b.hidden_ = hidden;
  b.variant_ = parity % 2;
  const auto d = static_cast<Eigen::Index>(dim);
  const auto h = static_cast<Eigen::Index>(hidden);
  b.w1 = uniform_matrix(d, h, init_bound(dim), rng);
  b.b1 = Matrix::Zero(1, h);
  b.w2 = Matrix::Zero(h, 2 * d);
  b.b2 = Matrix::Zero(1, 2 * d);
  b.build_masks();
  return b;
}

Bijection Bijection::masked_autoregressive(std::size_t dim, std::size_t hidden, bool reversed, Rng& rng) {
  if (dim == 0 || hidden == 0) throw ArgumentError("masked_autoregressive: dim and hidden must be >= 1");
  Bijection b;
  b.kind_ = BijectionKind::masked_autoregressive;
  b.dim_ = dim;
  b.hidden_ = hidden;
  b.variant_ = reversed ? 1 : 0;
  const auto d = static_cast<Eigen::Index>(dim);
  const auto h = static_cast<Eigen::Index>(hidden);
  b.w1 = uniform_matrix(d, h, init_bound(dim), rng);
  b.b1 = Matrix::Zero(1, h);
  b.w2 = Matrix::Zero(h, 2 * d);
  b.b2 = Matrix::Zero(1, 2 * d);
  b.build_masks();
  return b;
}

Bijection Bijection::restore(BijectionKind kind, std::size_t dim, std::size_t hidden, std::size_t variant,
                             Matrix w1, Matrix b1, Matrix w2, Matrix b2) {
  const auto d = static_cast<Eigen::Index>(dim);
  const auto h = static_cast<Eigen::Index>(hidden);
  if (w1.rows() != d || w1.cols() != h || b1.rows() != 1 || b1.cols() != h || w2.rows() != h ||
      w2.cols() != 2 * d || b2.rows() != 1 || b2.cols() != 2 * d)
    throw ArgumentError("Bijection::restore: parameter shapes do not match dim/hidden");
  Bijection b;
  b.kind_ = kind;
  b.dim_ = dim;
  b.hidden_ = hidden;
  b.variant_ = variant;
  b.w1 = std::move(w1);
  b.b1 = std::move(b1);
  b.w2 = std::move(w2);
  b.b2 = std::move(b2);
  b.build_masks();
  return b;
}

void Bijection::build_masks() {
  const auto d = static_cast<Eigen::Index>(dim_);
  const auto h = static_cast<Eigen::Index>(hidden_);
  pass_mask_ = Matrix::Zero(1, d);
  ordering_.resize(dim_);
  for (std::size_t i = 0; i < dim_; ++i) ordering_[i] = variant_ == 1 ? dim_ - 1 - i : i;

  if (kind_ == BijectionKind::affine_coupling) {
    for (Eigen::Index j = 0; j < d; ++j)
      pass_mask_(0, j) = ((static_cast<std::size_t>(j) + variant_) % 2 == 0) ? 1.0 : 0.0;
    return;
  }
  // MADE degrees: input j has degree = 1 + its position in the ordering;
  // hidden units cycle through 1..d-1; output i may see hidden k iff
  // deg(i) > deg(k), hidden k may see input j iff deg(k) >= deg(j).
  std::vector<std::size_t> deg_in(dim_);
  for (std::size_t pos = 0; pos < dim_; ++pos) deg_in[ordering_[pos]] = pos + 1;
  std::vector<std::size_t> deg_hidden(hidden_);
  for (std::size_t k = 0; k < hidden_; ++k) deg_hidden[k] = dim_ > 1 ? (k % (dim_ - 1)) + 1 : 1;
  mask_hidden_ = Matrix::Zero(d, h);
  for (std::size_t j = 0; j < dim_; ++j)
    for (std::size_t k = 0; k < hidden_; ++k)
      mask_hidden_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) =
          deg_hidden[k] >= deg_in[j] ? 1.0 : 0.0;
  mask_out_ = Matrix::Zero(h, 2 * d);
  for (std::size_t k = 0; k < hidden_; ++k)
    for (std::size_t i = 0; i < dim_; ++i) {
      double m = deg_in[i] > deg_hidden[k] ? 1.0 : 0.0;
      mask_out_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = m;
      mask_out_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i + dim_)) = m;
    }
}

std::pair<Matrix, Matrix> Bijection::scale_shift(const Matrix& x) const {
  const auto d = static_cast<Eigen::Index>(dim_);
  Matrix out;
  if (kind_ == BijectionKind::affine_coupling) {
    Matrix xin = x.array().rowwise() * pass_mask_.row(0).array();
    Matrix h = ((xin * w1).rowwise() + b1.row(0)).array().tanh();
    out = (h * w2).rowwise() + b2.row(0);
    Matrix keep = tile_row(Matrix::Ones(1, d) - pass_mask_, x.rows());
    return {out.leftCols(d).cwiseProduct(keep), out.rightCols(d).cwiseProduct(keep)};
  }
  Matrix h = ((x * w1.cwiseProduct(mask_hidden_)).rowwise() + b1.row(0)).array().tanh();
  out = (h * w2.cwiseProduct(mask_out_)).rowwise() + b2.row(0);
  return {out.leftCols(d), out.rightCols(d)};
}

std::pair<Var, Var> Bijection::forward(Binding& bind, const Var& x) const {
  if (x.cols() != static_cast<Eigen::Index>(dim_))
    throw ArgumentError("flow: input has " + std::to_string(x.cols()) + " columns, expected " +
                        std::to_string(dim_));
  const auto d = static_cast<Eigen::Index>(dim_);
  const Eigen::Index n = x.rows();
  Var s, t;
  if (kind_ == BijectionKind::affine_coupling) {
    Matrix pass = tile_row(pass_mask_, n);
    Matrix keep = Matrix::Ones(n, d) - pass;
    Var xin = ad::mul_const(x, pass);
    Var h = ad::tanh(ad::add_row(ad::matmul(xin, bind(w1)), bind(b1)));
    Var o = ad::add_row(ad::matmul(h, bind(w2)), bind(b2));
    s = ad::mul_const(ad::slice_cols(o, 0, d), keep);
    t = ad::mul_const(ad::slice_cols(o, d, d), keep);
  } else {
    Var w1m = ad::mul_const(bind(w1), mask_hidden_);
    Var w2m = ad::mul_const(bind(w2), mask_out_);
    Var h = ad::tanh(ad::add_row(ad::matmul(x, w1m), bind(b1)));
    Var o = ad::add_row(ad::matmul(h, w2m), bind(b2));
    s = ad::slice_cols(o, 0, d);
    t = ad::slice_cols(o, d, d);
  }
  Var y = ad::add(ad::mul(x, ad::exp(s)), t);
  return {y, ad::row_sum(s)};
}

FlowResult Bijection::forward(const Matrix& x) const {
  Tape tape;
  Binding bind(tape, false);
  auto [y, ld] = forward(bind, tape.constant(x));
  return {y.value(), ld.value().col(0)};
}

FlowResult Bijection::inverse(const Matrix& y) const {
  if (y.cols() != static_cast<Eigen::Index>(dim_))
    throw ArgumentError("flow: input has " + std::to_string(y.cols()) + " columns, expected " +
                        std::to_string(dim_));
  if (kind_ == BijectionKind::affine_coupling) {
    // Pass-through dimensions of y equal those of x, so s and t are exact.
    auto [s, t] = scale_shift(y);
    Matrix x = (y - t).cwiseProduct((-s).array().exp().matrix());
    return {x, -s.rowwise().sum()};
  }
  Matrix x = Matrix::Zero(y.rows(), y.cols());
  Matrix s;
  for (std::size_t pos = 0; pos < dim_; ++pos) {
    const auto i = static_cast<Eigen::Index>(ordering_[pos]);
    auto st = scale_shift(x);
    s = std::move(st.first);
    x.col(i) = (y.col(i) - st.second.col(i)).cwiseProduct((-s.col(i)).array().exp().matrix());
  }
  s = scale_shift(x).first;
  return {x, -s.rowwise().sum()};
}

std::vector<NamedParam> Bijection::parameters(const std::string& prefix) {
  return {{prefix + ".w1", &w1}, {prefix + ".b1", &b1}, {prefix + ".w2", &w2}, {prefix + ".b2", &b2}};
}

FlowStack::FlowStack(std::size_t dim, std::size_t length, BijectionKind kind, std::size_t hidden, Rng& rng)
    : dim_(dim) {
  if (length == 0) throw ArgumentError("FlowStack: length must be >= 1");
  if (dim == 0) throw ArgumentError("FlowStack: dimension must be >= 1");
  for (std::size_t l = 0; l < length; ++l) {
    layers_.push_back(kind == BijectionKind::affine_coupling
                          ? Bijection::affine_coupling(dim, hidden, l % 2, rng)
                          : Bijection::masked_autoregressive(dim, hidden, l % 2 == 1, rng));
  }
}

FlowStack::FlowStack(std::vector<Bijection> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ArgumentError("FlowStack: length must be >= 1");
  dim_ = layers_.front().dim();
  for (const auto& l : layers_)
    if (l.dim() != dim_) throw ArgumentError("FlowStack: bijections differ in dimension");
}

FlowResult FlowStack::forward(const Matrix& z) const {
  FlowResult r{z, Vector::Zero(z.rows())};
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto step = layers_[l].forward(r.z);
    check_finite(step.z, "output", l);
    check_finite(step.log_det, "log-determinant", l);
    r.z = std::move(step.z);
    r.log_det += step.log_det;
  }
  return r;
}

FlowResult FlowStack::inverse(const Matrix& z) const {
  FlowResult r{z, Vector::Zero(z.rows())};
  for (std::size_t l = layers_.size(); l-- > 0;) {
    auto step = layers_[l].inverse(r.z);
    check_finite(step.z, "inverse output", l);
    r.z = std::move(step.z);
    r.log_det += step.log_det;
  }
  return r;
}

std::pair<Var, Var> FlowStack::forward(Binding& bind, const Var& z) const {
  Var cur = z;
  Var total;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto [y, ld] = layers_[l].forward(bind, cur);
    check_finite(y.value(), "output", l);
    cur = y;
    total = total.valid() ? ad::add(total, ld) : ld;
  }
  return {cur, total};
}

Matrix FlowStack::layer_log_dets(const Matrix& z) const {
  Matrix out(z.rows(), static_cast<Eigen::Index>(layers_.size()));
  Matrix cur = z;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto step = layers_[l].forward(cur);
    out.col(static_cast<Eigen::Index>(l)) = step.log_det;
    cur = std::move(step.z);
  }
  return out;
}

std::vector<NamedParam> FlowStack::parameters(const std::string& prefix) {
  std::vector<NamedParam> out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto p = layers_[l].parameters(prefix + "." + std::to_string(l));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

namespace {

void check_stats(const GaussianStats& s, Eigen::Index dim) {
  if (s.mean.size() != dim || s.variance.size() != dim)
    throw ArgumentError("flow_nll: target statistics have the wrong dimension");
  if ((s.variance.array() <= 0.0).any()) throw ArgumentError("flow_nll: target variance must be positive");
}

}  // namespace

Vector gaussian_log_density(const Matrix& z, const GaussianStats& stats) {
  check_stats(stats, z.cols());
  const double log_norm = (2.0 * std::numbers::pi * stats.variance.array()).log().sum();
  Matrix centred = z.rowwise() - stats.mean.transpose();
  Vector quad = (centred.array().square().rowwise() / stats.variance.transpose().array()).rowwise().sum();
  return (-0.5 * (quad.array() + log_norm)).matrix();
}

Var flow_nll(Binding& bind, const FlowStack& stack, const Var& z, const GaussianStats& target) {
  check_stats(target, z.cols());
  const Eigen::Index n = z.rows();
  auto [g, log_det] = stack.forward(bind, z);
  Tape& tape = bind.tape();
  Var centred = ad::sub(g, tape.constant(tile_row(target.mean.transpose(), n)));
  Matrix inv_var = tile_row(target.variance.cwiseInverse().transpose(), n);
  Var quad = ad::row_sum(ad::mul_const(ad::square(centred), inv_var));
  const double log_norm = (2.0 * std::numbers::pi * target.variance.array()).log().sum();
  // log p = -0.5 * (quad + log_norm); nll = -mean(log p + log_det)
  Var log_p = ad::add_scalar(ad::scale(quad, -0.5), -0.5 * log_norm);
  return ad::scale(ad::mean(ad::add(log_p, log_det)), -1.0);
}

double flow_nll(const FlowStack& stack, const Matrix& z, const GaussianStats& target) {
  Tape tape;
  Binding bind(tape, false);
  return flow_nll(bind, stack, tape.constant(z), target).scalar();
}

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

FlowResult Squash::logit(const Matrix& p) {
  if ((p.array() <= 0.0).any() || (p.array() >= 1.0).any())
    throw ArgumentError("logit: inputs must lie strictly inside (0, 1)");
  Matrix x = (p.array().log() - (1.0 - p.array()).log()).matrix();
  Vector ld = (-(p.array().log() + (1.0 - p.array()).log())).matrix().rowwise().sum();
  return {x, ld};
}

FlowResult Squash::sigmoid(const Matrix& x) {
  Matrix p = x.unaryExpr([](double v) {
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  });
  // log sigma(x) + log(1 - sigma(x)) = -softplus(-x) - softplus(x)
  Matrix terms = x.unaryExpr([](double v) { return -softplus(-v) - softplus(v); });
  return {p, terms.rowwise().sum()};
}

FlowResult squashed_forward(const FlowStack& stack, const Matrix& p) {
  auto a = Squash::logit(p);
  auto b = stack.forward(a.z);
  auto q = Squash::sigmoid(b.z);
  return {q.z, a.log_det + b.log_det + q.log_det};
}

FlowResult squashed_inverse(const FlowStack& stack, const Matrix& q) {
  auto b = Squash::logit(q);
  auto a = stack.inverse(b.z);
  auto p = Squash::sigmoid(a.z);
  return {p.z, b.log_det + a.log_det + p.log_det};
}

void jitter_parameters(FlowStack& stack, double scale, Rng& rng) {
  for (auto& p : stack.parameters("flow"))
    *p.value += uniform_matrix(p.value->rows(), p.value->cols(), scale, rng);
}

}  // namespace hjid
