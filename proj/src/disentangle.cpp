#include "hjid/disentangle.hpp"

#include <cmath>

#include "hjid/error.hpp"

namespace hjid {

std::string to_string(Direction d) { return d == Direction::x_to_y ? "xy" : "yx"; }

Direction direction_from_string(const std::string& s) {
  if (s == "xy") return Direction::x_to_y;
  if (s == "yx") return Direction::y_to_x;
  throw ArgumentError("unknown direction '" + s + "' (expected xy or yx)");
}

DomainId source_domain(Direction d) { return d == Direction::x_to_y ? DomainId::X : DomainId::Y; }
DomainId target_domain(Direction d) { return d == Direction::x_to_y ? DomainId::Y : DomainId::X; }

LatentHeadParams LatentHeadParams::init(std::size_t in_dim, std::size_t out_dim, Rng& rng) {
  if (in_dim == 0 || out_dim == 0) throw ArgumentError("latent heads: dimensions must be >= 1");
  const auto i = static_cast<Eigen::Index>(in_dim);
  const auto o = static_cast<Eigen::Index>(out_dim);
  const double b = init_bound(in_dim);
  LatentHeadParams p;
  p.w_s = uniform_matrix(i, o, b, rng);
  p.b_s = Matrix::Zero(1, o);
  p.w_v = uniform_matrix(i, o, b, rng);
  p.b_v = Matrix::Zero(1, o);
  return p;
}

LatentHeadParams LatentHeadParams::zeros(std::size_t in_dim, std::size_t out_dim) {
  const auto i = static_cast<Eigen::Index>(in_dim);
  const auto o = static_cast<Eigen::Index>(out_dim);
  return {Matrix::Zero(i, o), Matrix::Zero(1, o), Matrix::Zero(i, o), Matrix::Zero(1, o)};
}

std::vector<NamedParam> LatentHeadParams::parameters(const std::string& prefix) {
  return {{prefix + ".w_s", &w_s}, {prefix + ".b_s", &b_s}, {prefix + ".w_v", &w_v}, {prefix + ".b_v", &b_v}};
}

namespace {

double stable_sigmoid(double v) {
  return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

void check_heads(Eigen::Index cols, const LatentHeadParams& p) {
  if (p.w_s.rows() != cols || p.w_v.rows() != cols)
    throw ArgumentError("latent_heads: deep block has " + std::to_string(cols) + " columns, heads expect " +
                        std::to_string(p.w_s.rows()));
  if (p.w_s.cols() != p.w_v.cols() || p.b_s.cols() != p.w_s.cols() || p.b_v.cols() != p.w_v.cols())
    throw ArgumentError("latent_heads: inconsistent head shapes");
}

}  // namespace

Matrix LatentFactors::z_v() const { return v_logits.unaryExpr(&stable_sigmoid); }

Matrix LatentFactors::z_v_complement() const {
  return v_logits.unaryExpr([](double v) { return stable_sigmoid(-v); });
}

std::optional<Matrix> LatentFactors::z_v_transformed() const {
  if (!transformed_logits) return std::nullopt;
  return transformed_logits->unaryExpr(&stable_sigmoid);
}

LatentVars latent_heads(Binding& bind, const Var& deep, const LatentHeadParams& params) {
  check_heads(deep.cols(), params);
  Var z_s = ad::elu(ad::add_row(ad::matmul(deep, bind(params.w_s)), bind(params.b_s)));
  Var logits = ad::add_row(ad::matmul(deep, bind(params.w_v)), bind(params.b_v));
  return {z_s, logits, ad::sigmoid(logits)};
}

LatentFactors latent_heads(const Matrix& deep, const LatentHeadParams& params, Direction direction) {
  Tape tape;
  Binding bind(tape, false);
  auto v = latent_heads(bind, tape.constant(deep), params);
  return {v.z_s.value(), v.v_logits.value(), std::nullopt, direction};
}

namespace {

void check_reparam(Eigen::Index zr, Eigen::Index zc, Eigen::Index sr, Eigen::Index sc, const Matrix& eps) {
  if (zr != sr || zc != sc || eps.rows() != zr || eps.cols() != zc)
    throw ArgumentError("reparameterize: z_s, scale and eps must share a shape");
}

}  // namespace

Matrix reparameterize(const Matrix& z_s, const Matrix& scale, const Matrix& eps) {
  check_reparam(z_s.rows(), z_s.cols(), scale.rows(), scale.cols(), eps);
  if ((scale.array() <= 0.0).any()) throw ArgumentError("reparameterize: scale entries must be positive");
  return z_s + scale.cwiseProduct(eps);
}

Var reparameterize(const Var& z_s, const Var& scale, const Matrix& eps) {
  check_reparam(z_s.rows(), z_s.cols(), scale.rows(), scale.cols(), eps);
  return ad::add(z_s, ad::mul_const(scale, eps));
}

RefinedVars refine_pair(Binding& bind, const Var& deep, const FlowStack* flow,
                        const LatentHeadParams& params, const Matrix* eps_x, const Matrix* eps_y) {
  RefinedVars out;
  out.factors = latent_heads(bind, deep, params);
  if (flow != nullptr) {
    out.transformed_logits = flow->forward(bind, out.factors.v_logits).first;
    out.z_v_transformed = ad::sigmoid(out.transformed_logits);
  } else {
    out.transformed_logits = out.factors.v_logits;
    out.z_v_transformed = out.factors.z_v;
  }
  // z_s enters both branches as the same node.
  out.d_hat_x = eps_x ? reparameterize(out.factors.z_s, out.factors.z_v, *eps_x) : out.factors.z_s;
  out.d_hat_y = eps_y ? reparameterize(out.factors.z_s, out.z_v_transformed, *eps_y) : out.factors.z_s;
  return out;
}

RefinedPair refine_pair(const Matrix& deep, Direction direction, const FlowStack* flow,
                        const LatentHeadParams& params, Mode mode, Rng* rng, const PairNoise* noise) {
  Tape tape;
  Binding bind(tape, false);
  Matrix ex, ey;
  if (mode == Mode::train) {
    if (noise != nullptr) {
      ex = noise->eps_x;
      ey = noise->eps_y;
    } else {
      if (rng == nullptr) throw ArgumentError("refine_pair: train mode needs noise or a random generator");
      const auto cols = params.w_s.cols();
      ex = standard_normal(deep.rows(), cols, *rng);
      ey = standard_normal(deep.rows(), cols, *rng);
    }
  }
  const bool train = mode == Mode::train;
  auto v = refine_pair(bind, tape.constant(deep), flow, params, train ? &ex : nullptr, train ? &ey : nullptr);
  RefinedPair out;
  out.d_hat_x = v.d_hat_x.value();
  out.d_hat_y = v.d_hat_y.value();
  out.factors = {v.factors.z_s.value(), v.factors.v_logits.value(), v.transformed_logits.value(), direction};
  return out;
}

}  // namespace hjid
