#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hjid/binding.hpp"
#include "hjid/data.hpp"
#include "hjid/encoder.hpp"
#include "hjid/flow.hpp"

namespace hjid {

enum class Direction { x_to_y, y_to_x };

std::string to_string(Direction d);  // "xy" / "yx"
Direction direction_from_string(const std::string& s);
DomainId source_domain(Direction d);
DomainId target_domain(Direction d);

struct LatentHeadParams {
  Matrix w_s;  // in x out
  Matrix b_s;  // 1 x out
  Matrix w_v;
  Matrix b_v;

  Eigen::Index in_dim() const { return w_s.rows(); }
  Eigen::Index out_dim() const { return w_s.cols(); }
  static LatentHeadParams init(std::size_t in_dim, std::size_t out_dim, Rng& rng);
  static LatentHeadParams zeros(std::size_t in_dim, std::size_t out_dim);
  std::vector<NamedParam> parameters(const std::string& prefix);
};

// z_v is kept as its pre-activation so that both z_v and 1 - z_v stay
// representable near the ends of (0, 1).
struct LatentFactors {
  Matrix z_s;
  Matrix v_logits;
  std::optional<Matrix> transformed_logits;
  Direction direction = Direction::x_to_y;

  Matrix z_v() const;
  Matrix z_v_complement() const;  // 1 - z_v
  std::optional<Matrix> z_v_transformed() const;
};

// z_s = ELU(D W_s + b_s), z_v = sigmoid(D W_v + b_v).
LatentFactors latent_heads(const Matrix& deep, const LatentHeadParams& params,
                           Direction direction = Direction::x_to_y);

struct LatentVars {
  Var z_s;
  Var v_logits;
  Var z_v;
};

LatentVars latent_heads(Binding& bind, const Var& deep, const LatentHeadParams& params);

// D^ = z_s + scale * eps.
Matrix reparameterize(const Matrix& z_s, const Matrix& scale, const Matrix& eps);
Var reparameterize(const Var& z_s, const Var& scale, const Matrix& eps);

struct RefinedPair {
  Matrix d_hat_x;
  Matrix d_hat_y;
  LatentFactors factors;
};

struct PairNoise {
  Matrix eps_x;
  Matrix eps_y;
};

// Computes (z_s, z_v) from the source-side deep block, z~_v through the
// squashed flow (identity when `flow` is null), then
//   D^_x = z_s + z_v * eps_x,  D^_y = z_s + z~_v * eps_y.
// Eval mode uses eps = 0. In train mode `noise` supplies eps when given,
// otherwise both draws come from `rng` (x first).
RefinedPair refine_pair(const Matrix& deep, Direction direction, const FlowStack* flow,
                        const LatentHeadParams& params, Mode mode, Rng* rng = nullptr,
                        const PairNoise* noise = nullptr);

struct RefinedVars {
  LatentVars factors;
  Var transformed_logits;
  Var z_v_transformed;
  Var d_hat_x;
  Var d_hat_y;
};

// Tape version; null eps means eval mode (eps = 0).
RefinedVars refine_pair(Binding& bind, const Var& deep, const FlowStack* flow,
                        const LatentHeadParams& params, const Matrix* eps_x, const Matrix* eps_y);

}  // namespace hjid
