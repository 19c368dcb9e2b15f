#pragma once

#include <string>
#include <vector>

#include "hjid/binding.hpp"
#include "hjid/rng.hpp"

namespace hjid {

enum class BijectionKind { affine_coupling, masked_autoregressive };

std::string to_string(BijectionKind k);
BijectionKind bijection_kind_from_string(const std::string& s);

struct FlowResult {
  Matrix z;
  Vector log_det;  // per row, log |det J|
};

// Elementwise affine bijection y = x * exp(s(x)) + t(x) whose scale and
// shift come from a one-hidden-layer tanh conditioner
//   [s || t] = tanh(x_in W1 + b1) W2 + b2.
//
// affine_coupling: x_in = x * mask; dimensions with mask = 1 pass through
// unchanged and s, t are zeroed there.
// masked_autoregressive: W1 and W2 carry MADE masks so that s_i, t_i only
// see the dimensions that precede i in the layer's ordering.
//
// The output layer starts at zero, so a fresh bijection is the identity.
class Bijection {
 public:
  static Bijection affine_coupling(std::size_t dim, std::size_t hidden, std::size_t parity, Rng& rng);
  static Bijection masked_autoregressive(std::size_t dim, std::size_t hidden, bool reversed, Rng& rng);

  BijectionKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  std::size_t hidden() const { return hidden_; }

  FlowResult forward(const Matrix& x) const;
  FlowResult inverse(const Matrix& y) const;
  // Returns (y, log_det as n x 1).
  std::pair<Var, Var> forward(Binding& bind, const Var& x) const;

  Matrix w1, b1, w2, b2;

  // Mask on inputs (coupling: pass-through pattern as 1 x dim).
  const Matrix& pass_mask() const { return pass_mask_; }
  const std::vector<std::size_t>& ordering() const { return ordering_; }

  std::vector<NamedParam> parameters(const std::string& prefix);
  // Rebuilds the constant masks after w1..b2 were loaded.
  static Bijection restore(BijectionKind kind, std::size_t dim, std::size_t hidden,
                           std::size_t variant, Matrix w1, Matrix b1, Matrix w2, Matrix b2);
  // Parity (coupling) or reversed flag (autoregressive).
  std::size_t variant() const { return variant_; }

 private:
  Bijection() = default;
  void build_masks();
  std::pair<Matrix, Matrix> scale_shift(const Matrix& x) const;

  BijectionKind kind_ = BijectionKind::affine_coupling;
  std::size_t dim_ = 0;
  std::size_t hidden_ = 0;
  std::size_t variant_ = 0;
  Matrix pass_mask_;     // 1 x dim
  Matrix mask_hidden_;   // dim x hidden (autoregressive)
  Matrix mask_out_;      // hidden x 2 dim (autoregressive)
  std::vector<std::size_t> ordering_;
};

// Ordered chain G = g_L o ... o g_1 applied left to right.
class FlowStack {
 public:
  FlowStack() = default;
  FlowStack(std::size_t dim, std::size_t length, BijectionKind kind, std::size_t hidden, Rng& rng);
  explicit FlowStack(std::vector<Bijection> layers);

  std::size_t dim() const { return dim_; }
  std::size_t length() const { return layers_.size(); }
  const std::vector<Bijection>& layers() const { return layers_; }
  std::vector<Bijection>& layers() { return layers_; }

  FlowResult forward(const Matrix& z) const;
  FlowResult inverse(const Matrix& z) const;
  std::pair<Var, Var> forward(Binding& bind, const Var& z) const;

  // Per-layer log-dets of a forward pass, one column per layer.
  Matrix layer_log_dets(const Matrix& z) const;

  std::vector<NamedParam> parameters(const std::string& prefix);

 private:
  std::size_t dim_ = 0;
  std::vector<Bijection> layers_;
};

struct GaussianStats {
  Vector mean;
  Vector variance;
};

// Mean negative log-likelihood of G(z) under the diagonal Gaussian
// `target`, with the change-of-variables term:
//   -(1/N) sum_i [log N(G(z_i); mean, var) + log|det DG(z_i)|]
double flow_nll(const FlowStack& stack, const Matrix& z, const GaussianStats& target);
Var flow_nll(Binding& bind, const FlowStack& stack, const Var& z, const GaussianStats& target);

// Diagonal Gaussian log-density per row.
Vector gaussian_log_density(const Matrix& z, const GaussianStats& stats);

// The (0,1) <-> R bridge around the flow: logit on the way in, sigmoid
// on the way out. Log-dets are per row.
struct Squash {
  static FlowResult logit(const Matrix& p);
  static FlowResult sigmoid(const Matrix& x);
};

// sigmoid(G(logit(p))) with the log-det of the whole chain.
FlowResult squashed_forward(const FlowStack& stack, const Matrix& p);
FlowResult squashed_inverse(const FlowStack& stack, const Matrix& q);

// Adds uniform(-scale, scale) noise to every conditioner parameter, so a
// fresh (identity) stack becomes a non-trivial bijection.
void jitter_parameters(FlowStack& stack, double scale, Rng& rng);

}  // namespace hjid
