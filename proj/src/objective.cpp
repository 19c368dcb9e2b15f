#include "hjid/objective.hpp"

#include <cmath>
#include <vector>

#include "hjid/error.hpp"

namespace hjid {

namespace {

double sigmoid(double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); }

void check_edges(Eigen::Index users, Eigen::Index items, std::span<const Edge> edges) {
  for (const auto& e : edges)
    if (e.user >= static_cast<std::size_t>(users) || e.item >= static_cast<std::size_t>(items))
      throw ArgumentError("vib_bce: edge (" + std::to_string(e.user) + ", " + std::to_string(e.item) +
                          ") is out of range");
}

}  // namespace

double score(std::span<const double> user_rep, std::span<const double> item_rep) {
  if (user_rep.size() != item_rep.size())
    throw ArgumentError("score: user has " + std::to_string(user_rep.size()) + " dims, item has " +
                        std::to_string(item_rep.size()));
  double dot = 0.0;
  for (std::size_t i = 0; i < user_rep.size(); ++i) dot += user_rep[i] * item_rep[i];
  return sigmoid(dot);
}

double score(const RowVector& user_rep, const RowVector& item_rep) {
  return score(std::span<const double>(user_rep.data(), static_cast<std::size_t>(user_rep.size())),
               std::span<const double>(item_rep.data(), static_cast<std::size_t>(item_rep.size())));
}

Var score_edges(const Var& user_reps, const Var& item_reps, std::span<const Edge> edges) {
  if (user_reps.cols() != item_reps.cols())
    throw ArgumentError("score: user and item representations differ in width");
  check_edges(user_reps.rows(), item_reps.rows(), edges);
  std::vector<std::size_t> us, is;
  us.reserve(edges.size());
  is.reserve(edges.size());
  for (const auto& e : edges) {
    us.push_back(e.user);
    is.push_back(e.item);
  }
  return ad::sigmoid(ad::row_dot(ad::gather_rows(user_reps, us), ad::gather_rows(item_reps, is)));
}

Vector score_edges(const Matrix& user_reps, const Matrix& item_reps, std::span<const Edge> edges) {
  if (edges.empty()) return Vector();
  Tape tape;
  return score_edges(tape.constant(user_reps), tape.constant(item_reps), edges).value().col(0);
}

Var vib_bce(const Var& user_reps, const Var& item_reps, std::span<const Edge> positives,
            std::span<const Edge> negatives) {
  Tape& tape = *user_reps.tape();
  Var bound = tape.constant(Matrix::Zero(1, 1));
  if (!positives.empty()) {
    Var s = ad::clamp(score_edges(user_reps, item_reps, positives), kScoreClamp, 1.0 - kScoreClamp);
    bound = ad::add(bound, ad::sum(ad::log(s)));
  }
  if (!negatives.empty()) {
    Var s = ad::clamp(score_edges(user_reps, item_reps, negatives), kScoreClamp, 1.0 - kScoreClamp);
    bound = ad::add(bound, ad::sum(ad::log(ad::add_scalar(ad::scale(s, -1.0), 1.0))));
  }
  return bound;
}

double vib_bce(const Matrix& user_reps, const Matrix& item_reps, std::span<const Edge> positives,
               std::span<const Edge> negatives) {
  Tape tape;
  return vib_bce(tape.constant(user_reps), tape.constant(item_reps), positives, negatives).scalar();
}

LossReport total_loss(double l_s, double l_g_nll, double vib_x, double vib_y, const LossWeights& weights) {
  const std::pair<const char*, double> parts[] = {{"l_s", l_s}, {"l_g", l_g_nll}, {"vib_x", vib_x}, {"vib_y", vib_y}};
  for (const auto& [name, value] : parts)
    if (!std::isfinite(value)) throw NumericError(std::string("total_loss: non-finite ") + name);
  LossReport r{l_s, l_g_nll, vib_x, vib_y, 0.0, weights};
  r.total = weights.w_s * l_s + weights.w_g * l_g_nll - weights.w_x * vib_x - weights.w_y * vib_y;
  return r;
}

Var total_loss(const Var& l_s, const Var& l_g_nll, const Var& vib_x, const Var& vib_y,
               const LossWeights& weights) {
  Var t = ad::add(ad::scale(l_s, weights.w_s), ad::scale(l_g_nll, weights.w_g));
  t = ad::sub(t, ad::scale(vib_x, weights.w_x));
  return ad::sub(t, ad::scale(vib_y, weights.w_y));
}

}  // namespace hjid
