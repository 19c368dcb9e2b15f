#pragma once

#include <span>

#include "hjid/autodiff.hpp"
#include "hjid/data.hpp"

namespace hjid {

inline constexpr double kScoreClamp = 1e-7;

// sigmoid(<user, item>).
double score(std::span<const double> user_rep, std::span<const double> item_rep);
double score(const RowVector& user_rep, const RowVector& item_rep);

// Scores of every (user, item) pair in `edges`, as n x 1.
Vector score_edges(const Matrix& user_reps, const Matrix& item_reps, std::span<const Edge> edges);
Var score_edges(const Var& user_reps, const Var& item_reps, std::span<const Edge> edges);

// sum_pos log s + sum_neg log(1 - s), scores clamped to [1e-7, 1 - 1e-7].
// Returns the bound itself; the trainer negates it.
double vib_bce(const Matrix& user_reps, const Matrix& item_reps, std::span<const Edge> positives,
               std::span<const Edge> negatives);
Var vib_bce(const Var& user_reps, const Var& item_reps, std::span<const Edge> positives,
            std::span<const Edge> negatives);

struct LossWeights {
  double w_s = 1.0;
  double w_g = 1.0;
  double w_x = 1.0;
  double w_y = 1.0;
};

struct LossReport {
  double l_s = 0.0;
  double l_g = 0.0;
  double vib_x = 0.0;
  double vib_y = 0.0;
  double total = 0.0;
  LossWeights weights;
};

// total = w_s l_s + w_g l_g - w_x vib_x - w_y vib_y. Throws NumericError
// naming the first non-finite component.
LossReport total_loss(double l_s, double l_g_nll, double vib_x, double vib_y, const LossWeights& weights);
Var total_loss(const Var& l_s, const Var& l_g_nll, const Var& vib_x, const Var& vib_y,
               const LossWeights& weights);

}  // namespace hjid
