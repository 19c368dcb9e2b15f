#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hjid/model.hpp"

namespace hjid {

inline constexpr std::array<std::size_t, 3> kCutoffs{10, 20, 30};

struct QueryMetrics {
  std::size_t rank = 0;
  double reciprocal_rank = 0.0;
  std::vector<double> hr;    // one per cutoff
  std::vector<double> ndcg;  // one per cutoff
};

// rank = 1 + #{j != positive : score_j >= score_positive}; ties count
// against the positive. NDCG@K = 1 / log2(rank + 1) when rank <= K.
// A wrong candidate count (when `expected_count` is set) or a NaN score
// raises ArgumentError.
QueryMetrics rank_metrics(std::span<const double> scores, std::size_t positive_index,
                          std::span<const std::size_t> cutoffs = kCutoffs,
                          std::optional<std::size_t> expected_count = 1000);

struct MetricsReport {
  double mrr = 0.0;
  std::vector<std::pair<std::size_t, double>> hr;
  std::vector<std::pair<std::size_t, double>> ndcg;
  std::size_t queries = 0;
  std::uint64_t seed = 0;
  Scenario scenario = Scenario::overlapped;
  DomainId domain = DomainId::Y;
  std::string query_set = "test";

  double hr_at(std::size_t k) const;
  double ndcg_at(std::size_t k) const;
};

// Scores for `items` of one user, in order.
using ItemScorer = std::function<Vector(std::size_t user, std::span<const std::size_t> items)>;

// Mean of per-query metrics with compensated summation. Candidates are
// the positive followed by the negatives.
MetricsReport evaluate_queries(std::span<const Query> queries, const ItemScorer& scorer,
                               std::optional<std::size_t> expected_candidates);

enum class QuerySet { test, validation };

// Eval-mode scoring of every query of `domain` (default: the model's target).
MetricsReport evaluate(const HjidModel& model, const DatasetSplit& split, QuerySet which = QuerySet::test,
                       std::optional<DomainId> domain = std::nullopt);

void write_metrics_report(const std::filesystem::path& path, const MetricsReport& report,
                          const std::string& command_line);
std::string metrics_json(const MetricsReport& report, const std::string& command_line);

// ---------------------------------------------------------------------------
// Gradient checks

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  Eigen::Index worst_row = 0;
  Eigen::Index worst_col = 0;
  std::size_t coordinates = 0;
};

// Central differences of `loss` against `analytic` (one matrix per param,
// same order). relative error = |a - n| / max(|n|, floor). `stride` > 1
// checks every stride-th coordinate of each parameter. Non-finite
// analytic or numeric values raise NumericError.
GradCheckResult grad_check(const std::function<double()>& loss, std::span<const NamedParam> params,
                           std::span<const Matrix> analytic, double step, double floor = 1e-6,
                           std::size_t stride = 1);

}  // namespace hjid
