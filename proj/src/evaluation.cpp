#include "hjid/evaluation.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "hjid/error.hpp"

namespace hjid {

using nlohmann::ordered_json;

QueryMetrics rank_metrics(std::span<const double> scores, std::size_t positive_index,
                          std::span<const std::size_t> cutoffs, std::optional<std::size_t> expected_count) {
  if (expected_count && scores.size() != *expected_count)
    throw ArgumentError("rank_metrics: expected " + std::to_string(*expected_count) + " candidates, got " +
                        std::to_string(scores.size()));
  if (positive_index >= scores.size()) throw ArgumentError("rank_metrics: positive index out of range");
  const double pos = scores[positive_index];
  if (std::isnan(pos)) throw ArgumentError("rank_metrics: NaN score");
  std::size_t above = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (std::isnan(scores[j])) throw ArgumentError("rank_metrics: NaN score");
    if (j != positive_index && scores[j] >= pos) ++above;
  }
  QueryMetrics m;
  m.rank = above + 1;
  m.reciprocal_rank = 1.0 / static_cast<double>(m.rank);
  for (std::size_t k : cutoffs) {
    const bool hit = m.rank <= k;
    m.hr.push_back(hit ? 1.0 : 0.0);
    m.ndcg.push_back(hit ? 1.0 / std::log2(static_cast<double>(m.rank) + 1.0) : 0.0);
  }
  return m;
}

double MetricsReport::hr_at(std::size_t k) const {
  for (const auto& [c, v] : hr)
    if (c == k) return v;
  throw ArgumentError("metrics report has no HR@" + std::to_string(k));
}

double MetricsReport::ndcg_at(std::size_t k) const {
  for (const auto& [c, v] : ndcg)
    if (c == k) return v;
  throw ArgumentError("metrics report has no NDCG@" + std::to_string(k));
}

namespace {

// Neumaier compensated sum.
class CompensatedSum {
 public:
  void add(double v) {
    double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      c_ += (sum_ - t) + v;
    else
      c_ += (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + c_; }

 private:
  double sum_ = 0.0;
  double c_ = 0.0;
};

}  // namespace

MetricsReport evaluate_queries(std::span<const Query> queries, const ItemScorer& scorer,
                               std::optional<std::size_t> expected_candidates) {
  MetricsReport r;
  r.queries = queries.size();
  CompensatedSum rr;
  std::vector<CompensatedSum> hr(kCutoffs.size()), ndcg(kCutoffs.size());
  std::vector<std::size_t> candidates;
  for (const auto& q : queries) {
    candidates.assign(1, q.positive);
    candidates.insert(candidates.end(), q.negatives.begin(), q.negatives.end());
    Vector s = scorer(q.user, candidates);
    if (static_cast<std::size_t>(s.size()) != candidates.size())
      throw ArgumentError("evaluate: scorer returned the wrong number of scores");
    auto m = rank_metrics(std::span<const double>(s.data(), candidates.size()), 0, kCutoffs, expected_candidates);
    rr.add(m.reciprocal_rank);
    for (std::size_t i = 0; i < kCutoffs.size(); ++i) {
      hr[i].add(m.hr[i]);
      ndcg[i].add(m.ndcg[i]);
    }
  }
  const double n = queries.empty() ? 1.0 : static_cast<double>(queries.size());
  r.mrr = rr.value() / n;
  for (std::size_t i = 0; i < kCutoffs.size(); ++i) {
    r.hr.emplace_back(kCutoffs[i], hr[i].value() / n);
    r.ndcg.emplace_back(kCutoffs[i], ndcg[i].value() / n);
  }
  return r;
}

MetricsReport evaluate(const HjidModel& model, const DatasetSplit& split, QuerySet which,
                       std::optional<DomainId> domain) {
  const DomainId d = domain.value_or(target_domain(model.config.direction));
  Representations reps = eval_representations(model, split, d);
  const DomainSplit& ds = split.domain(d);
  const auto& queries = which == QuerySet::test ? ds.test : ds.validation;
  ItemScorer scorer = [&](std::size_t user, std::span<const std::size_t> items) {
    Vector out(static_cast<Eigen::Index>(items.size()));
    const auto u = reps.users.row(static_cast<Eigen::Index>(user));
    for (std::size_t i = 0; i < items.size(); ++i) {
      double dot = u.dot(reps.items.row(static_cast<Eigen::Index>(items[i])));
      out(static_cast<Eigen::Index>(i)) = 1.0 / (1.0 + std::exp(-dot));
    }
    return out;
  };
  MetricsReport r = evaluate_queries(queries, scorer, split.num_negatives + 1);
  r.seed = split.seed;
  r.scenario = split.scenario;
  r.domain = d;
  r.query_set = which == QuerySet::test ? "test" : "validation";
  return r;
}

namespace {

double percent(double v) { return std::round(v * 10000.0) / 100.0; }

}  // namespace

std::string metrics_json(const MetricsReport& r, const std::string& command_line) {
  ordered_json j;
  j["format"] = "hjid-metrics";
  j["version"] = 1;
  j["command"] = command_line;
  j["seed"] = r.seed;
  j["scenario"] = to_string(r.scenario);
  j["domain"] = to_string(r.domain);
  j["query_set"] = r.query_set;
  j["queries"] = r.queries;
  ordered_json pct;
  pct["MRR"] = percent(r.mrr);
  for (const auto& [k, v] : r.ndcg) pct["NDCG@" + std::to_string(k)] = percent(v);
  for (const auto& [k, v] : r.hr) pct["HR@" + std::to_string(k)] = percent(v);
  j["percent"] = pct;
  ordered_json full;
  full["MRR"] = r.mrr;
  for (const auto& [k, v] : r.ndcg) full["NDCG@" + std::to_string(k)] = v;
  for (const auto& [k, v] : r.hr) full["HR@" + std::to_string(k)] = v;
  j["values"] = full;
  return j.dump(2) + "\n";
}

void write_metrics_report(const std::filesystem::path& path, const MetricsReport& report,
                          const std::string& command_line) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write metrics report " + path.string());
  out << metrics_json(report, command_line);
}

GradCheckResult grad_check(const std::function<double()>& loss, std::span<const NamedParam> params,
                           std::span<const Matrix> analytic, double step, double floor, std::size_t stride) {
  if (!(step > 0)) throw ArgumentError("grad_check: step must be positive");
  if (params.size() != analytic.size()) throw ArgumentError("grad_check: one analytic gradient per parameter");
  if (stride == 0) stride = 1;
  GradCheckResult res;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& w = *params[p].value;
    const Matrix& g = analytic[p];
    if (g.rows() != w.rows() || g.cols() != w.cols())
      throw ArgumentError("grad_check: gradient shape mismatch for " + params[p].name);
    if (!g.allFinite()) throw NumericError("grad_check: non-finite analytic gradient for " + params[p].name);
    std::size_t flat = 0;
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r, ++flat) {
        if (flat % stride != 0) continue;
        const double orig = w(r, c);
        w(r, c) = orig + step;
        const double up = loss();
        w(r, c) = orig - step;
        const double down = loss();
        w(r, c) = orig;
        const double numeric = (up - down) / (2.0 * step);
        if (!std::isfinite(numeric))
          throw NumericError("grad_check: non-finite numeric gradient for " + params[p].name);
        const double err = std::abs(g(r, c) - numeric) / std::max(std::abs(numeric), floor);
        ++res.coordinates;
        if (res.worst_parameter.empty() || err > res.max_relative_error) {
          res.max_relative_error = err;
          res.worst_parameter = params[p].name;
          res.worst_row = r;
          res.worst_col = c;
        }
      }
  }
  return res;
}

}  // namespace hjid
