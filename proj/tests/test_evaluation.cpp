#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hjid/error.hpp"
#include "hjid/evaluation.hpp"
#include "hjid/rng.hpp"
#include "test_util.hpp"

namespace hjid {
namespace {

std::vector<double> scores_with_rank(std::size_t rank, std::size_t n) {
  std::vector<double> s(n, 0.0);
  s[0] = 0.5;
  for (std::size_t i = 1; i < rank; ++i) s[i] = 1.0;
  return s;
}

TEST(RankMetrics, TopRankIsPerfect) {
  auto m = rank_metrics(scores_with_rank(1, 1000), 0);
  EXPECT_EQ(m.rank, 1u);
  EXPECT_DOUBLE_EQ(m.reciprocal_rank, 1.0);
  for (double v : m.hr) EXPECT_EQ(v, 1.0);
  for (double v : m.ndcg) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(RankMetrics, RankThreeHandValues) {
  auto m = rank_metrics(scores_with_rank(3, 1000), 0);
  EXPECT_NEAR(m.reciprocal_rank, 0.333333, 1e-6);
  EXPECT_EQ(m.hr[0], 1.0);
  EXPECT_DOUBLE_EQ(m.ndcg[0], 0.5);
}

TEST(RankMetrics, RankTwentyFiveHandValues) {
  auto m = rank_metrics(scores_with_rank(25, 1000), 0);
  EXPECT_EQ(m.rank, 25u);
  EXPECT_DOUBLE_EQ(m.reciprocal_rank, 1.0 / 25.0);
  EXPECT_EQ(m.hr, (std::vector<double>{0.0, 0.0, 1.0}));
  EXPECT_EQ(m.ndcg[0], 0.0);
  EXPECT_NEAR(m.ndcg[2], 0.212747, 1e-6);
}

TEST(RankMetrics, CutoffBoundaryInclusive) {
  auto m = rank_metrics(scores_with_rank(10, 1000), 0);
  EXPECT_EQ(m.hr[0], 1.0);
  EXPECT_NEAR(m.ndcg[0], 1.0 / std::log2(11.0), 1e-15);
  m = rank_metrics(scores_with_rank(11, 1000), 0);
  EXPECT_EQ(m.hr[0], 0.0);
}

TEST(RankMetrics, TiesCountAgainstPositive) {
  std::vector<double> s(1000, 0.3);
  EXPECT_EQ(rank_metrics(s, 0).rank, 1000u);
  EXPECT_EQ(rank_metrics(s, 417).rank, 1000u);
}

TEST(RankMetrics, InvariantUnderMonotoneTransform) {
  Rng rng = make_rng(1);
  for (int t = 0; t < 50; ++t) {
    Matrix raw = standard_normal(1, 1000, rng);
    std::vector<double> s(raw.data(), raw.data() + raw.size()), e(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) e[i] = std::exp(3.0 * s[i]) + 7.0;
    auto a = rank_metrics(s, 0), b = rank_metrics(e, 0);
    EXPECT_EQ(a.rank, b.rank);
    EXPECT_EQ(a.ndcg, b.ndcg);
  }
}

TEST(RankMetrics, BoundsOnRandomScores) {
  Rng rng = make_rng(2);
  for (int t = 0; t < 200; ++t) {
    Matrix raw = standard_normal(1, 1000, rng);
    std::vector<double> s(raw.data(), raw.data() + raw.size());
    auto m = rank_metrics(s, static_cast<std::size_t>(t) % 1000);
    EXPECT_GE(m.rank, 1u);
    EXPECT_LE(m.rank, 1000u);
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_LE(m.ndcg[k], m.hr[k]);
      EXPECT_GE(m.ndcg[k], 0.0);
      if (k > 0) EXPECT_GE(m.hr[k], m.hr[k - 1]);
    }
  }
}

TEST(RankMetrics, BadInputsRejected) {
  std::vector<double> s(999, 0.0);
  EXPECT_THROW(rank_metrics(s, 0), ArgumentError);
  std::vector<double> n(1000, 0.0);
  n[5] = std::nan("");
  EXPECT_THROW(rank_metrics(n, 0), ArgumentError);
  EXPECT_NO_THROW(rank_metrics(std::vector<double>(7, 0.0), 0, kCutoffs, std::nullopt));
}

TEST(EvaluateQueries, RandomScorerMatchesHarmonicBaseline) {
  const std::size_t queries = 2000;
  std::vector<Query> qs(queries);
  for (std::size_t i = 0; i < queries; ++i) {
    qs[i].user = i;
    qs[i].positive = 0;
    qs[i].negatives.resize(999);
    for (std::size_t j = 0; j < 999; ++j) qs[i].negatives[j] = j + 1;
  }
  ItemScorer scorer = [](std::size_t user, std::span<const std::size_t> items) {
    Rng rng = make_rng(user, 77);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector v(static_cast<Eigen::Index>(items.size()));
    for (auto& x : v) x = u(rng);
    return v;
  };
  auto r = evaluate_queries(qs, scorer, 1000);
  // E[1/rank] for a uniform rank on 1..1000 is H_1000 / 1000
  double h = 0.0, h2 = 0.0;
  for (int k = 1; k <= 1000; ++k) h += 1.0 / k, h2 += 1.0 / (static_cast<double>(k) * k);
  const double mean = h / 1000.0, sd = std::sqrt(h2 / 1000.0 - mean * mean);
  EXPECT_NEAR(r.mrr, mean, 3.0 * sd / std::sqrt(static_cast<double>(queries)));
  EXPECT_NEAR(r.hr_at(10), 0.01, 3.0 * std::sqrt(0.01 * 0.99 / queries));
  EXPECT_EQ(r.queries, queries);
}

TEST(EvaluateQueries, PositiveFirstInCandidates) {
  std::vector<Query> qs{{0, 5, {1, 2, 3}}};
  ItemScorer scorer = [](std::size_t, std::span<const std::size_t> items) {
    Vector v(static_cast<Eigen::Index>(items.size()));
    for (std::size_t i = 0; i < items.size(); ++i) v(static_cast<Eigen::Index>(i)) = static_cast<double>(items[i]);
    return v;
  };
  auto r = evaluate_queries(qs, scorer, std::nullopt);
  EXPECT_DOUBLE_EQ(r.mrr, 1.0);
}

TEST(Report, JsonCarriesCommandAndMetrics) {
  MetricsReport r;
  r.mrr = 0.25;
  r.hr = {{10, 0.5}};
  r.ndcg = {{10, 0.3}};
  r.queries = 4;
  std::string j = metrics_json(r, "hjid eval x");
  EXPECT_NE(j.find("hjid eval x"), std::string::npos);
  EXPECT_NE(j.find("0.25"), std::string::npos);
  EXPECT_DOUBLE_EQ(r.hr_at(10), 0.5);
}

TEST(GradCheck, QuadraticPasses) {
  Matrix x(1, 3);
  x << 0.3, -1.2, 2.0;
  std::vector<NamedParam> p{{"x", &x}};
  auto loss = [&] { return x.squaredNorm(); };
  std::vector<Matrix> g{Matrix(2.0 * x)};
  EXPECT_LT(grad_check(loss, p, g, 1e-5).max_relative_error, 1e-8);
  std::vector<Matrix> bad{Matrix(2.2 * x)};
  auto r = grad_check(loss, p, bad, 1e-5);
  EXPECT_NEAR(r.max_relative_error, 0.1, 1e-6);
  EXPECT_EQ(r.worst_parameter, "x");
}

TEST(GradCheck, QuadraticAtThree) {
  Matrix w = Matrix::Constant(1, 1, 3.0);
  std::vector<NamedParam> p{{"w", &w}};
  std::vector<Matrix> g{Matrix::Constant(1, 1, 6.0)};
  EXPECT_LT(grad_check([&] { return w(0, 0) * w(0, 0); }, p, g, 1e-5).max_relative_error, 1e-8);
}

}  // namespace
}  // namespace hjid

namespace hjid {
namespace {

TEST(EvaluateQueries, GroundTruthScorerBeatsRandomTenfold) {
  SyntheticConfig c;
  c.users_x = c.users_y = 120;
  c.overlap = 100;
  c.items_x = c.items_y = 1500;
  c.logit_offset = -5.0;
  c.temperature = 0.5;
  auto ds = generate_synthetic(c, 21);
  SplitOptions o;
  o.seed = 21;
  auto split = split_overlapped(ds.x, ds.y, o);
  const auto& y = split.y.interactions;
  ItemScorer oracle = [&](std::size_t user, std::span<const std::size_t> items) {
    Vector v(static_cast<Eigen::Index>(items.size()));
    for (std::size_t i = 0; i < items.size(); ++i)
      v(static_cast<Eigen::Index>(i)) = ds.truth.logit(DomainId::Y, y.users()[user], y.items()[items[i]]);
    return v;
  };
  std::vector<Query> qs = split.y.test;
  qs.insert(qs.end(), split.y.validation.begin(), split.y.validation.end());
  auto r = evaluate_queries(qs, oracle, 1000);
  EXPECT_GE(r.mrr, 10.0 * 0.00748547);
}

}  // namespace
}  // namespace hjid
