#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "hjid/data.hpp"
#include "hjid/error.hpp"
#include "test_util.hpp"

namespace hjid {
namespace {

using testing::TempDir;
using testing::read_file;
using testing::write_file;

InteractionSet from(std::vector<std::pair<std::string, std::string>> pairs, DomainId d = DomainId::X) {
  return InteractionSet::from_pairs(d, pairs);
}

TEST(Interactions, LoadCountsUsersItemsEdges) {
  TempDir dir;
  write_file(dir / "e.tsv", "a\t1\na\t2\nb\t1\n");
  auto s = load_interactions(dir / "e.tsv", DomainId::X);
  EXPECT_EQ(s.num_users(), 2u);
  EXPECT_EQ(s.num_items(), 2u);
  EXPECT_EQ(s.edges().size(), 3u);
  EXPECT_EQ(s.users()[0], "a");
  EXPECT_EQ(s.items()[1], "2");
}

TEST(Interactions, DuplicateLinesCollapse) {
  TempDir dir;
  write_file(dir / "e.tsv", "a\t1\na\t1\n");
  EXPECT_EQ(load_interactions(dir / "e.tsv", DomainId::Y).edges().size(), 1u);
}

TEST(Interactions, MalformedLineReportsLineNumber) {
  TempDir dir;
  write_file(dir / "e.tsv", "a\t1\nb 2\n");
  try {
    load_interactions(dir / "e.tsv", DomainId::X);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Interactions, EmptyFileIsDataError) {
  TempDir dir;
  write_file(dir / "e.tsv", "");
  EXPECT_THROW(load_interactions(dir / "e.tsv", DomainId::X), DataError);
}

TEST(Interactions, WriteThenLoadRoundTrips) {
  TempDir dir;
  auto s = from({{"u", "i"}, {"v", "i"}, {"u", "j"}});
  write_interactions(dir / "e.tsv", s);
  auto t = load_interactions(dir / "e.tsv", DomainId::X);
  EXPECT_EQ(t.users(), s.users());
  EXPECT_EQ(t.items(), s.items());
  EXPECT_EQ(t.edges(), s.edges());
}

TEST(Adjacency, SymmetricEntriesMatchDegreeFormula) {
  auto g = build_adjacency(from({{"u1", "v1"}, {"u2", "v1"}, {"u2", "v2"}}), Normalization::symmetric);
  EXPECT_NEAR(g.adjacency->coeff(0, 0), 0.70710678118654752, 1e-15);
  EXPECT_NEAR(g.adjacency->coeff(1, 0), 0.5, 1e-15);
  EXPECT_NEAR(g.adjacency->coeff(1, 1), 0.70710678118654752, 1e-15);
  EXPECT_EQ(g.adjacency->coeff(0, 1), 0.0);
  EXPECT_EQ(g.adjacency->nonZeros(), 3);
}

TEST(Adjacency, SingleEdgeIsOne) {
  auto g = build_adjacency(from({{"u", "v"}}), Normalization::symmetric);
  EXPECT_EQ(g.adjacency->coeff(0, 0), 1.0);
}

TEST(Adjacency, RowNormalizationSplitsEvenly) {
  auto g = build_adjacency(from({{"u2", "v1"}, {"u2", "v2"}}), Normalization::row);
  EXPECT_DOUBLE_EQ(g.adjacency->coeff(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(g.adjacency->coeff(0, 1), 0.5);
}

TEST(Adjacency, TransposeMatchesForSymmetric) {
  auto g = build_adjacency(from({{"a", "x"}, {"a", "y"}, {"b", "y"}, {"c", "x"}}), Normalization::symmetric);
  Matrix a = Matrix(*g.adjacency);
  Matrix t = Matrix(*g.transpose);
  EXPECT_EQ((a.transpose() - t).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Adjacency, SymmetricSpectralNormAtMostOne) {
  SyntheticConfig c;
  c.users_x = c.users_y = 30;
  c.overlap = 10;
  c.items_x = c.items_y = 25;
  auto ds = generate_synthetic(c, 4);
  auto g = build_adjacency(ds.x, Normalization::symmetric);
  const Matrix a = Matrix(*g.adjacency);
  // power iteration on A^T A
  Vector v = Vector::Ones(a.cols()).normalized();
  double sigma2 = 0.0;
  for (int i = 0; i < 500; ++i) {
    Vector w = a.transpose() * (a * v);
    sigma2 = w.norm();
    v = w / sigma2;
  }
  EXPECT_LE(std::sqrt(sigma2), 1.0 + 1e-9);
  EXPECT_GT(std::sqrt(sigma2), 0.99);
}

TEST(Adjacency, ZeroDegreeEntityRejected) {
  EXPECT_THROW(build_adjacency(InteractionSet(DomainId::X), Normalization::symmetric), ArgumentError);
}

DatasetSplit ten_user_split(std::uint64_t seed, Scenario scenario = Scenario::overlapped) {
  std::vector<std::pair<std::string, std::string>> px, py;
  for (int u = 0; u < 10; ++u)
    for (int j = 0; j < 4; ++j) {
      px.emplace_back("u" + std::to_string(u), "x" + std::to_string((u + 3 * j) % 12));
      py.emplace_back("u" + std::to_string(u), "y" + std::to_string((2 * u + j) % 12));
    }
  px.emplace_back("only_x", "x0");
  px.emplace_back("only_x", "x5");
  SplitOptions o;
  o.seed = seed;
  o.num_negatives = 5;
  o.scenario = scenario;
  return split_overlapped(from(px, DomainId::X), from(py, DomainId::Y), o);
}

TEST(Split, TenOverlappedUsersSixTwoTwo) {
  auto s = ten_user_split(3);
  EXPECT_EQ(s.overlap.size(), 10u);
  EXPECT_EQ(s.train_users.size(), 6u);
  EXPECT_EQ(s.test_users.size(), 2u);
  EXPECT_EQ(s.validation_users.size(), 2u);
  EXPECT_EQ(s.x.test.size(), 2u);
  EXPECT_EQ(s.y.validation.size(), 2u);
}

TEST(Split, SameSeedSameSplit) {
  auto a = ten_user_split(9), b = ten_user_split(9);
  EXPECT_EQ(a.train_users, b.train_users);
  EXPECT_EQ(a.test_users, b.test_users);
  EXPECT_EQ(a.x.train_edges, b.x.train_edges);
  for (std::size_t i = 0; i < a.y.test.size(); ++i) EXPECT_EQ(a.y.test[i].negatives, b.y.test[i].negatives);
}

TEST(Split, PartitionReconstructsEveryEdge) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto s = ten_user_split(seed);
    for (const DomainSplit* d : {&s.x, &s.y}) {
      std::multiset<Edge> rebuilt(d->train_edges.begin(), d->train_edges.end());
      for (const auto* qs : {&d->test, &d->validation})
        for (const auto& q : *qs) rebuilt.insert(Edge{q.user, q.positive});
      std::multiset<Edge> all(d->interactions.edges().begin(), d->interactions.edges().end());
      EXPECT_EQ(rebuilt, all);
    }
  }
}

TEST(Split, QueriesOnlyForHeldOutOverlappedUsers) {
  auto s = ten_user_split(5);
  std::set<std::size_t> evaluated;
  for (auto i : s.test_users) evaluated.insert(s.overlap[i].x);
  for (auto i : s.validation_users) evaluated.insert(s.overlap[i].x);
  for (const auto* qs : {&s.x.test, &s.x.validation})
    for (const auto& q : *qs) EXPECT_TRUE(evaluated.count(q.user));
}

TEST(Split, NegativesNeverPositives) {
  auto s = ten_user_split(7);
  for (const DomainSplit* d : {&s.x, &s.y}) {
    auto pos = d->interactions.positives_by_user();
    for (const auto* qs : {&d->test, &d->validation})
      for (const auto& q : *qs) {
        EXPECT_EQ(q.negatives.size(), 5u);
        for (auto n : q.negatives) EXPECT_FALSE(std::binary_search(pos[q.user].begin(), pos[q.user].end(), n));
      }
  }
}

TEST(Split, NonOverlapRemovesOverlappedUsersFromTraining) {
  auto s = ten_user_split(5, Scenario::non_overlapped);
  std::set<std::size_t> overlapped;
  for (const auto& o : s.overlap) overlapped.insert(o.x);
  for (const auto& e : s.x.train_edges) EXPECT_FALSE(overlapped.count(e.user));
  EXPECT_FALSE(s.x.train_edges.empty());
  EXPECT_TRUE(s.y.train_edges.empty());
  EXPECT_FALSE(s.x.context_edges.empty());
}

TEST(Split, TooFewOverlappedUsersIsDescriptive) {
  auto x = from({{"a", "1"}, {"b", "2"}}, DomainId::X);
  auto y = from({{"a", "1"}}, DomainId::Y);
  EXPECT_THROW(split_overlapped(x, y, SplitOptions{}), DataError);
}

TEST(Split, RatiosMustSumToOne) {
  SplitOptions o;
  o.ratios = {0.5, 0.2, 0.2};
  EXPECT_THROW(split_overlapped(from({{"a", "1"}}), from({{"a", "1"}}, DomainId::Y), o), ArgumentError);
}

TEST(Split, ManifestRoundTripIsByteStable) {
  TempDir dir;
  auto s = ten_user_split(11);
  write_split_manifest(dir / "a.json", s, "cmd");
  auto back = read_split_manifest(dir / "a.json");
  write_split_manifest(dir / "b.json", back, "cmd");
  EXPECT_EQ(read_file(dir / "a.json"), read_file(dir / "b.json"));
  EXPECT_EQ(back.train_users, s.train_users);
  EXPECT_EQ(back.y.train_edges, s.y.train_edges);
}

TEST(Negatives, ForcedSetWhenCountEqualsComplement) {
  std::vector<std::size_t> pos{3, 10, 200, 500, 1003};
  auto neg = sample_negatives(pos, 1004, 999, 1);
  std::sort(neg.begin(), neg.end());
  std::vector<std::size_t> want;
  for (std::size_t i = 0; i < 1004; ++i)
    if (!std::binary_search(pos.begin(), pos.end(), i)) want.push_back(i);
  EXPECT_EQ(neg, want);
}

TEST(Negatives, DistinctDeterministicAndPure) {
  std::vector<std::size_t> pos{1, 2, 3};
  auto a = sample_negatives(pos, 50, 20, 8);
  auto b = sample_negatives(pos, 50, 20, 8);
  EXPECT_EQ(a, b);
  std::set<std::size_t> uniq(a.begin(), a.end());
  EXPECT_EQ(uniq.size(), 20u);
  for (auto v : a) EXPECT_TRUE(v > 3 || v == 0);
}

TEST(Negatives, InsufficientCandidatesIsDescriptive) {
  std::vector<std::size_t> pos{0, 1};
  EXPECT_THROW(sample_negatives(pos, 4, 3, 0), DataError);
}

SyntheticConfig desk_config() {
  SyntheticConfig c;
  c.users_x = c.users_y = 100;
  c.overlap = 50;
  c.items_x = c.items_y = 80;
  c.d_shared = 4;
  c.d_variant = 2;
  return c;
}

TEST(Synthetic, ExactlyOverlapCommonIds) {
  auto ds = generate_synthetic(desk_config(), 2);
  std::size_t common = 0;
  for (const auto& u : ds.x.users())
    if (ds.y.user_index(u) != InteractionSet::npos) ++common;
  EXPECT_EQ(common, 50u);
}

TEST(Synthetic, IdentityMapCopiesVariants) {
  auto c = desk_config();
  c.map = {MapFamily::affine, 1.0, 0.0, 0.0};
  auto t = generate_synthetic(c, 3).truth;
  std::unordered_map<std::string, std::size_t> ix, iy;
  for (std::size_t i = 0; i < t.user_ids_x.size(); ++i) ix[t.user_ids_x[i]] = i;
  for (std::size_t i = 0; i < t.user_ids_y.size(); ++i) iy[t.user_ids_y[i]] = i;
  ASSERT_EQ(t.overlap_ids.size(), 50u);
  for (const auto& id : t.overlap_ids) {
    auto a = static_cast<Eigen::Index>(ix.at(id)), b = static_cast<Eigen::Index>(iy.at(id));
    EXPECT_EQ(t.variant_x.row(a), t.variant_y.row(b));
    EXPECT_EQ(t.shared_x.row(a), t.shared_y.row(b));
  }
}

TEST(Synthetic, ScaleTwoDoublesVariants) {
  auto c = desk_config();
  c.map = {MapFamily::affine, 2.0, 0.0, 0.0};
  auto t = generate_synthetic(c, 3).truth;
  std::unordered_map<std::string, std::size_t> iy;
  for (std::size_t i = 0; i < t.user_ids_y.size(); ++i) iy[t.user_ids_y[i]] = i;
  for (std::size_t i = 0; i < t.user_ids_x.size(); ++i) {
    auto it = iy.find(t.user_ids_x[i]);
    if (it == iy.end()) continue;
    Matrix want = 2.0 * t.variant_x.row(static_cast<Eigen::Index>(i));
    EXPECT_EQ(t.variant_y.row(static_cast<Eigen::Index>(it->second)), want.row(0));
  }
}

TEST(Synthetic, EveryUserAndItemHasAnEdge) {
  auto ds = generate_synthetic(desk_config(), 6);
  for (const InteractionSet* s : {&ds.x, &ds.y}) {
    std::vector<int> du(s->num_users()), dv(s->num_items());
    for (const auto& e : s->edges()) ++du[e.user], ++dv[e.item];
    EXPECT_EQ(std::count(du.begin(), du.end(), 0), 0);
    EXPECT_EQ(std::count(dv.begin(), dv.end(), 0), 0);
  }
}

TEST(Synthetic, DeterministicGivenSeed) {
  auto a = generate_synthetic(desk_config(), 5), b = generate_synthetic(desk_config(), 5);
  EXPECT_EQ(a.x.edges(), b.x.edges());
  EXPECT_EQ(a.truth.variant_y, b.truth.variant_y);
}

TEST(Synthetic, DegenerateConfigsRejected) {
  auto c = desk_config();
  c.overlap = 200;
  EXPECT_THROW(validate(c), ArgumentError);
  c = desk_config();
  c.items_x = 0;
  EXPECT_THROW(validate(c), ArgumentError);
}

TEST(Synthetic, GroundTruthRoundTripKeepsFullPrecision) {
  TempDir dir;
  auto t = generate_synthetic(desk_config(), 8).truth;
  write_ground_truth(dir / "gt.json", t, "cmd", 8);
  auto back = read_ground_truth(dir / "gt.json");
  EXPECT_EQ(back.variant_x, t.variant_x);
  EXPECT_EQ(back.items_y, t.items_y);
  EXPECT_EQ(back.overlap_ids, t.overlap_ids);
  EXPECT_EQ(back.map.scale, t.map.scale);
}

TEST(TrueMapInverse, UndoesAffineAndMonotone) {
  Matrix v(3, 2);
  v << -2.0, -0.3, 0.0, 0.7, 1.5, 3.0;
  for (TrueMap m : {TrueMap{MapFamily::affine, 2.0, 0.5, 0.0}, TrueMap{MapFamily::monotone, 1.5, -0.2, 0.3}})
    EXPECT_LT((m.inverse(m.apply(v)) - v).cwiseAbs().maxCoeff(), 1e-12);
}

}  // namespace
}  // namespace hjid
