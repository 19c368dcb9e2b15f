#include "hjid/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hjid/error.hpp"
#include "hjid/rng.hpp"

namespace hjid {

using ordered_json = nlohmann::ordered_json;

std::string to_string(DomainId d) { return d == DomainId::X ? "X" : "Y"; }

DomainId domain_from_string(const std::string& s) {
  if (s == "X" || s == "x") return DomainId::X;
  if (s == "Y" || s == "y") return DomainId::Y;
  throw ArgumentError("unknown domain '" + s + "' (expected X or Y)");
}

InteractionSet InteractionSet::from_pairs(DomainId domain,
                                          std::span<const std::pair<std::string, std::string>> pairs) {
  InteractionSet s(domain);
  std::set<Edge> seen;
  for (const auto& [u, v] : pairs) {
    auto [uit, unew] = s.user_lookup_.try_emplace(u, s.users_.size());
    if (unew) s.users_.push_back(u);
    auto [vit, vnew] = s.item_lookup_.try_emplace(v, s.items_.size());
    if (vnew) s.items_.push_back(v);
    Edge e{uit->second, vit->second};
    if (seen.insert(e).second) s.edges_.push_back(e);
  }
  return s;
}

std::size_t InteractionSet::user_index(const std::string& id) const {
  auto it = user_lookup_.find(id);
  return it == user_lookup_.end() ? npos : it->second;
}

std::size_t InteractionSet::item_index(const std::string& id) const {
  auto it = item_lookup_.find(id);
  return it == item_lookup_.end() ? npos : it->second;
}

std::vector<std::vector<std::size_t>> InteractionSet::positives_by_user() const {
  std::vector<std::vector<std::size_t>> out(users_.size());
  for (const auto& e : edges_) out[e.user].push_back(e.item);
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

InteractionSet load_interactions(const std::filesystem::path& path, DomainId domain) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interaction file " + path.string());
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size() ||
        line.find('\t', tab + 1) != std::string::npos)
      throw ParseError("malformed interaction line in " + path.string() +
                           ": expected user<TAB>item",
                       lineno);
    pairs.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  if (pairs.empty()) throw DataError("empty dataset: " + path.string() + " has no interactions");
  return InteractionSet::from_pairs(domain, pairs);
}

void write_interactions(const std::filesystem::path& path, const InteractionSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write interaction file " + path.string());
  for (const auto& e : set.edges()) out << set.users()[e.user] << '\t' << set.items()[e.item] << '\n';
}

// ---------------------------------------------------------------------------

std::string to_string(Normalization n) { return n == Normalization::symmetric ? "symmetric" : "row"; }

Normalization normalization_from_string(const std::string& s) {
  if (s == "symmetric") return Normalization::symmetric;
  if (s == "row") return Normalization::row;
  throw ArgumentError("unknown normalization '" + s + "' (expected symmetric or row)");
}

NormalizedBipartiteGraph build_adjacency(std::size_t num_users, std::size_t num_items,
                                         std::span<const Edge> edges, Normalization normalization) {
  std::vector<double> du(num_users, 0.0), dv(num_items, 0.0);
  for (const auto& e : edges) {
    if (e.user >= num_users || e.item >= num_items)
      throw ArgumentError("build_adjacency: edge index out of range");
    du[e.user] += 1.0;
    dv[e.item] += 1.0;
  }
  using Triplet = Eigen::Triplet<double>;
  std::vector<Triplet> fwd, bwd;
  fwd.reserve(edges.size());
  bwd.reserve(edges.size());
  for (const auto& e : edges) {
    auto u = static_cast<Eigen::Index>(e.user);
    auto v = static_cast<Eigen::Index>(e.item);
    if (normalization == Normalization::symmetric) {
      double w = 1.0 / std::sqrt(du[e.user] * dv[e.item]);
      fwd.emplace_back(u, v, w);
      bwd.emplace_back(v, u, w);
    } else {
      fwd.emplace_back(u, v, 1.0 / du[e.user]);
      bwd.emplace_back(v, u, 1.0 / dv[e.item]);
    }
  }
  auto a = std::make_shared<SparseMatrix>(static_cast<Eigen::Index>(num_users),
                                          static_cast<Eigen::Index>(num_items));
  a->setFromTriplets(fwd.begin(), fwd.end());
  auto t = std::make_shared<SparseMatrix>(static_cast<Eigen::Index>(num_items),
                                          static_cast<Eigen::Index>(num_users));
  t->setFromTriplets(bwd.begin(), bwd.end());
  return NormalizedBipartiteGraph{std::move(a), std::move(t), normalization};
}

NormalizedBipartiteGraph build_adjacency(const InteractionSet& set, Normalization normalization) {
  if (set.empty()) throw ArgumentError("build_adjacency: interaction set is empty");
  std::vector<std::size_t> du(set.num_users(), 0), dv(set.num_items(), 0);
  for (const auto& e : set.edges()) {
    ++du[e.user];
    ++dv[e.item];
  }
  for (std::size_t u = 0; u < du.size(); ++u)
    if (du[u] == 0) throw ArgumentError("build_adjacency: user '" + set.users()[u] + "' has no edges");
  for (std::size_t v = 0; v < dv.size(); ++v)
    if (dv[v] == 0) throw ArgumentError("build_adjacency: item '" + set.items()[v] + "' has no edges");
  return build_adjacency(set.num_users(), set.num_items(), set.edges(), normalization);
}

// ---------------------------------------------------------------------------

std::string to_string(Scenario s) {
  return s == Scenario::overlapped ? "overlapped" : "non_overlapped";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "overlapped") return Scenario::overlapped;
  if (s == "non_overlapped" || s == "non-overlapped") return Scenario::non_overlapped;
  throw ArgumentError("unknown scenario '" + s + "' (expected overlapped or non_overlapped)");
}

std::vector<std::size_t> sample_negatives(std::span<const std::size_t> sorted_positives,
                                          std::size_t num_items, std::size_t count,
                                          std::uint64_t seed) {
  std::vector<std::size_t> candidates;
  candidates.reserve(num_items);
  auto pit = sorted_positives.begin();
  for (std::size_t v = 0; v < num_items; ++v) {
    while (pit != sorted_positives.end() && *pit < v) ++pit;
    if (pit != sorted_positives.end() && *pit == v) continue;
    candidates.push_back(v);
  }
  if (count > candidates.size())
    throw DataError("cannot sample " + std::to_string(count) + " negatives: only " +
                    std::to_string(candidates.size()) + " non-interacted items available");
  Rng rng = make_rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
    std::swap(candidates[i], candidates[pick(rng)]);
  }
  candidates.resize(count);
  return candidates;
}

std::vector<std::size_t> sample_negatives(const InteractionSet& set, std::size_t user,
                                          std::size_t count, std::uint64_t seed) {
  if (user >= set.num_users()) throw ArgumentError("sample_negatives: user index out of range");
  std::vector<std::size_t> pos;
  for (const auto& e : set.edges())
    if (e.user == user) pos.push_back(e.item);
  std::sort(pos.begin(), pos.end());
  return sample_negatives(pos, set.num_items(), count, seed);
}

namespace {

// Stream tags for the split's random draws.
constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kHoldoutStream = 1000;
constexpr std::uint64_t kNegativeStream = 2000000;

std::size_t floor_share(double ratio, std::size_t n) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

Query make_query(const std::vector<std::size_t>& positives, std::size_t num_items,
                 std::size_t user, std::size_t num_negatives, std::uint64_t seed, DomainId d) {
  if (positives.empty()) throw DataError("overlapped user has no interactions");
  std::uint64_t dom = d == DomainId::X ? 0 : 1;
  Rng rng = make_rng(seed, kHoldoutStream + 2 * user + dom);
  std::uniform_int_distribution<std::size_t> pick(0, positives.size() - 1);
  Query q;
  q.user = user;
  q.positive = positives[pick(rng)];
  q.negatives = sample_negatives(positives, num_items, num_negatives,
                                 derive_seed(seed, kNegativeStream + 2 * user + dom));
  return q;
}

}  // namespace

DatasetSplit split_overlapped(const InteractionSet& sx, const InteractionSet& sy,
                              const SplitOptions& options) {
  const auto& r = options.ratios;
  if (r.train < 0 || r.test < 0 || r.validation < 0 ||
      std::abs(r.train + r.test + r.validation - 1.0) > 1e-6)
    throw ArgumentError("split ratios must be non-negative and sum to 1");
  if (sx.empty() || sy.empty()) throw DataError("split: both domains need interactions");

  DatasetSplit out;
  out.seed = options.seed;
  out.ratios = r;
  out.scenario = options.scenario;
  out.num_negatives = options.num_negatives;
  out.x.interactions = sx;
  out.y.interactions = sy;

  for (std::size_t u = 0; u < sx.num_users(); ++u) {
    std::size_t yu = sy.user_index(sx.users()[u]);
    if (yu != InteractionSet::npos) out.overlap.push_back({sx.users()[u], u, yu});
  }
  const std::size_t n = out.overlap.size();
  if (n == 0) throw DataError("split: the two domains share no users");

  const std::size_t n_test = floor_share(r.test, n);
  const std::size_t n_val = floor_share(r.validation, n);
  if ((r.test > 0 && n_test == 0) || (r.validation > 0 && n_val == 0))
    throw DataError("split: " + std::to_string(n) +
                    " overlapped users are too few to fill the test/validation ratios");
  const std::size_t n_train = n - n_test - n_val;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(options.seed, kShuffleStream);
  std::shuffle(order.begin(), order.end(), rng);
  out.train_users.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test_users.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                        order.begin() + static_cast<std::ptrdiff_t>(n_train + n_test));
  out.validation_users.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_test),
                              order.end());
  std::sort(out.train_users.begin(), out.train_users.end());
  std::sort(out.test_users.begin(), out.test_users.end());
  std::sort(out.validation_users.begin(), out.validation_users.end());

  for (DomainId d : {DomainId::X, DomainId::Y}) {
    DomainSplit& ds = out.domain(d);
    const InteractionSet& set = ds.interactions;
    auto positives = set.positives_by_user();
    std::set<Edge> held_out;
    std::vector<bool> overlapped(set.num_users(), false);
    for (const auto& o : out.overlap) overlapped[d == DomainId::X ? o.x : o.y] = true;

    auto build_queries = [&](const std::vector<std::size_t>& group, std::vector<Query>& dst) {
      for (std::size_t oi : group) {
        std::size_t u = d == DomainId::X ? out.overlap[oi].x : out.overlap[oi].y;
        dst.push_back(make_query(positives[u], set.num_items(), u, options.num_negatives,
                                 options.seed, d));
        held_out.insert(Edge{u, dst.back().positive});
      }
    };
    build_queries(out.test_users, ds.test);
    build_queries(out.validation_users, ds.validation);

    std::vector<bool> evaluated(set.num_users(), false);
    for (const auto& q : ds.test) evaluated[q.user] = true;
    for (const auto& q : ds.validation) evaluated[q.user] = true;

    for (const auto& e : set.edges()) {
      if (held_out.count(e)) continue;
      if (options.scenario == Scenario::non_overlapped && overlapped[e.user]) {
        if (evaluated[e.user]) ds.context_edges.push_back(e);
        continue;
      }
      ds.train_edges.push_back(e);
    }
  }
  return out;
}

namespace {

ordered_json edges_to_json(const std::vector<Edge>& edges) {
  ordered_json arr = ordered_json::array();
  for (const auto& e : edges) arr.push_back({e.user, e.item});
  return arr;
}

std::vector<Edge> edges_from_json(const ordered_json& j) {
  std::vector<Edge> out;
  for (const auto& e : j) out.push_back(Edge{e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>()});
  return out;
}

ordered_json queries_to_json(const std::vector<Query>& qs) {
  ordered_json arr = ordered_json::array();
  for (const auto& q : qs)
    arr.push_back(ordered_json{{"user", q.user}, {"positive", q.positive}, {"negatives", q.negatives}});
  return arr;
}

std::vector<Query> queries_from_json(const ordered_json& j) {
  std::vector<Query> out;
  for (const auto& q : j)
    out.push_back(Query{q.at("user").get<std::size_t>(), q.at("positive").get<std::size_t>(),
                        q.at("negatives").get<std::vector<std::size_t>>()});
  return out;
}

ordered_json domain_to_json(const DomainSplit& d) {
  ordered_json j;
  j["users"] = d.interactions.users();
  j["items"] = d.interactions.items();
  j["edges"] = edges_to_json(d.interactions.edges());
  j["train_edges"] = edges_to_json(d.train_edges);
  j["context_edges"] = edges_to_json(d.context_edges);
  j["test"] = queries_to_json(d.test);
  j["validation"] = queries_to_json(d.validation);
  return j;
}

DomainSplit domain_from_json(const ordered_json& j, DomainId domain) {
  DomainSplit d;
  auto users = j.at("users").get<std::vector<std::string>>();
  auto items = j.at("items").get<std::vector<std::string>>();
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& e : edges_from_json(j.at("edges"))) {
    if (e.user >= users.size() || e.item >= items.size())
      throw DataError("split manifest: edge index out of range");
    pairs.emplace_back(users[e.user], items[e.item]);
  }
  d.interactions = InteractionSet::from_pairs(domain, pairs);
  if (d.interactions.users() != users || d.interactions.items() != items)
    throw DataError("split manifest: user/item order does not match edge first appearance");
  d.train_edges = edges_from_json(j.at("train_edges"));
  d.context_edges = edges_from_json(j.at("context_edges"));
  d.test = queries_from_json(j.at("test"));
  d.validation = queries_from_json(j.at("validation"));
  return d;
}

}  // namespace

void write_split_manifest(const std::filesystem::path& path, const DatasetSplit& split,
                          const std::string& command_line) {
  ordered_json j;
  j["format"] = "hjid-split";
  j["version"] = 1;
  j["command"] = command_line;
  j["seed"] = split.seed;
  j["ratios"] = {split.ratios.train, split.ratios.test, split.ratios.validation};
  j["scenario"] = to_string(split.scenario);
  j["num_negatives"] = split.num_negatives;
  ordered_json ov = ordered_json::array();
  for (const auto& o : split.overlap) ov.push_back({o.id, o.x, o.y});
  j["overlap"] = ov;
  j["train_users"] = split.train_users;
  j["test_users"] = split.test_users;
  j["validation_users"] = split.validation_users;
  j["X"] = domain_to_json(split.x);
  j["Y"] = domain_to_json(split.y);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write split manifest " + path.string());
  out << j.dump(1) << '\n';
}

DatasetSplit read_split_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split manifest " + path.string());
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("split manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  try {
    if (j.at("format") != "hjid-split") throw DataError("not a split manifest: " + path.string());
    if (j.at("version") != 1) throw VersionError("unsupported split manifest version");
    DatasetSplit s;
    s.seed = j.at("seed").get<std::uint64_t>();
    auto r = j.at("ratios").get<std::vector<double>>();
    if (r.size() != 3) throw DataError("split manifest: ratios must have 3 entries");
    s.ratios = {r[0], r[1], r[2]};
    s.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    s.num_negatives = j.at("num_negatives").get<std::size_t>();
    for (const auto& o : j.at("overlap"))
      s.overlap.push_back({o.at(0).get<std::string>(), o.at(1).get<std::size_t>(),
                           o.at(2).get<std::size_t>()});
    s.train_users = j.at("train_users").get<std::vector<std::size_t>>();
    s.test_users = j.at("test_users").get<std::vector<std::size_t>>();
    s.validation_users = j.at("validation_users").get<std::vector<std::size_t>>();
    s.x = domain_from_json(j.at("X"), DomainId::X);
    s.y = domain_from_json(j.at("Y"), DomainId::Y);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("split manifest " + path.string() + " is malformed: " + e.what());
  }
}

// ---------------------------------------------------------------------------

std::string to_string(MapFamily f) { return f == MapFamily::affine ? "affine" : "monotone"; }

MapFamily map_family_from_string(const std::string& s) {
  if (s == "affine") return MapFamily::affine;
  if (s == "monotone") return MapFamily::monotone;
  throw ArgumentError("unknown map family '" + s + "' (expected affine or monotone)");
}

Matrix TrueMap::apply(const Matrix& v) const {
  if (family == MapFamily::affine) return (v.array() * scale + shift).matrix();
  return ((v.array() + bend * v.array().cube()) * scale + shift).matrix();
}

Matrix TrueMap::inverse(const Matrix& y) const {
  Matrix c = ((y.array() - shift) / scale).matrix();
  if (family == MapFamily::affine || bend == 0.0) return c;
  // real root of bend * v^3 + v - c = 0 (Cardano, one real root for bend > 0)
  return c.unaryExpr([b = bend](double t) {
    const double q = t / (2.0 * b);
    const double r = std::sqrt(q * q + 1.0 / (27.0 * b * b * b));
    return std::cbrt(q + r) + std::cbrt(q - r);
  });
}

void validate(const SyntheticConfig& c) {
  if (c.items_x == 0 || c.items_y == 0) throw ArgumentError("synthetic config: item counts must be positive");
  if (c.users_x == 0 || c.users_y == 0) throw ArgumentError("synthetic config: user counts must be positive");
  if (c.overlap > c.users_x || c.overlap > c.users_y)
    throw ArgumentError("synthetic config: overlap " + std::to_string(c.overlap) +
                        " exceeds the user count of a domain");
  if (c.d_shared + c.d_variant == 0) throw ArgumentError("synthetic config: latent dimension is zero");
  if (!(c.temperature > 0)) throw ArgumentError("synthetic config: temperature must be positive");
  if (c.correlation < 0 || c.correlation > 1)
    throw ArgumentError("synthetic config: correlation must lie in [0, 1]");
  if (c.map.scale == 0) throw ArgumentError("synthetic config: map scale must be non-zero");
  if (c.map.family == MapFamily::monotone && c.map.bend < 0)
    throw ArgumentError("synthetic config: monotone map needs bend >= 0");
  if (c.min_user_edges > c.items_x || c.min_user_edges > c.items_y)
    throw ArgumentError("synthetic config: min_user_edges exceeds the item count");
}

namespace {

Matrix full_latents(const Matrix& shared, const Matrix& variant, double c) {
  Matrix out(shared.rows(), shared.cols() + variant.cols());
  out << shared * std::sqrt(c), variant * std::sqrt(1.0 - c);
  return out;
}

std::vector<std::pair<std::string, std::string>> draw_edges(
    const Matrix& users, const Matrix& items, const std::vector<std::string>& user_ids,
    const std::vector<std::string>& item_ids, const SyntheticConfig& c, Rng& rng) {
  const Eigen::Index nu = users.rows(), ni = items.rows();
  Matrix logits = (users * items.transpose()) / c.temperature;
  logits.array() += c.logit_offset;
  std::vector<std::vector<bool>> adj(static_cast<std::size_t>(nu), std::vector<bool>(static_cast<std::size_t>(ni)));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Eigen::Index u = 0; u < nu; ++u)
    for (Eigen::Index v = 0; v < ni; ++v)
      adj[u][v] = unif(rng) < 1.0 / (1.0 + std::exp(-logits(u, v)));

  for (Eigen::Index u = 0; u < nu; ++u) {
    auto deg = static_cast<std::size_t>(std::count(adj[u].begin(), adj[u].end(), true));
    while (deg < c.min_user_edges) {
      Eigen::Index best = -1;
      for (Eigen::Index v = 0; v < ni; ++v)
        if (!adj[u][v] && (best < 0 || logits(u, v) > logits(u, best))) best = v;
      adj[u][best] = true;
      ++deg;
    }
  }
  for (Eigen::Index v = 0; v < ni; ++v) {
    bool any = false;
    for (Eigen::Index u = 0; u < nu && !any; ++u) any = adj[u][v];
    if (any) continue;
    Eigen::Index best = 0;
    for (Eigen::Index u = 1; u < nu; ++u)
      if (logits(u, v) > logits(best, v)) best = u;
    adj[best][v] = true;
  }
  std::vector<std::pair<std::string, std::string>> pairs;
  for (Eigen::Index u = 0; u < nu; ++u)
    for (Eigen::Index v = 0; v < ni; ++v)
      if (adj[u][v]) pairs.emplace_back(user_ids[u], item_ids[v]);
  return pairs;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticConfig& c, std::uint64_t seed) {
  validate(c);
  const auto ds = static_cast<Eigen::Index>(c.d_shared);
  const auto dv = static_cast<Eigen::Index>(c.d_variant);
  const auto nx = static_cast<Eigen::Index>(c.users_x);
  const auto ny = static_cast<Eigen::Index>(c.users_y);
  const auto no = static_cast<Eigen::Index>(c.overlap);

  SyntheticGroundTruth t;
  t.map = c.map;
  t.correlation = c.correlation;
  t.temperature = c.temperature;
  t.logit_offset = c.logit_offset;
  for (std::size_t i = 0; i < c.overlap; ++i) t.overlap_ids.push_back("u" + std::to_string(i));
  t.user_ids_x = t.overlap_ids;
  t.user_ids_y = t.overlap_ids;
  for (std::size_t i = c.overlap; i < c.users_x; ++i) t.user_ids_x.push_back("ux" + std::to_string(i));
  for (std::size_t i = c.overlap; i < c.users_y; ++i) t.user_ids_y.push_back("uy" + std::to_string(i));
  for (std::size_t i = 0; i < c.items_x; ++i) t.item_ids_x.push_back("ix" + std::to_string(i));
  for (std::size_t i = 0; i < c.items_y; ++i) t.item_ids_y.push_back("iy" + std::to_string(i));

  Rng latent_rng = make_rng(seed, 1);
  Matrix shared_common = standard_normal(no, ds, latent_rng);
  Matrix variant_common = standard_normal(no, dv, latent_rng);
  Matrix shared_x_only = standard_normal(nx - no, ds, latent_rng);
  Matrix variant_x_only = standard_normal(nx - no, dv, latent_rng);
  Matrix shared_y_only = standard_normal(ny - no, ds, latent_rng);
  Matrix variant_y_only = standard_normal(ny - no, dv, latent_rng);
  t.items_x = standard_normal(static_cast<Eigen::Index>(c.items_x), ds + dv, latent_rng);
  t.items_y = standard_normal(static_cast<Eigen::Index>(c.items_y), ds + dv, latent_rng);

  t.shared_x.resize(nx, ds);
  t.shared_x << shared_common, shared_x_only;
  t.variant_x.resize(nx, dv);
  t.variant_x << variant_common, variant_x_only;
  t.shared_y.resize(ny, ds);
  t.shared_y << shared_common, shared_y_only;
  t.variant_y.resize(ny, dv);
  t.variant_y << c.map.apply(variant_common), variant_y_only;

  Rng edge_rng_x = make_rng(seed, 2);
  Rng edge_rng_y = make_rng(seed, 3);
  auto px = draw_edges(full_latents(t.shared_x, t.variant_x, c.correlation), t.items_x, t.user_ids_x,
                       t.item_ids_x, c, edge_rng_x);
  auto py = draw_edges(full_latents(t.shared_y, t.variant_y, c.correlation), t.items_y, t.user_ids_y,
                       t.item_ids_y, c, edge_rng_y);
  SyntheticDataset out;
  out.x = InteractionSet::from_pairs(DomainId::X, px);
  out.y = InteractionSet::from_pairs(DomainId::Y, py);
  out.truth = std::move(t);
  return out;
}

namespace {

std::size_t index_of(const std::vector<std::string>& ids, const std::string& id) {
  auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw ArgumentError("ground truth has no entity '" + id + "'");
  return static_cast<std::size_t>(it - ids.begin());
}

ordered_json matrix_to_json(const Matrix& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const ordered_json& j, Eigen::Index cols) {
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw DataError("ground truth: ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

}  // namespace

RowVector SyntheticGroundTruth::user_latent(DomainId domain, const std::string& user_id) const {
  bool x = domain == DomainId::X;
  std::size_t i = index_of(x ? user_ids_x : user_ids_y, user_id);
  const Matrix& s = x ? shared_x : shared_y;
  const Matrix& v = x ? variant_x : variant_y;
  RowVector out(s.cols() + v.cols());
  out << s.row(static_cast<Eigen::Index>(i)) * std::sqrt(correlation),
      v.row(static_cast<Eigen::Index>(i)) * std::sqrt(1.0 - correlation);
  return out;
}

RowVector SyntheticGroundTruth::item_latent(DomainId domain, const std::string& item_id) const {
  bool x = domain == DomainId::X;
  std::size_t i = index_of(x ? item_ids_x : item_ids_y, item_id);
  return (x ? items_x : items_y).row(static_cast<Eigen::Index>(i));
}

double SyntheticGroundTruth::logit(DomainId domain, const std::string& user_id,
                                   const std::string& item_id) const {
  return user_latent(domain, user_id).dot(item_latent(domain, item_id)) / temperature + logit_offset;
}

void write_ground_truth(const std::filesystem::path& path, const SyntheticGroundTruth& t,
                        const std::string& command_line, std::uint64_t seed) {
  ordered_json j;
  j["format"] = "hjid-ground-truth";
  j["version"] = 1;
  j["command"] = command_line;
  j["seed"] = seed;
  j["map"] = {{"family", to_string(t.map.family)},
              {"scale", t.map.scale},
              {"shift", t.map.shift},
              {"bend", t.map.bend}};
  j["correlation"] = t.correlation;
  j["temperature"] = t.temperature;
  j["logit_offset"] = t.logit_offset;
  j["d_shared"] = t.shared_x.cols();
  j["d_variant"] = t.variant_x.cols();
  j["user_ids_x"] = t.user_ids_x;
  j["user_ids_y"] = t.user_ids_y;
  j["item_ids_x"] = t.item_ids_x;
  j["item_ids_y"] = t.item_ids_y;
  j["overlap_ids"] = t.overlap_ids;
  j["shared_x"] = matrix_to_json(t.shared_x);
  j["shared_y"] = matrix_to_json(t.shared_y);
  j["variant_x"] = matrix_to_json(t.variant_x);
  j["variant_y"] = matrix_to_json(t.variant_y);
  j["items_x"] = matrix_to_json(t.items_x);
  j["items_y"] = matrix_to_json(t.items_y);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write ground truth " + path.string());
  out << j.dump(1) << '\n';
}

SyntheticGroundTruth read_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ground truth " + path.string());
  try {
    ordered_json j = ordered_json::parse(in);
    if (j.at("format") != "hjid-ground-truth") throw DataError("not a ground-truth file: " + path.string());
    if (j.at("version") != 1) throw VersionError("unsupported ground-truth version");
    SyntheticGroundTruth t;
    const auto& m = j.at("map");
    t.map.family = map_family_from_string(m.at("family").get<std::string>());
    t.map.scale = m.at("scale").get<double>();
    t.map.shift = m.at("shift").get<double>();
    t.map.bend = m.at("bend").get<double>();
    t.correlation = j.at("correlation").get<double>();
    t.temperature = j.at("temperature").get<double>();
    t.logit_offset = j.at("logit_offset").get<double>();
    auto ds = j.at("d_shared").get<Eigen::Index>();
    auto dv = j.at("d_variant").get<Eigen::Index>();
    t.user_ids_x = j.at("user_ids_x").get<std::vector<std::string>>();
    t.user_ids_y = j.at("user_ids_y").get<std::vector<std::string>>();
    t.item_ids_x = j.at("item_ids_x").get<std::vector<std::string>>();
    t.item_ids_y = j.at("item_ids_y").get<std::vector<std::string>>();
    t.overlap_ids = j.at("overlap_ids").get<std::vector<std::string>>();
    t.shared_x = matrix_from_json(j.at("shared_x"), ds);
    t.shared_y = matrix_from_json(j.at("shared_y"), ds);
    t.variant_x = matrix_from_json(j.at("variant_x"), dv);
    t.variant_y = matrix_from_json(j.at("variant_y"), dv);
    t.items_x = matrix_from_json(j.at("items_x"), ds + dv);
    t.items_y = matrix_from_json(j.at("items_y"), ds + dv);
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("ground truth " + path.string() + " is malformed: " + e.what());
  }
}

}  // namespace hjid
