#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hjid/autodiff.hpp"

namespace hjid {

enum class DomainId { X, Y };

std::string to_string(DomainId d);
DomainId domain_from_string(const std::string& s);

struct Edge {
  std::size_t user = 0;
  std::size_t item = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Users, items and observed edges of one domain. Users and items are
// indexed densely in first-appearance order.
class InteractionSet {
 public:
  InteractionSet() = default;
  explicit InteractionSet(DomainId domain) : domain_(domain) {}

  // Builds a de-duplicated set from raw (user, item) identifier pairs.
  static InteractionSet from_pairs(DomainId domain,
                                   std::span<const std::pair<std::string, std::string>> pairs);

  DomainId domain() const { return domain_; }
  const std::vector<std::string>& users() const { return users_; }
  const std::vector<std::string>& items() const { return items_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t num_users() const { return users_.size(); }
  std::size_t num_items() const { return items_.size(); }
  bool empty() const { return edges_.empty(); }

  // Dense index of an identifier, or npos.
  std::size_t user_index(const std::string& id) const;
  std::size_t item_index(const std::string& id) const;

  // Item indices each user interacted with, sorted ascending.
  std::vector<std::vector<std::size_t>> positives_by_user() const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  DomainId domain_ = DomainId::X;
  std::vector<std::string> users_;
  std::vector<std::string> items_;
  std::vector<Edge> edges_;
  std::unordered_map<std::string, std::size_t> user_lookup_;
  std::unordered_map<std::string, std::size_t> item_lookup_;
};

InteractionSet load_interactions(const std::filesystem::path& path, DomainId domain);
void write_interactions(const std::filesystem::path& path, const InteractionSet& set);

enum class Normalization { symmetric, row };

std::string to_string(Normalization n);
Normalization normalization_from_string(const std::string& s);

// Normalized user x item operator plus the item x user operator used for
// item-side propagation. For symmetric normalization the second is the
// exact transpose; for row normalization each side is normalized by its
// own degree.
struct NormalizedBipartiteGraph {
  std::shared_ptr<const SparseMatrix> adjacency;
  std::shared_ptr<const SparseMatrix> transpose;
  Normalization normalization = Normalization::symmetric;

  std::size_t num_users() const { return static_cast<std::size_t>(adjacency->rows()); }
  std::size_t num_items() const { return static_cast<std::size_t>(adjacency->cols()); }
};

// Requires every user and item in `set` to have at least one edge.
NormalizedBipartiteGraph build_adjacency(const InteractionSet& set,
                                         Normalization normalization = Normalization::symmetric);

// Variant over an explicit edge list; isolated users or items get empty
// rows (used for training graphs with held-out edges removed).
NormalizedBipartiteGraph build_adjacency(std::size_t num_users, std::size_t num_items,
                                         std::span<const Edge> edges, Normalization normalization);

// ---------------------------------------------------------------------------
// Splits

enum class Scenario { overlapped, non_overlapped };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

struct SplitRatios {
  double train = 0.6;
  double test = 0.2;
  double validation = 0.2;
};

struct Query {
  std::size_t user = 0;
  std::size_t positive = 0;
  std::vector<std::size_t> negatives;
};

struct DomainSplit {
  InteractionSet interactions;
  std::vector<Edge> train_edges;
  // Edges of held-out users that may feed the encoder graph at evaluation
  // time but never enter a training batch (non-overlapped scenario only).
  std::vector<Edge> context_edges;
  std::vector<Query> test;
  std::vector<Query> validation;
};

struct OverlapUser {
  std::string id;
  std::size_t x = 0;
  std::size_t y = 0;
};

struct DatasetSplit {
  std::uint64_t seed = 0;
  SplitRatios ratios;
  Scenario scenario = Scenario::overlapped;
  std::size_t num_negatives = 999;
  DomainSplit x;
  DomainSplit y;
  std::vector<OverlapUser> overlap;
  // Indices into `overlap`.
  std::vector<std::size_t> train_users;
  std::vector<std::size_t> test_users;
  std::vector<std::size_t> validation_users;

  const DomainSplit& domain(DomainId d) const { return d == DomainId::X ? x : y; }
  DomainSplit& domain(DomainId d) { return d == DomainId::X ? x : y; }
};

struct SplitOptions {
  SplitRatios ratios;
  std::uint64_t seed = 0;
  Scenario scenario = Scenario::overlapped;
  std::size_t num_negatives = 999;
};

DatasetSplit split_overlapped(const InteractionSet& sx, const InteractionSet& sy,
                              const SplitOptions& options);

// Uniform sample without replacement from the items `user` never
// interacted with in `set`.
std::vector<std::size_t> sample_negatives(const InteractionSet& set, std::size_t user,
                                          std::size_t count, std::uint64_t seed);
std::vector<std::size_t> sample_negatives(std::span<const std::size_t> sorted_positives,
                                          std::size_t num_items, std::size_t count,
                                          std::uint64_t seed);

void write_split_manifest(const std::filesystem::path& path, const DatasetSplit& split,
                          const std::string& command_line);
DatasetSplit read_split_manifest(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic two-domain data

enum class MapFamily { affine, monotone };

std::string to_string(MapFamily f);
MapFamily map_family_from_string(const std::string& s);

// Invertible map from X-side to Y-side variant latents, applied per
// dimension: affine is scale * v + shift; monotone is
// scale * (v + bend * v^3) + shift with bend >= 0.
struct TrueMap {
  MapFamily family = MapFamily::affine;
  double scale = 1.0;
  double shift = 0.0;
  double bend = 0.0;

  Matrix apply(const Matrix& v) const;
  Matrix inverse(const Matrix& y) const;
};

struct SyntheticConfig {
  std::size_t users_x = 100;
  std::size_t users_y = 100;
  std::size_t overlap = 50;
  std::size_t items_x = 80;
  std::size_t items_y = 80;
  std::size_t d_shared = 4;
  std::size_t d_variant = 2;
  TrueMap map;
  double temperature = 1.0;
  // Logit offset controlling interaction density.
  double logit_offset = -3.0;
  // Weight in [0, 1] of the shared block in every user latent; the
  // variant block carries the rest (sqrt-weighted).
  double correlation = 0.8;
  std::size_t min_user_edges = 3;
};

void validate(const SyntheticConfig& config);

struct SyntheticGroundTruth {
  TrueMap map;
  double correlation = 0.8;
  double temperature = 1.0;
  double logit_offset = 0.0;
  std::vector<std::string> user_ids_x;
  std::vector<std::string> user_ids_y;
  std::vector<std::string> item_ids_x;
  std::vector<std::string> item_ids_y;
  std::vector<std::string> overlap_ids;
  // Rows follow the id lists above. Overlapped users carry identical
  // shared rows in both domains and variant_y = map(variant_x).
  Matrix shared_x;
  Matrix shared_y;
  Matrix variant_x;
  Matrix variant_y;
  Matrix items_x;
  Matrix items_y;

  // Full latent [sqrt(c) * shared || sqrt(1 - c) * variant] of one user.
  RowVector user_latent(DomainId domain, const std::string& user_id) const;
  RowVector item_latent(DomainId domain, const std::string& item_id) const;
  // Logit of the generating interaction probability.
  double logit(DomainId domain, const std::string& user_id, const std::string& item_id) const;
};

struct SyntheticDataset {
  InteractionSet x;
  InteractionSet y;
  SyntheticGroundTruth truth;
};

SyntheticDataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

void write_ground_truth(const std::filesystem::path& path, const SyntheticGroundTruth& truth,
                        const std::string& command_line, std::uint64_t seed);
SyntheticGroundTruth read_ground_truth(const std::filesystem::path& path);

}  // namespace hjid
