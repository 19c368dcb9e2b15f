#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hjid/config.hpp"
#include "hjid/encoder.hpp"

namespace hjid {

struct DomainParams {
  Matrix user_emb;
  Matrix item_emb;
  DomainEncoderParams encoder;
  LatentHeadParams heads;

  std::vector<NamedParam> parameters(const std::string& prefix);
};

struct DomainSizes {
  std::size_t users_x = 0;
  std::size_t items_x = 0;
  std::size_t users_y = 0;
  std::size_t items_y = 0;

  friend bool operator==(const DomainSizes&, const DomainSizes&) = default;
};

DomainSizes sizes_of(const DatasetSplit& split);

// One transfer direction: encoders, embeddings and latent heads for both
// domains plus the flow from source variant codes to the target side.
class HjidModel {
 public:
  HjidModel() = default;
  HjidModel(const TrainConfig& config, const DomainSizes& sizes);

  TrainConfig config;
  DomainParams x;
  DomainParams y;
  FlowStack flow;
  // Diagonal Gaussian over target-side variant logits; running average,
  // constant within any single loss evaluation.
  GaussianStats target_stats;
  bool stats_ready = false;

  DomainParams& domain(DomainId d) { return d == DomainId::X ? x : y; }
  const DomainParams& domain(DomainId d) const { return d == DomainId::X ? x : y; }
  const DomainParams& source() const { return domain(source_domain(config.direction)); }
  const DomainParams& target() const { return domain(target_domain(config.direction)); }
  DomainSizes sizes() const;

  std::vector<NamedParam> parameters();
};

// A batch entity: a single-domain user, or an overlapped training user
// carrying both domains (source and target both set).
struct Entity {
  std::optional<std::size_t> source_user;
  std::optional<std::size_t> target_user;

  bool is_pair() const { return source_user && target_user; }
};

struct DomainView {
  DomainId domain = DomainId::X;
  NormalizedBipartiteGraph graph;
  std::size_t num_items = 0;
  std::vector<std::vector<std::size_t>> train_positives;
  // Every known positive (train, context, held out); negatives avoid them.
  std::vector<std::vector<std::size_t>> all_positives;
  // Users with at least one training edge.
  std::vector<std::size_t> pool;
};

// Everything a training step needs from a split, for one direction.
struct TrainingView {
  Direction direction = Direction::x_to_y;
  DomainView source;
  DomainView target;
  std::vector<Entity> entities;

  static TrainingView build(const DatasetSplit& split, const TrainConfig& config);
};

struct LossVars {
  Var l_s;
  Var l_g;
  Var vib_x;
  Var vib_y;
  Var total;
  // Target-side variant logits over the target pool (values only).
  Matrix target_logits;
  // Edges scored this step, for leakage audits (domain-local indices).
  std::vector<Edge> source_edges;
  std::vector<Edge> target_edges;
};

// Training-mode loss for one batch. Every random draw (encoder noise,
// reparameterization noise, negatives, groups) comes from `step_seed`,
// so repeated evaluations with the same seed are identical functions of
// the parameters.
LossVars model_loss(Binding& bind, const HjidModel& model, const TrainingView& view,
                    std::span<const Entity> batch, std::uint64_t step_seed);

// Eval-mode user and item representations of one domain, encoded on the
// train + context graph. For the target domain, overlapped users take the
// cross path from their source-side stable factor unless variant A.
struct Representations {
  Matrix users;
  Matrix items;
};

Representations eval_representations(const HjidModel& model, const DatasetSplit& split, DomainId domain);

// Eval-mode head outputs of one domain's own encoder (no cross path).
struct DomainLatents {
  Matrix z_s;
  Matrix v_logits;
};

DomainLatents eval_latents(const HjidModel& model, const DatasetSplit& split, DomainId domain);

GaussianStats logit_stats(const Matrix& logits);

}  // namespace hjid
