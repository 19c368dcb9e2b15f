#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "hjid/alignment.hpp"
#include "hjid/data.hpp"
#include "hjid/disentangle.hpp"
#include "hjid/flow.hpp"
#include "hjid/objective.hpp"

namespace hjid {

// full: every component. A: no alignment, no flow, no cross path.
// B: MMD on shallow and refined deep blocks, flow disabled.
// C: flow removed. D: no shallow/deep split, no shallow MMD.
enum class AblationVariant { full, A, B, C, D };

std::string to_string(AblationVariant v);
AblationVariant variant_from_string(const std::string& s);

enum class ScoringMode { full, deep_only };

std::string to_string(ScoringMode m);
ScoringMode scoring_from_string(const std::string& s);

enum class BandwidthPolicy { median, fixed };

struct TrainConfig {
  std::size_t K = 3;
  std::size_t k = 2;
  std::size_t d = 16;
  std::size_t N = 16;
  std::size_t L = 2;
  BijectionKind flow_kind = BijectionKind::masked_autoregressive;
  std::size_t flow_hidden = 64;
  // "median" or a positive number.
  BandwidthPolicy sigma_policy = BandwidthPolicy::median;
  double sigma = 1.0;
  MmdEstimator mmd_estimator = MmdEstimator::unbiased;
  double learning_rate = 1e-3;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  AblationVariant variant = AblationVariant::full;
  Scenario scenario = Scenario::overlapped;
  Direction direction = Direction::x_to_y;
  LossWeights weights;
  std::size_t negative_ratio = 1;
  ScoringMode scoring = ScoringMode::full;
  Normalization normalization = Normalization::symmetric;
  std::size_t patience = 10;
  double stats_momentum = 0.9;
  bool flow_input_detach = true;

  // Shallow depth actually used (0 for variant D).
  std::size_t shallow_depth() const { return variant == AblationVariant::D ? 0 : k; }
  std::size_t deep_width() const { return (K - shallow_depth()) * d; }
  bool uses_flow() const { return variant == AblationVariant::full || variant == AblationVariant::D; }
  bool uses_cross_path() const { return variant != AblationVariant::A; }
  bool uses_shallow_mmd() const {
    return variant == AblationVariant::full || variant == AblationVariant::B || variant == AblationVariant::C;
  }
  // Weights after the variant's switches are applied.
  LossWeights effective_weights() const;
};

void validate(const TrainConfig& config);

// Flat `key = value` text; '#' starts a comment. Unknown keys and
// malformed values raise ArgumentError naming the key.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
std::string format_config(const TrainConfig& config);

// Applies one key/value pair; used by the parser and by CLI overrides.
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);

}  // namespace hjid
