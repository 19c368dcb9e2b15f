#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hjid/model.hpp"

namespace hjid {

class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<const NamedParam> params, std::span<const Matrix> grads);
  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

struct TrainState {
  HjidModel model;
  Adam optimizer{1e-3};
};

TrainState make_train_state(const TrainConfig& config, const DomainSizes& sizes);

// Edges scored in one step, in domain-local indices.
struct StepEdges {
  std::vector<Edge> source;
  std::vector<Edge> target;
};

// One Adam update on the batch loss, then the running target statistics
// absorb this step's target logits. Throws NumericError naming the
// non-finite component.
LossReport train_step(TrainState& state, const TrainingView& view, std::span<const Entity> batch,
                      std::uint64_t step_seed, StepEdges* edges = nullptr);

// Loss of a batch without updating anything.
LossReport evaluate_loss(const HjidModel& model, const TrainingView& view, std::span<const Entity> batch,
                         std::uint64_t step_seed);

struct EpochRecord {
  std::size_t epoch = 0;
  LossReport loss;
  double val_mrr = 0.0;
};

std::string epoch_record_json(const EpochRecord& r);

struct LeakageAudit {
  std::size_t edges_checked = 0;
  std::size_t held_out_hits = 0;
  std::size_t overlapped_user_hits = 0;  // non-overlapped scenario only

  bool clean() const { return held_out_hits == 0 && overlapped_user_hits == 0; }
};

struct Checkpoint {
  HjidModel model;
  std::size_t epoch = 0;
  std::size_t best_epoch = 0;
  double best_val_mrr = 0.0;
  std::uint64_t dataset_fingerprint = 0;
};

struct FitResult {
  Checkpoint checkpoint;
  std::vector<EpochRecord> log;
  LeakageAudit audit;
};

struct FitOptions {
  std::function<void(const EpochRecord&)> on_epoch;
  bool audit = true;
};

// Epoch loop with validation-MRR early stopping; returns the best
// checkpoint. The split's scenario overrides config.scenario.
FitResult fit(TrainConfig config, const DatasetSplit& split, const FitOptions& options = {});

// CRC-32 over sizes, training edges and queries.
std::uint64_t dataset_fingerprint(const DatasetSplit& split);

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hjid
