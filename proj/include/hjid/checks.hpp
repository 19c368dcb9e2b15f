#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hjid/evaluation.hpp"
#include "hjid/training.hpp"

namespace hjid {

struct CheckResult {
  std::string family;
  std::string name;
  bool passed = false;
  std::string detail;
};

struct CheckOptions {
  std::optional<std::string> only;          // family filter
  std::optional<std::string> inject_fault;  // see fault_names()
};

std::vector<std::string> check_families();
std::vector<std::string> fault_names();

// The invariant suite behind `hjid check`.
std::vector<CheckResult> run_checks(const CheckOptions& options);

// 5 users, 6 items per domain, every user overlapped, all edges trainable.
DatasetSplit toy_split();
TrainConfig toy_config();

// Gradient check of the full training loss on the toy instance: fixed
// bandwidth, frozen target statistics, jittered flow, one batch with
// every entity. `gradient_scale` multiplies the analytic gradient (a
// value other than 1 demonstrates that the harness catches bad gradients).
GradCheckResult toy_loss_grad_check(const TrainConfig& config, double step = 1e-5, double floor = 1e-6,
                                    double gradient_scale = 1.0);

}  // namespace hjid
