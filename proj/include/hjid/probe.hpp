#pragma once

#include <cstdint>
#include <string>

#include "hjid/model.hpp"

namespace hjid {

struct ProbeOptions {
  std::uint64_t seed = 0;
  std::size_t control_repeats = 50;
  // PCA width before CCA; 0 picks max(1, overlapped users / 10).
  std::size_t components = 0;
  std::size_t injectivity_pairs = 1000;
  double min_pair_distance = 0.1;
  double injectivity_tolerance = 1e-6;
  // Ridge strength of the target-side calibration, per standardized feature.
  double readout_ridge = 0.1;
  // Competing X -> Y map scored against the same calibrated output.
  TrueMap alternative;
};

struct ProbeDiagnostics {
  std::size_t overlapped_users = 0;
  std::size_t components = 0;
  // Mean canonical correlation of z_s across the two domain encoders.
  double canonical_correlation = 0.0;
  double shuffled_correlation = 0.0;  // mean over user permutations
  double shuffled_correlation_sd = 0.0;
  // Normalized squared error, on a grid of true source variants, of the
  // calibrated flow against the true map, against the alternative map,
  // and of the calibration alone (no flow) against the true map.
  double flow_fit_error = 0.0;
  double alternative_fit_error = 0.0;
  double unflowed_fit_error = 0.0;
  std::size_t grid_points = 0;
  // In-sample error of the target readout itself.
  double calibration_error = 0.0;
  // Per overlapped user: calibrated flow output of the learned source
  // logits against the true target variants, and with users permuted.
  double paired_fit_error = 0.0;
  double paired_shuffled_fit_error = 0.0;
  double injectivity_fraction = 0.0;
  std::size_t injectivity_pairs = 0;
};

// Mean canonical correlation between the row-aligned samples a and b
// after projecting each onto its top `components` principal axes.
double mean_canonical_correlation(const Matrix& a, const Matrix& b, std::size_t components);

// sum ||p - h||^2 / sum ||h - mean(h)||^2
double normalized_fit_error(const Matrix& predicted, const Matrix& hypothesis);

// Fraction of random logit pairs (at least `min_distance` apart) whose
// flow-refined gates differ by more than `tolerance`.
double injectivity_fraction(const FlowStack& flow, std::size_t pairs, double min_distance, double tolerance,
                            std::uint64_t seed);

// Raises ArgumentError when the split's users are not those of `truth`.
ProbeDiagnostics identifiability_probe(const HjidModel& model, const DatasetSplit& split,
                                       const SyntheticGroundTruth& truth, const ProbeOptions& options = {});

std::string probe_json(const ProbeDiagnostics& d, const std::string& command_line);

}  // namespace hjid
