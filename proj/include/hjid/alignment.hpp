#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hjid/autodiff.hpp"
#include "hjid/data.hpp"

namespace hjid {

// unbiased: U-statistic, h * sum_{i != j} [k(x_i,x_j) + k(y_i,y_j) - 2 k(x_i,y_j)].
// diagonal_inclusive: h * (sum Kxx - sum Kxy + sum Kyy) with full sums and
// h = 1 / (N (N - 1)); kept for fidelity experiments, it is not zero on
// identical groups.
enum class MmdEstimator { unbiased, diagonal_inclusive };

std::string to_string(MmdEstimator e);
MmdEstimator mmd_estimator_from_string(const std::string& s);

struct KernelConfig {
  double bandwidth = 1.0;
  MmdEstimator estimator = MmdEstimator::unbiased;
};

double gaussian_kernel(std::span<const double> a, std::span<const double> b, double sigma);

struct UserGroup {
  Matrix rows;
  DomainId domain = DomainId::X;
  std::vector<std::size_t> indices;
  std::uint64_t seed = 0;
};

// Uniform sample of n distinct indices from [0, population).
std::vector<std::size_t> sample_indices(std::size_t population, std::size_t n, std::uint64_t seed);

UserGroup sample_group(const Matrix& shallow, std::size_t n, std::uint64_t seed,
                       DomainId domain = DomainId::X);

double mmd2(const UserGroup& gx, const UserGroup& gy, const KernelConfig& config);
double mmd2(const Matrix& gx, const Matrix& gy, const KernelConfig& config);
Var mmd2(const Var& gx, const Var& gy, const KernelConfig& config);

// Median pairwise Euclidean distance over the pooled rows of both groups;
// falls back to 1 when every pair coincides.
double median_bandwidth(const Matrix& gx, const Matrix& gy);

}  // namespace hjid
