#include "hjid/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hjid/error.hpp"
#include "hjid/rng.hpp"

namespace hjid {

std::string to_string(MmdEstimator e) {
  return e == MmdEstimator::unbiased ? "unbiased" : "diagonal_inclusive";
}

MmdEstimator mmd_estimator_from_string(const std::string& s) {
  if (s == "unbiased") return MmdEstimator::unbiased;
  if (s == "diagonal_inclusive") return MmdEstimator::diagonal_inclusive;
  throw ArgumentError("unknown MMD estimator '" + s + "' (expected unbiased or diagonal_inclusive)");
}

double gaussian_kernel(std::span<const double> a, std::span<const double> b, double sigma) {
  if (!(sigma > 0)) throw ArgumentError("gaussian_kernel: sigma must be positive");
  if (a.size() != b.size()) throw ArgumentError("gaussian_kernel: dimension mismatch");
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  return std::exp(-d2 / (2.0 * sigma * sigma));
}

std::vector<std::size_t> sample_indices(std::size_t population, std::size_t n, std::uint64_t seed) {
  if (n > population)
    throw ArgumentError("sample_group: group size " + std::to_string(n) + " exceeds " +
                        std::to_string(population) + " available rows");
  std::vector<std::size_t> idx(population);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = make_rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, population - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(n);
  return idx;
}

UserGroup sample_group(const Matrix& shallow, std::size_t n, std::uint64_t seed, DomainId domain) {
  UserGroup g;
  g.indices = sample_indices(static_cast<std::size_t>(shallow.rows()), n, seed);
  g.rows.resize(static_cast<Eigen::Index>(n), shallow.cols());
  for (std::size_t i = 0; i < n; ++i)
    g.rows.row(static_cast<Eigen::Index>(i)) = shallow.row(static_cast<Eigen::Index>(g.indices[i]));
  g.domain = domain;
  g.seed = seed;
  return g;
}

Var mmd2(const Var& gx, const Var& gy, const KernelConfig& config) {
  if (!(config.bandwidth > 0)) throw ArgumentError("mmd2: bandwidth must be positive");
  if (gx.rows() != gy.rows()) throw ArgumentError("mmd2: groups must have equal size");
  if (gx.cols() != gy.cols()) throw ArgumentError("mmd2: groups must have equal dimension");
  const double n = static_cast<double>(gx.rows());
  if (gx.rows() < 2) throw ArgumentError("mmd2: group size must be at least 2");

  const double inv2s2 = -1.0 / (2.0 * config.bandwidth * config.bandwidth);
  Var kxx = ad::exp(ad::scale(ad::pairwise_sqdist(gx, gx), inv2s2));
  Var kyy = ad::exp(ad::scale(ad::pairwise_sqdist(gy, gy), inv2s2));
  Var kxy = ad::exp(ad::scale(ad::pairwise_sqdist(gx, gy), inv2s2));
  const double h = 1.0 / (n * (n - 1.0));
  if (config.estimator == MmdEstimator::diagonal_inclusive) {
    return ad::scale(ad::add(ad::sub(ad::sum(kxx), ad::sum(kxy)), ad::sum(kyy)), h);
  }
  // U-statistic: every sum skips i == j, including the cross term.
  // k(x, x) = 1 exactly, so the within-group diagonals contribute n each.
  Var within = ad::add_scalar(ad::add(ad::sum(kxx), ad::sum(kyy)), -2.0 * n);
  Var paired = ad::exp(ad::scale(ad::row_sum(ad::square(ad::sub(gx, gy))), inv2s2));
  Var cross = ad::sub(ad::sum(kxy), ad::sum(paired));
  return ad::scale(ad::sub(within, ad::scale(cross, 2.0)), h);
}

double mmd2(const Matrix& gx, const Matrix& gy, const KernelConfig& config) {
  Tape tape;
  return mmd2(tape.constant(gx), tape.constant(gy), config).scalar();
}

double mmd2(const UserGroup& gx, const UserGroup& gy, const KernelConfig& config) {
  if (gx.rows.rows() == 0 || gy.rows.rows() == 0) throw ArgumentError("mmd2: empty group");
  return mmd2(gx.rows, gy.rows, config);
}

double median_bandwidth(const Matrix& gx, const Matrix& gy) {
  Matrix pooled(gx.rows() + gy.rows(), gx.cols());
  pooled << gx, gy;
  std::vector<double> dist;
  for (Eigen::Index i = 0; i < pooled.rows(); ++i)
    for (Eigen::Index j = i + 1; j < pooled.rows(); ++j)
      dist.push_back((pooled.row(i) - pooled.row(j)).norm());
  if (dist.empty()) return 1.0;
  auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
  std::nth_element(dist.begin(), mid, dist.end());
  double med = *mid;
  if (dist.size() % 2 == 0) {
    double lower = *std::max_element(dist.begin(), mid);
    med = 0.5 * (med + lower);
  }
  return med > 0 ? med : 1.0;
}

}  // namespace hjid
