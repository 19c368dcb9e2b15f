#include "hjid/probe.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "hjid/error.hpp"
#include "hjid/rng.hpp"

namespace hjid {

namespace {

Matrix centered(const Matrix& m) { return m.rowwise() - m.colwise().mean(); }

// Orthonormal basis of the top principal score directions.
Matrix principal_basis(const Matrix& m, std::size_t components) {
  Eigen::JacobiSVD<Matrix> svd(centered(m), Eigen::ComputeThinU);
  const Vector& s = svd.singularValues();
  Eigen::Index keep = 0;
  const double cut = s.size() ? s(0) * 1e-10 : 0.0;
  while (keep < s.size() && keep < static_cast<Eigen::Index>(components) && s(keep) > cut) ++keep;
  return svd.matrixU().leftCols(keep);
}

std::unordered_map<std::string, std::size_t> index_of(const std::vector<std::string>& ids) {
  std::unordered_map<std::string, std::size_t> out;
  for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(ids[i], i);
  return out;
}

Matrix permuted_rows(const Matrix& m, const std::vector<std::size_t>& perm) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.row(i) = m.row(static_cast<Eigen::Index>(perm[i]));
  return out;
}

// Ridge readout on standardized features, intercept unpenalized.
struct AffineReadout {
  RowVector mean;
  RowVector scale;
  Matrix weights;
  RowVector bias;

  Matrix apply(const Matrix& f) const {
    Matrix z = ((f.rowwise() - mean).array().rowwise() / scale.array()).matrix();
    return (z * weights).rowwise() + bias;
  }
};

AffineReadout fit_readout(const Matrix& features, const Matrix& targets, double ridge) {
  AffineReadout r;
  r.mean = features.colwise().mean();
  Matrix c = features.rowwise() - r.mean;
  r.scale = (c.colwise().squaredNorm() / static_cast<double>(features.rows())).cwiseSqrt();
  for (Eigen::Index j = 0; j < r.scale.size(); ++j)
    if (r.scale(j) < 1e-12) r.scale(j) = 1.0;
  Matrix z = (c.array().rowwise() / r.scale.array()).matrix();
  r.bias = targets.colwise().mean();
  Matrix gram = z.transpose() * z;
  gram.diagonal().array() += ridge * static_cast<double>(features.rows());
  r.weights = gram.ldlt().solve(z.transpose() * (targets.rowwise() - r.bias));
  return r;
}

// Cartesian grid of per-dimension quantiles; the samples themselves when
// the grid would be too large.
Matrix probe_grid(const Matrix& samples) {
  static constexpr std::array<double, 5> kLevels{0.1, 0.25, 0.5, 0.75, 0.9};
  const auto d = samples.cols();
  double points = std::pow(static_cast<double>(kLevels.size()), static_cast<double>(d));
  if (d == 0 || points > 4096.0) return samples;
  Matrix q(static_cast<Eigen::Index>(kLevels.size()), d);
  for (Eigen::Index j = 0; j < d; ++j) {
    std::vector<double> col(samples.col(j).data(), samples.col(j).data() + samples.rows());
    std::sort(col.begin(), col.end());
    for (std::size_t l = 0; l < kLevels.size(); ++l) {
      const double pos = kLevels[l] * static_cast<double>(col.size() - 1);
      const auto lo = static_cast<std::size_t>(pos);
      const std::size_t hi = std::min(lo + 1, col.size() - 1);
      q(static_cast<Eigen::Index>(l), j) = col[lo] + (pos - static_cast<double>(lo)) * (col[hi] - col[lo]);
    }
  }
  const auto n = static_cast<Eigen::Index>(points);
  Matrix grid(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index rest = i;
    for (Eigen::Index j = 0; j < d; ++j) {
      grid(i, j) = q(rest % static_cast<Eigen::Index>(kLevels.size()), j);
      rest /= static_cast<Eigen::Index>(kLevels.size());
    }
  }
  return grid;
}

}  // namespace

double mean_canonical_correlation(const Matrix& a, const Matrix& b, std::size_t components) {
  if (a.rows() != b.rows() || a.rows() < 2) throw ArgumentError("canonical correlation needs aligned samples");
  Matrix qa = principal_basis(a, components);
  Matrix qb = principal_basis(b, components);
  if (qa.cols() == 0 || qb.cols() == 0) return 0.0;
  Vector s = (qa.transpose() * qb).jacobiSvd().singularValues();
  return s.mean();
}

double normalized_fit_error(const Matrix& predicted, const Matrix& hypothesis) {
  if (predicted.rows() != hypothesis.rows() || predicted.cols() != hypothesis.cols())
    throw ArgumentError("fit error needs equally shaped matrices");
  const double spread = centered(hypothesis).squaredNorm();
  if (spread <= 0.0) throw NumericError("fit error: hypothesis has no spread");
  return (predicted - hypothesis).squaredNorm() / spread;
}

double injectivity_fraction(const FlowStack& flow, std::size_t pairs, double min_distance, double tolerance,
                            std::uint64_t seed) {
  if (pairs == 0) throw ArgumentError("injectivity probe needs at least one pair");
  Rng rng = make_rng(seed, 7);
  const auto d = static_cast<Eigen::Index>(flow.dim());
  Matrix a(static_cast<Eigen::Index>(pairs), d);
  Matrix b(static_cast<Eigen::Index>(pairs), d);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    Matrix p, q;
    do {
      p = standard_normal(1, d, rng);
      q = standard_normal(1, d, rng);
    } while ((p - q).norm() < min_distance);
    a.row(i) = p;
    b.row(i) = q;
  }
  auto gate = [&](const Matrix& m) { return Squash::sigmoid(flow.forward(m).z).z; };
  Matrix ga = gate(a);
  Matrix gb = gate(b);
  std::size_t distinct = 0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    if ((ga.row(i) - gb.row(i)).norm() > tolerance) ++distinct;
  return static_cast<double>(distinct) / static_cast<double>(pairs);
}

ProbeDiagnostics identifiability_probe(const HjidModel& model, const DatasetSplit& split,
                                       const SyntheticGroundTruth& truth, const ProbeOptions& options) {
  const DomainId sd = source_domain(model.config.direction);
  const DomainId td = target_domain(model.config.direction);
  const auto ids_x = index_of(truth.user_ids_x);
  const auto ids_y = index_of(truth.user_ids_y);
  auto truth_ids = [&](DomainId d) -> const auto& { return d == DomainId::X ? ids_x : ids_y; };
  auto truth_variant = [&](DomainId d) -> const Matrix& { return d == DomainId::X ? truth.variant_x : truth.variant_y; };

  for (DomainId d : {DomainId::X, DomainId::Y}) {
    const auto& users = split.domain(d).interactions.users();
    for (const auto& u : users)
      if (!truth_ids(d).count(u))
        throw ArgumentError("probe: user '" + u + "' of domain " + to_string(d) + " is not in the ground truth");
  }
  const std::size_t n = split.overlap.size();
  if (n < 3) throw ArgumentError("probe: needs at least 3 overlapped users");

  ProbeDiagnostics out;
  out.overlapped_users = n;
  out.components = options.components ? options.components : std::max<std::size_t>(1, n / 10);

  const DomainLatents src = eval_latents(model, split, sd);
  const DomainLatents tgt = eval_latents(model, split, td);
  auto local = [&](const OverlapUser& o, DomainId d) { return static_cast<Eigen::Index>(d == DomainId::X ? o.x : o.y); };

  const auto zs_cols = src.z_s.cols();
  const auto v_cols = src.v_logits.cols();
  const auto t_cols = truth_variant(td).cols();
  Matrix zs_s(n, zs_cols), zs_t(n, zs_cols), v_s(n, v_cols), true_t(n, t_cols), true_s(n, t_cols);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& o = split.overlap[i];
    const auto row = static_cast<Eigen::Index>(i);
    zs_s.row(row) = src.z_s.row(local(o, sd));
    zs_t.row(row) = tgt.z_s.row(local(o, td));
    v_s.row(row) = src.v_logits.row(local(o, sd));
    const std::string& sid = split.domain(sd).interactions.users()[local(o, sd)];
    const std::string& tid = split.domain(td).interactions.users()[local(o, td)];
    true_s.row(row) = truth_variant(sd).row(static_cast<Eigen::Index>(truth_ids(sd).at(sid)));
    true_t.row(row) = truth_variant(td).row(static_cast<Eigen::Index>(truth_ids(td).at(tid)));
  }

  Rng rng = make_rng(options.seed, 11);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<double> cc_control;
  std::vector<double> fit_control;

  out.canonical_correlation = mean_canonical_correlation(zs_s, zs_t, out.components);

  // Calibrate learned logits against generator units on each side: the
  // target readout maps logits to true variants, the source lift maps
  // true variants to logits. Grid points travel lift -> flow -> readout.
  auto domain_truth = [&](DomainId d) {
    const auto& users = split.domain(d).interactions.users();
    Matrix m(static_cast<Eigen::Index>(users.size()), truth_variant(d).cols());
    for (std::size_t u = 0; u < users.size(); ++u)
      m.row(static_cast<Eigen::Index>(u)) = truth_variant(d).row(static_cast<Eigen::Index>(truth_ids(d).at(users[u])));
    return m;
  };
  const Matrix s_all = domain_truth(sd);
  const Matrix t_all = domain_truth(td);
  const AffineReadout readout = fit_readout(tgt.v_logits, t_all, options.readout_ridge);
  out.calibration_error = normalized_fit_error(readout.apply(tgt.v_logits), t_all);
  const AffineReadout lift = fit_readout(s_all, src.v_logits, options.readout_ridge);
  const Matrix grid = probe_grid(s_all);
  auto hypothesis = [&](const TrueMap& m, const Matrix& v) { return sd == DomainId::X ? m.apply(v) : m.inverse(v); };
  const Matrix lifted = lift.apply(grid);
  const Matrix mapped = readout.apply(model.flow.forward(lifted).z);
  out.grid_points = static_cast<std::size_t>(grid.rows());
  out.flow_fit_error = normalized_fit_error(mapped, hypothesis(truth.map, grid));
  out.alternative_fit_error = normalized_fit_error(mapped, hypothesis(options.alternative, grid));
  out.unflowed_fit_error = normalized_fit_error(readout.apply(lifted), hypothesis(truth.map, grid));

  const Matrix predicted = readout.apply(model.flow.forward(v_s).z);
  out.paired_fit_error = normalized_fit_error(predicted, true_t);

  for (std::size_t r = 0; r < options.control_repeats; ++r) {
    std::shuffle(perm.begin(), perm.end(), rng);
    cc_control.push_back(mean_canonical_correlation(zs_s, permuted_rows(zs_t, perm), out.components));
    fit_control.push_back(normalized_fit_error(predicted, permuted_rows(true_t, perm)));
  }
  if (!cc_control.empty()) {
    const double m = std::accumulate(cc_control.begin(), cc_control.end(), 0.0) / cc_control.size();
    double ss = 0.0;
    for (double c : cc_control) ss += (c - m) * (c - m);
    out.shuffled_correlation = m;
    out.shuffled_correlation_sd = cc_control.size() > 1 ? std::sqrt(ss / (cc_control.size() - 1)) : 0.0;
    out.paired_shuffled_fit_error = std::accumulate(fit_control.begin(), fit_control.end(), 0.0) / fit_control.size();
  }

  out.injectivity_pairs = options.injectivity_pairs;
  out.injectivity_fraction = injectivity_fraction(model.flow, options.injectivity_pairs, options.min_pair_distance,
                                                  options.injectivity_tolerance, derive_seed(options.seed, 12));
  return out;
}

std::string probe_json(const ProbeDiagnostics& d, const std::string& command_line) {
  nlohmann::ordered_json j;
  j["format"] = "hjid-probe";
  j["version"] = 1;
  j["command"] = command_line;
  j["overlapped_users"] = d.overlapped_users;
  j["components"] = d.components;
  j["canonical_correlation"] = d.canonical_correlation;
  j["shuffled_correlation"] = d.shuffled_correlation;
  j["shuffled_correlation_sd"] = d.shuffled_correlation_sd;
  j["flow_fit_error"] = d.flow_fit_error;
  j["alternative_fit_error"] = d.alternative_fit_error;
  j["unflowed_fit_error"] = d.unflowed_fit_error;
  j["grid_points"] = d.grid_points;
  j["calibration_error"] = d.calibration_error;
  j["paired_fit_error"] = d.paired_fit_error;
  j["paired_shuffled_fit_error"] = d.paired_shuffled_fit_error;
  j["injectivity_fraction"] = d.injectivity_fraction;
  j["injectivity_pairs"] = d.injectivity_pairs;
  return j.dump(2) + "\n";
}

}  // namespace hjid
