// Acceptance runner: one PASS/FAIL line per criterion, exit 0 only if all pass.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <nlohmann/json.hpp>

#include "hjid/alignment.hpp"
#include "hjid/checks.hpp"
#include "hjid/evaluation.hpp"
#include "hjid/flow.hpp"
#include "hjid/probe.hpp"
#include "hjid/rng.hpp"
#include "hjid/training.hpp"

namespace fs = std::filesystem;
using namespace hjid;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const fs::path& cwd, const std::string& args) {
  const std::string cmd = "cd '" + cwd.string() + "' && " + std::string(HJID_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("hjid_acceptance_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Desk-scale training settings shared by the learning-signal and probe criteria.
TrainConfig desk_config(std::uint64_t seed) {
  TrainConfig c = parse_config(
      "learning_rate = 0.01\n"
      "N = 64\n"
      "flow_kind = affine_coupling\n"
      "epochs = 100\n"
      "patience = 1000\n");
  c.seed = seed;
  return c;
}

struct DeskData {
  SyntheticDataset data;
  DatasetSplit split;
};

DeskData desk_data(std::uint64_t seed, double map_scale) {
  SyntheticConfig c;
  c.users_x = c.users_y = 100;
  c.overlap = 50;
  c.items_x = c.items_y = 80;
  c.map = TrueMap{MapFamily::affine, map_scale, 0.0, 0.0};
  DeskData d{generate_synthetic(c, seed), {}};
  SplitOptions o;
  o.seed = seed;
  // 80 items cannot supply 999 negatives per query
  o.num_negatives = 50;
  d.split = split_overlapped(d.data.x, d.data.y, o);
  return d;
}

// ---------------------------------------------------------------------------

Outcome flow_correctness() {
  double worst_round_trip = 0.0, worst_jacobian = 0.0, worst_integral = 0.0;
  for (auto kind : {BijectionKind::affine_coupling, BijectionKind::masked_autoregressive}) {
    for (std::size_t L : {1, 2, 3, 5}) {
      for (std::size_t dv : {2, 4, 8}) {
        Rng rng = make_rng(1000 * L + dv, static_cast<std::uint64_t>(kind));
        FlowStack f(dv, L, kind, 16, rng);
        jitter_parameters(f, 0.5, rng);
        Matrix z = 2.0 * standard_normal(1000, static_cast<Eigen::Index>(dv), rng);
        auto fwd = f.forward(z);
        worst_round_trip = std::max(worst_round_trip, (f.inverse(fwd.z).z - z).cwiseAbs().maxCoeff());
        if (dv > 4) continue;
        const double h = 1e-5;
        for (Eigen::Index i = 0; i < 20; ++i) {
          Matrix jac(dv, dv);
          for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(dv); ++c) {
            Matrix p = z.row(i), m = z.row(i);
            p(0, c) += h;
            m(0, c) -= h;
            jac.col(c) = ((f.forward(p).z - f.forward(m).z) / (2 * h)).transpose();
          }
          worst_jacobian = std::max(worst_jacobian, std::abs(std::log(std::abs(jac.determinant())) - fwd.log_det(i)));
        }
      }
      // 1-D pushforward density p(y) = N(G^-1(y)) |dG^-1/dy|, trapezoid rule
      Rng rng = make_rng(77 + L, static_cast<std::uint64_t>(kind));
      FlowStack f(1, L, kind, 16, rng);
      jitter_parameters(f, 0.5, rng);
      const double lo = -60.0, hi = 60.0;
      const Eigen::Index n = 200001;
      Matrix y(n, 1);
      for (Eigen::Index i = 0; i < n; ++i) y(i, 0) = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
      auto inv = f.inverse(y);
      GaussianStats unit{Vector::Zero(1), Vector::Ones(1)};
      Vector dens = (gaussian_log_density(inv.z, unit) + inv.log_det).array().exp();
      const double dy = (hi - lo) / static_cast<double>(n - 1);
      const double integral = dy * (dens.sum() - 0.5 * (dens(0) + dens(n - 1)));
      worst_integral = std::max(worst_integral, std::abs(integral - 1.0));
    }
  }
  Outcome o;
  o.pass = worst_round_trip < 1e-6 && worst_jacobian < 1e-4 && worst_integral < 1e-3;
  o.detail = "round-trip " + fmt(worst_round_trip) + " (< 1e-6), log-det vs Jacobian " + fmt(worst_jacobian) +
             " (< 1e-4), |integral - 1| " + fmt(worst_integral) + " (< 1e-3)";
  return o;
}

double loop_mmd(const Matrix& x, const Matrix& y, double sigma) {
  const auto n = x.rows();
  auto k = [&](const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < a.cols(); ++c) s += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
    return std::exp(-s / (2.0 * sigma * sigma));
  };
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) total += k(x, i, x, j) + k(y, i, y, j) - 2.0 * k(x, i, y, j);
  return total / static_cast<double>(n * (n - 1));
}

Outcome mmd_correctness() {
  double identical = 0.0, oracle = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng = make_rng(s, 5);
    for (Eigen::Index n = 2; n <= 8; ++n) {
      Matrix x = standard_normal(n, 3, rng), y = 1.5 * standard_normal(n, 3, rng);
      const double sigma = 0.5 + static_cast<double>(s) / 10.0;
      KernelConfig k{sigma, MmdEstimator::unbiased};
      identical = std::max(identical, std::abs(mmd2(x, x, k)));
      oracle = std::max(oracle, std::abs(mmd2(x, y, k) - loop_mmd(x, y, sigma)));
    }
  }
  const double hand = mmd2(Matrix::Zero(2, 1), Matrix::Ones(2, 1), KernelConfig{1.0, MmdEstimator::unbiased});
  Outcome o;
  o.pass = identical < 1e-10 && oracle < 1e-12 && std::abs(hand - 0.786939) < 1e-6;
  o.detail = "identical " + fmt(identical) + " (< 1e-10), vs double loop " + fmt(oracle) + " (< 1e-12), hand " +
             fmt(hand, 7) + " (0.786939)";
  return o;
}

// Full sort, ties placed ahead of the positive.
QueryMetrics brute_force(const std::vector<double>& s, std::size_t pos) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (s[a] != s[b]) return s[a] > s[b];
    if ((a == pos) != (b == pos)) return b == pos;
    return a < b;
  });
  QueryMetrics m;
  m.rank = static_cast<std::size_t>(std::find(idx.begin(), idx.end(), pos) - idx.begin()) + 1;
  m.reciprocal_rank = 1.0 / static_cast<double>(m.rank);
  for (std::size_t k : kCutoffs) {
    std::size_t hit = 0;
    double dcg = 0.0;
    for (std::size_t r = 0; r < k; ++r)
      if (idx[r] == pos) hit = 1, dcg = 1.0 / std::log2(static_cast<double>(r) + 2.0);
    m.hr.push_back(static_cast<double>(hit));
    m.ndcg.push_back(dcg);
  }
  return m;
}

bool same(const QueryMetrics& a, const QueryMetrics& b) {
  return a.rank == b.rank && a.reciprocal_rank == b.reciprocal_rank && a.hr == b.hr && a.ndcg == b.ndcg;
}

Outcome metric_oracle() {
  Rng rng = make_rng(3, 3);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> coarse(0, 40);
  std::uniform_int_distribution<std::size_t> pick(0, 999);
  std::size_t mismatches = 0, variant_mismatches = 0;
  std::vector<double> s(1000), t(1000);
  for (int v = 0; v < 10000; ++v) {
    // every fourth vector draws from a coarse grid so ties occur
    for (auto& x : s) x = v % 4 == 0 ? static_cast<double>(coarse(rng)) : normal(rng);
    const std::size_t pos = pick(rng);
    const auto m = rank_metrics(s, pos);
    if (!same(m, brute_force(s, pos))) ++mismatches;
    for (std::size_t i = 0; i < s.size(); ++i) t[i] = std::exp(0.5 * s[i]) * 3.0 - 2.0;
    if (!same(m, rank_metrics(t, pos))) ++variant_mismatches;
  }
  auto with_rank = [](std::size_t r) {
    std::vector<double> x(1000, 0.0);
    x[0] = 0.5;
    for (std::size_t i = 1; i < r; ++i) x[i] = 1.0;
    return rank_metrics(x, 0);
  };
  const auto r1 = with_rank(1), r3 = with_rank(3), r25 = with_rank(25);
  const bool closed = std::abs(r1.reciprocal_rank - 1.0) < 1e-9 && r1.hr[0] == 1.0 && std::abs(r1.ndcg[0] - 1.0) < 1e-9 &&
                      std::abs(r3.reciprocal_rank - 1.0 / 3.0) < 1e-9 && r3.hr[0] == 1.0 &&
                      std::abs(r3.ndcg[0] - 0.5) < 1e-9 && r25.hr[0] == 0.0 && r25.hr[1] == 0.0 &&
                      r25.hr[2] == 1.0 && std::abs(r25.ndcg[2] - 0.212747) < 1e-6 &&
                      std::abs(r25.ndcg[2] - 1.0 / std::log2(26.0)) < 1e-9;
  Outcome o;
  o.pass = mismatches == 0 && variant_mismatches == 0 && closed;
  o.detail = std::to_string(mismatches) + " brute-force mismatches / 10000, " + std::to_string(variant_mismatches) +
             " monotone-transform mismatches, closed forms (ranks 1, 3, 25) " + (closed ? "ok" : "WRONG");
  return o;
}

Outcome gradient_integrity() {
  const auto r = toy_loss_grad_check(toy_config());
  Outcome o;
  o.pass = r.max_relative_error < 1e-4;
  o.detail = "max relative error " + fmt(r.max_relative_error) + " (< 1e-4) over " + std::to_string(r.coordinates) +
             " coordinates, worst " + r.worst_parameter;
  return o;
}

Outcome learning_signal() {
  int wins = 0;
  bool monotone_all = true;
  std::string per_seed;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto d = desk_data(seed, 2.0);
    double hr[2];
    std::vector<EpochRecord> full_log;
    for (int v = 0; v < 2; ++v) {
      TrainConfig c = desk_config(seed);
      c.variant = v == 0 ? AblationVariant::full : AblationVariant::A;
      auto r = fit(c, d.split);
      hr[v] = evaluate(r.checkpoint.model, d.split).hr_at(10);
      if (v == 0) full_log = r.log;
    }
    bool monotone = full_log.size() >= 10;
    for (std::size_t e = 2; monotone && e < 10; ++e) monotone = full_log[e].loss.total < full_log[e - 1].loss.total;
    monotone_all = monotone_all && monotone;
    if (hr[0] > hr[1]) ++wins;
    per_seed += " seed " + std::to_string(seed) + ": HR@10 full " + fmt(hr[0], 3) + " vs A " + fmt(hr[1], 3) +
                (monotone ? ", loss monotone;" : ", loss NOT monotone;");
  }
  Outcome o;
  o.pass = wins >= 2 && monotone_all;
  o.detail = "full beats A in " + std::to_string(wins) + "/3 seeds;" + per_seed;
  return o;
}

Outcome identifiability() {
  // For each generating map, the competing hypothesis is the other one.
  struct Setting {
    double scale;
    double alternative;
  };
  bool pass = true;
  std::string detail;
  double worst_injective = 1.0;
  for (Setting s : {Setting{2.0, 1.0}, Setting{1.0, 2.0}}) {
    double fit_err = 0.0, alt_err = 0.0, cc = 0.0, shuffled = 0.0;
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto d = desk_data(seed, s.scale);
      auto r = fit(desk_config(seed), d.split);
      ProbeOptions po;
      po.seed = seed;
      po.alternative = TrueMap{MapFamily::affine, s.alternative, 0.0, 0.0};
      const auto p = identifiability_probe(r.checkpoint.model, d.split, d.data.truth, po);
      fit_err += p.flow_fit_error / 3.0;
      alt_err += p.alternative_fit_error / 3.0;
      cc += p.canonical_correlation / 3.0;
      shuffled += p.shuffled_correlation / 3.0;
      worst_injective = std::min(worst_injective, p.injectivity_fraction);
    }
    pass = pass && fit_err < alt_err;
    detail += " scale-" + fmt(s.scale, 1) + " data: fit error true " + fmt(fit_err, 3) + " vs alternative " +
              fmt(alt_err, 3) + ", z_s CCA " + fmt(cc, 3) + " (shuffled " + fmt(shuffled, 3) + ");";
  }
  Outcome o;
  o.pass = pass && worst_injective == 1.0;
  o.detail = "injectivity " + fmt(worst_injective) + ";" + detail;
  return o;
}

Outcome non_overlap() {
  const fs::path dir = scratch("non_overlap");
  // only the 50 non-overlapped users per domain are available for MMD groups
  const std::string cfg = " --set learning_rate=0.01 --set N=32 --set flow_kind=affine_coupling";
  int rc = run_cli(dir, "synth --users 100 --overlap 50 --items 80 --seed 7 -o data");
  if (rc == 0) rc = run_cli(dir, "prepare --x data/x.tsv --y data/y.tsv --seed 7 --negatives 50 --non-overlap -o split.json");
  if (rc == 0) rc = run_cli(dir, "train --split split.json --seed 7 --epochs 20" + cfg + " -o run");
  if (rc == 0) rc = run_cli(dir, "eval --checkpoint run/checkpoint.bin --split split.json -o report.json");
  if (rc != 0) return {false, "pipeline exited " + std::to_string(rc)};

  bool finite = true;
  std::size_t epochs = 0;
  std::istringstream log(slurp(dir / "run" / "train_log.jsonl"));
  for (std::string line; std::getline(log, line); ++epochs) {
    auto j = nlohmann::json::parse(line);
    for (const char* k : {"l_s", "l_g", "vib_x", "vib_y", "total"}) finite = finite && std::isfinite(j.at(k).get<double>());
  }
  const auto run = nlohmann::json::parse(slurp(dir / "run" / "run.json"));
  const auto& audit = run.at("leakage_audit");
  const bool clean = audit.at("held_out_hits").get<std::size_t>() == 0 &&
                     audit.at("overlapped_user_hits").get<std::size_t>() == 0 &&
                     audit.at("edges_checked").get<std::size_t>() > 0;
  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  bool valid = report.at("scenario") == "non_overlapped" && report.at("queries").get<std::size_t>() > 0;
  for (const char* k : {"MRR", "NDCG@10", "NDCG@20", "NDCG@30", "HR@10", "HR@20", "HR@30"}) {
    const double v = report.at("values").at(k).get<double>();
    valid = valid && std::isfinite(v) && v >= 0.0 && v <= 1.0;
  }
  Outcome o;
  o.pass = finite && clean && valid && epochs > 0;
  o.detail = std::to_string(epochs) + " epochs, losses " + (finite ? "finite" : "NON-FINITE") + ", audit " +
             (clean ? "clean" : "DIRTY") + " (" + std::to_string(audit.at("edges_checked").get<std::size_t>()) +
             " edges), report " + (valid ? "valid" : "INVALID") +
             ", MRR " + fmt(report.at("values").at("MRR").get<double>(), 3);
  fs::remove_all(dir);
  return o;
}

Outcome reproducibility() {
  const fs::path a = scratch("repro_a"), b = scratch("repro_b");
  for (const auto& dir : {a, b}) {
    int rc = run_cli(dir, "synth --users 100 --overlap 50 --items 80 --seed 11 -o data");
    if (rc == 0) rc = run_cli(dir, "prepare --x data/x.tsv --y data/y.tsv --seed 11 --negatives 50 -o split.json");
    if (rc == 0) rc = run_cli(dir, "train --split split.json --seed 11 --epochs 5 -o run");
    if (rc == 0) rc = run_cli(dir, "eval --checkpoint run/checkpoint.bin --split split.json -o report.json");
    if (rc != 0) return {false, "pipeline exited " + std::to_string(rc)};
  }
  std::string detail;
  bool pass = true;
  for (const char* f : {"split.json", "run/train_log.jsonl", "report.json", "run/checkpoint.bin"}) {
    const bool eq = slurp(a / f) == slurp(b / f) && !slurp(a / f).empty();
    pass = pass && eq;
    detail += std::string(detail.empty() ? "" : ", ") + f + (eq ? " identical" : " DIFFERS");
  }
  fs::remove_all(a);
  fs::remove_all(b);
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "flow correctness", flow_correctness},
      {2, "MMD correctness", mmd_correctness},
      {3, "metric oracle", metric_oracle},
      {4, "gradient integrity", gradient_integrity},
      {5, "learning signal", learning_signal},
      {6, "identifiability probe", identifiability},
      {7, "non-overlap scenario", non_overlap},
      {8, "reproducibility", reproducibility},
  };
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.name << " (" << fmt(secs, 3) << " s): "
              << o.detail << std::endl;
  }
  fs::remove_all(fs::temp_directory_path() / ("hjid_acceptance_" + std::to_string(::getpid())));
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criterion(s) failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
