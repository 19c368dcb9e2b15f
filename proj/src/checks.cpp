#include "hjid/checks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

#include "hjid/error.hpp"
#include "hjid/evaluation.hpp"

namespace hjid {

std::vector<std::string> check_families() { return {"data", "mmd", "flow", "disentangle", "metrics", "gradients"}; }

std::vector<std::string> fault_names() { return {"mmd-literal-nullity", "corrupt-gradient"}; }

DatasetSplit toy_split() {
  std::vector<std::pair<std::string, std::string>> px, py;
  for (int u = 0; u < 5; ++u) {
    for (int off : {0, 1, 3}) px.emplace_back("u" + std::to_string(u), "ix" + std::to_string((u + off) % 6));
    for (int off : {2, 4}) py.emplace_back("u" + std::to_string(u), "iy" + std::to_string((u + off) % 6));
  }
  DatasetSplit s;
  s.num_negatives = 3;
  s.x.interactions = InteractionSet::from_pairs(DomainId::X, px);
  s.y.interactions = InteractionSet::from_pairs(DomainId::Y, py);
  s.x.train_edges = s.x.interactions.edges();
  s.y.train_edges = s.y.interactions.edges();
  for (std::size_t u = 0; u < 5; ++u) {
    const auto& id = s.x.interactions.users()[u];
    s.overlap.push_back({id, u, s.y.interactions.user_index(id)});
    s.train_users.push_back(u);
  }
  return s;
}

TrainConfig toy_config() {
  TrainConfig c;
  c.K = 3;
  c.k = 2;
  c.d = 3;
  c.N = 2;
  c.L = 2;
  c.flow_hidden = 4;
  c.sigma_policy = BandwidthPolicy::fixed;
  c.sigma = 1.0;
  c.batch_size = 64;
  c.seed = 11;
  // a stop-gradient has no finite-difference counterpart
  c.flow_input_detach = false;
  return c;
}

GradCheckResult toy_loss_grad_check(const TrainConfig& config, double step, double floor,
                                    double gradient_scale) {
  const DatasetSplit split = toy_split();
  HjidModel model(config, sizes_of(split));
  Rng rng = make_rng(config.seed, 77);
  jitter_parameters(model.flow, 0.3, rng);
  const auto w = static_cast<Eigen::Index>(config.deep_width());
  model.target_stats = {Vector::Constant(w, 0.1), Vector::Constant(w, 1.5)};
  model.stats_ready = true;
  const TrainingView view = TrainingView::build(split, config);
  const std::uint64_t seed = 4242;

  auto loss = [&] {
    Tape tape;
    Binding bind(tape, false);
    return model_loss(bind, model, view, view.entities, seed).total.scalar();
  };
  Tape tape;
  Binding bind(tape, true);
  LossVars vars = model_loss(bind, model, view, view.entities, seed);
  tape.backward(vars.total);
  auto params = model.parameters();
  std::vector<Matrix> grads;
  for (const auto& p : params) grads.push_back(gradient_scale * bind.gradient(*p.value));
  return grad_check(loss, params, grads, step, floor);
}

namespace {

class Suite {
 public:
  explicit Suite(const CheckOptions& o) : options_(o) {}

  void run(const std::string& family, const std::string& name, const std::function<std::string()>& body) {
    if (options_.only && *options_.only != family) return;
    CheckResult r{family, name, false, ""};
    try {
      r.detail = body();
      r.passed = r.detail.empty();
    } catch (const std::exception& e) {
      r.detail = std::string("exception: ") + e.what();
    }
    results_.push_back(std::move(r));
  }

  bool fault(const std::string& f) const { return options_.inject_fault && *options_.inject_fault == f; }
  std::vector<CheckResult> take() { return std::move(results_); }

 private:
  CheckOptions options_;
  std::vector<CheckResult> results_;
};

std::string expect_near(const std::string& what, double got, double want, double tol) {
  if (std::abs(got - want) <= tol) return "";
  std::ostringstream o;
  o.precision(12);
  o << what << ": got " << got << ", expected " << want << " (tol " << tol << ")";
  return o.str();
}

double loop_mmd(const Matrix& x, const Matrix& y, double sigma) {
  const auto n = x.rows();
  auto k = [&](const RowVector& a, const RowVector& b) { return std::exp(-(a - b).squaredNorm() / (2 * sigma * sigma)); };
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      sum += k(x.row(i), x.row(j)) + k(y.row(i), y.row(j)) - 2.0 * k(x.row(i), y.row(j));
    }
  return sum / static_cast<double>(n * (n - 1));
}

FlowStack random_stack(std::size_t dim, std::size_t length, BijectionKind kind, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  FlowStack s(dim, length, kind, 16, rng);
  jitter_parameters(s, 0.3, rng);
  return s;
}

Matrix numeric_jacobian(const FlowStack& s, const RowVector& z, double h) {
  const auto d = z.size();
  Matrix j(d, d);
  for (Eigen::Index c = 0; c < d; ++c) {
    Matrix up = z, down = z;
    up(0, c) += h;
    down(0, c) -= h;
    j.col(c) = ((s.forward(up).z - s.forward(down).z) / (2 * h)).transpose();
  }
  return j;
}

void data_checks(Suite& s) {
  s.run("data", "symmetric adjacency entries", [] {
    std::vector<std::pair<std::string, std::string>> pairs{{"u1", "v1"}, {"u2", "v1"}, {"u2", "v2"}};
    auto g = build_adjacency(InteractionSet::from_pairs(DomainId::X, pairs), Normalization::symmetric);
    const SparseMatrix& a = *g.adjacency;
    std::string e = expect_near("A(u1,v1)", a.coeff(0, 0), 1.0 / std::sqrt(2.0), 1e-12);
    if (e.empty()) e = expect_near("A(u2,v1)", a.coeff(1, 0), 0.5, 1e-12);
    if (e.empty()) e = expect_near("A(u2,v2)", a.coeff(1, 1), 1.0 / std::sqrt(2.0), 1e-12);
    return e;
  });
  s.run("data", "split determinism and leakage", [] {
    SyntheticConfig sc;
    sc.users_x = sc.users_y = 40;
    sc.overlap = 20;
    sc.items_x = sc.items_y = 60;
    auto ds = generate_synthetic(sc, 3);
    SplitOptions so;
    so.seed = 5;
    so.num_negatives = 20;
    auto a = split_overlapped(ds.x, ds.y, so);
    auto b = split_overlapped(ds.x, ds.y, so);
    if (a.train_users != b.train_users || a.x.train_edges != b.x.train_edges) return std::string("split not deterministic");
    for (const auto* d : {&a.x, &a.y}) {
      auto pos = d->interactions.positives_by_user();
      for (const auto& q : d->test) {
        if (std::find(d->train_edges.begin(), d->train_edges.end(), Edge{q.user, q.positive}) != d->train_edges.end())
          return std::string("held-out positive left in training edges");
        for (auto n : q.negatives)
          if (std::binary_search(pos[q.user].begin(), pos[q.user].end(), n)) return std::string("negative is a positive");
      }
    }
    return std::string();
  });
}

void mmd_checks(Suite& s) {
  s.run("mmd", "nullity on identical groups", [&s] {
    Rng rng = make_rng(1);
    Matrix g = standard_normal(16, 6, rng);
    KernelConfig kc{1.0, s.fault("mmd-literal-nullity") ? MmdEstimator::diagonal_inclusive : MmdEstimator::unbiased};
    double v = mmd2(g, g, kc);
    return std::abs(v) < 1e-10 ? std::string() : expect_near("MMD^2(G, G)", v, 0.0, 1e-10);
  });
  s.run("mmd", "double-loop oracle", [] {
    for (Eigen::Index n = 2; n <= 8; ++n) {
      Rng rng = make_rng(static_cast<std::uint64_t>(n), 9);
      Matrix x = standard_normal(n, 3, rng), y = standard_normal(n, 3, rng);
      auto e = expect_near("N=" + std::to_string(n), mmd2(x, y, {1.3, MmdEstimator::unbiased}), loop_mmd(x, y, 1.3), 1e-12);
      if (!e.empty()) return e;
    }
    return std::string();
  });
  s.run("mmd", "hand-computed values", [] {
    Matrix x(2, 1), y(2, 1);
    x << 0, 0;
    y << 1, 1;
    auto e = expect_near("unbiased", mmd2(x, y, {1.0, MmdEstimator::unbiased}), 2.0 - 2.0 * std::exp(-0.5), 1e-12);
    if (e.empty())
      e = expect_near("diagonal_inclusive", mmd2(x, y, {1.0, MmdEstimator::diagonal_inclusive}),
                      0.5 * (8.0 - 4.0 * std::exp(-0.5)), 1e-12);
    return e;
  });
}

void flow_checks(Suite& s) {
  s.run("flow", "round trip", [] {
    for (auto kind : {BijectionKind::affine_coupling, BijectionKind::masked_autoregressive})
      for (std::size_t L : {1, 2, 3, 5})
        for (std::size_t d : {2, 4, 8}) {
          FlowStack st = random_stack(d, L, kind, 100 * L + d);
          Rng rng = make_rng(d, L);
          Matrix z = standard_normal(1000, static_cast<Eigen::Index>(d), rng);
          auto f = st.forward(z);
          auto b = st.inverse(f.z);
          double err = (b.z - z).cwiseAbs().maxCoeff();
          double lderr = (f.log_det + b.log_det).cwiseAbs().maxCoeff();
          if (err >= 1e-6 || lderr >= 1e-6)
            return to_string(kind) + " L=" + std::to_string(L) + " d=" + std::to_string(d) + ": round-trip error " +
                   std::to_string(err);
        }
    return std::string();
  });
  s.run("flow", "log-det vs finite-difference Jacobian", [] {
    for (auto kind : {BijectionKind::affine_coupling, BijectionKind::masked_autoregressive})
      for (std::size_t L : {1, 2, 3, 5})
        for (std::size_t d : {2, 4}) {
          FlowStack st = random_stack(d, L, kind, 100 * L + d);
          Rng rng = make_rng(d, 31 * L);
          for (int t = 0; t < 5; ++t) {
            Matrix z = standard_normal(1, static_cast<Eigen::Index>(d), rng);
            double analytic = st.forward(z).log_det(0);
            double numeric = std::log(std::abs(numeric_jacobian(st, z.row(0), 1e-5).determinant()));
            if (std::abs(analytic - numeric) > 1e-4)
              return to_string(kind) + " L=" + std::to_string(L) + " d=" + std::to_string(d) + ": " +
                     std::to_string(analytic) + " vs " + std::to_string(numeric);
          }
        }
    return std::string();
  });
  s.run("flow", "1-D pushforward integrates to one", [] {
    for (auto kind : {BijectionKind::affine_coupling, BijectionKind::masked_autoregressive}) {
      FlowStack st = random_stack(1, 3, kind, 5);
      // For d = 1 the conditioners see nothing, so only b2 acts: an affine map.
      GaussianStats pY{Vector::Constant(1, 0.3), Vector::Constant(1, 1.7)};
      // Cover +-8 sigma of the implied source density around G^{-1}(mean).
      const double centre = st.inverse(Matrix::Constant(1, 1, 0.3)).z(0, 0);
      const double scale = std::exp(-st.forward(Matrix::Zero(1, 1)).log_det(0)) * std::sqrt(1.7);
      const int n = 20000;
      const double lo = centre - 8 * scale, hi = centre + 8 * scale, h = (hi - lo) / n;
      double total = 0.0;
      for (int i = 0; i <= n; ++i) {
        Matrix z = Matrix::Constant(1, 1, lo + i * h);
        auto f = st.forward(z);
        double p = std::exp(gaussian_log_density(f.z, pY)(0) + f.log_det(0));
        total += (i == 0 || i == n ? 0.5 : 1.0) * p * h;
      }
      if (std::abs(total - 1.0) > 1e-3) return to_string(kind) + ": integral " + std::to_string(total);
    }
    return std::string();
  });
  s.run("flow", "composition additivity", [] {
    FlowStack st = random_stack(4, 3, BijectionKind::masked_autoregressive, 8);
    Rng rng = make_rng(8);
    Matrix z = standard_normal(50, 4, rng);
    double err = (st.layer_log_dets(z).rowwise().sum() - st.forward(z).log_det).cwiseAbs().maxCoeff();
    return err <= 1e-8 ? std::string() : "per-layer sum differs by " + std::to_string(err);
  });
  s.run("flow", "scale-by-two coupling", [] {
    Rng rng = make_rng(0);
    Bijection b = Bijection::affine_coupling(2, 8, 0, rng);
    b.b2(0, 1) = std::log(2.0);
    Matrix z(1, 2);
    z << 0.5, 1.0;
    auto f = b.forward(z);
    auto e = expect_near("y1", f.z(0, 1), 2.0, 1e-12);
    if (e.empty()) e = expect_near("log_det", f.log_det(0), std::log(2.0), 1e-12);
    FlowStack twice(std::vector<Bijection>{b, b});
    if (e.empty()) e = expect_near("chained y1", twice.forward(z).z(0, 1), 4.0, 1e-12);
    if (e.empty()) e = expect_near("chained log_det", twice.forward(z).log_det(0), 2 * std::log(2.0), 1e-12);
    return e;
  });
}

void disentangle_checks(Suite& s) {
  s.run("disentangle", "head closed forms", [] {
    auto p = LatentHeadParams::zeros(1, 1);
    Matrix d = Matrix::Ones(1, 1);
    auto f = latent_heads(d, p);
    auto e = expect_near("zero z_s", f.z_s(0, 0), 0.0, 0.0);
    if (e.empty()) e = expect_near("zero z_v", f.z_v()(0, 0), 0.5, 0.0);
    p.b_s(0, 0) = -1.0;
    p.b_v(0, 0) = 50.0;
    f = latent_heads(d, p);
    if (e.empty()) e = expect_near("ELU(-1)", f.z_s(0, 0), std::exp(-1.0) - 1.0, 1e-15);
    if (e.empty() && !(f.z_v_complement()(0, 0) > 0 && f.z_v_complement()(0, 0) < 1e-20))
      e = "1 - z_v at logit 50 is not inside (0, 1e-20)";
    return e;
  });
  s.run("disentangle", "eval mode keeps the stable factor", [] {
    Rng rng = make_rng(3);
    auto p = LatentHeadParams::init(4, 4, rng);
    FlowStack st = random_stack(4, 2, BijectionKind::affine_coupling, 3);
    Matrix d = standard_normal(6, 4, rng);
    auto r = refine_pair(d, Direction::x_to_y, &st, p, Mode::eval);
    if (r.d_hat_x != r.factors.z_s || r.d_hat_y != r.factors.z_s) return std::string("eval D^ differs from z_s");
    return std::string();
  });
}

void metric_checks(Suite& s) {
  s.run("metrics", "closed-form ranks", [] {
    std::vector<double> sc(1000, 0.0);
    sc[0] = 0.5;
    sc[1] = 0.9;
    sc[2] = 0.8;
    auto m = rank_metrics(sc, 0);
    auto e = expect_near("MRR rank 3", m.reciprocal_rank, 1.0 / 3.0, 1e-9);
    if (e.empty()) e = expect_near("NDCG@10 rank 3", m.ndcg[0], 0.5, 1e-9);
    for (int i = 3; i < 25; ++i) sc[static_cast<std::size_t>(i)] = 0.7;
    m = rank_metrics(sc, 0);
    if (e.empty() && (m.hr[0] != 0 || m.hr[1] != 0 || m.hr[2] != 1)) e = "HR at rank 25";
    if (e.empty()) e = expect_near("NDCG@30 rank 25", m.ndcg[2], 1.0 / std::log2(26.0), 1e-9);
    return e;
  });
  s.run("metrics", "brute-force sort oracle", [] {
    Rng rng = make_rng(12);
    std::uniform_int_distribution<int> coarse(0, 50);
    for (int t = 0; t < 200; ++t) {
      std::vector<double> sc(1000);
      for (auto& v : sc) v = coarse(rng) / 50.0;
      std::vector<std::size_t> idx(1000);
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      // Ties placed before the positive.
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (sc[a] != sc[b]) return sc[a] > sc[b];
        return a != 0 && b == 0;
      });
      std::size_t rank = static_cast<std::size_t>(std::find(idx.begin(), idx.end(), 0) - idx.begin()) + 1;
      if (rank_metrics(sc, 0).rank != rank) return "rank mismatch on trial " + std::to_string(t);
    }
    return std::string();
  });
}

void gradient_checks(Suite& s) {
  s.run("gradients", "quadratic", [] {
    Matrix w = Matrix::Constant(1, 1, 3.0);
    NamedParam p{"w", &w};
    Matrix g = Matrix::Constant(1, 1, 6.0);
    auto r = grad_check([&] { return w(0, 0) * w(0, 0); }, std::span(&p, 1), std::span(&g, 1), 1e-4);
    return r.max_relative_error < 1e-8 ? std::string() : "error " + std::to_string(r.max_relative_error);
  });
  s.run("gradients", "total loss on the toy instance", [&s] {
    auto r = toy_loss_grad_check(toy_config(), 1e-5, 1e-6, s.fault("corrupt-gradient") ? 2.0 : 1.0);
    return r.max_relative_error < 1e-4 ? std::string()
                                       : "max relative error " + std::to_string(r.max_relative_error) + " at " +
                                             r.worst_parameter;
  });
}

}  // namespace

std::vector<CheckResult> run_checks(const CheckOptions& options) {
  if (options.only) {
    auto fams = check_families();
    if (std::find(fams.begin(), fams.end(), *options.only) == fams.end())
      throw ArgumentError("unknown check family '" + *options.only + "'");
  }
  if (options.inject_fault) {
    auto faults = fault_names();
    if (std::find(faults.begin(), faults.end(), *options.inject_fault) == faults.end())
      throw ArgumentError("unknown fault '" + *options.inject_fault + "'");
  }
  Suite s(options);
  data_checks(s);
  mmd_checks(s);
  flow_checks(s);
  disentangle_checks(s);
  metric_checks(s);
  gradient_checks(s);
  return s.take();
}

}  // namespace hjid
