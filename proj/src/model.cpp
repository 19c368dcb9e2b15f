#include "hjid/model.hpp"

#include <algorithm>

#include "hjid/error.hpp"

namespace hjid {

namespace {

// RNG stream tags.
constexpr std::uint64_t kInitStream = 100;
constexpr std::uint64_t kEncoderNoise = 1;
constexpr std::uint64_t kLatentNoise = 2;
constexpr std::uint64_t kNegatives = 3;
constexpr std::uint64_t kShallowGroups = 4;
constexpr std::uint64_t kFlowGroup = 5;

DomainParams init_domain(const TrainConfig& c, std::size_t users, std::size_t items, DomainId dom,
                         std::uint64_t seed) {
  const std::uint64_t tag = dom == DomainId::X ? 0 : 10;
  DomainParams p;
  p.user_emb = init_embeddings(users, c.d, derive_seed(seed, tag + 1), EntityRole::user, dom).values;
  p.item_emb = init_embeddings(items, c.d, derive_seed(seed, tag + 2), EntityRole::item, dom).values;
  Rng enc_rng = make_rng(seed, tag + 3);
  p.encoder = DomainEncoderParams::init(c.K, c.d, enc_rng);
  Rng head_rng = make_rng(seed, tag + 4);
  p.heads = LatentHeadParams::init(c.deep_width(), c.deep_width(), head_rng);
  return p;
}

Var concat_range(const std::vector<Var>& layers, std::size_t begin, std::size_t end) {
  std::span<const Var> all(layers);
  return ad::concat_cols(all.subspan(begin, end - begin));
}

}  // namespace

std::vector<NamedParam> DomainParams::parameters(const std::string& prefix) {
  std::vector<NamedParam> out{{prefix + ".user_emb", &user_emb}, {prefix + ".item_emb", &item_emb}};
  for (std::size_t k = 0; k < encoder.depth(); ++k) {
    const std::string l = std::to_string(k);
    out.push_back({prefix + ".enc.user." + l + ".w_mean", &encoder.user_layers[k].w_mean});
    out.push_back({prefix + ".enc.user." + l + ".w_logvar", &encoder.user_layers[k].w_logvar});
    out.push_back({prefix + ".enc.item." + l + ".w_mean", &encoder.item_layers[k].w_mean});
    out.push_back({prefix + ".enc.item." + l + ".w_logvar", &encoder.item_layers[k].w_logvar});
  }
  auto h = heads.parameters(prefix + ".heads");
  out.insert(out.end(), h.begin(), h.end());
  return out;
}

DomainSizes sizes_of(const DatasetSplit& split) {
  return {split.x.interactions.num_users(), split.x.interactions.num_items(), split.y.interactions.num_users(),
          split.y.interactions.num_items()};
}

HjidModel::HjidModel(const TrainConfig& cfg, const DomainSizes& sizes) : config(cfg) {
  validate(config);
  const std::uint64_t seed = derive_seed(config.seed, kInitStream);
  x = init_domain(config, sizes.users_x, sizes.items_x, DomainId::X, seed);
  y = init_domain(config, sizes.users_y, sizes.items_y, DomainId::Y, seed);
  Rng flow_rng = make_rng(seed, 50);
  flow = FlowStack(config.deep_width(), config.L, config.flow_kind, config.flow_hidden, flow_rng);
  const auto w = static_cast<Eigen::Index>(config.deep_width());
  target_stats = {Vector::Zero(w), Vector::Ones(w)};
}

DomainSizes HjidModel::sizes() const {
  return {static_cast<std::size_t>(x.user_emb.rows()), static_cast<std::size_t>(x.item_emb.rows()),
          static_cast<std::size_t>(y.user_emb.rows()), static_cast<std::size_t>(y.item_emb.rows())};
}

std::vector<NamedParam> HjidModel::parameters() {
  auto out = x.parameters("x");
  auto py = y.parameters("y");
  out.insert(out.end(), py.begin(), py.end());
  auto pf = flow.parameters("flow");
  out.insert(out.end(), pf.begin(), pf.end());
  return out;
}

GaussianStats logit_stats(const Matrix& logits) {
  GaussianStats s;
  s.mean = logits.colwise().mean().transpose();
  Matrix centred = logits.rowwise() - s.mean.transpose();
  const double n = static_cast<double>(std::max<Eigen::Index>(logits.rows(), 1));
  s.variance = (centred.array().square().colwise().sum() / n).transpose().max(1e-6).matrix();
  return s;
}

namespace {

DomainView build_domain_view(const DatasetSplit& split, DomainId d, Normalization norm) {
  const DomainSplit& ds = split.domain(d);
  DomainView v;
  v.domain = d;
  const std::size_t nu = ds.interactions.num_users();
  v.num_items = ds.interactions.num_items();
  v.graph = build_adjacency(nu, v.num_items, ds.train_edges, norm);
  v.train_positives.assign(nu, {});
  for (const auto& e : ds.train_edges) v.train_positives[e.user].push_back(e.item);
  for (auto& p : v.train_positives) std::sort(p.begin(), p.end());
  v.all_positives = ds.interactions.positives_by_user();
  for (std::size_t u = 0; u < nu; ++u)
    if (!v.train_positives[u].empty()) v.pool.push_back(u);
  return v;
}

}  // namespace

TrainingView TrainingView::build(const DatasetSplit& split, const TrainConfig& config) {
  TrainingView v;
  v.direction = config.direction;
  v.source = build_domain_view(split, source_domain(config.direction), config.normalization);
  v.target = build_domain_view(split, target_domain(config.direction), config.normalization);
  const bool src_is_x = v.source.domain == DomainId::X;

  std::vector<bool> paired_src(v.source.train_positives.size(), false);
  std::vector<bool> paired_tgt(v.target.train_positives.size(), false);
  for (std::size_t oi : split.train_users) {
    const auto& o = split.overlap[oi];
    std::size_t us = src_is_x ? o.x : o.y;
    std::size_t ut = src_is_x ? o.y : o.x;
    if (v.source.train_positives[us].empty() || v.target.train_positives[ut].empty()) continue;
    v.entities.push_back({us, ut});
    paired_src[us] = paired_tgt[ut] = true;
  }
  for (std::size_t u : v.source.pool)
    if (!paired_src[u]) v.entities.push_back({u, std::nullopt});
  for (std::size_t u : v.target.pool)
    if (!paired_tgt[u]) v.entities.push_back({std::nullopt, u});
  if (v.entities.empty()) throw DataError("training view: no user has training edges");
  return v;
}

namespace {

struct Encoded {
  Var shallow;  // invalid when the split depth is 0
  Var deep;
  Var items;
};

Encoded encode(Binding& bind, const DomainParams& p, const NormalizedBipartiteGraph& graph,
               const TrainConfig& c, Mode mode, Rng* rng) {
  auto enc = encode_domain(bind, graph, p.user_emb, p.item_emb, p.encoder, mode, rng);
  const std::size_t k = c.shallow_depth();
  Encoded out;
  if (k > 0) out.shallow = concat_range(enc.user_layers, 0, k);
  out.deep = concat_range(enc.user_layers, k, c.K);
  out.items = c.scoring == ScoringMode::deep_only ? concat_range(enc.item_layers, k, c.K)
                                                  : concat_range(enc.item_layers, 0, c.K);
  return out;
}

// U^ = [S || D^] (or D^ alone under deep-only scoring / no shallow block).
Var user_rep(const Var& shallow, const Var& d_hat, const TrainConfig& c) {
  if (!shallow.valid() || c.scoring == ScoringMode::deep_only) return d_hat;
  const Var parts[] = {shallow, d_hat};
  return ad::concat_cols(parts);
}

void sample_edges(const DomainView& v, std::size_t user, std::size_t row, std::size_t ratio, Rng& rng,
                  std::vector<Edge>& pos, std::vector<Edge>& neg, std::vector<Edge>& audit) {
  const auto& known = v.all_positives[user];
  if (known.size() >= v.num_items)
    throw DataError("negative sampling: user " + std::to_string(user) + " in domain " + to_string(v.domain) +
                    " interacted with every item");
  std::uniform_int_distribution<std::size_t> pick(0, v.num_items - 1);
  for (std::size_t item : v.train_positives[user]) {
    pos.push_back({row, item});
    audit.push_back({user, item});
    for (std::size_t r = 0; r < ratio; ++r) {
      std::size_t j;
      do j = pick(rng);
      while (std::binary_search(known.begin(), known.end(), j));
      neg.push_back({row, j});
      audit.push_back({user, j});
    }
  }
}

Var mean_bound(Tape& tape, const Var& users, const Var& items, const std::vector<Edge>& pos,
               const std::vector<Edge>& neg) {
  const std::size_t count = pos.size() + neg.size();
  if (count == 0) return tape.constant(Matrix::Zero(1, 1));
  return ad::scale(vib_bce(users, items, pos, neg), 1.0 / static_cast<double>(count));
}

Var group_mmd(const Var& a, const Var& b, const TrainConfig& c) {
  KernelConfig kc;
  kc.estimator = c.mmd_estimator;
  kc.bandwidth = c.sigma_policy == BandwidthPolicy::fixed ? c.sigma : median_bandwidth(a.value(), b.value());
  return mmd2(a, b, kc);
}

}  // namespace

LossVars model_loss(Binding& bind, const HjidModel& model, const TrainingView& view,
                    std::span<const Entity> batch, std::uint64_t step_seed) {
  const TrainConfig& c = model.config;
  Tape& tape = bind.tape();
  const DomainParams& ps = model.domain(view.source.domain);
  const DomainParams& pt = model.domain(view.target.domain);
  const Var zero = tape.constant(Matrix::Zero(1, 1));

  Rng enc_rng = make_rng(step_seed, kEncoderNoise);
  Encoded src = encode(bind, ps, view.source.graph, c, Mode::train, &enc_rng);
  Encoded tgt = encode(bind, pt, view.target.graph, c, Mode::train, &enc_rng);

  Rng noise_rng = make_rng(step_seed, kLatentNoise);
  const Eigen::Index w = static_cast<Eigen::Index>(c.deep_width());
  Matrix eps_src_x = standard_normal(src.deep.rows(), w, noise_rng);
  Matrix eps_src_y = standard_normal(src.deep.rows(), w, noise_rng);
  Matrix eps_tgt = standard_normal(tgt.deep.rows(), w, noise_rng);

  const FlowStack* flow = c.uses_flow() ? &model.flow : nullptr;
  RefinedVars s_ref = refine_pair(bind, src.deep, flow, ps.heads, &eps_src_x, &eps_src_y);
  LatentVars t_heads = latent_heads(bind, tgt.deep, pt.heads);
  Var t_dhat = reparameterize(t_heads.z_s, t_heads.z_v, eps_tgt);

  Var users_src = user_rep(src.shallow, s_ref.d_hat_x, c);
  Var users_tgt = user_rep(tgt.shallow, t_dhat, c);

  // Cross rows for the pairs of this batch are appended after the target's own rows.
  std::vector<std::size_t> pair_src, pair_tgt;
  if (c.uses_cross_path())
    for (const auto& e : batch)
      if (e.is_pair()) {
        pair_src.push_back(*e.source_user);
        pair_tgt.push_back(*e.target_user);
      }
  if (!pair_src.empty()) {
    Var cross_dhat = ad::gather_rows(s_ref.d_hat_y, pair_src);
    Var cross_shallow = tgt.shallow.valid() ? ad::gather_rows(tgt.shallow, pair_tgt) : Var();
    const Var rows[] = {users_tgt, user_rep(cross_shallow, cross_dhat, c)};
    users_tgt = ad::concat_rows(rows);
  }

  LossVars out;
  Rng neg_rng = make_rng(step_seed, kNegatives);
  std::vector<Edge> pos_s, neg_s, pos_t, neg_t;
  std::size_t pair_index = 0;
  const auto n_tgt = static_cast<std::size_t>(tgt.deep.rows());
  for (const auto& e : batch) {
    if (e.source_user)
      sample_edges(view.source, *e.source_user, *e.source_user, c.negative_ratio, neg_rng, pos_s, neg_s,
                   out.source_edges);
    if (e.target_user) {
      std::size_t row = *e.target_user;
      if (e.is_pair() && c.uses_cross_path()) row = n_tgt + pair_index++;
      sample_edges(view.target, *e.target_user, row, c.negative_ratio, neg_rng, pos_t, neg_t, out.target_edges);
    }
  }
  out.vib_x = mean_bound(tape, users_src, src.items, pos_s, neg_s);
  out.vib_y = mean_bound(tape, users_tgt, tgt.items, pos_t, neg_t);

  const LossWeights weights = c.effective_weights();
  out.l_s = zero;
  if (weights.w_s > 0 && (c.uses_shallow_mmd() || c.variant == AblationVariant::B)) {
    if (view.source.pool.size() < c.N || view.target.pool.size() < c.N)
      throw ArgumentError("group size N=" + std::to_string(c.N) + " exceeds the users available for sampling");
    Rng group_rng = make_rng(step_seed, kShallowGroups);
    auto gs = sample_indices(view.source.pool.size(), c.N, group_rng());
    auto gt = sample_indices(view.target.pool.size(), c.N, group_rng());
    for (auto& i : gs) i = view.source.pool[i];
    for (auto& i : gt) i = view.target.pool[i];
    if (c.uses_shallow_mmd())
      out.l_s = group_mmd(ad::gather_rows(src.shallow, gs), ad::gather_rows(tgt.shallow, gt), c);
    if (c.variant == AblationVariant::B)
      out.l_s = ad::add(out.l_s, group_mmd(ad::gather_rows(s_ref.d_hat_x, gs), ad::gather_rows(t_dhat, gt), c));
  }

  out.l_g = zero;
  if (weights.w_g > 0 && c.uses_flow()) {
    if (view.source.pool.size() < c.N)
      throw ArgumentError("group size N=" + std::to_string(c.N) + " exceeds the users available for sampling");
    auto g = sample_indices(view.source.pool.size(), c.N, derive_seed(step_seed, kFlowGroup));
    for (auto& i : g) i = view.source.pool[i];
    Var logits = ad::gather_rows(s_ref.factors.v_logits, g);
    if (c.flow_input_detach) logits = ad::detach(logits);
    out.l_g = flow_nll(bind, model.flow, logits, model.target_stats);
  }

  out.total = total_loss(out.l_s, out.l_g, out.vib_x, out.vib_y, weights);
  out.target_logits.resize(static_cast<Eigen::Index>(view.target.pool.size()), w);
  for (std::size_t i = 0; i < view.target.pool.size(); ++i)
    out.target_logits.row(static_cast<Eigen::Index>(i)) =
        t_heads.v_logits.value().row(static_cast<Eigen::Index>(view.target.pool[i]));
  return out;
}

namespace {

NormalizedBipartiteGraph eval_graph(const DatasetSplit& split, DomainId d, Normalization norm) {
  const DomainSplit& ds = split.domain(d);
  std::vector<Edge> edges = ds.train_edges;
  edges.insert(edges.end(), ds.context_edges.begin(), ds.context_edges.end());
  return build_adjacency(ds.interactions.num_users(), ds.interactions.num_items(), edges, norm);
}

}  // namespace

DomainLatents eval_latents(const HjidModel& model, const DatasetSplit& split, DomainId domain) {
  if (model.sizes() != sizes_of(split)) throw DataError("checkpoint dimensions do not match the split");
  Tape tape;
  Binding bind(tape, false);
  Encoded own = encode(bind, model.domain(domain), eval_graph(split, domain, model.config.normalization),
                       model.config, Mode::eval, nullptr);
  LatentVars heads = latent_heads(bind, own.deep, model.domain(domain).heads);
  return {heads.z_s.value(), heads.v_logits.value()};
}

Representations eval_representations(const HjidModel& model, const DatasetSplit& split, DomainId domain) {
  const TrainConfig& c = model.config;
  if (model.sizes() != sizes_of(split)) throw DataError("checkpoint dimensions do not match the split");
  Tape tape;
  Binding bind(tape, false);
  auto graph_for = [&](DomainId d) { return eval_graph(split, d, c.normalization); };
  const DomainId sd = source_domain(c.direction);
  const DomainId td = target_domain(c.direction);
  Encoded own = encode(bind, model.domain(domain), graph_for(domain), c, Mode::eval, nullptr);
  LatentVars heads = latent_heads(bind, own.deep, model.domain(domain).heads);
  Matrix d_hat = heads.z_s.value();

  if (domain == td && c.uses_cross_path()) {
    Encoded src = encode(bind, model.domain(sd), graph_for(sd), c, Mode::eval, nullptr);
    LatentVars src_heads = latent_heads(bind, src.deep, model.domain(sd).heads);
    for (const auto& o : split.overlap) {
      const std::size_t us = sd == DomainId::X ? o.x : o.y;
      const std::size_t ut = td == DomainId::X ? o.x : o.y;
      d_hat.row(static_cast<Eigen::Index>(ut)) = src_heads.z_s.value().row(static_cast<Eigen::Index>(us));
    }
  }
  Representations r;
  if (own.shallow.valid() && c.scoring == ScoringMode::full) {
    r.users.resize(d_hat.rows(), own.shallow.cols() + d_hat.cols());
    r.users << own.shallow.value(), d_hat;
  } else {
    r.users = d_hat;
  }
  r.items = own.items.value();
  return r;
}

}  // namespace hjid
