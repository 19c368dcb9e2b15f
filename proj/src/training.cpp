#include "hjid/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "hjid/error.hpp"
#include "hjid/evaluation.hpp"

namespace hjid {

using nlohmann::ordered_json;

void Adam::step(std::span<const NamedParam> params, std::span<const Matrix> grads) {
  if (params.size() != grads.size()) throw ArgumentError("adam: one gradient per parameter");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
      v_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    }
  }
  if (m_.size() != params.size()) throw ArgumentError("adam: parameter set changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
    Matrix& w = *params[i].value;
    w.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

TrainState make_train_state(const TrainConfig& config, const DomainSizes& sizes) {
  return TrainState{HjidModel(config, sizes), Adam(config.learning_rate)};
}

namespace {

LossReport report_of(const LossVars& v, const LossWeights& w) {
  LossReport r = total_loss(v.l_s.scalar(), v.l_g.scalar(), v.vib_x.scalar(), v.vib_y.scalar(), w);
  if (!std::isfinite(v.total.scalar())) throw NumericError("total_loss: non-finite total");
  r.total = v.total.scalar();
  return r;
}

void absorb_stats(HjidModel& model, const Matrix& logits) {
  if (logits.rows() == 0) return;
  GaussianStats batch = logit_stats(logits);
  if (!model.stats_ready) {
    model.target_stats = batch;
    model.stats_ready = true;
    return;
  }
  const double m = model.config.stats_momentum;
  model.target_stats.mean = m * model.target_stats.mean + (1.0 - m) * batch.mean;
  model.target_stats.variance = m * model.target_stats.variance + (1.0 - m) * batch.variance;
}

}  // namespace

LossReport evaluate_loss(const HjidModel& model, const TrainingView& view, std::span<const Entity> batch,
                         std::uint64_t step_seed) {
  Tape tape;
  Binding bind(tape, false);
  return report_of(model_loss(bind, model, view, batch, step_seed), model.config.effective_weights());
}

LossReport train_step(TrainState& state, const TrainingView& view, std::span<const Entity> batch,
                      std::uint64_t step_seed, StepEdges* edges) {
  HjidModel& model = state.model;
  if (!model.stats_ready) {
    Tape warm;
    Binding bind(warm, false);
    absorb_stats(model, model_loss(bind, model, view, batch, step_seed).target_logits);
  }
  Tape tape;
  Binding bind(tape, true);
  LossVars vars = model_loss(bind, model, view, batch, step_seed);
  LossReport report = report_of(vars, model.config.effective_weights());
  tape.backward(vars.total);

  auto params = model.parameters();
  std::vector<Matrix> grads;
  grads.reserve(params.size());
  for (const auto& p : params) {
    grads.push_back(bind.gradient(*p.value));
    if (!grads.back().allFinite()) throw NumericError("train_step: non-finite gradient for " + p.name);
  }
  state.optimizer.step(params, grads);
  absorb_stats(model, vars.target_logits);
  if (edges != nullptr) {
    edges->source = std::move(vars.source_edges);
    edges->target = std::move(vars.target_edges);
  }
  return report;
}

std::string epoch_record_json(const EpochRecord& r) {
  ordered_json j;
  j["epoch"] = r.epoch;
  j["l_s"] = r.loss.l_s;
  j["l_g"] = r.loss.l_g;
  j["vib_x"] = r.loss.vib_x;
  j["vib_y"] = r.loss.vib_y;
  j["total"] = r.loss.total;
  j["val_MRR"] = r.val_mrr;
  return j.dump();
}

namespace {

constexpr std::uint64_t kEpochOrderStream = 1000;
constexpr std::uint64_t kEpochStepStream = 2000;

class Auditor {
 public:
  Auditor(const DatasetSplit& split, const TrainingView& view) : view_(view) {
    for (DomainId d : {DomainId::X, DomainId::Y}) {
      auto& held = held_out_[d == DomainId::X ? 0 : 1];
      for (const auto& q : split.domain(d).test) held.insert({q.user, q.positive});
      for (const auto& q : split.domain(d).validation) held.insert({q.user, q.positive});
      auto& ov = overlapped_[d == DomainId::X ? 0 : 1];
      ov.assign(split.domain(d).interactions.num_users(), false);
      if (split.scenario == Scenario::non_overlapped)
        for (const auto& o : split.overlap) ov[d == DomainId::X ? o.x : o.y] = true;
    }
  }

  void check(const StepEdges& e, LeakageAudit& audit) const {
    scan(e.source, view_.source.domain, audit);
    scan(e.target, view_.target.domain, audit);
  }

 private:
  void scan(const std::vector<Edge>& edges, DomainId d, LeakageAudit& audit) const {
    const int i = d == DomainId::X ? 0 : 1;
    for (const auto& e : edges) {
      ++audit.edges_checked;
      if (held_out_[i].count(e)) ++audit.held_out_hits;
      if (overlapped_[i][e.user]) ++audit.overlapped_user_hits;
    }
  }

  const TrainingView& view_;
  std::set<Edge> held_out_[2];
  std::vector<bool> overlapped_[2];
};

LossReport mean_report(const std::vector<LossReport>& rs) {
  LossReport m;
  if (rs.empty()) return m;
  m.weights = rs.front().weights;
  for (const auto& r : rs) {
    m.l_s += r.l_s;
    m.l_g += r.l_g;
    m.vib_x += r.vib_x;
    m.vib_y += r.vib_y;
    m.total += r.total;
  }
  const double n = static_cast<double>(rs.size());
  m.l_s /= n;
  m.l_g /= n;
  m.vib_x /= n;
  m.vib_y /= n;
  m.total /= n;
  return m;
}

}  // namespace

FitResult fit(TrainConfig config, const DatasetSplit& split, const FitOptions& options) {
  config.scenario = split.scenario;
  validate(config);
  TrainingView view = TrainingView::build(split, config);
  TrainState state = make_train_state(config, sizes_of(split));
  Auditor auditor(split, view);

  FitResult result;
  result.checkpoint.model = state.model;
  result.checkpoint.dataset_fingerprint = dataset_fingerprint(split);
  const bool has_validation = !split.domain(target_domain(config.direction)).validation.empty();
  std::size_t since_best = 0;
  bool have_best = false;

  std::vector<std::size_t> order(view.entities.size());
  std::vector<Entity> batch;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = make_rng(config.seed, kEpochOrderStream + epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const std::uint64_t epoch_seed = derive_seed(config.seed, kEpochStepStream + epoch);

    std::vector<LossReport> reports;
    for (std::size_t b = 0; b * config.batch_size < order.size(); ++b) {
      batch.clear();
      const std::size_t end = std::min(order.size(), (b + 1) * config.batch_size);
      for (std::size_t i = b * config.batch_size; i < end; ++i) batch.push_back(view.entities[order[i]]);
      StepEdges edges;
      reports.push_back(train_step(state, view, batch, derive_seed(epoch_seed, b), options.audit ? &edges : nullptr));
      if (options.audit) auditor.check(edges, result.audit);
    }

    EpochRecord rec{epoch, mean_report(reports), 0.0};
    if (has_validation) rec.val_mrr = evaluate(state.model, split, QuerySet::validation).mrr;
    result.log.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);

    result.checkpoint.epoch = epoch;
    if (!have_best || rec.val_mrr > result.checkpoint.best_val_mrr) {
      have_best = true;
      since_best = 0;
      result.checkpoint.model = state.model;
      result.checkpoint.best_epoch = epoch;
      result.checkpoint.best_val_mrr = rec.val_mrr;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

namespace {

class Crc {
 public:
  void bytes(const void* p, std::size_t n) {
    crc_ = crc32(crc_, static_cast<const Bytef*>(p), static_cast<uInt>(n));
  }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  std::uint64_t value() const { return crc_; }

 private:
  uLong crc_ = crc32(0L, Z_NULL, 0);
};

}  // namespace

std::uint64_t dataset_fingerprint(const DatasetSplit& split) {
  Crc c;
  for (DomainId d : {DomainId::X, DomainId::Y}) {
    const DomainSplit& ds = split.domain(d);
    c.u64(ds.interactions.num_users());
    c.u64(ds.interactions.num_items());
    for (const auto& e : ds.train_edges) {
      c.u64(e.user);
      c.u64(e.item);
    }
    for (const auto& e : ds.context_edges) {
      c.u64(e.user);
      c.u64(e.item);
    }
    for (const auto* qs : {&ds.test, &ds.validation})
      for (const auto& q : *qs) {
        c.u64(q.user);
        c.u64(q.positive);
      }
  }
  return c.value();
}

// Layout: "HJIDCKPT" | u32 version | u64 payload bytes | u32 crc32(payload) | payload.
// Payload: u64 header bytes | header JSON | tensors as (u64 rows, u64 cols, doubles).
namespace {

constexpr char kMagic[8] = {'H', 'J', 'I', 'D', 'C', 'K', 'P', 'T'};
constexpr std::size_t kPreamble = 8 + 4 + 8 + 4;

template <class T>
void put(std::string& buf, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.append(raw, sizeof(T));
}

template <class T>
T take(const std::string& buf, std::size_t& at) {
  if (at + sizeof(T) > buf.size()) throw IntegrityError("checkpoint: truncated payload");
  T v;
  std::memcpy(&v, buf.data() + at, sizeof(T));
  at += sizeof(T);
  return v;
}

void put_matrix(std::string& buf, const Matrix& m) {
  put<std::uint64_t>(buf, static_cast<std::uint64_t>(m.rows()));
  put<std::uint64_t>(buf, static_cast<std::uint64_t>(m.cols()));
  buf.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
}

Matrix take_matrix(const std::string& buf, std::size_t& at) {
  const auto rows = take<std::uint64_t>(buf, at);
  const auto cols = take<std::uint64_t>(buf, at);
  const std::size_t bytes = rows * cols * sizeof(double);
  if (at + bytes > buf.size()) throw IntegrityError("checkpoint: truncated tensor");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::memcpy(m.data(), buf.data() + at, bytes);
  at += bytes;
  return m;
}

}  // namespace

void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path) {
  HjidModel model = cp.model;
  auto params = model.parameters();
  ordered_json h;
  h["config"] = format_config(model.config);
  const DomainSizes s = model.sizes();
  h["sizes"] = {s.users_x, s.items_x, s.users_y, s.items_y};
  h["epoch"] = cp.epoch;
  h["best_epoch"] = cp.best_epoch;
  h["best_val_mrr_bits"] = std::bit_cast<std::uint64_t>(cp.best_val_mrr);
  h["dataset_fingerprint"] = cp.dataset_fingerprint;
  h["stats_ready"] = model.stats_ready;
  ordered_json names = ordered_json::array();
  for (const auto& p : params) names.push_back(p.name);
  h["tensors"] = names;
  const std::string header = h.dump();

  std::string payload;
  put<std::uint64_t>(payload, header.size());
  payload += header;
  for (const auto& p : params) put_matrix(payload, *p.value);
  put_matrix(payload, model.target_stats.mean);
  put_matrix(payload, model.target_stats.variance);

  std::string file(kMagic, 8);
  put<std::uint32_t>(file, kCheckpointVersion);
  put<std::uint64_t>(file, payload.size());
  put<std::uint32_t>(file, static_cast<std::uint32_t>(
                               crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(payload.data()),
                                     static_cast<uInt>(payload.size()))));
  file += payload;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(file.data(), static_cast<std::streamsize>(file.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::string file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (file.size() < kPreamble) throw IntegrityError("checkpoint: file too short");
  if (std::memcmp(file.data(), kMagic, 8) != 0) throw IntegrityError("checkpoint: bad magic");
  std::size_t at = 8;
  const auto version = take<std::uint32_t>(file, at);
  if (version != kCheckpointVersion)
    throw VersionError("checkpoint: format version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  const auto size = take<std::uint64_t>(file, at);
  const auto crc = take<std::uint32_t>(file, at);
  if (file.size() - kPreamble != size) throw IntegrityError("checkpoint: payload length mismatch (truncated?)");
  std::string payload = file.substr(kPreamble);
  const auto actual = static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size())));
  if (actual != crc) throw IntegrityError("checkpoint: checksum mismatch");

  at = 0;
  const auto header_len = take<std::uint64_t>(payload, at);
  if (at + header_len > payload.size()) throw IntegrityError("checkpoint: truncated header");
  ordered_json h = ordered_json::parse(payload.substr(at, header_len));
  at += header_len;

  TrainConfig config = parse_config(h.at("config").get<std::string>());
  const auto sz = h.at("sizes");
  DomainSizes sizes{sz.at(0).get<std::size_t>(), sz.at(1).get<std::size_t>(), sz.at(2).get<std::size_t>(),
                    sz.at(3).get<std::size_t>()};
  Checkpoint cp;
  cp.model = HjidModel(config, sizes);
  cp.epoch = h.at("epoch").get<std::size_t>();
  cp.best_epoch = h.at("best_epoch").get<std::size_t>();
  cp.best_val_mrr = std::bit_cast<double>(h.at("best_val_mrr_bits").get<std::uint64_t>());
  cp.dataset_fingerprint = h.at("dataset_fingerprint").get<std::uint64_t>();
  cp.model.stats_ready = h.at("stats_ready").get<bool>();

  auto params = cp.model.parameters();
  const auto& names = h.at("tensors");
  if (names.size() != params.size()) throw IntegrityError("checkpoint: tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (names.at(i).get<std::string>() != params[i].name)
      throw IntegrityError("checkpoint: unexpected tensor " + names.at(i).get<std::string>());
    Matrix m = take_matrix(payload, at);
    if (m.rows() != params[i].value->rows() || m.cols() != params[i].value->cols())
      throw IntegrityError("checkpoint: shape mismatch for " + params[i].name);
    *params[i].value = std::move(m);
  }
  cp.model.target_stats.mean = take_matrix(payload, at);
  cp.model.target_stats.variance = take_matrix(payload, at);
  if (at != payload.size()) throw IntegrityError("checkpoint: trailing bytes");
  return cp;
}

}  // namespace hjid
