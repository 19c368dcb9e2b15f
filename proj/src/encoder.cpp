#include "hjid/encoder.hpp"

#include <cmath>

#include "hjid/error.hpp"

namespace hjid {

double init_bound(std::size_t d) { return 1.0 / std::sqrt(static_cast<double>(d)); }

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> unif(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = unif(rng);
  return m;
}

EmbeddingTable init_embeddings(std::size_t count, std::size_t d, std::uint64_t seed,
                               EntityRole role, DomainId domain) {
  if (count == 0 || d == 0) throw ArgumentError("init_embeddings: count and d must be >= 1");
  Rng rng = make_rng(seed);
  return EmbeddingTable{uniform_matrix(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(d),
                                       init_bound(d), rng),
                        role, domain};
}

EncoderLayerVars encoder_layer(Binding& bind, std::shared_ptr<const SparseMatrix> graph,
                               const Var& features, const EncoderLayerParams& params,
                               const Matrix* noise, Activation activation) {
  if (graph->cols() != features.rows())
    throw ArgumentError("encoder_layer: graph expects " + std::to_string(graph->cols()) +
                        " source rows, features have " + std::to_string(features.rows()));
  if (params.w_mean.rows() != features.cols() || params.w_logvar.rows() != features.cols() ||
      params.w_mean.cols() != params.w_logvar.cols())
    throw ArgumentError("encoder_layer: weight shapes do not match feature width");
  Var propagated = ad::spmm(std::move(graph), features);
  Var pre_mean = ad::matmul(propagated, bind(params.w_mean));
  Var mean = activation == Activation::tanh ? ad::tanh(pre_mean) : pre_mean;
  Var log_var = ad::clamp(ad::matmul(propagated, bind(params.w_logvar)), kLogVarianceMin, kLogVarianceMax);
  Var sample = mean;
  if (noise != nullptr) {
    if (noise->rows() != mean.rows() || noise->cols() != mean.cols())
      throw ArgumentError("encoder_layer: noise shape mismatch");
    Var stddev = ad::exp(ad::scale(log_var, 0.5));
    sample = ad::add(mean, ad::mul_const(stddev, *noise));
  }
  return {mean, log_var, sample};
}

EncoderLayerOutput encoder_layer(const SparseMatrix& graph, const Matrix& features,
                                 const EncoderLayerParams& params, Mode mode, Rng* rng,
                                 Activation activation) {
  Tape tape;
  Binding bind(tape, false);
  auto g = std::make_shared<const SparseMatrix>(graph);
  Matrix noise;
  if (mode == Mode::train) {
    if (rng == nullptr) throw ArgumentError("encoder_layer: train mode needs a random generator");
    noise = standard_normal(static_cast<Eigen::Index>(graph.rows()), params.w_mean.cols(), *rng);
  }
  auto out = encoder_layer(bind, g, tape.constant(features), params,
                           mode == Mode::train ? &noise : nullptr, activation);
  return {out.mean.value(), out.log_variance.value(), out.sample.value()};
}

DomainEncoderParams DomainEncoderParams::init(std::size_t depth, std::size_t d, Rng& rng) {
  DomainEncoderParams p;
  const auto n = static_cast<Eigen::Index>(d);
  const double b = init_bound(d);
  for (std::size_t k = 0; k < depth; ++k) {
    p.user_layers.push_back({uniform_matrix(n, n, b, rng), uniform_matrix(n, n, b, rng)});
    p.item_layers.push_back({uniform_matrix(n, n, b, rng), uniform_matrix(n, n, b, rng)});
  }
  return p;
}

LayeredRepresentation::LayeredRepresentation(std::vector<Matrix> layers, std::size_t shallow_depth)
    : layers_(std::move(layers)), shallow_depth_(shallow_depth) {
  auto [s, d] = decouple(layers_, shallow_depth_);
  shallow_ = std::move(s);
  deep_ = std::move(d);
}

Matrix LayeredRepresentation::full() const {
  Matrix out(shallow_.rows(), shallow_.cols() + deep_.cols());
  out << shallow_, deep_;
  return out;
}

namespace {

void check_split(std::size_t k, std::size_t depth) {
  if (k < 1 || k >= depth)
    throw ArgumentError("decouple: shallow depth k=" + std::to_string(k) + " must satisfy 1 <= k < " +
                        std::to_string(depth));
}

Matrix hconcat(const std::vector<Matrix>& blocks, std::size_t begin, std::size_t end) {
  Eigen::Index cols = 0;
  for (std::size_t i = begin; i < end; ++i) cols += blocks[i].cols();
  Matrix out(blocks[begin].rows(), cols);
  Eigen::Index at = 0;
  for (std::size_t i = begin; i < end; ++i) {
    if (blocks[i].rows() != out.rows()) throw ArgumentError("decouple: layers differ in row count");
    out.middleCols(at, blocks[i].cols()) = blocks[i];
    at += blocks[i].cols();
  }
  return out;
}

}  // namespace

std::pair<Matrix, Matrix> decouple(const std::vector<Matrix>& layers, std::size_t k) {
  check_split(k, layers.size());
  return {hconcat(layers, 0, k), hconcat(layers, k, layers.size())};
}

std::pair<Var, Var> decouple(const std::vector<Var>& layers, std::size_t k) {
  check_split(k, layers.size());
  std::span<const Var> all(layers);
  return {ad::concat_cols(all.subspan(0, k)), ad::concat_cols(all.subspan(k))};
}

std::vector<Matrix> split_layers(const Matrix& concatenated, std::size_t d) {
  const auto w = static_cast<Eigen::Index>(d);
  if (d == 0 || concatenated.cols() % w != 0)
    throw ArgumentError("split_layers: width is not a multiple of the layer width");
  std::vector<Matrix> out;
  for (Eigen::Index at = 0; at < concatenated.cols(); at += w) out.push_back(concatenated.middleCols(at, w));
  return out;
}

DomainEncoding encode_domain(Binding& bind, const NormalizedBipartiteGraph& graph,
                             const Matrix& user_emb, const Matrix& item_emb,
                             const DomainEncoderParams& params, Mode mode, Rng* rng) {
  const std::size_t depth = params.depth();
  if (depth < 2) throw ArgumentError("encode_domain: K must be >= 2");
  if (params.item_layers.size() != depth) throw ArgumentError("encode_domain: user/item depth mismatch");
  if (static_cast<std::size_t>(user_emb.rows()) != graph.num_users() ||
      static_cast<std::size_t>(item_emb.rows()) != graph.num_items())
    throw ArgumentError("encode_domain: embedding rows do not match the graph");
  if (mode == Mode::train && rng == nullptr)
    throw ArgumentError("encode_domain: train mode needs a random generator");

  DomainEncoding enc;
  Var prev_user = bind(user_emb);
  Var prev_item = bind(item_emb);
  for (std::size_t k = 0; k < depth; ++k) {
    Matrix user_noise, item_noise;
    if (mode == Mode::train) {
      user_noise = standard_normal(user_emb.rows(), params.user_layers[k].w_mean.cols(), *rng);
      item_noise = standard_normal(item_emb.rows(), params.item_layers[k].w_mean.cols(), *rng);
    }
    bool sampling = mode == Mode::train;
    auto u = encoder_layer(bind, graph.adjacency, prev_item, params.user_layers[k],
                           sampling ? &user_noise : nullptr);
    auto v = encoder_layer(bind, graph.transpose, prev_user, params.item_layers[k],
                           sampling ? &item_noise : nullptr);
    enc.user_layers.push_back(u.sample);
    enc.item_layers.push_back(v.sample);
    prev_user = u.sample;
    prev_item = v.sample;
  }
  return enc;
}

std::pair<LayeredRepresentation, LayeredRepresentation> encode_domain(
    const NormalizedBipartiteGraph& graph, const Matrix& user_emb, const Matrix& item_emb,
    const DomainEncoderParams& params, std::size_t shallow_depth, Mode mode, Rng* rng) {
  Tape tape;
  Binding bind(tape, false);
  auto enc = encode_domain(bind, graph, user_emb, item_emb, params, mode, rng);
  std::vector<Matrix> users, items;
  for (const auto& v : enc.user_layers) users.push_back(v.value());
  for (const auto& v : enc.item_layers) items.push_back(v.value());
  return {LayeredRepresentation(std::move(users), shallow_depth),
          LayeredRepresentation(std::move(items), shallow_depth)};
}

}  // namespace hjid
