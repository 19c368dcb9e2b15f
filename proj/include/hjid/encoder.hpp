#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "hjid/binding.hpp"
#include "hjid/data.hpp"
#include "hjid/rng.hpp"

namespace hjid {

enum class Mode { train, eval };
enum class EntityRole { user, item };

struct EmbeddingTable {
  Matrix values;
  EntityRole role = EntityRole::user;
  DomainId domain = DomainId::X;
};

// Half-width of the uniform initializer for width d: 1 / sqrt(d).
double init_bound(std::size_t d);

EmbeddingTable init_embeddings(std::size_t count, std::size_t d, std::uint64_t seed,
                               EntityRole role = EntityRole::user, DomainId domain = DomainId::X);

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);

inline constexpr double kLogVarianceMin = -5.0;
inline constexpr double kLogVarianceMax = 5.0;

enum class Activation { tanh, linear };

struct EncoderLayerParams {
  Matrix w_mean;      // d_in x d
  Matrix w_logvar;    // d_in x d
};

struct EncoderLayerOutput {
  Matrix mean;
  Matrix log_variance;
  Matrix sample;
};

// One variational propagation step:
//   mean    = act(A * F * W_mean)
//   log_var = clamp(A * F * W_logvar, -5, 5)
//   sample  = mean + exp(log_var / 2) * noise   (noise == nullptr: sample = mean)
// `graph` maps the source side (rows of F) onto the destination side.
EncoderLayerOutput encoder_layer(const SparseMatrix& graph, const Matrix& features,
                                 const EncoderLayerParams& params, Mode mode, Rng* rng,
                                 Activation activation = Activation::tanh);

struct EncoderLayerVars {
  Var mean;
  Var log_variance;
  Var sample;
};

EncoderLayerVars encoder_layer(Binding& bind, std::shared_ptr<const SparseMatrix> graph,
                               const Var& features, const EncoderLayerParams& params,
                               const Matrix* noise, Activation activation = Activation::tanh);

// K layers for the user side and K for the item side of one domain.
struct DomainEncoderParams {
  std::vector<EncoderLayerParams> user_layers;
  std::vector<EncoderLayerParams> item_layers;

  std::size_t depth() const { return user_layers.size(); }
  static DomainEncoderParams init(std::size_t depth, std::size_t d, Rng& rng);
};

// Per-layer outputs U^1..U^K plus the shallow/deep split point k.
class LayeredRepresentation {
 public:
  LayeredRepresentation(std::vector<Matrix> layers, std::size_t shallow_depth);

  const std::vector<Matrix>& layers() const { return layers_; }
  std::size_t depth() const { return layers_.size(); }
  std::size_t shallow_depth() const { return shallow_depth_; }
  const Matrix& shallow() const { return shallow_; }  // [U^1 || ... || U^k]
  const Matrix& deep() const { return deep_; }        // [U^k+1 || ... || U^K]
  Matrix full() const;                                // [S || D]

 private:
  std::vector<Matrix> layers_;
  std::size_t shallow_depth_;
  Matrix shallow_;
  Matrix deep_;
};

// Splits layers at k (1 <= k < K) into (S, D).
std::pair<Matrix, Matrix> decouple(const std::vector<Matrix>& layers, std::size_t k);
std::pair<Var, Var> decouple(const std::vector<Var>& layers, std::size_t k);

// Recovers per-layer blocks of width d from a concatenation.
std::vector<Matrix> split_layers(const Matrix& concatenated, std::size_t d);

struct DomainEncoding {
  std::vector<Var> user_layers;
  std::vector<Var> item_layers;
};

// Interleaved bipartite propagation: U^k aggregates V^{k-1} over A and
// V^k aggregates U^{k-1} over A^T, with U^0, V^0 the embeddings.
// In train mode each layer samples with noise drawn from `rng`.
DomainEncoding encode_domain(Binding& bind, const NormalizedBipartiteGraph& graph,
                             const Matrix& user_emb, const Matrix& item_emb,
                             const DomainEncoderParams& params, Mode mode, Rng* rng);

std::pair<LayeredRepresentation, LayeredRepresentation> encode_domain(
    const NormalizedBipartiteGraph& graph, const Matrix& user_emb, const Matrix& item_emb,
    const DomainEncoderParams& params, std::size_t shallow_depth, Mode mode, Rng* rng);

}  // namespace hjid
