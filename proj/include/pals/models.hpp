#pragma once

#include "pals/numerics.hpp"
#include "pals/rng.hpp"
#include "pals/sparsity.hpp"

#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pals {

enum class ModelKind { dlinear, mlp, mini_transformer };

const char* to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct ModelConfig {
  ModelKind kind = ModelKind::dlinear;
  Index lookback = 96;
  Index horizon = 96;
  Index variables = 1;
  std::vector<Index> hidden;  // mlp
  Index d_model = 32;         // mini_transformer
  Index d_ff = 64;            // mini_transformer
  Index moving_avg_kernel = 25;  // dlinear

  void validate() const;
};

/// A batch of examples; each input is lookback x variables, each output
/// horizon x variables.
using Batch = std::vector<Matrix>;

/// Forecasting network with hand-written backward pass. Sparsifiable
/// weights (every affine weight matrix) live in `sparse_layers()`; biases,
/// norms and embeddings live in `dense_parameters()`.
class ForecastModel {
 public:
  virtual ~ForecastModel() = default;

  const ModelConfig& config() const { return config_; }

  /// Runs the batch and caches what backward needs.
  virtual Batch forward(const Batch& inputs) = 0;
  /// Accumulates parameter gradients for the last forward call and returns
  /// the gradient with respect to each input.
  virtual Batch backward(const Batch& output_grads) = 0;
  /// Theoretical inference FLOPs for one sample under the current masks.
  virtual std::uint64_t flops_per_sample() const = 0;
  /// Smallest |pre-activation| seen at a ReLU in the last forward pass.
  virtual double min_relu_margin() const { return std::numeric_limits<double>::infinity(); }

  std::span<SparseLayer> sparse_layers() { return sparse_; }
  std::span<const SparseLayer> sparse_layers() const { return sparse_; }
  std::span<Parameter> dense_parameters() { return dense_; }
  std::span<const Parameter> dense_parameters() const { return dense_; }

  /// Every trainable tensor, sparse weights first.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  Parameter* find_parameter(const std::string& name);

  void zero_grad();
  void apply_masks();

 protected:
  explicit ForecastModel(ModelConfig config);

  std::size_t add_sparse(std::string name, Index out, Index in, Rng& rng);
  std::size_t add_dense(std::string name, Matrix init);
  Matrix& weight(std::size_t i) { return sparse_[i].weight.value; }
  const Matrix& weight(std::size_t i) const { return sparse_[i].weight.value; }
  Matrix& weight_grad(std::size_t i) { return sparse_[i].weight.grad; }
  std::uint64_t active(std::size_t i) const { return sparse_[i].mask.active_count(); }
  Matrix& dense(std::size_t i) { return dense_[i].value; }
  const Matrix& dense(std::size_t i) const { return dense_[i].value; }
  Matrix& dense_grad(std::size_t i) { return dense_[i].grad; }

  ModelConfig config_;
  std::vector<SparseLayer> sparse_;
  std::vector<Parameter> dense_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation for weights and biases.
Matrix uniform_init(Index rows, Index cols, Index fan_in, Rng& rng);

std::unique_ptr<ForecastModel> make_model(const ModelConfig& config, Rng& rng);

/// Total parameter count, or with `nonzero_only` the mask-active entries of
/// sparsifiable layers plus every dense auxiliary.
std::size_t count_params(const ForecastModel& model, bool nonzero_only);

std::uint64_t count_flops(const ForecastModel& model, std::size_t n_samples);

// ---------------------------------------------------------------------------
// Seasonal-trend decomposition

/// L x L operator whose product with a series gives the centred moving average
/// with edge replication padding.
Matrix moving_average_operator(Index length, Index kernel);

struct Decomposition {
  Matrix trend;
  Matrix seasonal;
};

/// Decomposes each column of x (time along rows).
Decomposition series_decompose(const Matrix& x, Index kernel);

// ---------------------------------------------------------------------------

/// Two channel-shared linear maps (H x L) applied to the seasonal and trend
/// parts of each variable.
class DLinear final : public ForecastModel {
 public:
  DLinear(const ModelConfig& config, Rng& rng);
  Batch forward(const Batch& inputs) override;
  Batch backward(const Batch& output_grads) override;
  std::uint64_t flops_per_sample() const override;

  enum : std::size_t { kSeasonalWeight = 0, kTrendWeight = 1 };
  enum : std::size_t { kSeasonalBias = 0, kTrendBias = 1 };

 private:
  Matrix averaging_;  // L x L, rows act on a channel series
  Matrix seasonal_;   // (B*m) x L, cached
  Matrix trend_;
  std::size_t batch_ = 0;
};

/// Flattened look-back -> ReLU hidden layers -> flattened horizon.
class Mlp final : public ForecastModel {
 public:
  Mlp(const ModelConfig& config, Rng& rng);
  Batch forward(const Batch& inputs) override;
  Batch backward(const Batch& output_grads) override;
  std::uint64_t flops_per_sample() const override;
  double min_relu_margin() const override;

 private:
  std::vector<Matrix> layer_inputs_;  // input to each affine map
  std::vector<Matrix> pre_activations_;
};

/// One encoder layer with single-head attention, post-norm residual blocks,
/// learned positional embedding, and a last-token readout.
class MiniTransformer final : public ForecastModel {
 public:
  MiniTransformer(const ModelConfig& config, Rng& rng);
  Batch forward(const Batch& inputs) override;
  Batch backward(const Batch& output_grads) override;
  std::uint64_t flops_per_sample() const override;
  double min_relu_margin() const override;

  enum : std::size_t { kEmbed = 0, kQuery, kKey, kValue, kAttnOut, kFfn1, kFfn2, kReadout };
  enum : std::size_t {
    kEmbedBias = 0, kPosition, kQueryBias, kKeyBias, kValueBias, kAttnOutBias,
    kNorm1Gamma, kNorm1Beta, kFfn1Bias, kFfn2Bias, kNorm2Gamma, kNorm2Beta, kReadoutBias
  };

  /// Attention probabilities of example i from the last forward pass.
  const Matrix& attention(std::size_t i) const { return cache_.at(i).attn; }

 private:
  struct Cache {
    Matrix x, e, q, k, v, attn, z, n1, ffn_pre, ffn_act, n2;
    LayerNormCache ln1, ln2;
  };
  std::vector<Cache> cache_;
};

}  // namespace pals
