#include "pals/models.hpp"

namespace pals {

namespace {

// Stacks a batch of L x m inputs into (B*m) x L rows, one row per channel series.
Matrix stack_channels(const Batch& inputs, Index lookback, Index variables) {
  Matrix stacked(static_cast<Index>(inputs.size()) * variables, lookback);
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    const auto& x = inputs[b];
    if (x.rows() != lookback || x.cols() != variables) {
      detail::throw_shape("DLinear input", x.rows(), x.cols(), lookback, variables);
    }
    stacked.middleRows(static_cast<Index>(b) * variables, variables) = x.transpose();
  }
  return stacked;
}

Batch unstack_channels(const Matrix& stacked, std::size_t batch, Index variables) {
  Batch out(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    out[b] = stacked.middleRows(static_cast<Index>(b) * variables, variables).transpose();
  }
  return out;
}

}  // namespace

DLinear::DLinear(const ModelConfig& config, Rng& rng) : ForecastModel(config) {
  const Index L = config_.lookback;
  const Index H = config_.horizon;
  add_sparse("seasonal.weight", H, L, rng);
  add_sparse("trend.weight", H, L, rng);
  add_dense("seasonal.bias", uniform_init(1, H, L, rng));
  add_dense("trend.bias", uniform_init(1, H, L, rng));
  averaging_ = moving_average_operator(L, config_.moving_avg_kernel);
}

Batch DLinear::forward(const Batch& inputs) {
  batch_ = inputs.size();
  const Matrix x = stack_channels(inputs, config_.lookback, config_.variables);
  trend_ = matmul_nt(x, averaging_);
  seasonal_ = x - trend_;
  Matrix y = affine_forward(seasonal_, weight(kSeasonalWeight), dense(kSeasonalBias));
  y += affine_forward(trend_, weight(kTrendWeight), dense(kTrendBias));
  return unstack_channels(y, batch_, config_.variables);
}

Batch DLinear::backward(const Batch& output_grads) {
  if (output_grads.size() != batch_) throw DimensionError("DLinear backward: batch size differs from forward");
  const Matrix g = stack_channels(output_grads, config_.horizon, config_.variables);
  const AffineGrads gs = affine_backward(seasonal_, weight(kSeasonalWeight), g);
  const AffineGrads gt = affine_backward(trend_, weight(kTrendWeight), g);
  weight_grad(kSeasonalWeight) += gs.grad_w;
  weight_grad(kTrendWeight) += gt.grad_w;
  dense_grad(kSeasonalBias) += gs.grad_b;
  dense_grad(kTrendBias) += gt.grad_b;
  // seasonal = x - x A^T and trend = x A^T.
  const Matrix grad_x = gs.grad_x + matmul(Matrix(gt.grad_x - gs.grad_x), averaging_);
  return unstack_channels(grad_x, batch_, config_.variables);
}

std::uint64_t DLinear::flops_per_sample() const {
  const auto m = static_cast<std::uint64_t>(config_.variables);
  return 2 * m * (active(kSeasonalWeight) + active(kTrendWeight));
}

}  // namespace pals
