#pragma once

#include "pals/numerics.hpp"

#include <span>

namespace pals {

struct Metric {
  double mse = 0.0;
  double mae = 0.0;
};

/// Mean over all H*m entries.
double mse(const Matrix& pred, const Matrix& target);
double mae(const Matrix& pred, const Matrix& target);

/// Mean of per-example metrics.
Metric batch_metric(std::span<const Matrix> preds, std::span<const Matrix> targets);

/// Gradient of the batch MSE with respect to each prediction.
std::vector<Matrix> mse_gradient(std::span<const Matrix> preds, std::span<const Matrix> targets);

/// Streaming mean of per-example metrics.
class MetricAccumulator {
 public:
  void add(const Matrix& pred, const Matrix& target);
  Metric mean() const;
  std::size_t count() const { return count_; }

 private:
  double mse_sum_ = 0.0;
  double mae_sum_ = 0.0;
  std::size_t count_ = 0;
};

}  // namespace pals
