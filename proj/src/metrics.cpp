#include "pals/metrics.hpp"

namespace pals {

namespace {
void check_same_shape(const Matrix& pred, const Matrix& target, std::string_view op) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    detail::throw_shape(op, pred.rows(), pred.cols(), target.rows(), target.cols());
  }
}
}  // namespace

double mse(const Matrix& pred, const Matrix& target) {
  check_same_shape(pred, target, "mse");
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

double mae(const Matrix& pred, const Matrix& target) {
  check_same_shape(pred, target, "mae");
  return (pred - target).cwiseAbs().sum() / static_cast<double>(pred.size());
}

void MetricAccumulator::add(const Matrix& pred, const Matrix& target) {
  mse_sum_ += mse(pred, target);
  mae_sum_ += mae(pred, target);
  ++count_;
}

Metric MetricAccumulator::mean() const {
  if (count_ == 0) return {};
  const auto n = static_cast<double>(count_);
  return {mse_sum_ / n, mae_sum_ / n};
}

Metric batch_metric(std::span<const Matrix> preds, std::span<const Matrix> targets) {
  if (preds.size() != targets.size()) throw DimensionError("batch_metric: prediction and target counts differ");
  MetricAccumulator acc;
  for (std::size_t i = 0; i < preds.size(); ++i) acc.add(preds[i], targets[i]);
  return acc.mean();
}

std::vector<Matrix> mse_gradient(std::span<const Matrix> preds, std::span<const Matrix> targets) {
  if (preds.size() != targets.size()) throw DimensionError("mse_gradient: prediction and target counts differ");
  std::vector<Matrix> grads(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    check_same_shape(preds[i], targets[i], "mse_gradient");
    const double scale = 2.0 / (static_cast<double>(preds[i].size()) * static_cast<double>(preds.size()));
    grads[i] = scale * (preds[i] - targets[i]);
  }
  return grads;
}

}  // namespace pals
