#include "pals/models.hpp"

namespace pals {

namespace {

Matrix flatten_batch(const Batch& items, Index rows, Index cols) {
  Matrix flat(static_cast<Index>(items.size()), rows * cols);
  for (std::size_t b = 0; b < items.size(); ++b) {
    const auto& x = items[b];
    if (x.rows() != rows || x.cols() != cols) detail::throw_shape("MLP input", x.rows(), x.cols(), rows, cols);
    flat.row(static_cast<Index>(b)) = Eigen::Map<const RowVector>(x.data(), rows * cols);
  }
  return flat;
}

Batch unflatten_batch(const Matrix& flat, Index rows, Index cols) {
  Batch out(static_cast<std::size_t>(flat.rows()));
  for (Index b = 0; b < flat.rows(); ++b) {
    out[static_cast<std::size_t>(b)] = Eigen::Map<const Matrix>(flat.row(b).eval().data(), rows, cols);
  }
  return out;
}

}  // namespace

Mlp::Mlp(const ModelConfig& config, Rng& rng) : ForecastModel(config) {
  std::vector<Index> widths{config_.lookback * config_.variables};
  widths.insert(widths.end(), config_.hidden.begin(), config_.hidden.end());
  widths.push_back(config_.horizon * config_.variables);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l);
    add_sparse(prefix + ".weight", widths[l + 1], widths[l], rng);
    add_dense(prefix + ".bias", uniform_init(1, widths[l + 1], widths[l], rng));
  }
}

Batch Mlp::forward(const Batch& inputs) {
  Matrix a = flatten_batch(inputs, config_.lookback, config_.variables);
  const std::size_t n_layers = sparse_.size();
  layer_inputs_.assign(n_layers, Matrix());
  pre_activations_.assign(n_layers, Matrix());
  for (std::size_t l = 0; l < n_layers; ++l) {
    layer_inputs_[l] = a;
    pre_activations_[l] = affine_forward(a, weight(l), dense(l));
    a = l + 1 < n_layers ? relu_forward(pre_activations_[l]) : pre_activations_[l];
  }
  return unflatten_batch(a, config_.horizon, config_.variables);
}

Batch Mlp::backward(const Batch& output_grads) {
  Matrix g = flatten_batch(output_grads, config_.horizon, config_.variables);
  if (layer_inputs_.empty() || g.rows() != layer_inputs_.front().rows()) {
    throw DimensionError("MLP backward: batch size differs from forward");
  }
  for (std::size_t l = sparse_.size(); l-- > 0;) {
    if (l + 1 < sparse_.size()) g = relu_backward(pre_activations_[l], g);
    AffineGrads grads = affine_backward(layer_inputs_[l], weight(l), g);
    weight_grad(l) += grads.grad_w;
    dense_grad(l) += grads.grad_b;
    g = std::move(grads.grad_x);
  }
  return unflatten_batch(g, config_.lookback, config_.variables);
}

std::uint64_t Mlp::flops_per_sample() const {
  std::uint64_t flops = 0;
  for (std::size_t l = 0; l < sparse_.size(); ++l) flops += 2 * active(l);
  return flops;
}

double Mlp::min_relu_margin() const {
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l + 1 < pre_activations_.size(); ++l) {
    if (pre_activations_[l].size() > 0) margin = std::min(margin, pre_activations_[l].cwiseAbs().minCoeff());
  }
  return margin;
}

}  // namespace pals
