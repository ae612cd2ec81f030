#include "pals/models.hpp"

#include <algorithm>
#include <cmath>

namespace pals {

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::dlinear: return "dlinear";
    case ModelKind::mlp: return "mlp";
    case ModelKind::mini_transformer: return "mini_transformer";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "dlinear") return ModelKind::dlinear;
  if (name == "mlp") return ModelKind::mlp;
  if (name == "mini_transformer" || name == "transformer") return ModelKind::mini_transformer;
  throw ConfigError("unknown model '" + name + "' (expected dlinear, mlp or mini_transformer)");
}

void ModelConfig::validate() const {
  if (lookback < 1 || horizon < 1 || variables < 1) throw ConfigError("look-back, horizon and variables must be >= 1");
  if (kind == ModelKind::dlinear && (moving_avg_kernel < 1 || moving_avg_kernel % 2 == 0)) {
    throw ConfigError("moving average kernel must be odd and >= 1");
  }
  if (kind == ModelKind::mini_transformer && (d_model < 1 || d_ff < 1)) throw ConfigError("d_model and d_ff must be >= 1");
  if (std::any_of(hidden.begin(), hidden.end(), [](Index h) { return h < 1; })) {
    throw ConfigError("hidden layer widths must be >= 1");
  }
}

ForecastModel::ForecastModel(ModelConfig config) : config_(std::move(config)) { config_.validate(); }

Matrix uniform_init(Index rows, Index cols, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

std::size_t ForecastModel::add_sparse(std::string name, Index out, Index in, Rng& rng) {
  sparse_.emplace_back(std::move(name), uniform_init(out, in, in, rng));
  return sparse_.size() - 1;
}

std::size_t ForecastModel::add_dense(std::string name, Matrix init) {
  dense_.emplace_back(std::move(name), std::move(init));
  return dense_.size() - 1;
}

std::vector<Parameter*> ForecastModel::parameters() {
  std::vector<Parameter*> out;
  for (auto& s : sparse_) out.push_back(&s.weight);
  for (auto& d : dense_) out.push_back(&d);
  return out;
}

std::vector<const Parameter*> ForecastModel::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& s : sparse_) out.push_back(&s.weight);
  for (const auto& d : dense_) out.push_back(&d);
  return out;
}

Parameter* ForecastModel::find_parameter(const std::string& name) {
  for (auto* p : parameters()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

void ForecastModel::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

void ForecastModel::apply_masks() {
  for (auto& s : sparse_) apply_mask(s);
}

std::unique_ptr<ForecastModel> make_model(const ModelConfig& config, Rng& rng) {
  switch (config.kind) {
    case ModelKind::dlinear: return std::make_unique<DLinear>(config, rng);
    case ModelKind::mlp: return std::make_unique<Mlp>(config, rng);
    case ModelKind::mini_transformer: return std::make_unique<MiniTransformer>(config, rng);
  }
  throw ConfigError("unknown model kind");
}

std::size_t count_params(const ForecastModel& model, bool nonzero_only) {
  std::size_t count = 0;
  for (const auto& s : model.sparse_layers()) count += nonzero_only ? s.mask.active_count() : s.mask.size();
  for (const auto& d : model.dense_parameters()) count += static_cast<std::size_t>(d.value.size());
  return count;
}

std::uint64_t count_flops(const ForecastModel& model, std::size_t n_samples) {
  return model.flops_per_sample() * static_cast<std::uint64_t>(n_samples);
}

Matrix moving_average_operator(Index length, Index kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("moving average kernel must be odd and >= 1");
  const Index half = (kernel - 1) / 2;
  Matrix op = Matrix::Zero(length, length);
  const double w = 1.0 / static_cast<double>(kernel);
  for (Index t = 0; t < length; ++t) {
    for (Index offset = -half; offset <= half; ++offset) {
      const Index src = std::clamp<Index>(t + offset, 0, length - 1);
      op(t, src) += w;
    }
  }
  return op;
}

Decomposition series_decompose(const Matrix& x, Index kernel) {
  const Matrix op = moving_average_operator(x.rows(), kernel);
  Decomposition d;
  d.trend = matmul(op, x);
  d.seasonal = x - d.trend;
  return d;
}

}  // namespace pals
