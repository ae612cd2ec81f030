#pragma once

// Central finite-difference checks shared by the unit tests and the
// acceptance runner.

#include "pals/models.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

namespace pals::testing {

inline constexpr double kFdStep = 1e-5;
// Relative errors are taken against max(|analytic|, |numeric|, kRelFloor) so
// entries whose true gradient is ~0 are compared absolutely.
inline constexpr double kRelFloor = 1e-3;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kRelFloor});
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;

  void record(double analytic, double numeric, const std::string& where) {
    const double e = relative_error(analytic, numeric);
    ++checked;
    if (e >= max_rel_error) {
      max_rel_error = e;
      worst = where;
    }
  }
};

inline Matrix random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

/// Checks d<R, f(x)>/d(theta) and d/dx for every parameter entry and every
/// input entry, where R is a fixed random projection of the outputs.
inline GradCheck check_model(ForecastModel& model, Batch inputs, Rng& rng) {
  Batch projection;
  for (const auto& y : model.forward(inputs)) projection.push_back(random_matrix(y.rows(), y.cols(), rng));

  const auto objective = [&]() {
    const Batch out = model.forward(inputs);
    double total = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) total += out[i].cwiseProduct(projection[i]).sum();
    return total;
  };

  model.zero_grad();
  model.forward(inputs);
  const Batch input_grads = model.backward(projection);
  std::vector<Matrix> analytic;
  for (const auto* p : model.parameters()) analytic.push_back(p->grad);

  GradCheck result;
  const auto probe = [&](double& slot, double analytic_value, const std::string& where) {
    const double saved = slot;
    slot = saved + kFdStep;
    const double up = objective();
    slot = saved - kFdStep;
    const double down = objective();
    slot = saved;
    result.record(analytic_value, (up - down) / (2.0 * kFdStep), where);
  };

  const auto params = model.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& value = params[p]->value;
    for (Index j = 0; j < value.size(); ++j) {
      probe(value.data()[j], analytic[p].data()[j], params[p]->name + "[" + std::to_string(j) + "]");
    }
  }
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    for (Index j = 0; j < inputs[b].size(); ++j) {
      probe(inputs[b].data()[j], input_grads[b].data()[j],
            "input" + std::to_string(b) + "[" + std::to_string(j) + "]");
    }
  }
  return result;
}

/// Draws a random small configuration of `kind`.
inline ModelConfig random_small_config(ModelKind kind, Rng& rng) {
  ModelConfig c;
  c.kind = kind;
  c.lookback = 1 + static_cast<Index>(rng.below(6));
  c.horizon = 1 + static_cast<Index>(rng.below(4));
  c.variables = 1 + static_cast<Index>(rng.below(3));
  switch (kind) {
    case ModelKind::dlinear:
      c.moving_avg_kernel = 1 + 2 * static_cast<Index>(rng.below(3));
      break;
    case ModelKind::mlp:
      c.hidden.clear();
      for (std::uint64_t n = rng.below(3); n > 0; --n) c.hidden.push_back(1 + static_cast<Index>(rng.below(6)));
      break;
    case ModelKind::mini_transformer:
      c.d_model = 2 + static_cast<Index>(rng.below(7));
      c.d_ff = 2 + static_cast<Index>(rng.below(7));
      break;
  }
  return c;
}

// A ReLU pre-activation this close to 0 could flip sign under the finite
// difference step.
inline constexpr double kReluMargin = 1e-3;

/// Builds a model for `config` and a batch of random inputs whose ReLU
/// pre-activations all clear kReluMargin; returns false if none was found.
inline bool draw_checkable(const ModelConfig& config, Rng& rng, std::unique_ptr<ForecastModel>& model,
                           Batch& inputs) {
  for (int attempt = 0; attempt < 50; ++attempt) {
    model = make_model(config, rng);
    for (auto* p : model->parameters()) {
      // Non-zero biases and norm parameters so every term is exercised.
      if (p->value.size() > 0) p->value += random_matrix(p->value.rows(), p->value.cols(), rng, 0.1);
    }
    inputs.clear();
    const auto batch = 1 + static_cast<std::size_t>(rng.below(3));
    for (std::size_t b = 0; b < batch; ++b) inputs.push_back(random_matrix(config.lookback, config.variables, rng));
    model->forward(inputs);
    if (model->min_relu_margin() > kReluMargin) return true;
  }
  return false;
}

}  // namespace pals::testing
