#pragma once

#include "pals/sparsity.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

namespace pals {

// ---------------------------------------------------------------------------
// Schedules

/// Cosine-decayed exchange rate: (zeta0 / 2) * (1 + cos(pi * t / t_max)).
double cosine_zeta(std::int64_t t, std::int64_t t_max, double zeta0);

/// Cubic gradual-pruning target: s_f + (s_i - s_f) * (1 - (t - t0) / (tf - t0))^3.
/// t is clamped to [t0, tf].
double gmp_target(std::int64_t t, std::int64_t t0, std::int64_t tf, double s_initial, double s_final);

// ---------------------------------------------------------------------------
// PALS

struct PalsConfig {
  double gamma = 1.1;   // pruning rate factor, > 1
  double lambda = 1.1;  // loss freedom factor, > 1
  double zeta0 = 0.5;   // initial exchange rate
  std::int64_t delta_t = 20;
  double s_min = 0.2;
  double s_max = 0.9;
  double d_init = 1.0;

  void validate() const;
};

struct ControllerState {
  double l_best = std::numeric_limits<double>::infinity();
  double s_best = 0.0;
  double current_s = 0.0;
  std::int64_t t = 0;
  std::int64_t t_max = 1;
};

enum class DecisionKind { shrink, expand, stable };

const char* to_string(DecisionKind kind);

struct Decision {
  DecisionKind kind = DecisionKind::stable;
  double zeta_prune = 0.0;
  double zeta_grow = 0.0;
};

/// Chooses Shrink / Expand / Stable from the validation loss and the current
/// sparsity, then records a new best loss (and the sparsity it was reached
/// at) if `l_valid` improves on it. The exchange rate is the cosine schedule
/// evaluated at state.t.
Decision pals_decide(double l_valid, ControllerState& state, const PalsConfig& config);

/// Prunes zeta_prune of each layer's active weights by magnitude, then grows
/// round(zeta_grow * active_before) by gradient, and stores the resulting
/// global sparsity in state.current_s.
SparsitySnapshot pals_apply(const Decision& decision, std::span<SparseLayer> layers, ControllerState& state);

// ---------------------------------------------------------------------------
// Baselines

/// Magnitude-prunes each layer down to round((1 - s_t) * size) active
/// weights. Never grows.
SparsitySnapshot gmp_step(std::span<SparseLayer> layers, double s_t);

/// gmp_step, then per layer drops zeta of the remaining active weights by
/// magnitude and regrows the same number by gradient.
SparsitySnapshot granet_step(std::span<SparseLayer> layers, double s_t, double zeta);

/// Count-neutral magnitude drop / gradient grow at fixed sparsity.
SparsitySnapshot rigl_step(std::span<SparseLayer> layers, double zeta);

// ---------------------------------------------------------------------------
// Controllers driven by the training loop

enum class ControllerKind { dense, pals, gmp, granet, rigl };

const char* to_string(ControllerKind kind);
ControllerKind controller_kind_from_string(const std::string& name);

struct ControllerSettings {
  ControllerKind kind = ControllerKind::pals;
  PalsConfig pals;
  /// Final sparsity for GMP / GraNet and the fixed sparsity for RigL.
  double target_sparsity = 0.5;
  /// End of the gradual-pruning ramp as a fraction of t_max.
  double ramp_fraction = 0.5;
};

/// One mask-update step, as written to trace.jsonl.
struct TraceRecord {
  std::int64_t iteration = 0;
  std::string decision;
  double zeta_prune = 0.0;
  double zeta_grow = 0.0;
  double s_before = 0.0;
  double s_after = 0.0;
  std::optional<double> l_valid;
  std::optional<double> l_best;
};

class SparsityController {
 public:
  virtual ~SparsityController() = default;

  virtual ControllerKind kind() const = 0;
  /// Sets up the initial masks (dense, D_init, or fixed RigL sparsity).
  virtual void initialize(std::span<SparseLayer> layers, Rng& rng) = 0;
  /// Called after optimizer step t (1-based). Returns a trace record when t is
  /// a mask-update step.
  std::optional<TraceRecord> on_step(std::int64_t t, std::span<SparseLayer> layers,
                                     const std::function<double()>& validation_loss);

  std::int64_t delta_t() const { return delta_t_; }

 protected:
  SparsityController(std::int64_t delta_t, std::int64_t t_max);
  virtual TraceRecord update(std::int64_t t, std::span<SparseLayer> layers,
                             const std::function<double()>& validation_loss) = 0;

  std::int64_t delta_t_;
  std::int64_t t_max_;
};

class PalsController final : public SparsityController {
 public:
  PalsController(PalsConfig config, std::int64_t t_max);
  ControllerKind kind() const override { return ControllerKind::pals; }
  void initialize(std::span<SparseLayer> layers, Rng& rng) override;
  const ControllerState& state() const { return state_; }

 protected:
  TraceRecord update(std::int64_t t, std::span<SparseLayer> layers,
                     const std::function<double()>& validation_loss) override;

 private:
  PalsConfig config_;
  ControllerState state_;
};

std::unique_ptr<SparsityController> make_controller(const ControllerSettings& settings, std::int64_t t_max);

}  // namespace pals
