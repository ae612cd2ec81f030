#include "pals/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pals {

double cosine_zeta(std::int64_t t, std::int64_t t_max, double zeta0) {
  if (t_max <= 0) throw ConfigError("cosine schedule needs t_max > 0");
  const double progress = static_cast<double>(std::clamp<std::int64_t>(t, 0, t_max)) / static_cast<double>(t_max);
  return 0.5 * zeta0 * (1.0 + std::cos(std::numbers::pi * progress));
}

double gmp_target(std::int64_t t, std::int64_t t0, std::int64_t tf, double s_initial, double s_final) {
  if (tf <= t0) throw ConfigError("gradual pruning schedule needs tf > t0");
  const double progress =
      static_cast<double>(std::clamp(t, t0, tf) - t0) / static_cast<double>(tf - t0);
  const double remaining = 1.0 - progress;
  return s_final + (s_initial - s_final) * remaining * remaining * remaining;
}

void PalsConfig::validate() const {
  if (!(gamma > 1.0)) throw ConfigError("PALS gamma must be > 1");
  if (!(lambda > 1.0)) throw ConfigError("PALS lambda must be > 1");
  if (!(zeta0 > 0.0 && zeta0 <= 1.0)) throw ConfigError("PALS zeta0 must be in (0, 1]");
  if (delta_t < 1) throw ConfigError("mask update interval delta_t must be >= 1");
  if (!(s_min >= 0.0 && s_min < s_max && s_max <= 1.0)) throw ConfigError("need 0 <= s_min < s_max <= 1");
  if (!(d_init > 0.0 && d_init <= 1.0)) throw ConfigError("d_init must be in (0, 1]");
}

const char* to_string(DecisionKind kind) {
  switch (kind) {
    case DecisionKind::shrink: return "shrink";
    case DecisionKind::expand: return "expand";
    case DecisionKind::stable: return "stable";
  }
  return "?";
}

Decision pals_decide(double l_valid, ControllerState& state, const PalsConfig& config) {
  const double zeta = cosine_zeta(state.t, state.t_max, config.zeta0);
  const double s = state.current_s;
  const double tolerated = config.lambda * state.l_best;

  Decision d;
  if (s < config.s_min || (l_valid <= tolerated && s < config.s_max)) {
    d = {DecisionKind::shrink, config.gamma * zeta, zeta};
  } else if (l_valid > tolerated && s > state.s_best) {
    d = {DecisionKind::expand, zeta, config.gamma * zeta};
  } else {
    d = {DecisionKind::stable, zeta, zeta};
  }

  if (l_valid < state.l_best) {
    state.l_best = l_valid;
    state.s_best = s;
  }
  return d;
}

SparsitySnapshot pals_apply(const Decision& decision, std::span<SparseLayer> layers, ControllerState& state) {
  for (auto& layer : layers) {
    const std::size_t active_before = layer.mask.active_count();
    const std::size_t requested = round_count(std::min(decision.zeta_prune, 1.0), active_before);
    const std::size_t pruned = prune_count(layer, requested);
    // Whatever the keep-one clamp withheld from pruning is withheld from
    // growth too, so equal rates stay count-neutral.
    const std::size_t shortfall = requested - pruned;
    const std::size_t grow = round_count(decision.zeta_grow, active_before);
    grow_count(layer, grow > shortfall ? grow - shortfall : 0);
  }
  auto snap = snapshot(layers);
  state.current_s = snap.global_sparsity;
  return snap;
}

namespace {

std::size_t target_active(const SparseLayer& layer, double sparsity) {
  return std::clamp<std::size_t>(round_count(1.0 - sparsity, layer.mask.size()), 1, layer.mask.size());
}

void regenerate(SparseLayer& layer, double zeta) {
  const std::size_t dropped = prune_count(layer, round_count(std::clamp(zeta, 0.0, 1.0), layer.mask.active_count()));
  grow_count(layer, dropped);
}

}  // namespace

SparsitySnapshot gmp_step(std::span<SparseLayer> layers, double s_t) {
  for (auto& layer : layers) {
    const std::size_t target = target_active(layer, s_t);
    const std::size_t active = layer.mask.active_count();
    if (active > target) prune_count(layer, active - target);
  }
  return snapshot(layers);
}

SparsitySnapshot granet_step(std::span<SparseLayer> layers, double s_t, double zeta) {
  gmp_step(layers, s_t);
  for (auto& layer : layers) regenerate(layer, zeta);
  return snapshot(layers);
}

SparsitySnapshot rigl_step(std::span<SparseLayer> layers, double zeta) {
  for (auto& layer : layers) regenerate(layer, zeta);
  return snapshot(layers);
}

const char* to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::dense: return "dense";
    case ControllerKind::pals: return "pals";
    case ControllerKind::gmp: return "gmp";
    case ControllerKind::granet: return "granet";
    case ControllerKind::rigl: return "rigl";
  }
  return "?";
}

ControllerKind controller_kind_from_string(const std::string& name) {
  if (name == "dense") return ControllerKind::dense;
  if (name == "pals") return ControllerKind::pals;
  if (name == "gmp") return ControllerKind::gmp;
  if (name == "granet") return ControllerKind::granet;
  if (name == "rigl") return ControllerKind::rigl;
  throw ConfigError("unknown controller '" + name + "' (expected dense, pals, gmp, granet or rigl)");
}

SparsityController::SparsityController(std::int64_t delta_t, std::int64_t t_max)
    : delta_t_(delta_t), t_max_(t_max) {
  if (delta_t_ < 1) throw ConfigError("mask update interval must be >= 1");
  if (t_max_ < 1) throw ConfigError("t_max must be >= 1");
}

std::optional<TraceRecord> SparsityController::on_step(std::int64_t t, std::span<SparseLayer> layers,
                                                       const std::function<double()>& validation_loss) {
  if (t <= 0 || t % delta_t_ != 0) return std::nullopt;
  return update(t, layers, validation_loss);
}

PalsController::PalsController(PalsConfig config, std::int64_t t_max)
    : SparsityController(config.delta_t, t_max), config_(config) {
  config_.validate();
  state_.t_max = t_max;
}

void PalsController::initialize(std::span<SparseLayer> layers, Rng& rng) {
  for (auto& layer : layers) {
    layer.mask = init_mask(layer.weight.value.rows(), layer.weight.value.cols(), config_.d_init, rng);
    apply_mask(layer);
  }
  state_.current_s = snapshot(layers).global_sparsity;
}

TraceRecord PalsController::update(std::int64_t t, std::span<SparseLayer> layers,
                                   const std::function<double()>& validation_loss) {
  state_.t = t;
  const double l_valid = validation_loss();
  const double s_before = state_.current_s;
  const Decision decision = pals_decide(l_valid, state_, config_);
  pals_apply(decision, layers, state_);
  return {t, to_string(decision.kind), decision.zeta_prune, decision.zeta_grow, s_before, state_.current_s,
          l_valid, state_.l_best};
}

namespace {

class DenseController final : public SparsityController {
 public:
  DenseController(std::int64_t delta_t, std::int64_t t_max) : SparsityController(delta_t, t_max) {}
  ControllerKind kind() const override { return ControllerKind::dense; }
  void initialize(std::span<SparseLayer>, Rng&) override {}

 protected:
  TraceRecord update(std::int64_t t, std::span<SparseLayer> layers, const std::function<double()>&) override {
    const double s = snapshot(layers).global_sparsity;
    return {t, "none", 0.0, 0.0, s, s, std::nullopt, std::nullopt};
  }
};

class GradualController final : public SparsityController {
 public:
  GradualController(const ControllerSettings& settings, std::int64_t t_max)
      : SparsityController(settings.pals.delta_t, t_max), settings_(settings) {
    if (!(settings.target_sparsity >= 0.0 && settings.target_sparsity < 1.0)) {
      throw ConfigError("target sparsity must be in [0, 1)");
    }
    tf_ = std::max<std::int64_t>(1, std::llround(settings.ramp_fraction * static_cast<double>(t_max)));
  }
  ControllerKind kind() const override { return settings_.kind; }
  void initialize(std::span<SparseLayer>, Rng&) override {}

 protected:
  TraceRecord update(std::int64_t t, std::span<SparseLayer> layers, const std::function<double()>&) override {
    const double s_before = snapshot(layers).global_sparsity;
    const double s_t = gmp_target(t, 0, tf_, 0.0, settings_.target_sparsity);
    if (settings_.kind == ControllerKind::gmp) {
      const double s_after = gmp_step(layers, s_t).global_sparsity;
      return {t, "gmp", 0.0, 0.0, s_before, s_after, std::nullopt, std::nullopt};
    }
    const double zeta = cosine_zeta(t, t_max_, settings_.pals.zeta0);
    const double s_after = granet_step(layers, s_t, zeta).global_sparsity;
    return {t, "granet", zeta, zeta, s_before, s_after, std::nullopt, std::nullopt};
  }

 private:
  ControllerSettings settings_;
  std::int64_t tf_ = 1;
};

class RiglController final : public SparsityController {
 public:
  RiglController(const ControllerSettings& settings, std::int64_t t_max)
      : SparsityController(settings.pals.delta_t, t_max), settings_(settings) {
    if (!(settings.target_sparsity >= 0.0 && settings.target_sparsity < 1.0)) {
      throw ConfigError("target sparsity must be in [0, 1)");
    }
  }
  ControllerKind kind() const override { return ControllerKind::rigl; }
  void initialize(std::span<SparseLayer> layers, Rng& rng) override {
    for (auto& layer : layers) {
      layer.mask = init_mask(layer.weight.value.rows(), layer.weight.value.cols(),
                             1.0 - settings_.target_sparsity, rng);
      apply_mask(layer);
    }
  }

 protected:
  TraceRecord update(std::int64_t t, std::span<SparseLayer> layers, const std::function<double()>&) override {
    const double s_before = snapshot(layers).global_sparsity;
    const double zeta = cosine_zeta(t, t_max_, settings_.pals.zeta0);
    const double s_after = rigl_step(layers, zeta).global_sparsity;
    return {t, "rigl", zeta, zeta, s_before, s_after, std::nullopt, std::nullopt};
  }

 private:
  ControllerSettings settings_;
};

}  // namespace

std::unique_ptr<SparsityController> make_controller(const ControllerSettings& settings, std::int64_t t_max) {
  switch (settings.kind) {
    case ControllerKind::dense: return std::make_unique<DenseController>(settings.pals.delta_t, t_max);
    case ControllerKind::pals: return std::make_unique<PalsController>(settings.pals, t_max);
    case ControllerKind::gmp:
    case ControllerKind::granet: return std::make_unique<GradualController>(settings, t_max);
    case ControllerKind::rigl: return std::make_unique<RiglController>(settings, t_max);
  }
  throw ConfigError("unknown controller kind");
}

}  // namespace pals
