#include "pals/sparsity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pals {

LayerMask LayerMask::full(Index rows, Index cols) {
  LayerMask m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.bits_.assign(static_cast<std::size_t>(rows * cols), 1);
  m.active_ = m.bits_.size();
  return m;
}

LayerMask LayerMask::empty(Index rows, Index cols) {
  LayerMask m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.bits_.assign(static_cast<std::size_t>(rows * cols), 0);
  return m;
}

LayerMask LayerMask::from_bits(Index rows, Index cols, std::vector<std::uint8_t> bits) {
  if (bits.size() != static_cast<std::size_t>(rows * cols)) {
    throw std::invalid_argument("mask bit count does not match its shape");
  }
  LayerMask m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.bits_ = std::move(bits);
  for (auto& b : m.bits_) b = b ? 1 : 0;
  m.active_ = m.popcount();
  return m;
}

void LayerMask::set(std::size_t flat) {
  if (!bits_[flat]) {
    bits_[flat] = 1;
    ++active_;
  }
}

void LayerMask::reset(std::size_t flat) {
  if (bits_[flat]) {
    bits_[flat] = 0;
    --active_;
  }
}

std::size_t LayerMask::popcount() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

SparseLayer::SparseLayer(std::string name, Matrix init)
    : weight(std::move(name), std::move(init)), mask(LayerMask::full(weight.value.rows(), weight.value.cols())) {}

std::size_t round_count(double fraction, std::size_t base) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(base)));
}

LayerMask init_mask(Index rows, Index cols, double d_init, Rng& rng) {
  if (!(d_init > 0.0 && d_init <= 1.0)) throw std::invalid_argument("initial density must be in (0, 1]");
  const auto size = static_cast<std::size_t>(rows * cols);
  const std::size_t target = std::clamp<std::size_t>(round_count(d_init, size), 1, size);
  if (target == size) return LayerMask::full(rows, cols);
  std::vector<std::size_t> order(size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  LayerMask mask = LayerMask::empty(rows, cols);
  for (std::size_t i = 0; i < target; ++i) mask.set(order[i]);
  return mask;
}

std::size_t prune_count(SparseLayer& layer, std::size_t k) {
  auto& mask = layer.mask;
  const std::size_t active = mask.active_count();
  k = std::min(k, active > 0 ? active - 1 : 0);
  if (k == 0) return 0;

  const double* w = layer.weight.value.data();
  std::vector<std::size_t> candidates;
  candidates.reserve(active);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.test(i)) candidates.push_back(i);
  }
  const auto smaller = [w](std::size_t a, std::size_t b) {
    const double ma = std::abs(w[a]);
    const double mb = std::abs(w[b]);
    return ma < mb || (ma == mb && a < b);
  };
  std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   candidates.end(), smaller);
  for (std::size_t i = 0; i < k; ++i) {
    mask.reset(candidates[i]);
    layer.weight.value.data()[candidates[i]] = 0.0;
  }
  return k;
}

std::size_t prune_fraction(SparseLayer& layer, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw std::invalid_argument("prune fraction must be in [0, 1)");
  return prune_count(layer, round_count(fraction, layer.mask.active_count()));
}

std::size_t grow_count(SparseLayer& layer, std::size_t k) {
  auto& mask = layer.mask;
  k = std::min(k, mask.inactive_count());
  if (k == 0) return 0;

  const double* g = layer.weight.grad.data();
  std::vector<std::size_t> candidates;
  candidates.reserve(mask.inactive_count());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask.test(i)) candidates.push_back(i);
  }
  const auto larger = [g](std::size_t a, std::size_t b) {
    const double ga = std::abs(g[a]);
    const double gb = std::abs(g[b]);
    return ga > gb || (ga == gb && a < b);
  };
  std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   candidates.end(), larger);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t flat = candidates[i];
    mask.set(flat);
    layer.weight.value.data()[flat] = 0.0;
    layer.weight.first_moment.data()[flat] = 0.0;
    layer.weight.second_moment.data()[flat] = 0.0;
  }
  return k;
}

void apply_mask(SparseLayer& layer) {
  double* w = layer.weight.value.data();
  for (std::size_t i = 0; i < layer.mask.size(); ++i) {
    if (!layer.mask.test(i)) w[i] = 0.0;
  }
}

SparsitySnapshot snapshot(std::span<const SparseLayer> layers) {
  if (layers.empty()) throw std::invalid_argument("sparsity snapshot needs at least one sparsifiable layer");
  SparsitySnapshot snap;
  for (const auto& layer : layers) {
    LayerDensity d{layer.name(), layer.mask.active_count(), layer.mask.size(), layer.mask.density()};
    snap.active += d.active;
    snap.total += d.total;
    snap.per_layer.push_back(std::move(d));
  }
  snap.global_sparsity = 1.0 - static_cast<double>(snap.active) / static_cast<double>(snap.total);
  return snap;
}

}  // namespace pals
