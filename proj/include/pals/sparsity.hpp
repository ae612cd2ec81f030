#pragma once

#include "pals/numerics.hpp"
#include "pals/rng.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pals {

/// Binary mask over a weight matrix, flat row-major indexing.
class LayerMask {
 public:
  LayerMask() = default;
  static LayerMask full(Index rows, Index cols);
  static LayerMask empty(Index rows, Index cols);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  std::size_t size() const { return bits_.size(); }
  std::size_t active_count() const { return active_; }
  std::size_t inactive_count() const { return bits_.size() - active_; }
  double density() const { return bits_.empty() ? 0.0 : static_cast<double>(active_) / static_cast<double>(bits_.size()); }

  bool test(std::size_t flat) const { return bits_[flat] != 0; }
  void set(std::size_t flat);
  void reset(std::size_t flat);

  /// Recount from the bits; equal to active_count() whenever the class is used correctly.
  std::size_t popcount() const;
  const std::vector<std::uint8_t>& bits() const { return bits_; }
  static LayerMask from_bits(Index rows, Index cols, std::vector<std::uint8_t> bits);

  bool operator==(const LayerMask&) const = default;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<std::uint8_t> bits_;
  std::size_t active_ = 0;
};

/// A sparsifiable weight matrix. `weight.grad` holds the dense gradient of the
/// most recent backward pass, including at masked positions; that is the
/// signal gradient-based growth ranks on.
struct SparseLayer {
  Parameter weight;
  LayerMask mask;

  SparseLayer() = default;
  SparseLayer(std::string name, Matrix init);

  const std::string& name() const { return weight.name; }
  const Matrix& last_grad() const { return weight.grad; }
};

/// Exactly round(d_init * size) random bits set, at least one.
LayerMask init_mask(Index rows, Index cols, double d_init, Rng& rng);

/// k rounded half away from zero.
std::size_t round_count(double fraction, std::size_t base);

/// Masks out the k active weights of smallest magnitude (ties: lowest flat
/// index first) and zeroes them. k is clamped so one weight always survives.
/// Returns the number pruned.
std::size_t prune_count(SparseLayer& layer, std::size_t k);

/// prune_count with k = round(fraction * active_count).
std::size_t prune_fraction(SparseLayer& layer, double fraction);

/// Activates the min(k, inactive) inactive positions with the largest |grad|
/// (ties: lowest flat index). New weights and their Adam moments start at 0.
std::size_t grow_count(SparseLayer& layer, std::size_t k);

/// Zeroes every masked-out weight. Idempotent.
void apply_mask(SparseLayer& layer);

struct LayerDensity {
  std::string name;
  std::size_t active = 0;
  std::size_t total = 0;
  double density = 0.0;
};

struct SparsitySnapshot {
  double global_sparsity = 0.0;
  std::size_t active = 0;
  std::size_t total = 0;
  std::vector<LayerDensity> per_layer;
};

SparsitySnapshot snapshot(std::span<const SparseLayer> layers);

}  // namespace pals
