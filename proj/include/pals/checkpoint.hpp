#pragma once

#include "pals/config.hpp"
#include "pals/data.hpp"
#include "pals/models.hpp"

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace pals {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Matrix value;
};

struct NamedMask {
  std::string name;
  LayerMask mask;
};

/// Everything needed to rebuild a trained model and re-evaluate it: the
/// experiment config, the resolved model config, parameters, masks and the
/// train-segment scaler.
struct Checkpoint {
  ExperimentConfig experiment;
  ModelConfig model;
  std::vector<NamedTensor> parameters;
  std::vector<NamedMask> masks;
  Scaler scaler;
};

Checkpoint capture_checkpoint(const ForecastModel& model, const ExperimentConfig& experiment, const Scaler& scaler);

/// Copies parameters and masks into a model of the same architecture.
void restore_checkpoint(const Checkpoint& checkpoint, ForecastModel& model);

/// Builds a fresh model from the checkpoint's config and restores into it.
std::unique_ptr<ForecastModel> rebuild_model(const Checkpoint& checkpoint);

nlohmann::ordered_json checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Packs mask bits eight to a byte, little-endian within each byte, as hex.
std::string encode_mask_bits(const LayerMask& mask);
LayerMask decode_mask_bits(Index rows, Index cols, const std::string& hex);

}  // namespace pals
