#pragma once

#include "pals/controllers.hpp"
#include "pals/data.hpp"
#include "pals/models.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pals {

struct DataSettings {
  std::string path;  // empty: use the synthetic generator
  std::optional<std::string> date_column;
  bool ett_mode = false;
  bool univariate = false;
  SynthSpec synth;
};

struct TrainSettings {
  std::int64_t epochs = 10;
  std::int64_t batch_size = 32;
  double lr = 1e-4;
  std::uint64_t seed = 2021;
  std::int64_t patience = 3;
  std::int64_t val_batches = 0;  // 0: whole validation set
  bool shuffle = false;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DataSettings data;
  ModelConfig model;  // `variables` is filled in from the dataset
  ControllerSettings controller;
  TrainSettings train;

  void validate() const;
};

/// Sets one dotted key (e.g. "controller.gamma") from its text form.
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);

/// All recognised keys in canonical order.
std::vector<std::string> config_keys();

/// Parses the TOML subset used for experiment files: `[section]` headers,
/// `key = value` lines, `#` comments, quoted strings, booleans, numbers and
/// flat arrays such as `[64, 64]`.
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies "key=value" overrides in order.
void apply_overrides(ExperimentConfig& config, const std::vector<std::string>& assignments);

nlohmann::ordered_json to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const nlohmann::json& j);

}  // namespace pals
