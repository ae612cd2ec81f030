#include "pals/checkpoint.hpp"

#include <fstream>
#include <sstream>

namespace pals {

namespace {

nlohmann::ordered_json matrix_to_json(const std::string& name, const Matrix& m) {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = std::vector<double>(m.data(), m.data() + m.size());
  return j;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Index>(data.size()) != rows * cols) {
    throw CheckpointError("tensor '" + j.at("name").get<std::string>() + "' has the wrong element count");
  }
  return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

nlohmann::ordered_json model_config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(c.kind);
  j["lookback"] = c.lookback;
  j["horizon"] = c.horizon;
  j["variables"] = c.variables;
  j["hidden"] = c.hidden;
  j["d_model"] = c.d_model;
  j["d_ff"] = c.d_ff;
  j["moving_avg_kernel"] = c.moving_avg_kernel;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.kind = model_kind_from_string(j.at("kind").get<std::string>());
  c.lookback = j.at("lookback").get<Index>();
  c.horizon = j.at("horizon").get<Index>();
  c.variables = j.at("variables").get<Index>();
  c.hidden = j.at("hidden").get<std::vector<Index>>();
  c.d_model = j.at("d_model").get<Index>();
  c.d_ff = j.at("d_ff").get<Index>();
  c.moving_avg_kernel = j.at("moving_avg_kernel").get<Index>();
  return c;
}

}  // namespace

std::string encode_mask_bits(const LayerMask& mask) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve((mask.size() + 7) / 8 * 2);
  for (std::size_t byte_start = 0; byte_start < mask.size(); byte_start += 8) {
    unsigned byte = 0;
    for (std::size_t bit = 0; bit < 8 && byte_start + bit < mask.size(); ++bit) {
      if (mask.test(byte_start + bit)) byte |= 1u << bit;
    }
    out.push_back(kHex[byte >> 4]);
    out.push_back(kHex[byte & 0xF]);
  }
  return out;
}

LayerMask decode_mask_bits(Index rows, Index cols, const std::string& hex) {
  const auto size = static_cast<std::size_t>(rows * cols);
  if (hex.size() != (size + 7) / 8 * 2) throw CheckpointError("mask bitset length does not match its shape");
  const auto nibble = [](char c) -> unsigned {
    if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
    throw CheckpointError("mask bitset contains a non-hex character");
  };
  std::vector<std::uint8_t> bits(size, 0);
  for (std::size_t i = 0; i < size; ++i) {
    const unsigned byte = nibble(hex[i / 8 * 2]) << 4 | nibble(hex[i / 8 * 2 + 1]);
    bits[i] = (byte >> (i % 8)) & 1u;
  }
  return LayerMask::from_bits(rows, cols, std::move(bits));
}

Checkpoint capture_checkpoint(const ForecastModel& model, const ExperimentConfig& experiment, const Scaler& scaler) {
  Checkpoint c;
  c.experiment = experiment;
  c.model = model.config();
  for (const auto* p : model.parameters()) c.parameters.push_back({p->name, p->value});
  for (const auto& s : model.sparse_layers()) c.masks.push_back({s.name(), s.mask});
  c.scaler = scaler;
  return c;
}

void restore_checkpoint(const Checkpoint& checkpoint, ForecastModel& model) {
  auto params = model.parameters();
  if (params.size() != checkpoint.parameters.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(checkpoint.parameters.size()) +
                          " parameters, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& saved = checkpoint.parameters[i];
    auto& p = *params[i];
    if (p.name != saved.name || p.value.rows() != saved.value.rows() || p.value.cols() != saved.value.cols()) {
      throw CheckpointError("checkpoint tensor '" + saved.name + "' is incompatible with model tensor '" + p.name + "'");
    }
    p.value = saved.value;
    p.reset_moments();
    p.zero_grad();
  }
  auto layers = model.sparse_layers();
  if (layers.size() != checkpoint.masks.size()) throw CheckpointError("checkpoint mask count does not match the model");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& saved = checkpoint.masks[i];
    if (layers[i].name() != saved.name || layers[i].mask.rows() != saved.mask.rows() ||
        layers[i].mask.cols() != saved.mask.cols()) {
      throw CheckpointError("checkpoint mask '" + saved.name + "' is incompatible with the model");
    }
    layers[i].mask = saved.mask;
  }
}

std::unique_ptr<ForecastModel> rebuild_model(const Checkpoint& checkpoint) {
  Rng rng(0);
  auto model = make_model(checkpoint.model, rng);
  restore_checkpoint(checkpoint, *model);
  return model;
}

nlohmann::ordered_json checkpoint_to_json(const Checkpoint& c) {
  nlohmann::ordered_json j;
  j["format"] = "pals-checkpoint";
  j["version"] = kCheckpointVersion;
  j["experiment"] = to_json(c.experiment);
  j["model"] = model_config_to_json(c.model);
  j["scaler"] = {{"mean", std::vector<double>(c.scaler.mean.data(), c.scaler.mean.data() + c.scaler.mean.size())},
                 {"std", std::vector<double>(c.scaler.std.data(), c.scaler.std.data() + c.scaler.std.size())}};
  auto& params = j["parameters"] = nlohmann::ordered_json::array();
  for (const auto& p : c.parameters) params.push_back(matrix_to_json(p.name, p.value));
  auto& masks = j["masks"] = nlohmann::ordered_json::array();
  for (const auto& m : c.masks) {
    masks.push_back({{"name", m.name}, {"rows", m.mask.rows()}, {"cols", m.mask.cols()}, {"bits", encode_mask_bits(m.mask)}});
  }
  return j;
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "pals-checkpoint") throw CheckpointError("not a checkpoint file");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint c;
    c.experiment = config_from_json(j.at("experiment"));
    c.model = model_config_from_json(j.at("model"));
    const auto mean = j.at("scaler").at("mean").get<std::vector<double>>();
    const auto std_dev = j.at("scaler").at("std").get<std::vector<double>>();
    c.scaler.mean = Eigen::Map<const RowVector>(mean.data(), static_cast<Index>(mean.size()));
    c.scaler.std = Eigen::Map<const RowVector>(std_dev.data(), static_cast<Index>(std_dev.size()));
    for (const auto& p : j.at("parameters")) c.parameters.push_back({p.at("name").get<std::string>(), matrix_from_json(p)});
    for (const auto& m : j.at("masks")) {
      c.masks.push_back({m.at("name").get<std::string>(),
                         decode_mask_bits(m.at("rows").get<Index>(), m.at("cols").get<Index>(), m.at("bits").get<std::string>())});
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(checkpoint).dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace pals
