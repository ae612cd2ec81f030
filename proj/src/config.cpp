#include "pals/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace pals {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<Index> to_index_list(const std::string& key, std::string v) {
  if (!v.empty() && v.front() == '[') v = v.substr(1);
  if (!v.empty() && v.back() == ']') v.pop_back();
  std::vector<Index> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(static_cast<Index>(to_int(key, item)));
  }
  return out;
}

struct Entry {
  const char* key;
  std::function<nlohmann::ordered_json(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define PALS_DOUBLE(KEY, FIELD)                                                     \
  Entry{KEY, [](const ExperimentConfig& c) { return nlohmann::ordered_json(c.FIELD); }, \
        [](ExperimentConfig& c, const std::string& v) { c.FIELD = to_double(KEY, v); }}
#define PALS_INT(KEY, FIELD)                                                        \
  Entry{KEY, [](const ExperimentConfig& c) { return nlohmann::ordered_json(c.FIELD); }, \
        [](ExperimentConfig& c, const std::string& v) { c.FIELD = to_int(KEY, v); }}
#define PALS_UINT(KEY, FIELD)                                                       \
  Entry{KEY, [](const ExperimentConfig& c) { return nlohmann::ordered_json(c.FIELD); }, \
        [](ExperimentConfig& c, const std::string& v) { c.FIELD = to_uint(KEY, v); }}
#define PALS_BOOL(KEY, FIELD)                                                       \
  Entry{KEY, [](const ExperimentConfig& c) { return nlohmann::ordered_json(c.FIELD); }, \
        [](ExperimentConfig& c, const std::string& v) { c.FIELD = to_bool(KEY, v); }}
#define PALS_STRING(KEY, FIELD)                                                     \
  Entry{KEY, [](const ExperimentConfig& c) { return nlohmann::ordered_json(c.FIELD); }, \
        [](ExperimentConfig& c, const std::string& v) { c.FIELD = v; }}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      PALS_STRING("name", name),
      PALS_STRING("data.path", data.path),
      Entry{"data.date_column",
            [](const ExperimentConfig& c) {
              return c.data.date_column ? nlohmann::ordered_json(*c.data.date_column) : nlohmann::ordered_json(nullptr);
            },
            [](ExperimentConfig& c, const std::string& v) {
              if (v.empty()) c.data.date_column.reset();
              else c.data.date_column = v;
            }},
      PALS_BOOL("data.ett_mode", data.ett_mode),
      PALS_BOOL("data.univariate", data.univariate),
      PALS_UINT("synth.seed", data.synth.seed),
      PALS_INT("synth.length", data.synth.length),
      PALS_INT("synth.variables", data.synth.variables),
      PALS_DOUBLE("synth.period", data.synth.period),
      PALS_DOUBLE("synth.trend_slope", data.synth.trend_slope),
      PALS_DOUBLE("synth.noise_std", data.synth.noise_std),
      Entry{"model.kind", [](const ExperimentConfig& c) { return nlohmann::ordered_json(to_string(c.model.kind)); },
            [](ExperimentConfig& c, const std::string& v) { c.model.kind = model_kind_from_string(v); }},
      PALS_INT("model.lookback", model.lookback),
      PALS_INT("model.horizon", model.horizon),
      Entry{"model.hidden", [](const ExperimentConfig& c) { return nlohmann::ordered_json(c.model.hidden); },
            [](ExperimentConfig& c, const std::string& v) { c.model.hidden = to_index_list("model.hidden", v); }},
      PALS_INT("model.d_model", model.d_model),
      PALS_INT("model.d_ff", model.d_ff),
      PALS_INT("model.moving_avg_kernel", model.moving_avg_kernel),
      Entry{"controller.kind",
            [](const ExperimentConfig& c) { return nlohmann::ordered_json(to_string(c.controller.kind)); },
            [](ExperimentConfig& c, const std::string& v) { c.controller.kind = controller_kind_from_string(v); }},
      PALS_DOUBLE("controller.gamma", controller.pals.gamma),
      PALS_DOUBLE("controller.lambda", controller.pals.lambda),
      PALS_DOUBLE("controller.zeta0", controller.pals.zeta0),
      PALS_INT("controller.delta_t", controller.pals.delta_t),
      PALS_DOUBLE("controller.s_min", controller.pals.s_min),
      PALS_DOUBLE("controller.s_max", controller.pals.s_max),
      PALS_DOUBLE("controller.d_init", controller.pals.d_init),
      PALS_DOUBLE("controller.target_sparsity", controller.target_sparsity),
      PALS_DOUBLE("controller.ramp_fraction", controller.ramp_fraction),
      PALS_INT("train.epochs", train.epochs),
      PALS_INT("train.batch_size", train.batch_size),
      PALS_DOUBLE("train.lr", train.lr),
      PALS_UINT("train.seed", train.seed),
      PALS_INT("train.patience", train.patience),
      PALS_INT("train.val_batches", train.val_batches),
      PALS_BOOL("train.shuffle", train.shuffle),
  };
  return table;
}

#undef PALS_DOUBLE
#undef PALS_INT
#undef PALS_UINT
#undef PALS_BOOL
#undef PALS_STRING

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (train.epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(train.lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
  if (train.patience < 1) throw ConfigError("train.patience must be >= 1");
  if (train.val_batches < 0) throw ConfigError("train.val_batches must be >= 0");
  if (controller.pals.delta_t < 1) throw ConfigError("controller.delta_t must be >= 1");
  if (controller.kind == ControllerKind::pals) controller.pals.validate();
  if (!(controller.ramp_fraction > 0.0 && controller.ramp_fraction <= 1.0)) {
    throw ConfigError("controller.ramp_fraction must be in (0, 1]");
  }
  ModelConfig probe = model;
  probe.variables = std::max<Index>(probe.variables, 1);
  probe.validate();
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  for (const auto& e : entries()) {
    if (key == e.key) {
      e.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : entries()) keys.emplace_back(e.key);
  return keys;
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = unquote(trim(line.substr(eq + 1)));
    set_config_value(base, section.empty() ? key : section + "." + key, value);
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

void apply_overrides(ExperimentConfig& config, const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + a + "' is not of the form key=value");
    set_config_value(config, trim(a.substr(0, eq)), unquote(trim(a.substr(eq + 1))));
  }
}

nlohmann::ordered_json to_json(const ExperimentConfig& config) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& e : entries()) j[e.key] = e.get(config);
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig config;
  for (const auto& e : entries()) {
    if (!j.contains(e.key)) continue;
    const auto& v = j.at(e.key);
    if (v.is_null()) continue;
    if (v.is_string()) {
      e.set(config, v.get<std::string>());
    } else if (v.is_array()) {
      std::string joined;
      for (const auto& item : v) joined += (joined.empty() ? "" : ",") + item.dump();
      e.set(config, joined);
    } else {
      e.set(config, v.dump());
    }
  }
  return config;
}

}  // namespace pals
