#include "pals/data.hpp"

#include "pals/rng.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace pals {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

bool parse_double(std::string_view text, double& out) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc{} && ptr == end && std::isfinite(out);
}

Index floor_share(double ratio, Index length) {
  // The epsilon keeps exact products such as 0.7 * 10 from landing one below.
  return static_cast<Index>(std::floor(ratio * static_cast<double>(length) + 1e-9));
}

}  // namespace

RawSeries load_csv(const std::filesystem::path& path, const std::optional<std::string>& date_column) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty series: " + path.string() + " has no header");
  const auto header = split_fields(line);

  std::optional<std::size_t> date_index;
  if (date_column) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == *date_column) date_index = c;
    }
    if (!date_index) throw DataError("date column '" + *date_column + "' not found in " + path.string());
  } else if (!header.empty() && header.front() == "date") {
    date_index = 0;
  }

  RawSeries series;
  series.name = path.stem().string();
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (date_index && c == *date_index) continue;
    series.columns.emplace_back(header[c]);
  }
  const auto m = static_cast<Index>(series.columns.size());
  if (m == 0) throw DataError("no numeric columns in " + path.string());

  std::vector<double> cells;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      std::ostringstream msg;
      msg << path.string() << ": ragged row " << row << " has " << fields.size() << " fields, expected "
          << header.size();
      throw DataError(msg.str());
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (date_index && c == *date_index) {
        series.timestamps.emplace_back(fields[c]);
        continue;
      }
      double value = 0.0;
      if (!parse_double(fields[c], value)) {
        std::ostringstream msg;
        msg << path.string() << ": non-numeric cell '" << fields[c] << "' at row " << row << ", column "
            << (c + 1) << " (" << header[c] << ")";
        throw DataError(msg.str());
      }
      cells.push_back(value);
    }
  }
  if (cells.empty()) throw DataError("empty series: " + path.string() + " has a header but no rows");

  const auto rows = static_cast<Index>(cells.size()) / m;
  series.values = Eigen::Map<const Matrix>(cells.data(), rows, m);
  return series;
}

void write_csv(const RawSeries& series, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  const bool dated = !series.timestamps.empty();
  if (dated) out << "date,";
  for (std::size_t c = 0; c < series.columns.size(); ++c) out << (c ? "," : "") << series.columns[c];
  out << '\n' << std::setprecision(17);
  for (Index t = 0; t < series.length(); ++t) {
    if (dated) out << series.timestamps[static_cast<std::size_t>(t)] << ',';
    for (Index j = 0; j < series.variables(); ++j) out << (j ? "," : "") << series.values(t, j);
    out << '\n';
  }
}

RawSeries to_univariate(const RawSeries& series) {
  RawSeries uni;
  uni.name = series.name;
  uni.columns = {series.columns.back()};
  uni.timestamps = series.timestamps;
  uni.values = series.values.rightCols(1);
  return uni;
}

void SplitSpec::validate() const {
  if (!(train_ratio > 0.0) || !(test_ratio > 0.0) || !(train_ratio + test_ratio < 1.0)) {
    throw DataError("split ratios must be positive with train + test < 1");
  }
}

SegmentRanges chronological_split(Index length, const SplitSpec& spec,
                                  const std::optional<WindowShape>& window) {
  spec.validate();
  const Index n_train = floor_share(spec.train_ratio, length);
  const Index n_test = floor_share(spec.test_ratio, length);
  const Index n_val = length - n_train - n_test;
  SegmentRanges ranges{{0, n_train}, {n_train, n_train + n_val}, {n_train + n_val, length}};
  if (window) {
    const Index need = window->lookback + window->horizon;
    for (const auto* r : {&ranges.train, &ranges.val, &ranges.test}) {
      if (r->size() < need) {
        std::ostringstream msg;
        msg << "segment too short: " << r->size() << " points, need at least " << need
            << " for look-back " << window->lookback << " and horizon " << window->horizon;
        throw DataError(msg.str());
      }
    }
  }
  return ranges;
}

Matrix Scaler::transform(const Matrix& values) const {
  if (values.cols() != mean.size()) detail::throw_shape("Scaler::transform", values.rows(), values.cols(), 1, mean.size());
  return ((values.rowwise() - mean).array().rowwise() / std.array()).matrix();
}

Matrix Scaler::inverse_transform(const Matrix& values) const {
  if (values.cols() != mean.size()) detail::throw_shape("Scaler::inverse_transform", values.rows(), values.cols(), 1, mean.size());
  Matrix out = (values.array().rowwise() * std.array()).matrix();
  out.rowwise() += mean;
  return out;
}

Scaler fit_scaler(const Matrix& values, IndexRange train) {
  if (train.size() <= 0 || train.end > values.rows()) throw DataError("scaler needs a nonempty train range");
  const auto block = values.middleRows(train.begin, train.size());
  const auto n = static_cast<double>(train.size());
  Scaler s;
  s.mean = block.colwise().sum() / n;
  s.std.resize(values.cols());
  for (Index j = 0; j < values.cols(); ++j) {
    const double var = (block.col(j).array() - s.mean(j)).square().sum() / n;
    const double sd = std::sqrt(var);
    s.std(j) = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

Standardized standardize(const RawSeries& series, IndexRange train) {
  Standardized out;
  out.scaler = fit_scaler(series.values, train);
  out.values = out.scaler.transform(series.values);
  return out;
}

const char* to_string(Segment segment) {
  switch (segment) {
    case Segment::train: return "train";
    case Segment::val: return "val";
    case Segment::test: return "test";
  }
  return "?";
}

Segment segment_from_string(const std::string& name) {
  if (name == "train") return Segment::train;
  if (name == "val") return Segment::val;
  if (name == "test") return Segment::test;
  throw DataError("unknown segment '" + name + "' (expected train, val or test)");
}

WindowedDataset::WindowedDataset(std::shared_ptr<const Matrix> series, Segment segment, IndexRange range,
                                 Index lookback, Index horizon, Scaler scaler)
    : series_(std::move(series)),
      segment_(segment),
      range_(range),
      lookback_(lookback),
      horizon_(horizon),
      scaler_(std::move(scaler)) {
  if (lookback_ < 1 || horizon_ < 1) throw DataError("look-back and horizon must be at least 1");
  if (range_.begin < 0 || range_.end > series_->rows() || range_.begin > range_.end) {
    throw DataError("window range outside the series");
  }
  const Index first = segment_ == Segment::train ? range_.begin + lookback_ : std::max(range_.begin, lookback_);
  for (Index start = first; start + horizon_ <= range_.end; ++start) target_starts_.push_back(start);
  if (target_starts_.empty()) {
    std::ostringstream msg;
    msg << "segment too short: no " << to_string(segment_) << " window of look-back " << lookback_
        << " and horizon " << horizon_ << " fits in " << range_.size() << " points";
    throw DataError(msg.str());
  }
}

WindowedDataset make_windows(std::shared_ptr<const Matrix> series, IndexRange range, Segment segment,
                             Index lookback, Index horizon, Scaler scaler) {
  return WindowedDataset(std::move(series), segment, range, lookback, horizon, std::move(scaler));
}

RawSeries synth_series(const SynthSpec& spec) {
  if (spec.length < 1 || spec.variables < 1) throw DataError("synthetic series needs T >= 1 and m >= 1");
  if (!(spec.period > 0.0)) throw DataError("synthetic period must be positive");
  Rng rng(spec.seed);
  RawSeries series;
  series.name = "synth";
  for (Index j = 0; j < spec.variables; ++j) series.columns.push_back("x" + std::to_string(j));
  series.values.resize(spec.length, spec.variables);
  const double two_pi = 2.0 * std::numbers::pi;
  for (Index t = 0; t < spec.length; ++t) {
    for (Index j = 0; j < spec.variables; ++j) {
      const double phase = two_pi * static_cast<double>(j) / static_cast<double>(spec.variables);
      const double td = static_cast<double>(t);
      double v = std::sin(two_pi * td / spec.period + phase) + spec.trend_slope * td;
      if (spec.noise_std > 0.0) v += spec.noise_std * rng.normal();
      series.values(t, j) = v;
    }
  }
  return series;
}

}  // namespace pals
