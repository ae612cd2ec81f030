#pragma once

#include "pals/numerics.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pals {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// T observations of m variables.
struct RawSeries {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::string> timestamps;  // empty when the file has no date column
  Matrix values;

  Index length() const { return values.rows(); }
  Index variables() const { return values.cols(); }
};

/// Parses a comma-separated file with a header row. A column named
/// `date_column` (default: a leading column called "date") is kept as text and
/// excluded from `values`; every other cell must be a decimal number.
RawSeries load_csv(const std::filesystem::path& path,
                   const std::optional<std::string>& date_column = std::nullopt);

void write_csv(const RawSeries& series, const std::filesystem::path& path);

/// Keeps only the last variable.
RawSeries to_univariate(const RawSeries& series);

struct SplitSpec {
  double train_ratio = 0.7;
  double test_ratio = 0.2;

  static SplitSpec standard() { return {0.7, 0.2}; }
  static SplitSpec ett() { return {0.6, 0.2}; }
  void validate() const;
};

struct IndexRange {
  Index begin = 0;
  Index end = 0;
  Index size() const { return end - begin; }
  bool operator==(const IndexRange&) const = default;
};

struct SegmentRanges {
  IndexRange train;
  IndexRange val;
  IndexRange test;
};

struct WindowShape {
  Index lookback;
  Index horizon;
};

/// Contiguous train -> val -> test ranges. Train and test lengths are
/// floor(ratio * T); validation takes the remainder. When `window` is given,
/// every segment must hold at least lookback + horizon points.
SegmentRanges chronological_split(Index length, const SplitSpec& spec,
                                  const std::optional<WindowShape>& window = std::nullopt);

/// Per-variable z-score statistics.
struct Scaler {
  RowVector mean;
  RowVector std;

  Matrix transform(const Matrix& values) const;
  Matrix inverse_transform(const Matrix& values) const;
};

/// Fits on rows [train.begin, train.end) only. Zero-variance variables get std 1.
Scaler fit_scaler(const Matrix& values, IndexRange train);

struct Standardized {
  Matrix values;
  Scaler scaler;
};

Standardized standardize(const RawSeries& series, IndexRange train);

enum class Segment { train, val, test };

const char* to_string(Segment segment);
Segment segment_from_string(const std::string& name);

/// Sliding windows (stride 1) over a standardized series. Windows are views:
/// each one is identified by the index where its target starts, and the
/// look-back occupies the `lookback` rows immediately before it.
class WindowedDataset {
 public:
  WindowedDataset(std::shared_ptr<const Matrix> series, Segment segment, IndexRange range,
                  Index lookback, Index horizon, Scaler scaler);

  Segment segment() const { return segment_; }
  IndexRange range() const { return range_; }
  Index lookback() const { return lookback_; }
  Index horizon() const { return horizon_; }
  Index variables() const { return series_->cols(); }
  std::size_t size() const { return target_starts_.size(); }
  bool empty() const { return target_starts_.empty(); }
  const Scaler& scaler() const { return scaler_; }
  const Matrix& series() const { return *series_; }

  Index target_start(std::size_t i) const { return target_starts_.at(i); }
  auto lookback_view(std::size_t i) const {
    return series_->middleRows(target_starts_.at(i) - lookback_, lookback_);
  }
  auto target_view(std::size_t i) const {
    return series_->middleRows(target_starts_.at(i), horizon_);
  }
  Matrix lookback_at(std::size_t i) const { return lookback_view(i); }
  Matrix target_at(std::size_t i) const { return target_view(i); }

 private:
  std::shared_ptr<const Matrix> series_;
  Segment segment_;
  IndexRange range_;
  Index lookback_;
  Index horizon_;
  Scaler scaler_;
  std::vector<Index> target_starts_;
};

/// Builds windows whose targets lie entirely inside `range`. The train
/// segment draws its look-back from inside the range too (n - L - H + 1
/// windows); val/test may borrow look-back context from the preceding rows
/// (n - H + 1 windows when context suffices).
WindowedDataset make_windows(std::shared_ptr<const Matrix> series, IndexRange range,
                             Segment segment, Index lookback, Index horizon, Scaler scaler);

struct SynthSpec {
  std::uint64_t seed = 0;
  Index length = 5000;
  Index variables = 3;
  double period = 24.0;
  double trend_slope = 0.0;
  double noise_std = 0.1;
};

/// x_j[t] = sin(2 pi t / period + phase_j) + trend_slope * t + noise, with
/// phase_j = 2 pi j / m and Gaussian noise drawn from `seed`.
RawSeries synth_series(const SynthSpec& spec);

}  // namespace pals
