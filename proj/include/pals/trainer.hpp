#pragma once

#include "pals/checkpoint.hpp"
#include "pals/config.hpp"
#include "pals/controllers.hpp"
#include "pals/data.hpp"
#include "pals/metrics.hpp"
#include "pals/models.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace pals {

/// Split, standardized and windowed data for one experiment.
struct PreparedData {
  std::vector<std::string> columns;
  SegmentRanges ranges;
  std::shared_ptr<const Matrix> scaled;
  Scaler scaler;
  WindowedDataset train;
  WindowedDataset val;
  WindowedDataset test;

  const WindowedDataset& segment(Segment s) const;
};

/// Loads the CSV (or generates the synthetic series), splits it, and windows
/// it. With `scaler`, that scaler is used instead of fitting on the train
/// segment.
PreparedData prepare_data(const ExperimentConfig& config, const std::optional<Scaler>& scaler = std::nullopt);

/// Collects a contiguous run of examples into a batch.
void fill_batch(const WindowedDataset& data, std::span<const std::size_t> indices, Batch& inputs, Batch& targets);

/// Mean per-example MSE/MAE of `model` over the first `max_batches` batches of
/// `data` (all when max_batches is 0).
Metric evaluate_model(ForecastModel& model, const WindowedDataset& data, std::size_t batch_size,
                      std::size_t max_batches = 0);

struct EpochRecord {
  std::int64_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double sparsity = 0.0;
};

struct ExperimentReport {
  nlohmann::ordered_json config;
  std::vector<EpochRecord> epochs;
  std::int64_t best_epoch = 0;
  double best_val_loss = 0.0;
  Metric test;
  double final_sparsity = 0.0;       // at the end of training
  double checkpoint_sparsity = 0.0;  // of the min-val-loss checkpoint
  std::size_t params_total = 0;
  std::size_t params_nonzero = 0;
  std::uint64_t flops_test = 0;
  std::size_t test_windows = 0;
  std::int64_t epochs_run = 0;
  std::int64_t iterations = 0;
  std::int64_t t_max = 0;
  bool early_stopped = false;
  std::map<std::string, std::int64_t> decisions;
  double wall_time_seconds = 0.0;
};

nlohmann::ordered_json report_to_json(const ExperimentReport& report, bool include_wall_time = true);
nlohmann::ordered_json trace_record_to_json(const TraceRecord& record);

struct TrainOptions {
  /// When set, report.json, trace.jsonl, predictions.csv and checkpoint.json
  /// are written here.
  std::optional<std::filesystem::path> output_dir;
  /// Progress lines, one per epoch.
  std::ostream* log = nullptr;
};

struct TrainingResult {
  ExperimentReport report;
  std::vector<TraceRecord> trace;
  Checkpoint best;
};

/// Runs one experiment: epochs of mini-batch Adam, a mask update every
/// delta_t steps, early stopping on validation MSE, and test metrics from the
/// min-validation-loss checkpoint.
TrainingResult train(const ExperimentConfig& config, const TrainOptions& options = {});

struct Evaluation {
  Segment segment = Segment::test;
  Metric metric;
  std::uint64_t flops = 0;
  std::size_t params_total = 0;
  std::size_t params_nonzero = 0;
  std::size_t windows = 0;
  double sparsity = 0.0;
};

Evaluation evaluate(const Checkpoint& checkpoint, const WindowedDataset& data, std::size_t batch_size = 32);
/// Re-prepares the checkpoint's dataset (optionally from another CSV path)
/// with the checkpoint's scaler and evaluates one segment.
Evaluation evaluate(const Checkpoint& checkpoint, Segment segment, const std::optional<std::string>& data_path = std::nullopt);

nlohmann::ordered_json evaluation_to_json(const Evaluation& evaluation);

/// Writes index, variable, y_true, y_pred rows for every test window, where
/// index = window * horizon + step.
void write_predictions(ForecastModel& model, const WindowedDataset& data, std::size_t batch_size,
                       const std::filesystem::path& path);

}  // namespace pals
