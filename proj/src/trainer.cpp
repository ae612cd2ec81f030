#include "pals/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace pals {

namespace {

// Independent streams for model init, mask init and shuffling.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t state = seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
  return splitmix64(state);
}

std::size_t batch_count(std::size_t n, std::size_t batch_size) { return (n + batch_size - 1) / batch_size; }

struct ParameterValues {
  std::vector<Matrix> values;
  std::vector<LayerMask> masks;
};

ParameterValues snapshot_values(const ForecastModel& model) {
  ParameterValues s;
  for (const auto* p : model.parameters()) s.values.push_back(p->value);
  for (const auto& layer : model.sparse_layers()) s.masks.push_back(layer.mask);
  return s;
}

void restore_values(ForecastModel& model, const ParameterValues& s) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = s.values[i];
  auto layers = model.sparse_layers();
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].mask = s.masks[i];
}

void write_jsonl(const std::vector<TraceRecord>& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : trace) out << trace_record_to_json(r).dump() << '\n';
}

void write_json(const nlohmann::ordered_json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

const WindowedDataset& PreparedData::segment(Segment s) const {
  switch (s) {
    case Segment::train: return train;
    case Segment::val: return val;
    case Segment::test: return test;
  }
  return test;
}

PreparedData prepare_data(const ExperimentConfig& config, const std::optional<Scaler>& scaler) {
  RawSeries raw = config.data.path.empty() ? synth_series(config.data.synth)
                                           : load_csv(config.data.path, config.data.date_column);
  if (config.data.univariate) raw = to_univariate(raw);

  const SplitSpec split = config.data.ett_mode ? SplitSpec::ett() : SplitSpec::standard();
  const WindowShape window{config.model.lookback, config.model.horizon};
  const SegmentRanges ranges = chronological_split(raw.length(), split, window);

  Scaler fitted = scaler ? *scaler : fit_scaler(raw.values, ranges.train);
  if (fitted.mean.size() != raw.variables()) {
    throw DataError("scaler has " + std::to_string(fitted.mean.size()) + " variables, dataset has " +
                    std::to_string(raw.variables()));
  }
  auto scaled = std::make_shared<const Matrix>(fitted.transform(raw.values));
  const Index L = config.model.lookback;
  const Index H = config.model.horizon;
  return PreparedData{raw.columns,
                      ranges,
                      scaled,
                      fitted,
                      make_windows(scaled, ranges.train, Segment::train, L, H, fitted),
                      make_windows(scaled, ranges.val, Segment::val, L, H, fitted),
                      make_windows(scaled, ranges.test, Segment::test, L, H, fitted)};
}

void fill_batch(const WindowedDataset& data, std::span<const std::size_t> indices, Batch& inputs, Batch& targets) {
  inputs.resize(indices.size());
  targets.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    inputs[i] = data.lookback_view(indices[i]);
    targets[i] = data.target_view(indices[i]);
  }
}

Metric evaluate_model(ForecastModel& model, const WindowedDataset& data, std::size_t batch_size,
                      std::size_t max_batches) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t n_batches = batch_count(data.size(), batch_size);
  const std::size_t limit = max_batches == 0 ? n_batches : std::min(max_batches, n_batches);
  MetricAccumulator acc;
  Batch inputs;
  Batch targets;
  for (std::size_t b = 0; b < limit; ++b) {
    const std::size_t begin = b * batch_size;
    const std::size_t count = std::min(batch_size, data.size() - begin);
    fill_batch(data, std::span<const std::size_t>(order).subspan(begin, count), inputs, targets);
    const Batch preds = model.forward(inputs);
    for (std::size_t i = 0; i < preds.size(); ++i) acc.add(preds[i], targets[i]);
  }
  return acc.mean();
}

nlohmann::ordered_json trace_record_to_json(const TraceRecord& r) {
  nlohmann::ordered_json j;
  j["iteration"] = r.iteration;
  j["decision"] = r.decision;
  j["zeta_prune"] = r.zeta_prune;
  j["zeta_grow"] = r.zeta_grow;
  j["s_before"] = r.s_before;
  j["s_after"] = r.s_after;
  j["l_valid"] = r.l_valid ? nlohmann::ordered_json(*r.l_valid) : nlohmann::ordered_json(nullptr);
  j["l_best"] = r.l_best ? nlohmann::ordered_json(*r.l_best) : nlohmann::ordered_json(nullptr);
  return j;
}

nlohmann::ordered_json report_to_json(const ExperimentReport& r, bool include_wall_time) {
  nlohmann::ordered_json j;
  j["config"] = r.config;
  j["metrics"] = {{"test_mse", r.test.mse}, {"test_mae", r.test.mae}, {"best_val_loss", r.best_val_loss},
                  {"best_epoch", r.best_epoch}, {"scale", "standardized"}};
  j["sparsity"] = {{"final", r.final_sparsity}, {"checkpoint", r.checkpoint_sparsity}};
  j["params"] = {{"total", r.params_total}, {"nonzero", r.params_nonzero}};
  j["flops"] = {{"test_inference", r.flops_test}, {"test_windows", r.test_windows},
                {"per_sample", r.test_windows ? r.flops_test / r.test_windows : 0}};
  j["epochs"] = {{"run", r.epochs_run}, {"early_stopped", r.early_stopped}, {"iterations", r.iterations},
                 {"t_max", r.t_max}};
  auto& per_epoch = j["per_epoch"] = nlohmann::ordered_json::array();
  for (const auto& e : r.epochs) {
    per_epoch.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss},
                         {"sparsity", e.sparsity}});
  }
  j["decisions"] = r.decisions;
  if (include_wall_time) j["wall_time_seconds"] = r.wall_time_seconds;
  return j;
}

TrainingResult train(const ExperimentConfig& cfg, const TrainOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  cfg.validate();
  const PreparedData data = prepare_data(cfg);

  ExperimentConfig resolved = cfg;
  resolved.model.variables = data.train.variables();

  Rng init_rng(derive_seed(cfg.train.seed, 0));
  Rng mask_rng(derive_seed(cfg.train.seed, 1));
  Rng shuffle_rng(derive_seed(cfg.train.seed, 2));

  auto model = make_model(resolved.model, init_rng);
  const auto batch_size = static_cast<std::size_t>(cfg.train.batch_size);
  const std::size_t batches_per_epoch = batch_count(data.train.size(), batch_size);
  const std::int64_t t_max = cfg.train.epochs * static_cast<std::int64_t>(batches_per_epoch);

  auto controller = make_controller(cfg.controller, t_max);
  controller->initialize(model->sparse_layers(), mask_rng);

  const AdamConfig adam{cfg.train.lr};
  const auto val_batches = static_cast<std::size_t>(cfg.train.val_batches);
  const auto validation_loss = [&] { return evaluate_model(*model, data.val, batch_size, val_batches).mse; };

  TrainingResult result;
  ExperimentReport& report = result.report;
  report.config = to_json(resolved);
  report.t_max = t_max;

  ParameterValues best = snapshot_values(*model);
  double best_val = std::numeric_limits<double>::infinity();
  std::int64_t epochs_without_improvement = 0;
  std::int64_t t = 0;

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Batch inputs;
  Batch targets;

  for (std::int64_t epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    if (cfg.train.shuffle) shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t begin = b * batch_size;
      const std::size_t count = std::min(batch_size, order.size() - begin);
      fill_batch(data.train, std::span<const std::size_t>(order).subspan(begin, count), inputs, targets);

      model->zero_grad();
      const Batch preds = model->forward(inputs);
      const double loss = batch_metric(preds, targets).mse;
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", iteration " +
                           std::to_string(t + 1));
      }
      loss_sum += loss;
      model->backward(mse_gradient(preds, targets));

      ++t;
      for (auto* p : model->parameters()) adam_step(*p, adam, t);
      model->apply_masks();

      if (auto record = controller->on_step(t, model->sparse_layers(), validation_loss)) {
        ++report.decisions[record->decision];
        result.trace.push_back(std::move(*record));
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches_per_epoch);
    rec.val_loss = evaluate_model(*model, data.val, batch_size).mse;
    rec.sparsity = snapshot(model->sparse_layers()).global_sparsity;
    report.epochs.push_back(rec);
    report.epochs_run = epoch;
    if (options.log) {
      *options.log << "epoch " << epoch << "  train " << std::setprecision(6) << rec.train_loss << "  val "
                   << rec.val_loss << "  sparsity " << rec.sparsity << '\n';
    }
    if (!std::isfinite(rec.val_loss)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));

    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      report.best_epoch = epoch;
      best = snapshot_values(*model);
      epochs_without_improvement = 0;
    } else if (++epochs_without_improvement >= cfg.train.patience) {
      report.early_stopped = epoch < cfg.train.epochs;
      break;
    }
  }

  report.iterations = t;
  report.final_sparsity = snapshot(model->sparse_layers()).global_sparsity;
  report.best_val_loss = best_val;

  restore_values(*model, best);
  report.checkpoint_sparsity = snapshot(model->sparse_layers()).global_sparsity;
  report.test = evaluate_model(*model, data.test, batch_size);
  report.params_total = count_params(*model, false);
  report.params_nonzero = count_params(*model, true);
  report.test_windows = data.test.size();
  report.flops_test = count_flops(*model, data.test.size());
  result.best = capture_checkpoint(*model, resolved, data.scaler);

  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  if (options.output_dir) {
    std::filesystem::create_directories(*options.output_dir);
    write_json(report_to_json(report), *options.output_dir / "report.json");
    write_jsonl(result.trace, *options.output_dir / "trace.jsonl");
    write_predictions(*model, data.test, batch_size, *options.output_dir / "predictions.csv");
    save_checkpoint(result.best, *options.output_dir / "checkpoint.json");
  }
  return result;
}

Evaluation evaluate(const Checkpoint& checkpoint, const WindowedDataset& data, std::size_t batch_size) {
  auto model = rebuild_model(checkpoint);
  if (data.lookback() != checkpoint.model.lookback || data.horizon() != checkpoint.model.horizon ||
      data.variables() != checkpoint.model.variables) {
    throw CheckpointError("checkpoint model shape does not match the dataset windows");
  }
  Evaluation e;
  e.segment = data.segment();
  e.metric = evaluate_model(*model, data, batch_size);
  e.windows = data.size();
  e.flops = count_flops(*model, data.size());
  e.params_total = count_params(*model, false);
  e.params_nonzero = count_params(*model, true);
  e.sparsity = snapshot(model->sparse_layers()).global_sparsity;
  return e;
}

Evaluation evaluate(const Checkpoint& checkpoint, Segment segment, const std::optional<std::string>& data_path) {
  ExperimentConfig cfg = checkpoint.experiment;
  if (data_path) cfg.data.path = *data_path;
  cfg.model.lookback = checkpoint.model.lookback;
  cfg.model.horizon = checkpoint.model.horizon;
  const PreparedData data = prepare_data(cfg, checkpoint.scaler);
  return evaluate(checkpoint, data.segment(segment), static_cast<std::size_t>(std::max<std::int64_t>(1, cfg.train.batch_size)));
}

nlohmann::ordered_json evaluation_to_json(const Evaluation& e) {
  nlohmann::ordered_json j;
  j["segment"] = to_string(e.segment);
  j["mse"] = e.metric.mse;
  j["mae"] = e.metric.mae;
  j["windows"] = e.windows;
  j["flops"] = e.flops;
  j["params"] = {{"total", e.params_total}, {"nonzero", e.params_nonzero}};
  j["sparsity"] = e.sparsity;
  return j;
}

void write_predictions(ForecastModel& model, const WindowedDataset& data, std::size_t batch_size,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "index,variable,y_true,y_pred\n" << std::setprecision(17);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Batch inputs;
  Batch targets;
  const Index H = data.horizon();
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t count = std::min(batch_size, data.size() - begin);
    fill_batch(data, std::span<const std::size_t>(order).subspan(begin, count), inputs, targets);
    const Batch preds = model.forward(inputs);
    for (std::size_t i = 0; i < count; ++i) {
      const auto window = static_cast<Index>(begin + i);
      for (Index step = 0; step < H; ++step) {
        for (Index v = 0; v < data.variables(); ++v) {
          out << window * H + step << ',' << v << ',' << targets[i](step, v) << ',' << preds[i](step, v) << '\n';
        }
      }
    }
  }
}

}  // namespace pals
