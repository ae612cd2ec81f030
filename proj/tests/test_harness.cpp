#include "temp_dir.hpp"

#include "pals/cli.hpp"
#include "pals/trainer.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace pals;
using pals::testing::read_file;
using pals::testing::TempDir;

namespace {

ExperimentConfig small_config(ControllerKind kind = ControllerKind::pals) {
  ExperimentConfig c;
  c.name = "small";
  c.data.synth = {.seed = 4, .length = 600, .variables = 2, .period = 12, .trend_slope = 0.001, .noise_std = 0.1};
  c.model.lookback = 24;
  c.model.horizon = 12;
  c.model.moving_avg_kernel = 5;
  c.controller.kind = kind;
  c.controller.pals.delta_t = 5;
  c.train.epochs = 3;
  c.train.batch_size = 16;
  c.train.lr = 1e-3;
  return c;
}

int run(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  args.insert(args.begin(), "pals");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

}  // namespace

TEST_CASE("mse and mae") {
  Matrix p(1, 2);
  p << 1, 2;
  Matrix t(1, 2);
  t << 1, 4;
  CHECK(mse(p, t) == 2.0);
  CHECK(mae(p, t) == 1.0);
  CHECK(mse(p, p) == 0.0);
  CHECK(mae(p, p) == 0.0);
  const Matrix scaled = t + 3.0 * (p - t);
  CHECK(mse(scaled, t) == doctest::Approx(9.0 * mse(p, t)));
  CHECK(mae(scaled, t) == doctest::Approx(3.0 * mae(p, t)));
  CHECK_THROWS_AS(mse(p, Matrix(2, 1)), DimensionError);

  const std::vector<Matrix> preds{p, p};
  const std::vector<Matrix> targets{t, p};
  const Metric m = batch_metric(preds, targets);
  CHECK(m.mse == 1.0);
  CHECK(m.mae == 0.5);
}

TEST_CASE("mse gradient matches finite differences") {
  std::vector<Matrix> preds{Matrix::Random(3, 2), Matrix::Random(3, 2)};
  const std::vector<Matrix> targets{Matrix::Random(3, 2), Matrix::Random(3, 2)};
  const auto grads = mse_gradient(preds, targets);
  for (std::size_t b = 0; b < 2; ++b) {
    for (Index j = 0; j < 6; ++j) {
      const double saved = preds[b].data()[j];
      preds[b].data()[j] = saved + 1e-6;
      const double up = batch_metric(preds, targets).mse;
      preds[b].data()[j] = saved - 1e-6;
      const double down = batch_metric(preds, targets).mse;
      preds[b].data()[j] = saved;
      CHECK(grads[b].data()[j] == doctest::Approx((up - down) / 2e-6).epsilon(1e-6));
    }
  }
}

TEST_CASE("config parsing, overrides and json round trip") {
  const ExperimentConfig c = parse_config(R"(
name = "exp"   # comment
[model]
kind = "mlp"
hidden = [16, 8]
[controller]
kind = "granet"
gamma = 1.2
[train]
epochs = 4
shuffle = true
)");
  CHECK(c.name == "exp");
  CHECK(c.model.kind == ModelKind::mlp);
  CHECK(c.model.hidden == std::vector<Index>{16, 8});
  CHECK(c.controller.kind == ControllerKind::granet);
  CHECK(c.controller.pals.gamma == 1.2);
  CHECK(c.train.epochs == 4);
  CHECK(c.train.shuffle);
  CHECK(c.train.batch_size == 32);

  ExperimentConfig d = c;
  apply_overrides(d, {"controller.lambda=1.05", "train.seed=7"});
  CHECK(d.controller.pals.lambda == 1.05);
  CHECK(d.train.seed == 7);
  CHECK(to_json(config_from_json(to_json(d))) == to_json(d));

  CHECK_THROWS_AS(parse_config("[train]\nepochz = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\nepochs = three\n"), ConfigError);
  CHECK_THROWS_AS(apply_overrides(d, {"train.epochs"}), ConfigError);
  ExperimentConfig bad;
  bad.train.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("training with zero learning rate leaves dense parameters untouched") {
  ExperimentConfig c = small_config(ControllerKind::dense);
  c.train.lr = 0.0;
  const TrainingResult r = train(c);
  ExperimentConfig resolved = c;
  resolved.model.variables = 2;
  // same init stream as the trainer
  std::uint64_t state = c.train.seed ^ 0x9e3779b97f4a7c15ULL;
  Rng rng(splitmix64(state));
  auto fresh = make_model(resolved.model, rng);
  const auto params = fresh->parameters();
  REQUIRE(params.size() == r.best.parameters.size());
  for (std::size_t i = 0; i < params.size(); ++i) CHECK(params[i]->value == r.best.parameters[i].value);
}

TEST_CASE("dense training reports zero sparsity everywhere") {
  const TrainingResult r = train(small_config(ControllerKind::dense));
  REQUIRE(!r.trace.empty());
  for (const auto& rec : r.trace) {
    CHECK(rec.s_before == 0.0);
    CHECK(rec.s_after == 0.0);
  }
  CHECK(r.report.final_sparsity == 0.0);
  CHECK(r.report.params_nonzero == r.report.params_total);
}

TEST_CASE("training invariants for every controller") {
  for (const ControllerKind kind :
       {ControllerKind::pals, ControllerKind::gmp, ControllerKind::granet, ControllerKind::rigl}) {
    ExperimentConfig c = small_config(kind);
    const TrainingResult r = train(c);
    INFO(to_string(kind));
    REQUIRE(!r.trace.empty());
    CHECK(r.trace.back().s_after == r.report.final_sparsity);
    CHECK(r.report.iterations == r.report.t_max);
    CHECK(static_cast<std::int64_t>(r.trace.size()) == r.report.iterations / c.controller.pals.delta_t);

    // test metrics come from the epoch with the smallest validation loss
    double best = INFINITY;
    std::int64_t best_epoch = 0;
    for (const auto& e : r.report.epochs) {
      if (e.val_loss < best) {
        best = e.val_loss;
        best_epoch = e.epoch;
      }
    }
    CHECK(r.report.best_epoch == best_epoch);
    CHECK(r.report.best_val_loss == best);

    auto model = rebuild_model(r.best);
    const PreparedData data = prepare_data(c);
    CHECK(evaluate_model(*model, data.test, 16).mse == r.report.test.mse);
    CHECK(evaluate_model(*model, data.val, 16).mse == best);
  }
}

TEST_CASE("gmp and granet sparsity traces coincide and never decrease") {
  const TrainingResult gmp = train(small_config(ControllerKind::gmp));
  const TrainingResult granet = train(small_config(ControllerKind::granet));
  REQUIRE(gmp.trace.size() == granet.trace.size());
  for (std::size_t i = 0; i < gmp.trace.size(); ++i) {
    CHECK(gmp.trace[i].s_after == granet.trace[i].s_after);
    if (i > 0) CHECK(gmp.trace[i].s_after >= gmp.trace[i - 1].s_after);
  }
  CHECK(gmp.trace.back().s_after == doctest::Approx(0.5).epsilon(1e-2));
}

TEST_CASE("rigl holds its sparsity fixed") {
  const TrainingResult r = train(small_config(ControllerKind::rigl));
  for (const auto& rec : r.trace) CHECK(rec.s_after == rec.s_before);
  CHECK(r.report.final_sparsity == doctest::Approx(0.5).epsilon(1e-2));
}

TEST_CASE("early stopping keeps the best checkpoint") {
  ExperimentConfig c = small_config(ControllerKind::dense);
  c.train.lr = 0.05;  // large enough to overshoot
  c.train.epochs = 12;
  c.train.patience = 1;
  const TrainingResult r = train(c);
  if (r.report.early_stopped) CHECK(r.report.epochs_run < 12);
  CHECK(r.report.best_epoch <= r.report.epochs_run);
  for (const auto& e : r.report.epochs) CHECK(r.report.best_val_loss <= e.val_loss);
}

TEST_CASE("identical seeds give identical reports") {
  const ExperimentConfig c = small_config();
  const std::string a = report_to_json(train(c).report, false).dump();
  const std::string b = report_to_json(train(c).report, false).dump();
  CHECK(a == b);
  ExperimentConfig other = c;
  other.train.seed = 99;
  other.train.shuffle = true;
  CHECK(report_to_json(train(other).report, false).dump() != a);
}

TEST_CASE("univariate runs forecast one variable") {
  ExperimentConfig c = small_config(ControllerKind::dense);
  c.data.univariate = true;
  c.train.epochs = 1;
  const TrainingResult r = train(c);
  CHECK(r.best.model.variables == 1);
}

TEST_CASE("checkpoints round-trip bit-exactly and re-evaluate") {
  TempDir dir;
  ExperimentConfig c = small_config();
  TrainOptions options;
  options.output_dir = dir.path();
  const TrainingResult r = train(c, options);

  const Checkpoint loaded = load_checkpoint(dir / "checkpoint.json");
  REQUIRE(loaded.parameters.size() == r.best.parameters.size());
  for (std::size_t i = 0; i < loaded.parameters.size(); ++i) {
    CHECK(loaded.parameters[i].name == r.best.parameters[i].name);
    CHECK(loaded.parameters[i].value == r.best.parameters[i].value);
  }
  for (std::size_t i = 0; i < loaded.masks.size(); ++i) CHECK(loaded.masks[i].mask == r.best.masks[i].mask);
  CHECK(loaded.scaler.mean == r.best.scaler.mean);
  CHECK(loaded.scaler.std == r.best.scaler.std);

  const Evaluation e = evaluate(loaded, Segment::test);
  CHECK(e.metric.mse == r.report.test.mse);
  CHECK(e.flops == r.report.flops_test);
  CHECK(e.params_nonzero == r.report.params_nonzero);

  const PreparedData data = prepare_data(c);
  const Evaluation half = evaluate(loaded, make_windows(std::make_shared<const Matrix>(data.test.series()),
                                                        {data.ranges.test.begin, data.ranges.test.begin + 23},
                                                        Segment::test, 24, 12, data.scaler));
  CHECK(half.windows == 12);
  const Evaluation full = evaluate(loaded, make_windows(std::make_shared<const Matrix>(data.test.series()),
                                                        {data.ranges.test.begin, data.ranges.test.begin + 35},
                                                        Segment::test, 24, 12, data.scaler));
  CHECK(full.windows == 24);
  CHECK(full.flops == 2 * half.flops);

  ModelConfig wrong = loaded.model;
  wrong.horizon = 5;
  Checkpoint broken = loaded;
  broken.model = wrong;
  CHECK_THROWS_AS(rebuild_model(broken), CheckpointError);
}

TEST_CASE("mask bit packing") {
  LayerMask m = LayerMask::empty(3, 5);
  for (std::size_t i : {0u, 3u, 8u, 14u}) m.set(i);
  const std::string hex = encode_mask_bits(m);
  CHECK(hex == "0941");
  CHECK(decode_mask_bits(3, 5, hex) == m);
  CHECK_THROWS_AS(decode_mask_bits(3, 5, "09"), CheckpointError);
}

TEST_CASE("overfitting a single window drives its training error to zero") {
  ExperimentConfig c;
  c.model.kind = ModelKind::mlp;
  c.model.lookback = 4;
  c.model.horizon = 2;
  c.model.variables = 1;
  Rng rng(1);
  auto model = make_model(c.model, rng);
  const Batch x{Matrix::Random(4, 1)};
  const Batch y{Matrix::Random(2, 1)};
  AdamConfig adam{0.01};
  for (int t = 1; t <= 2000; ++t) {
    model->zero_grad();
    const Batch p = model->forward(x);
    model->backward(mse_gradient(p, y));
    for (auto* param : model->parameters()) adam_step(*param, adam, t);
  }
  CHECK(mse(model->forward(x)[0], y[0]) < 1e-8);
}

TEST_CASE("cli: synth, train and evaluate") {
  TempDir dir;
  std::string out;
  REQUIRE(run({"synth", "--length", "600", "--variables", "2", "--period", "12", "-o", (dir / "s.csv").string()}) == 0);
  const auto config = dir.write("exp.toml", R"([model]
lookback = 24
horizon = 12
moving_avg_kernel = 5
[train]
epochs = 2
batch_size = 16
)");
  REQUIRE(run({"train", "--config", config.string(), "--data", (dir / "s.csv").string(), "-q", "-o",
               (dir / "run").string()},
              &out) == 0);
  CHECK(out.find("mse=") != std::string::npos);
  CHECK(out.find("sparsity=") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "run/report.json"));
  CHECK(std::filesystem::exists(dir / "run/trace.jsonl"));
  CHECK(std::filesystem::exists(dir / "run/checkpoint.json"));
  const std::string predictions = read_file(dir / "run/predictions.csv");
  CHECK(predictions.rfind("index,variable,y_true,y_pred\n", 0) == 0);

  const auto report = nlohmann::json::parse(read_file(dir / "run/report.json"));
  CHECK(report["config"]["model.lookback"] == 24);
  CHECK(report["metrics"]["scale"] == "standardized");

  REQUIRE(run({"evaluate", "--checkpoint", (dir / "run/checkpoint.json").string(), "--segment", "val"}, &out) == 0);
  CHECK(out.find("segment=val") != std::string::npos);
}

TEST_CASE("cli: sweep runs the full grid") {
  TempDir dir;
  std::string out;
  REQUIRE(run({"sweep", "--set", "synth.length=500", "--set", "model.lookback=16", "--set", "model.horizon=8",
               "--set", "model.moving_avg_kernel=3", "--epochs", "1", "--lambda", "1.05,1.1,1.2", "--gamma",
               "1.05,1.1,1.2", "-o", dir.path().string()},
              &out) == 0);
  CHECK(out.find("runs=9") != std::string::npos);
  const auto summary = nlohmann::json::parse(read_file(dir / "sweep.json"));
  CHECK(summary.size() == 9);
}

TEST_CASE("cli: failures exit nonzero with a message") {
  std::string out;
  std::string err;
  CHECK(run({"train", "--data", "/nonexistent/dir/exchange.csv", "-q"}, &out, &err) != 0);
  CHECK(err.find("/nonexistent/dir/exchange.csv") != std::string::npos);
  CHECK(run({"train", "--bogus-flag"}, &out, &err) != 0);
  CHECK(run({}, &out, &err) != 0);
  CHECK(run({"train", "--controller", "lottery"}, &out, &err) != 0);
  CHECK(err.find("lottery") != std::string::npos);
}
