#include "pals/cli.hpp"

#include "pals/trainer.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <sstream>

namespace pals {

namespace {

struct RunFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string data_path;
  std::string controller;
  std::string model;
  std::int64_t epochs = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_run_flags(CLI::App& cmd, RunFlags& flags) {
  cmd.add_option("-c,--config", flags.config_path, "Experiment file (TOML subset)");
  cmd.add_option("--set", flags.overrides, "Override a config key, e.g. --set controller.gamma=1.2")->take_all();
  cmd.add_option("--data", flags.data_path, "Dataset CSV (overrides data.path)");
  cmd.add_option("--controller", flags.controller, "dense | pals | gmp | granet | rigl");
  cmd.add_option("--model", flags.model, "dlinear | mlp | mini_transformer");
  cmd.add_option("--epochs", flags.epochs, "Maximum training epochs");
  cmd.add_option("--seed", flags.seed, "Random seed")->each([&flags](const std::string&) { flags.seed_set = true; });
}

ExperimentConfig resolve_config(const RunFlags& flags) {
  ExperimentConfig cfg = flags.config_path.empty() ? ExperimentConfig{} : load_config(flags.config_path);
  apply_overrides(cfg, flags.overrides);
  if (!flags.data_path.empty()) cfg.data.path = flags.data_path;
  if (!flags.controller.empty()) cfg.controller.kind = controller_kind_from_string(flags.controller);
  if (!flags.model.empty()) cfg.model.kind = model_kind_from_string(flags.model);
  if (flags.epochs > 0) cfg.train.epochs = flags.epochs;
  if (flags.seed_set) cfg.train.seed = flags.seed;
  cfg.validate();
  return cfg;
}

std::string summary_line(const ExperimentReport& r) {
  std::ostringstream s;
  s << std::setprecision(6) << "mse=" << r.test.mse << " mae=" << r.test.mae << " sparsity=" << r.checkpoint_sparsity
    << " params=" << r.params_nonzero << "/" << r.params_total << " flops=" << r.flops_test
    << " epochs=" << r.epochs_run;
  return s.str();
}

int cmd_train(const RunFlags& flags, const std::string& out_dir, bool quiet, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(flags);
  TrainOptions options;
  options.output_dir = out_dir.empty() ? std::filesystem::path("runs") / cfg.name : std::filesystem::path(out_dir);
  if (!quiet) options.log = &out;
  const TrainingResult result = train(cfg, options);
  out << summary_line(result.report) << '\n';
  return 0;
}

int cmd_evaluate(const std::string& checkpoint_path, const std::string& segment, const std::string& data_path,
                 const std::string& out_path, std::ostream& out) {
  const Checkpoint checkpoint = load_checkpoint(checkpoint_path);
  const Evaluation e = evaluate(checkpoint, segment_from_string(segment),
                                data_path.empty() ? std::nullopt : std::optional<std::string>(data_path));
  const auto j = evaluation_to_json(e);
  if (!out_path.empty()) {
    std::ofstream f(out_path);
    if (!f) throw std::runtime_error("cannot write " + out_path);
    f << j.dump(2) << '\n';
  }
  out << std::setprecision(6) << "segment=" << to_string(e.segment) << " mse=" << e.metric.mse
      << " mae=" << e.metric.mae << " sparsity=" << e.sparsity << " params=" << e.params_nonzero << "/"
      << e.params_total << " flops=" << e.flops << '\n';
  return 0;
}

int cmd_sweep(const RunFlags& flags, std::vector<double> lambdas, std::vector<double> gammas,
              std::vector<std::uint64_t> seeds, const std::string& out_dir, std::ostream& out) {
  const ExperimentConfig base = resolve_config(flags);
  if (lambdas.empty()) lambdas = {base.controller.pals.lambda};
  if (gammas.empty()) gammas = {base.controller.pals.gamma};
  if (seeds.empty()) seeds = {base.train.seed};
  const std::filesystem::path root = out_dir.empty() ? std::filesystem::path("runs") / (base.name + "_sweep") : std::filesystem::path(out_dir);

  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  out << std::left << std::setw(8) << "lambda" << std::setw(8) << "gamma" << std::setw(12) << "mse"
      << std::setw(12) << "mae" << std::setw(10) << "sparsity" << std::setw(12) << "params" << std::setw(14)
      << "flops" << "epochs\n";
  for (const double lambda : lambdas) {
    for (const double gamma : gammas) {
      Metric mean_metric;
      double sparsity = 0.0;
      double params = 0.0;
      double flops = 0.0;
      double epochs = 0.0;
      nlohmann::ordered_json runs = nlohmann::ordered_json::array();
      for (const std::uint64_t seed : seeds) {
        ExperimentConfig cfg = base;
        cfg.controller.pals.lambda = lambda;
        cfg.controller.pals.gamma = gamma;
        cfg.train.seed = seed;
        std::ostringstream tag;
        tag << "lambda" << lambda << "_gamma" << gamma << "_seed" << seed;
        cfg.name = base.name + "_" + tag.str();
        TrainOptions options;
        options.output_dir = root / tag.str();
        const TrainingResult r = train(cfg, options);
        mean_metric.mse += r.report.test.mse;
        mean_metric.mae += r.report.test.mae;
        sparsity += r.report.checkpoint_sparsity;
        params += static_cast<double>(r.report.params_nonzero);
        flops += static_cast<double>(r.report.flops_test);
        epochs += static_cast<double>(r.report.epochs_run);
        runs.push_back({{"seed", seed}, {"test_mse", r.report.test.mse}, {"test_mae", r.report.test.mae},
                        {"sparsity", r.report.checkpoint_sparsity}, {"dir", options.output_dir->string()}});
      }
      const auto n = static_cast<double>(seeds.size());
      out << std::left << std::setw(8) << lambda << std::setw(8) << gamma << std::setw(12) << mean_metric.mse / n
          << std::setw(12) << mean_metric.mae / n << std::setw(10) << sparsity / n << std::setw(12) << params / n
          << std::setw(14) << flops / n << epochs / n << '\n';
      rows.push_back({{"lambda", lambda}, {"gamma", gamma}, {"test_mse", mean_metric.mse / n},
                      {"test_mae", mean_metric.mae / n}, {"sparsity", sparsity / n}, {"params_nonzero", params / n},
                      {"flops_test", flops / n}, {"epochs", epochs / n}, {"runs", runs}});
    }
  }
  std::filesystem::create_directories(root);
  std::ofstream f(root / "sweep.json");
  f << rows.dump(2) << '\n';
  out << "runs=" << lambdas.size() * gammas.size() * seeds.size() << " summary=" << (root / "sweep.json").string() << '\n';
  return 0;
}

int cmd_synth(const SynthSpec& spec, const std::string& out_path, std::ostream& out) {
  const RawSeries series = synth_series(spec);
  write_csv(series, out_path);
  out << "wrote " << series.length() << " rows x " << series.variables() << " variables to " << out_path << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive-sparsity training and evaluation for time series forecasters", "pals"};
  app.require_subcommand(1);

  RunFlags train_flags;
  std::string train_out;
  bool quiet = false;
  auto* train_cmd = app.add_subcommand("train", "Train one experiment and write report/trace/predictions");
  add_run_flags(*train_cmd, train_flags);
  train_cmd->add_option("-o,--out", train_out, "Output directory (default runs/<name>)");
  train_cmd->add_flag("-q,--quiet", quiet, "No per-epoch progress");

  std::string checkpoint_path;
  std::string segment = "test";
  std::string eval_data;
  std::string eval_out;
  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a saved checkpoint on one segment");
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint.json from a training run")->required();
  eval_cmd->add_option("--segment", segment, "train | val | test");
  eval_cmd->add_option("--data", eval_data, "Dataset CSV (defaults to the one in the checkpoint)");
  eval_cmd->add_option("-o,--out", eval_out, "Write the evaluation as JSON");

  RunFlags sweep_flags;
  std::vector<double> lambdas;
  std::vector<double> gammas;
  std::vector<std::uint64_t> seeds;
  std::string sweep_out;
  auto* sweep_cmd = app.add_subcommand("sweep", "Grid over PALS lambda x gamma (and seeds)");
  add_run_flags(*sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--lambda", lambdas, "Comma-separated loss freedom factors")->delimiter(',');
  sweep_cmd->add_option("--gamma", gammas, "Comma-separated pruning rate factors")->delimiter(',');
  sweep_cmd->add_option("--seeds", seeds, "Comma-separated seeds; metrics are averaged")->delimiter(',');
  sweep_cmd->add_option("-o,--out", sweep_out, "Output directory");

  SynthSpec synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic sine + trend CSV");
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--length", synth.length, "Number of time steps");
  synth_cmd->add_option("--variables", synth.variables);
  synth_cmd->add_option("--period", synth.period);
  synth_cmd->add_option("--trend", synth.trend_slope);
  synth_cmd->add_option("--noise", synth.noise_std);
  synth_cmd->add_option("-o,--out", synth_out, "Output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*train_cmd) return cmd_train(train_flags, train_out, quiet, out);
    if (*eval_cmd) return cmd_evaluate(checkpoint_path, segment, eval_data, eval_out, out);
    if (*sweep_cmd) return cmd_sweep(sweep_flags, lambdas, gammas, seeds, sweep_out, out);
    if (*synth_cmd) return cmd_synth(synth, synth_out, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace pals
