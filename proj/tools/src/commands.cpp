#include "maxgnr_app/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include "CLI11.hpp"
#include "maxgnr/errors.hpp"
#include "maxgnr_app/output.hpp"

namespace maxgnr::app {
namespace {

namespace fs = std::filesystem;

std::string join_reals(const std::vector<double>& values, char sep) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += sep;
    out += format_real(values[i]);
  }
  return out;
}

struct RunOutcome {
  bool diverged = false;
  std::vector<double> test_loss;
};

// Trains one seed of `config` and writes its files into `dir`.
RunOutcome train_and_write(const ExperimentConfig& config, std::uint64_t seed, const fs::path& dir) {
  fs::create_directories(dir);
  TrainConfig train = config.train;
  train.seed = seed;
  const TrainResult result = run(train, config.task);

  std::ostringstream csv;
  write_metrics_csv(csv, result.records, config.task.task_count());
  write_text(dir / "metrics.csv", csv.str());

  RunOutcome outcome;
  outcome.diverged = result.diverged;
  std::vector<double> train_loss;
  if (result.diverged) {
    outcome.test_loss.assign(config.task.task_count(), std::numeric_limits<double>::quiet_NaN());
    train_loss = outcome.test_loss;
  } else {
    outcome.test_loss = evaluate(result.model, generate(config.task, DatasetSplit::kTest));
    train_loss = evaluate(result.model, generate(config.task, DatasetSplit::kTrain));
    write_json(dir / "model.json", model_to_json(result.model));
  }
  write_json(dir / "summary.json", make_run_summary(config, seed, result, outcome.test_loss, train_loss));
  return outcome;
}

ExperimentConfig load_with_seed(const CommandOptions& options) {
  if (options.config_path.empty()) throw ConfigError("missing --config <path>");
  ExperimentConfig config = load_config(options.config_path);
  if (options.seed) config.seeds = {*options.seed};
  return config;
}

template <typename F>
int guarded(std::ostream& log, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const fs::filesystem_error& e) {
    log << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
}

struct SweepRow {
  std::string strategy;
  double gamma = 0.0;
  std::vector<double> loss_scales;
  std::uint64_t seed = 0;
  std::string status;
  std::vector<double> test_loss;

  auto key() const { return std::tie(strategy, gamma, loss_scales, seed); }
};

}  // namespace

fs::path output_root(const CommandOptions& options, const ExperimentConfig& config) {
  if (options.out_dir) return *options.out_dir;
  if (config.output_dir) return *config.output_dir;
  if (const char* env = std::getenv("GNR_MTL_OUT"); env != nullptr && *env != '\0') return env;
  return "maxgnr_out";
}

int cmd_run(const CommandOptions& options, std::ostream& log) {
  return guarded(log, [&] {
    const ExperimentConfig config = load_with_seed(options);
    const fs::path root = output_root(options, config);
    fs::create_directories(root);
    write_json(root / "config.json", config.resolved());
    bool diverged = false;
    for (std::uint64_t seed : config.seeds) {
      const fs::path dir = root / ("seed" + std::to_string(seed));
      const RunOutcome outcome = train_and_write(config, seed, dir);
      diverged = diverged || outcome.diverged;
      log << "seed " << seed << ": " << (outcome.diverged ? "diverged" : "ok")
          << ", test loss " << join_reals(outcome.test_loss, ' ') << " -> " << dir.string() << '\n';
    }
    return diverged ? kExitDiverged : kExitOk;
  });
}

int cmd_sweep(const CommandOptions& options, std::ostream& log) {
  return guarded(log, [&] {
    const ExperimentConfig config = load_with_seed(options);
    const fs::path root = output_root(options, config);
    fs::create_directories(root / "runs");
    write_json(root / "config.json", config.resolved());

    const auto& axes = config.sweep;
    const std::vector<StrategyKind> strategies =
        axes.strategies.empty() ? std::vector<StrategyKind>{config.train.strategy.kind} : axes.strategies;
    const std::vector<double> gammas =
        axes.momentum_gammas.empty() ? std::vector<double>{config.train.strategy.momentum_gamma}
                                     : axes.momentum_gammas;
    const std::vector<std::vector<double>> scales =
        axes.loss_scales.empty() ? std::vector<std::vector<double>>{config.task.loss_scales}
                                 : axes.loss_scales;
    const std::vector<std::uint64_t> seeds =
        options.seed || axes.seeds.empty() ? config.seeds : axes.seeds;

    std::vector<ExperimentConfig> runs;
    std::vector<SweepRow> rows;
    for (auto kind : strategies) {
      for (double gamma : gammas) {
        for (std::size_t c = 0; c < scales.size(); ++c) {
          for (std::uint64_t seed : seeds) {
            ExperimentConfig one = config;
            one.sweep = SweepAxes{};
            one.seeds = {seed};
            one.train.strategy.kind = kind;
            one.train.strategy.momentum_gamma = gamma;
            one.task.loss_scales = scales[c];
            runs.push_back(std::move(one));
            rows.push_back(SweepRow{std::string(to_string(kind)), gamma, scales[c], seed, "", {}});
          }
        }
      }
    }

    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
      for (std::size_t i = next++; i < runs.size(); i = next++) {
        SweepRow& row = rows[i];
        std::ostringstream name;
        name << row.strategy << "-g" << format_real(row.gamma) << "-c" << join_reals(row.loss_scales, '_')
             << "-s" << row.seed;
        try {
          const RunOutcome outcome = train_and_write(runs[i], row.seed, root / "runs" / name.str());
          row.status = outcome.diverged ? "diverged" : "ok";
          row.test_loss = outcome.test_loss;
        } catch (const std::exception& e) {
          row.status = std::string("error: ") + e.what();
          std::replace(row.status.begin(), row.status.end(), ',', ';');
          row.test_loss.assign(config.task.task_count(), std::numeric_limits<double>::quiet_NaN());
        }
        std::lock_guard<std::mutex> lock(log_mutex);
        log << name.str() << ": " << row.status << '\n';
      }
    };
    const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, std::max<std::size_t>(1, runs.size()));
    if (jobs == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }

    std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) { return a.key() < b.key(); });
    std::ostringstream csv;
    csv << "strategy,momentum_gamma,loss_scales,seed,status";
    for (std::size_t k = 0; k < config.task.task_count(); ++k) csv << ",test_loss_" << k;
    csv << ",worst_task_loss\n";
    bool any_error = false;
    bool any_diverged = false;
    for (const auto& row : rows) {
      double worst = 0.0;
      for (double v : row.test_loss) worst = std::isnan(v) || std::isnan(worst) ? std::nan("") : std::max(worst, v);
      csv << row.strategy << ',' << format_real(row.gamma) << ',' << join_reals(row.loss_scales, ';') << ','
          << row.seed << ',' << row.status;
      for (double v : row.test_loss) csv << ',' << format_real(v);
      csv << ',' << format_real(worst) << '\n';
      any_diverged = any_diverged || row.status == "diverged";
      any_error = any_error || (row.status != "ok" && row.status != "diverged");
    }
    write_text(root / "sweep.csv", csv.str());
    log << rows.size() << " runs -> " << (root / "sweep.csv").string() << '\n';
    if (any_error) return kExitConfigError;
    return any_diverged ? kExitDiverged : kExitOk;
  });
}

int cmd_census(const CommandOptions& options, std::ostream& log) {
  return guarded(log, [&] {
    const ExperimentConfig config = load_with_seed(options);
    const fs::path root = output_root(options, config);
    fs::create_directories(root);
    const Dataset data = generate(config.task);
    const std::size_t batch = config.census.batch_size == 0 ? config.train.batch_size : config.census.batch_size;
    for (std::uint64_t seed : config.seeds) {
      TrainConfig train = config.train;
      train.seed = seed;
      const SharedEncoderModel model =
          config.census.model_path.empty() ? initial_model(train, config.task) : load_model(config.census.model_path);
      RandomStream rng = RandomStream(seed).substream(7);
      const auto census = gradient_noise_census(model, data, config.task, batch, config.census.num_batches, rng);
      CensusReport report{config.resolved(), seed, batch, config.census.num_batches, {}, nullptr};
      if (!config.noise_model.empty()) report.analytic = analytic_gnr_json(config.noise_model.build());
      for (const auto& c : census) report.tasks.push_back(CensusEntry{c, make_histogram(c.grad_norms, config.census.bins)});
      const fs::path dir = root / ("seed" + std::to_string(seed));
      fs::create_directories(dir);
      write_json(dir / "census.json", census_to_json(report));
      log << "seed " << seed << ": noise estimates";
      for (const auto& c : census) log << ' ' << format_real(c.noise_estimate);
      log << " -> " << (dir / "census.json").string() << '\n';
    }
    return kExitOk;
  });
}

int cmd_verify(const CommandOptions& options, std::ostream& log, VerifyOptions verify) {
  if (!options.filter.empty()) verify.filter = options.filter;
  if (options.seed) verify.seed = *options.seed;
  return report_checks(run_checks(verify), log);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Multi-task gradient weighting experiments"};
  app.require_subcommand(1);
  CommandOptions options;
  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* config = sub->add_option("--config", options.config_path, "JSON experiment config");
    if (needs_config) config->required();
    sub->add_option("--out", options.out_dir, "Output directory (default $GNR_MTL_OUT or maxgnr_out)");
    sub->add_option("--seed", options.seed, "Run this seed only");
  };
  auto* run_cmd = app.add_subcommand("run", "Train each configured seed");
  add_common(run_cmd, true);
  auto* sweep_cmd = app.add_subcommand("sweep", "Run the strategy x gamma x loss-scale x seed grid");
  add_common(sweep_cmd, true);
  sweep_cmd->add_option("--jobs", options.jobs, "Concurrent runs")->check(CLI::PositiveNumber);
  auto* census_cmd = app.add_subcommand("census", "Gradient noise census at a frozen model");
  add_common(census_cmd, true);
  auto* verify_cmd = app.add_subcommand("verify", "Run the property and oracle checks");
  verify_cmd->add_option("--filter", options.filter, "Only checks whose name contains this text");
  verify_cmd->add_option("--seed", options.seed, "Seed of the check inputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfigError;
  }
  if (run_cmd->parsed()) return cmd_run(options, std::cout);
  if (sweep_cmd->parsed()) return cmd_sweep(options, std::cout);
  if (census_cmd->parsed()) return cmd_census(options, std::cout);
  return cmd_verify(options, std::cout);
}

}  // namespace maxgnr::app
