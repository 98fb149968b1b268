#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "maxgnr/strategies.hpp"
#include "maxgnr/tasks.hpp"

namespace maxgnr {

struct TrainConfig {
  std::size_t iterations = 5000;
  double learning_rate = 1e-4;
  std::size_t batch_size = 16;
  StrategyConfig strategy;
  std::size_t eval_every = 100;
  std::uint64_t seed = 0;

  /// Throws ConfigError on a non-positive rate, zero iterations, batch size or
  /// eval interval.
  void validate() const;
};

/// Snapshot of one logged iteration. Noise and GNR columns come from a
/// momentum monitor run alongside every strategy (decay strategy.momentum_gamma)
/// and are NaN at t = 0, before any noise estimate exists.
struct IterationRecord {
  std::size_t iteration = 0;
  std::vector<double> losses;
  std::vector<double> weights;
  std::vector<double> grad_norms;
  std::vector<double> noise_norm_sq;
  std::vector<double> gnr_multi;
  std::vector<double> gnr_single;
  double objective = 0.0;
  double wall_clock_seconds = 0.0;
  /// Set on the record that closes a diverged run.
  bool diverged = false;
};

struct TrainResult {
  SharedEncoderModel model;
  std::vector<IterationRecord> records;
  bool diverged = false;
  std::size_t divergence_iteration = 0;
  std::string divergence_message;
};

/// Per-iteration hook, called for every logged record as it is produced.
using RecordSink = std::function<void(const IterationRecord&)>;

/// SGD with the configured strategy: θ ← θ - μ (Σ ω_k ĝ^k or the strategy's
/// combined gradient); head k moves by μ ω_k times its own gradient, with ω
/// the strategy's head weights. Starts from SharedEncoderModel::random with a
/// seed derived from config.seed. A non-finite loss or parameter stops the run
/// with a closing record flagged `diverged`.
TrainResult run(const TrainConfig& config, const SyntheticTaskSpec& spec,
                const RecordSink& sink = {});

/// Same loop with `data` supplied and the initial model given.
TrainResult run_on(const TrainConfig& config, const SyntheticTaskSpec& spec, const Dataset& data,
                   SharedEncoderModel initial, const RecordSink& sink = {});

/// Trains the encoder and head `task` on that task's loss alone (weight 1 on
/// `task`, 0 elsewhere); same seeds and initial model as run().
TrainResult run_single_task(const TrainConfig& config, const SyntheticTaskSpec& spec,
                            std::size_t task, const RecordSink& sink = {});

/// Model used by run() and run_single_task() before the first step.
SharedEncoderModel initial_model(const TrainConfig& config, const SyntheticTaskSpec& spec);

}  // namespace maxgnr
