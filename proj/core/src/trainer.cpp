#include "maxgnr/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "maxgnr/errors.hpp"
#include "maxgnr/gnr.hpp"
#include "maxgnr/momentum.hpp"

namespace maxgnr {
namespace {

constexpr std::uint64_t kModelStream = 1;
constexpr std::uint64_t kBatchStream = 2;
constexpr std::uint64_t kStrategyStream = 3;

// One-hot weights: the single-task reference.
class FixedTaskStrategy final : public WeightStrategy {
 public:
  FixedTaskStrategy(std::size_t task_count, std::size_t task) : weights_(task_count, 0.0) {
    if (task >= task_count) throw LookupError("unknown task " + std::to_string(task));
    weights_[task] = 1.0;
  }
  StrategyKind kind() const override { return StrategyKind::kEqual; }
  StrategyOutput step(const StrategyInput&) override {
    return StrategyOutput{WeightVector(weights_), std::nullopt, {}};
  }

 private:
  std::vector<double> weights_;
};

bool all_finite(const std::vector<double>& values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

TrainResult train(const TrainConfig& config, const SyntheticTaskSpec& spec, const Dataset& data,
                  SharedEncoderModel model, WeightStrategy& strategy, const RecordSink& sink) {
  const std::size_t n = spec.task_count();
  const auto start = std::chrono::steady_clock::now();
  const RandomStream root(config.seed);
  RandomStream batch_rng = root.substream(kBatchStream);
  RandomStream strategy_rng = root.substream(kStrategyStream);

  TrainResult result{std::move(model), {}, false, 0, {}};
  SharedEncoderModel& m = result.model;
  LossHistory history;
  MomentumState monitor;
  const double guard = config.strategy.solver.denominator_guard;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  auto emit = [&](IterationRecord record) {
    record.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (sink) sink(record);
    result.records.push_back(std::move(record));
  };
  auto abort_run = [&](std::size_t t, std::vector<double> losses, std::string message) {
    IterationRecord record;
    record.iteration = t;
    record.losses = std::move(losses);
    record.objective = nan;
    record.diverged = true;
    emit(std::move(record));
    result.diverged = true;
    result.divergence_iteration = t;
    result.divergence_message = std::move(message);
  };

  for (std::size_t t = 0; t < config.iterations; ++t) {
    const MiniBatch batch = sample_batch(data, config.batch_size, batch_rng);
    TaskGradients grads = loss_and_grads(m, data, batch, spec);
    bool finite = all_finite(grads.losses);
    for (std::size_t k = 0; finite && k < n; ++k) {
      finite = grads.shared[k].is_finite() && grads.heads[k].is_finite();
    }
    if (!finite) {
      abort_run(t, grads.losses, "non-finite loss at iteration " + std::to_string(t));
      return result;
    }
    history.push(grads.losses);

    StrategyInput input{&history, grads.shared, t, &strategy_rng};
    const StrategyOutput out = strategy.step(input);
    const WeightVector head_w = out.head_weights(n);

    const bool logged = t % config.eval_every == 0;
    IterationRecord record;
    if (logged) {
      record.iteration = t;
      record.losses = grads.losses;
      record.weights = head_w.values();
      for (const auto& g : grads.shared) record.grad_norms.push_back(norm(g));
    }
    if (!monitor.initialized()) {
      monitor = MomentumState::init(grads.shared, config.strategy.momentum_gamma);
      if (logged) {
        record.noise_norm_sq.assign(n, nan);
        record.gnr_multi.assign(n, nan);
        record.gnr_single.assign(n, nan);
        record.objective = nan;
      }
    } else {
      if (logged) {
        const NoiseEstimate noise = estimate_noise(monitor, grads.shared);
        const GnrReport report = empirical_report(monitor.momenta(), noise.noises, head_w, guard);
        for (const auto& e : noise.noises) record.noise_norm_sq.push_back(norm_sq(e));
        record.gnr_multi = report.gnr_multi;
        record.gnr_single = report.gnr_single;
        record.objective = report.objective;
      }
      monitor.update_in_place(grads.shared);
    }

    const ParamVector step =
        out.has_weights() ? weighted_sum(out.weights().span(), grads.shared) : out.combined_gradient();
    axpy(-config.learning_rate, step, m.encoder());
    for (std::size_t k = 0; k < n; ++k) {
      axpy(-config.learning_rate * head_w[k], grads.heads[k], m.head(k));
    }
    if (logged) emit(std::move(record));

    bool params_finite = m.encoder().is_finite();
    for (std::size_t k = 0; params_finite && k < n; ++k) params_finite = m.head(k).is_finite();
    if (!params_finite) {
      abort_run(t, grads.losses, "non-finite parameters after iteration " + std::to_string(t));
      return result;
    }
  }
  return result;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be > 0");
  }
  if (iterations == 0) throw ConfigError("iterations must be >= 1");
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (eval_every == 0) throw ConfigError("eval_every must be >= 1");
  strategy.solver.validate();
}

SharedEncoderModel initial_model(const TrainConfig& config, const SyntheticTaskSpec& spec) {
  return SharedEncoderModel::random(spec, RandomStream(config.seed).substream(kModelStream).next_u64());
}

TrainResult run_on(const TrainConfig& config, const SyntheticTaskSpec& spec, const Dataset& data,
                   SharedEncoderModel initial, const RecordSink& sink) {
  config.validate();
  spec.validate();
  if (config.batch_size > spec.dataset_size) {
    throw ConfigError("batch size exceeds the dataset size");
  }
  auto strategy = make_strategy(config.strategy, spec.task_count(), config.learning_rate);
  return train(config, spec, data, std::move(initial), *strategy, sink);
}

TrainResult run(const TrainConfig& config, const SyntheticTaskSpec& spec, const RecordSink& sink) {
  spec.validate();
  return run_on(config, spec, generate(spec), initial_model(config, spec), sink);
}

TrainResult run_single_task(const TrainConfig& config, const SyntheticTaskSpec& spec,
                            std::size_t task, const RecordSink& sink) {
  config.validate();
  spec.validate();
  if (config.batch_size > spec.dataset_size) {
    throw ConfigError("batch size exceeds the dataset size");
  }
  FixedTaskStrategy strategy(spec.task_count(), task);
  return train(config, spec, generate(spec), initial_model(config, spec), strategy, sink);
}

}  // namespace maxgnr
