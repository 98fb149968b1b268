#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "maxgnr/gnr.hpp"
#include "maxgnr/momentum.hpp"
#include "maxgnr/numerics.hpp"

namespace maxgnr {

enum class StrategyKind { kMaxGnr, kEqual, kDwa, kUncertainty, kGradNorm, kMgda, kPcGrad };

std::string_view to_string(StrategyKind kind);
/// Accepts maxgnr, equal, dwa, uncertainty, gradnorm, mgda, pcgrad.
StrategyKind parse_strategy_kind(std::string_view name);
const std::vector<StrategyKind>& all_strategy_kinds();

/// Per-task mini-batch losses of the current and the two preceding iterations.
/// `previous` / `before_previous` are empty until that many iterations have run.
struct LossHistory {
  std::vector<double> current;
  std::vector<double> previous;
  std::vector<double> before_previous;

  void push(std::vector<double> losses);
};

struct StrategyInput {
  const LossHistory* losses = nullptr;
  /// Per-task gradients of the shared parameters.
  std::span<const ParamVector> gradients;
  std::size_t iteration = 0;
  RandomStream* rng = nullptr;
};

/// Either task weights for Σ ω_k ĝ^k or a ready-made combined shared gradient.
struct StrategyOutput {
  std::variant<WeightVector, ParamVector> update;
  /// Weights a gradient-combining strategy reports alongside its gradient (MGDA).
  std::optional<WeightVector> reported_weights;
  std::map<std::string, double> diagnostics;

  bool has_weights() const { return std::holds_alternative<WeightVector>(update); }
  const WeightVector& weights() const { return std::get<WeightVector>(update); }
  const ParamVector& combined_gradient() const { return std::get<ParamVector>(update); }

  /// Weights applied to task heads: the emitted or reported weights, else 1/n.
  WeightVector head_weights(std::size_t task_count) const;
};

/// One weighting strategy bound to one training run; owns its per-run state.
class WeightStrategy {
 public:
  virtual ~WeightStrategy() = default;
  virtual StrategyKind kind() const = 0;
  virtual StrategyOutput step(const StrategyInput& input) = 0;
};

// ---- stateless building blocks -------------------------------------------

StrategyOutput equal_weights(std::size_t n);

/// Dynamic weight averaging: r_k = L_k(t-1) / L_k(t-2), ω = softmax(r / T).
/// Returns equal weights until two prior iterations exist; a zero prior loss
/// gives the neutral ratio 1.
WeightVector dwa_weights(const LossHistory& history, double temperature, std::size_t n);

/// ω_k ∝ exp(-s_k), normalized.
WeightVector uncertainty_weights(std::span<const double> log_vars);
/// Σ_k exp(-s_k) L_k + s_k.
double uncertainty_loss(std::span<const double> losses, std::span<const double> log_vars);
/// ∂/∂s_k of uncertainty_loss = 1 - exp(-s_k) L_k.
std::vector<double> uncertainty_log_var_gradient(std::span<const double> losses,
                                                 std::span<const double> log_vars);

/// Convex weights minimizing ||Σ ω_k g^k||²: closed form for two tasks,
/// Frank-Wolfe with exact line search otherwise. All-zero gradients give
/// equal weights.
WeightVector mgda_min_norm_weights(std::span<const ParamVector> gradients);

/// Projects each conflicting gradient onto the normal plane of the other
/// (original) gradients, visiting tasks and partners in random order, and
/// returns the mean of the surgered gradients.
ParamVector pcgrad_combine(std::span<const ParamVector> gradients, RandomStream& rng);

// ---- stateful strategies --------------------------------------------------

class MaxGnrStrategy final : public WeightStrategy {
 public:
  MaxGnrStrategy(std::size_t task_count, double gamma, SolverConfig solver);

  StrategyKind kind() const override { return StrategyKind::kMaxGnr; }
  /// First call seeds the momentum with the gradients and returns equal weights.
  /// Later calls estimate noise against m_{t-1}, solve for the weights, then
  /// fold the gradients into the momentum.
  StrategyOutput step(const StrategyInput& input) override;

  const MomentumState& momentum() const { return momentum_; }

 private:
  std::size_t task_count_;
  double gamma_;
  SolverConfig solver_;
  MomentumState momentum_;
  std::optional<WeightVector> previous_;
};

class EqualStrategy final : public WeightStrategy {
 public:
  explicit EqualStrategy(std::size_t task_count);
  StrategyKind kind() const override { return StrategyKind::kEqual; }
  StrategyOutput step(const StrategyInput& input) override;

 private:
  std::size_t task_count_;
};

class DwaStrategy final : public WeightStrategy {
 public:
  DwaStrategy(std::size_t task_count, double temperature);
  StrategyKind kind() const override { return StrategyKind::kDwa; }
  StrategyOutput step(const StrategyInput& input) override;

 private:
  std::size_t task_count_;
  double temperature_;
};

/// Learnable log-variances s_k, updated by SGD on the uncertainty loss.
class UncertaintyStrategy final : public WeightStrategy {
 public:
  UncertaintyStrategy(std::size_t task_count, double learning_rate);
  StrategyKind kind() const override { return StrategyKind::kUncertainty; }
  StrategyOutput step(const StrategyInput& input) override;

  const std::vector<double>& log_vars() const { return log_vars_; }

 private:
  double learning_rate_;
  std::vector<double> log_vars_;
};

class GradNormStrategy final : public WeightStrategy {
 public:
  GradNormStrategy(std::size_t task_count, double alpha, double learning_rate);
  StrategyKind kind() const override { return StrategyKind::kGradNorm; }
  StrategyOutput step(const StrategyInput& input) override;

  /// Unnormalized learnable weights (sum to the task count).
  const std::vector<double>& raw_weights() const { return weights_; }

 private:
  double alpha_;
  double learning_rate_;
  std::vector<double> weights_;
  std::vector<double> initial_losses_;
};

class MgdaStrategy final : public WeightStrategy {
 public:
  StrategyKind kind() const override { return StrategyKind::kMgda; }
  StrategyOutput step(const StrategyInput& input) override;
};

class PcGradStrategy final : public WeightStrategy {
 public:
  StrategyKind kind() const override { return StrategyKind::kPcGrad; }
  StrategyOutput step(const StrategyInput& input) override;
};

/// Strategy selection and hyperparameters.
struct StrategyConfig {
  StrategyKind kind = StrategyKind::kMaxGnr;
  double momentum_gamma = 0.5;
  SolverConfig solver;
  double dwa_temperature = 2.0;
  double gradnorm_alpha = 1.5;
  double gradnorm_lr = 0.025;
  /// Learning rate of the log-variances; <= 0 means "use the trainer's rate".
  double uncertainty_lr = 0.0;
};

std::unique_ptr<WeightStrategy> make_strategy(const StrategyConfig& config, std::size_t task_count,
                                              double trainer_learning_rate);

}  // namespace maxgnr
