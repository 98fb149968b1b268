#include "maxgnr/strategies.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "maxgnr/errors.hpp"

namespace maxgnr {
namespace {

constexpr std::array<std::pair<StrategyKind, std::string_view>, 7> kStrategyNames{{
    {StrategyKind::kMaxGnr, "maxgnr"},
    {StrategyKind::kEqual, "equal"},
    {StrategyKind::kDwa, "dwa"},
    {StrategyKind::kUncertainty, "uncertainty"},
    {StrategyKind::kGradNorm, "gradnorm"},
    {StrategyKind::kMgda, "mgda"},
    {StrategyKind::kPcGrad, "pcgrad"},
}};

void require_tasks(std::span<const ParamVector> gradients, std::size_t expected) {
  if (gradients.size() != expected) {
    throw DimensionError("strategy expected " + std::to_string(expected) + " task gradients, got " +
                         std::to_string(gradients.size()));
  }
  common_dimension(gradients);
}

const std::vector<double>& current_losses(const StrategyInput& input, std::size_t n) {
  if (input.losses == nullptr || input.losses->current.size() != n) {
    throw DimensionError("strategy input lacks per-task losses");
  }
  return input.losses->current;
}

WeightVector softmax_weights(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> w(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    w[k] = std::exp(logits[k] - top);
    sum += w[k];
  }
  for (double& x : w) x /= sum;
  return project_simplex(w, 0.0);
}

double sign(double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); }

void add_weight_diagnostics(StrategyOutput& out, const WeightVector& w) {
  for (std::size_t k = 0; k < w.size(); ++k) {
    out.diagnostics["weight." + std::to_string(k)] = w[k];
  }
}

}  // namespace

std::string_view to_string(StrategyKind kind) {
  for (const auto& [k, name] : kStrategyNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

StrategyKind parse_strategy_kind(std::string_view name) {
  for (const auto& [k, n] : kStrategyNames) {
    if (n == name) return k;
  }
  throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

const std::vector<StrategyKind>& all_strategy_kinds() {
  static const std::vector<StrategyKind> kinds = [] {
    std::vector<StrategyKind> out;
    for (const auto& entry : kStrategyNames) out.push_back(entry.first);
    return out;
  }();
  return kinds;
}

void LossHistory::push(std::vector<double> losses) {
  before_previous = std::move(previous);
  previous = std::move(current);
  current = std::move(losses);
}

WeightVector StrategyOutput::head_weights(std::size_t task_count) const {
  if (has_weights()) return weights();
  if (reported_weights) return *reported_weights;
  return WeightVector::equal(task_count);
}

StrategyOutput equal_weights(std::size_t n) {
  StrategyOutput out{WeightVector::equal(n), std::nullopt, {}};
  return out;
}

WeightVector dwa_weights(const LossHistory& history, double temperature, std::size_t n) {
  if (!(temperature > 0.0)) throw ConfigError("DWA temperature must be > 0");
  if (history.previous.size() != n || history.before_previous.size() != n) {
    return WeightVector::equal(n);
  }
  std::vector<double> logits(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double denom = history.before_previous[k];
    const double ratio = denom == 0.0 ? 1.0 : history.previous[k] / denom;
    logits[k] = ratio / temperature;
  }
  // The original scales the softmax by n; renormalizing to the simplex keeps proportions.
  return softmax_weights(logits);
}

WeightVector uncertainty_weights(std::span<const double> log_vars) {
  if (log_vars.empty()) throw ConfigError("uncertainty weights need at least one task");
  std::vector<double> logits(log_vars.size());
  for (std::size_t k = 0; k < log_vars.size(); ++k) logits[k] = -log_vars[k];
  return softmax_weights(logits);
}

double uncertainty_loss(std::span<const double> losses, std::span<const double> log_vars) {
  if (losses.size() != log_vars.size()) throw DimensionError("uncertainty_loss: size mismatch");
  double total = 0.0;
  for (std::size_t k = 0; k < losses.size(); ++k) {
    total += std::exp(-log_vars[k]) * losses[k] + log_vars[k];
  }
  return total;
}

std::vector<double> uncertainty_log_var_gradient(std::span<const double> losses,
                                                 std::span<const double> log_vars) {
  if (losses.size() != log_vars.size()) {
    throw DimensionError("uncertainty_log_var_gradient: size mismatch");
  }
  std::vector<double> grad(losses.size());
  for (std::size_t k = 0; k < losses.size(); ++k) {
    grad[k] = 1.0 - std::exp(-log_vars[k]) * losses[k];
  }
  return grad;
}

WeightVector mgda_min_norm_weights(std::span<const ParamVector> gradients) {
  const std::size_t n = gradients.size();
  if (n < 2) throw ConfigError("MGDA needs at least two tasks");
  common_dimension(gradients);

  std::vector<double> m(n * n);
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) m[i * n + j] = m[j * n + i] = dot(gradients[i], gradients[j]);
    scale = std::max(scale, m[i * n + i]);
  }
  if (scale == 0.0) return WeightVector::equal(n);

  if (n == 2) {
    const double diff = m[0] - 2.0 * m[1] + m[3];  // ||g1 - g2||²
    double gamma = diff > 0.0 ? (m[3] - m[1]) / diff : 0.5;
    gamma = std::clamp(gamma, 0.0, 1.0);
    return WeightVector({gamma, 1.0 - gamma});
  }

  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  std::vector<double> mw(n);
  auto quad = [&](const std::vector<double>& x) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) total += x[i] * m[i * n + j] * x[j];
    }
    return total;
  };
  for (int it = 0; it < 10000; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      mw[i] = 0.0;
      for (std::size_t j = 0; j < n; ++j) mw[i] += m[i * n + j] * w[j];
    }
    const auto t = static_cast<std::size_t>(std::min_element(mw.begin(), mw.end()) - mw.begin());
    const double v1v1 = std::inner_product(w.begin(), w.end(), mw.begin(), 0.0);
    const double v1v2 = mw[t];
    const double v2v2 = m[t * n + t];
    const double gap = v1v1 - v1v2;
    if (gap <= 1e-15 * scale) break;
    const double curvature = v1v1 - 2.0 * v1v2 + v2v2;
    const double step = curvature > 0.0 ? std::clamp(gap / curvature, 0.0, 1.0) : 1.0;
    for (double& x : w) x *= 1.0 - step;
    w[t] += step;
  }
  // Vertices are cheap to check and guard against an unconverged run.
  double best = quad(w);
  for (std::size_t k = 0; k < n; ++k) {
    if (m[k * n + k] < best) {
      best = m[k * n + k];
      std::fill(w.begin(), w.end(), 0.0);
      w[k] = 1.0;
    }
  }
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x = std::max(x, 0.0) / sum;
  return project_simplex(w, 0.0);
}

ParamVector pcgrad_combine(std::span<const ParamVector> gradients, RandomStream& rng) {
  const std::size_t n = gradients.size();
  if (n < 2) throw ConfigError("PCGrad needs at least two tasks");
  const std::size_t d = common_dimension(gradients);

  std::vector<ParamVector> surgered(gradients.begin(), gradients.end());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  for (std::size_t i : order) {
    std::vector<std::size_t> partners;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) partners.push_back(j);
    }
    rng.shuffle(partners);
    for (std::size_t j : partners) {
      const double partner_sq = norm_sq(gradients[j]);
      if (partner_sq == 0.0) continue;
      const double overlap = dot(surgered[i], gradients[j]);
      if (overlap < 0.0) axpy(-overlap / partner_sq, gradients[j], surgered[i]);
    }
  }
  ParamVector mean(d);
  for (const auto& g : surgered) axpy(1.0 / static_cast<double>(n), g, mean);
  return mean;
}

MaxGnrStrategy::MaxGnrStrategy(std::size_t task_count, double gamma, SolverConfig solver)
    : task_count_(task_count), gamma_(gamma), solver_(solver) {
  if (task_count_ < 2) throw ConfigError("MaxGNR needs at least two tasks");
  if (!(gamma_ >= 0.0 && gamma_ < 1.0)) throw ConfigError("momentum gamma must lie in [0, 1)");
  solver_.validate();
}

StrategyOutput MaxGnrStrategy::step(const StrategyInput& input) {
  require_tasks(input.gradients, task_count_);
  const std::vector<ParamVector> gradients(input.gradients.begin(), input.gradients.end());
  if (!momentum_.initialized()) {
    momentum_ = MomentumState::init(gradients, gamma_);
    StrategyOutput out = equal_weights(task_count_);
    previous_ = out.weights();
    return out;
  }
  const NoiseEstimate noise = estimate_noise(momentum_, gradients);
  const WeightVector weights =
      solve_weights(momentum_.momenta(), noise.noises, solver_, previous_);
  const GnrReport report =
      empirical_report(momentum_.momenta(), noise.noises, weights, solver_.denominator_guard);
  momentum_.update_in_place(gradients);
  previous_ = weights;

  StrategyOutput out{weights, std::nullopt, {}};
  out.diagnostics["objective"] = report.objective;
  for (std::size_t k = 0; k < task_count_; ++k) {
    out.diagnostics["gnr_multi." + std::to_string(k)] = report.gnr_multi[k];
    out.diagnostics["gnr_single." + std::to_string(k)] = report.gnr_single[k];
  }
  return out;
}

EqualStrategy::EqualStrategy(std::size_t task_count) : task_count_(task_count) {
  if (task_count_ == 0) throw ConfigError("equal weights need at least one task");
}

StrategyOutput EqualStrategy::step(const StrategyInput& input) {
  require_tasks(input.gradients, task_count_);
  return equal_weights(task_count_);
}

DwaStrategy::DwaStrategy(std::size_t task_count, double temperature)
    : task_count_(task_count), temperature_(temperature) {
  if (!(temperature_ > 0.0)) throw ConfigError("DWA temperature must be > 0");
}

StrategyOutput DwaStrategy::step(const StrategyInput& input) {
  require_tasks(input.gradients, task_count_);
  if (input.losses == nullptr) throw DimensionError("DWA needs the loss history");
  StrategyOutput out{dwa_weights(*input.losses, temperature_, task_count_), std::nullopt, {}};
  return out;
}

UncertaintyStrategy::UncertaintyStrategy(std::size_t task_count, double learning_rate)
    : learning_rate_(learning_rate), log_vars_(task_count, 0.0) {
  if (task_count == 0) throw ConfigError("uncertainty weighting needs at least one task");
  if (!(learning_rate_ > 0.0)) throw ConfigError("uncertainty learning rate must be > 0");
}

StrategyOutput UncertaintyStrategy::step(const StrategyInput& input) {
  require_tasks(input.gradients, log_vars_.size());
  const auto& losses = current_losses(input, log_vars_.size());
  StrategyOutput out{uncertainty_weights(log_vars_), std::nullopt, {}};
  const std::vector<double> grad = uncertainty_log_var_gradient(losses, log_vars_);
  for (std::size_t k = 0; k < log_vars_.size(); ++k) {
    out.diagnostics["log_var." + std::to_string(k)] = log_vars_[k];
    log_vars_[k] -= learning_rate_ * grad[k];
  }
  out.diagnostics["uncertainty_loss"] = uncertainty_loss(losses, log_vars_);
  return out;
}

GradNormStrategy::GradNormStrategy(std::size_t task_count, double alpha, double learning_rate)
    : alpha_(alpha), learning_rate_(learning_rate), weights_(task_count, 1.0) {
  if (task_count < 2) throw ConfigError("GradNorm needs at least two tasks");
  if (!(learning_rate_ > 0.0)) throw ConfigError("GradNorm learning rate must be > 0");
  if (!(alpha_ >= 0.0)) throw ConfigError("GradNorm alpha must be >= 0");
}

StrategyOutput GradNormStrategy::step(const StrategyInput& input) {
  const std::size_t n = weights_.size();
  require_tasks(input.gradients, n);
  const auto& losses = current_losses(input, n);
  if (initial_losses_.empty()) {
    initial_losses_ = losses;
    return equal_weights(n);
  }

  std::vector<double> grad_norms(n), weighted_norms(n), rates(n);
  for (std::size_t k = 0; k < n; ++k) {
    grad_norms[k] = norm(input.gradients[k]);
    weighted_norms[k] = weights_[k] * grad_norms[k];
    rates[k] = initial_losses_[k] == 0.0 ? 1.0 : losses[k] / initial_losses_[k];
  }
  const double mean_weighted = std::accumulate(weighted_norms.begin(), weighted_norms.end(), 0.0) /
                               static_cast<double>(n);
  const double mean_rate =
      std::accumulate(rates.begin(), rates.end(), 0.0) / static_cast<double>(n);
  const double mean_norm =
      std::accumulate(grad_norms.begin(), grad_norms.end(), 0.0) / static_cast<double>(n);

  StrategyOutput out{WeightVector::equal(n), std::nullopt, {}};
  if (mean_norm > 0.0) {
    for (std::size_t k = 0; k < n; ++k) {
      const double relative_rate = mean_rate > 0.0 ? rates[k] / mean_rate : 1.0;
      const double target = mean_weighted * std::pow(relative_rate, alpha_);
      // Subgradient of |w_k ||g_k|| - target| in w_k, with the norm measured
      // relative to the mean gradient norm so the step is scale free.
      const double grad = sign(weighted_norms[k] - target) * grad_norms[k] / mean_norm;
      weights_[k] = std::max(weights_[k] - learning_rate_ * grad, 1e-6);
      out.diagnostics["target_norm." + std::to_string(k)] = target;
    }
  }
  const double sum = std::accumulate(weights_.begin(), weights_.end(), 0.0);
  std::vector<double> normalized(n);
  for (std::size_t k = 0; k < n; ++k) {
    weights_[k] *= static_cast<double>(n) / sum;
    normalized[k] = weights_[k] / static_cast<double>(n);
  }
  out.update = project_simplex(normalized, 0.0);
  return out;
}

StrategyOutput MgdaStrategy::step(const StrategyInput& input) {
  const WeightVector w = mgda_min_norm_weights(input.gradients);
  StrategyOutput out{weighted_sum(w.span(), input.gradients), w, {}};
  add_weight_diagnostics(out, w);
  return out;
}

StrategyOutput PcGradStrategy::step(const StrategyInput& input) {
  if (input.rng == nullptr) throw StateError("PCGrad needs a random stream");
  StrategyOutput out{pcgrad_combine(input.gradients, *input.rng), std::nullopt, {}};
  return out;
}

std::unique_ptr<WeightStrategy> make_strategy(const StrategyConfig& config, std::size_t task_count,
                                              double trainer_learning_rate) {
  switch (config.kind) {
    case StrategyKind::kMaxGnr:
      return std::make_unique<MaxGnrStrategy>(task_count, config.momentum_gamma, config.solver);
    case StrategyKind::kEqual:
      return std::make_unique<EqualStrategy>(task_count);
    case StrategyKind::kDwa:
      return std::make_unique<DwaStrategy>(task_count, config.dwa_temperature);
    case StrategyKind::kUncertainty:
      return std::make_unique<UncertaintyStrategy>(
          task_count, config.uncertainty_lr > 0.0 ? config.uncertainty_lr : trainer_learning_rate);
    case StrategyKind::kGradNorm:
      return std::make_unique<GradNormStrategy>(task_count, config.gradnorm_alpha,
                                                config.gradnorm_lr);
    case StrategyKind::kMgda:
      return std::make_unique<MgdaStrategy>();
    case StrategyKind::kPcGrad:
      return std::make_unique<PcGradStrategy>();
  }
  throw ConfigError("unhandled strategy kind");
}

}  // namespace maxgnr
