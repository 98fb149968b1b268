#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "maxgnr/numerics.hpp"

namespace maxgnr {

/// Per-task exponential moving average of stochastic gradients, used as the
/// estimate of each task's expected gradient:
///
///   m_t = γ m_{t-1} + (1 - γ) ĝ_t,   m_0 = ĝ_0.
///
/// A default-constructed state is uninitialized; `init` seeds it from the first
/// gradients with step counter 0.
class MomentumState {
 public:
  MomentumState() = default;

  /// Throws ConfigError if gamma is outside [0, 1) or no gradients are given,
  /// DimensionError if the gradients disagree in length.
  static MomentumState init(std::vector<ParamVector> first_gradients, double gamma);

  bool initialized() const { return !momenta_.empty(); }
  double gamma() const { return gamma_; }
  std::size_t step() const { return step_; }
  std::size_t task_count() const { return momenta_.size(); }
  std::size_t dim() const { return initialized() ? momenta_.front().size() : 0; }

  const ParamVector& momentum(std::size_t task) const;
  const std::vector<ParamVector>& momenta() const { return momenta_; }

  /// Returns the state after folding in one gradient per task.
  MomentumState update(std::span<const ParamVector> gradients) const;
  void update_in_place(std::span<const ParamVector> gradients);

  /// Throws StateError if uninitialized, DimensionError on count or length mismatch.
  void check_gradients(std::span<const ParamVector> gradients) const;

 private:

  std::vector<ParamVector> momenta_;
  double gamma_ = 0.0;
  std::size_t step_ = 0;
};

/// n^k = ĝ^k - m^k per task.
struct NoiseEstimate {
  std::vector<ParamVector> noises;
};

/// Noise estimate against the momentum *before* the current gradients are folded
/// in, so ĝ_t - m_{t-1} isolates the fresh draw. Throws StateError on an
/// uninitialized state, DimensionError on mismatched gradients.
NoiseEstimate estimate_noise(const MomentumState& state, std::span<const ParamVector> gradients);

/// Stationary variance ratio E||m - g||² / (tr(C)/|S|) = (1 - γ) / (1 + γ).
double momentum_variance_factor(double gamma);

}  // namespace maxgnr
