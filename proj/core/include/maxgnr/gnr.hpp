#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "maxgnr/noise_model.hpp"
#include "maxgnr/numerics.hpp"

namespace maxgnr {

/// Per-task gradient-to-noise ratios and the max-min objective at one weight vector.
struct GnrReport {
  std::vector<double> gnr_single;
  std::vector<double> gnr_multi;
  double objective = 0.0;
  WeightVector weights_used;
};

enum class TieBreak {
  kLowestIndex,
};

enum class SolverMethod {
  /// Exact active-set solve of the equivalent convex quadratic program
  /// (see solve_weights). Default.
  kConvexProgram,
  /// Projected ascent on the raw objective along the active (minimal) task's
  /// gradient with a fixed step.
  kActiveBranch,
};

struct SolverConfig {
  int steps = 100;
  /// Step of the active-branch method. The convex-program method derives its
  /// step from the problem's curvature and ignores this value.
  double step_size = 1e-3;
  double weight_floor = kDefaultWeightFloor;
  double denominator_guard = 1e-12;
  bool warm_start = true;
  TieBreak tie_break = TieBreak::kLowestIndex;
  SolverMethod method = SolverMethod::kConvexProgram;

  /// Throws ConfigError on steps < 1, step_size <= 0, guard <= 0 or a negative floor.
  void validate() const;
};

/// ||g||² / (tr(C) / |S|). Returns 0 when g = 0 and +infinity when tr(C) = 0 < ||g||².
double gnr_single(double g_norm_sq, double trace, int batch_size);

/// ||ω_k g^k||² / (Σ_j ω_j² tr(C^j) / |S|) for the analytic model. An all-zero
/// denominator is replaced by `guard`.
double gnr_multi_analytic(const MultiTaskNoiseModel& model, const WeightVector& weights,
                          std::size_t task, double guard = 1e-12);

/// min_k ||ω_k m^k||² / (||Σ_k ω_k n^k||² + guard) where ω is `weights`
/// renormalized to sum to one, so the value is invariant to positive scaling.
double empirical_objective(std::span<const ParamVector> momenta,
                           std::span<const ParamVector> noises, std::span<const double> weights,
                           double guard);

/// Index of the task with the smallest ||ω_k m^k||², ties to the lowest index.
std::size_t active_task(std::span<const ParamVector> momenta, std::span<const double> weights);

/// Maximizes empirical_objective over the floored simplex.
///
/// With a_k = ||m^k||², G the Gram matrix of the noises and H = G + guard·11ᵀ,
/// the objective on the simplex is min_k a_k ω_k² / ωᵀHω, which is homogeneous
/// of degree zero. Normalizing min_k sqrt(a_k) ω_k = 1 turns the max-min into
/// the convex program
///
///   minimize ωᵀHω  subject to  sqrt(a_k) ω_k >= 1,  ω_k >= floor · Σ_j ω_j,
///
/// solved after Jacobi scaling by a primal active-set method (at most
/// `config.steps` passes) and mapped back onto the simplex. Tasks whose
/// normalization constraint stays active are the active tasks of the max-min.
///
/// Starts from `warm` when given and config.warm_start is set, else from equal
/// weights, and never returns weights worse than the (floored) start.
/// Throws StateError when `momenta` is empty, ConfigError for fewer than two
/// tasks, DimensionError on inconsistent inputs.
WeightVector solve_weights(std::span<const ParamVector> momenta,
                           std::span<const ParamVector> noises, const SolverConfig& config,
                           const std::optional<WeightVector>& warm = std::nullopt);

/// Exhaustive search over the simplex grid {i * resolution} for two or three
/// tasks. Verification oracle for solve_weights.
/// Throws UnsupportedError for other task counts and ConfigError when the
/// resolution is non-positive or coarser than 1/n.
WeightVector solve_weights_grid(std::span<const ParamVector> momenta,
                                std::span<const ParamVector> noises, double resolution,
                                double guard = 1e-12);

/// Gradient-only limit: ω_k ∝ 1 / ||m^k||, which equalizes ||ω_k m^k||.
/// Zero-norm tasks take all the mass before flooring.
WeightVector gradient_only_weights(std::span<const ParamVector> momenta,
                                   double floor = kDefaultWeightFloor);

/// Noise-only limit: the minimizer of Σ ω_k² tr(C^k) / |S| on the simplex,
/// ω_k ∝ 1 / tr(C^k). Zero-trace tasks take all the mass before flooring.
WeightVector noise_only_weights(std::span<const double> traces, int batch_size,
                                double floor = kDefaultWeightFloor);

GnrReport analytic_report(const MultiTaskNoiseModel& model, const WeightVector& weights,
                          double guard = 1e-12);

/// Momentum-based report: GNR_S^k ≈ ||m^k||² / (||n^k||² + guard) and
/// GNR_M^k ≈ ||ω_k m^k||² / (||Σ ω_j n^j||² + guard).
GnrReport empirical_report(std::span<const ParamVector> momenta,
                           std::span<const ParamVector> noises, const WeightVector& weights,
                           double guard = 1e-12);

}  // namespace maxgnr
