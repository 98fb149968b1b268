#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "maxgnr/numerics.hpp"

namespace maxgnr {

/// Ground truth for one task's stochastic gradient at a frozen parameter point:
/// per-example gradients ~ N(g, C), mini-batch gradient = g + n with
/// n ~ N(0, C/|S|). C enters only through its trace and is represented by an
/// isotropic surrogate with per-coordinate variance tr(C) / (d |S|).
class TaskNoiseProfile {
 public:
  TaskNoiseProfile(int task_id, ParamVector expected_gradient, double covariance_trace,
                   int batch_size);

  int task_id() const { return task_id_; }
  const ParamVector& expected_gradient() const { return expected_gradient_; }
  double covariance_trace() const { return covariance_trace_; }
  int batch_size() const { return batch_size_; }
  std::size_t dim() const { return expected_gradient_.size(); }

  TaskNoiseProfile with_batch_size(int batch_size) const;

 private:
  int task_id_;
  ParamVector expected_gradient_;
  double covariance_trace_;
  int batch_size_;
};

/// n >= 2 task profiles sharing the batch size and parameter dimension.
/// Noises of different tasks are independent.
class MultiTaskNoiseModel {
 public:
  explicit MultiTaskNoiseModel(std::vector<TaskNoiseProfile> profiles);

  std::size_t task_count() const { return profiles_.size(); }
  std::size_t dim() const { return profiles_.front().dim(); }
  int batch_size() const { return profiles_.front().batch_size(); }
  const std::vector<TaskNoiseProfile>& profiles() const { return profiles_; }
  const TaskNoiseProfile& profile(std::size_t task) const;

  std::vector<double> traces() const;
  std::vector<ParamVector> expected_gradients() const;

 private:
  std::vector<TaskNoiseProfile> profiles_;
};

/// tr(C) / |S|, the expected squared norm of the mini-batch noise.
double noise_magnitude(const TaskNoiseProfile& profile);

/// Draws only the noise part n of g + n.
ParamVector sample_task_noise(const TaskNoiseProfile& profile, RandomStream& rng);

ParamVector sample_task_gradient(const TaskNoiseProfile& profile, RandomStream& rng);

/// Per-task noise draws, one per profile, in task order.
std::vector<ParamVector> sample_task_noises(const MultiTaskNoiseModel& model, RandomStream& rng);

/// Σ_k ω_k g^k + Σ_k ω_k n^k with independent n^k.
ParamVector sample_weighted_gradient(const MultiTaskNoiseModel& model, const WeightVector& weights,
                                     RandomStream& rng);

/// Closed-form Σ_k ω_k² tr(C^k) / |S|.
double weighted_noise_power(const MultiTaskNoiseModel& model, const WeightVector& weights);

/// Inter-task gradient noise power seen by `task`: Σ_{k != task} ω_k² tr(C^k) / |S|.
/// Throws LookupError for an unknown task.
double itgn_variance(const MultiTaskNoiseModel& model, const WeightVector& weights,
                     std::size_t task);

/// Gaussian direction scaled to the given Euclidean norm, reproducible from `seed`.
ParamVector random_gradient(std::size_t dim, double norm, std::uint64_t seed);

}  // namespace maxgnr
