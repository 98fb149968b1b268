#include "maxgnr/noise_model.hpp"

#include <cmath>
#include <string>

#include "maxgnr/errors.hpp"

namespace maxgnr {

TaskNoiseProfile::TaskNoiseProfile(int task_id, ParamVector expected_gradient,
                                   double covariance_trace, int batch_size)
    : task_id_(task_id),
      expected_gradient_(std::move(expected_gradient)),
      covariance_trace_(covariance_trace),
      batch_size_(batch_size) {
  if (!(covariance_trace_ >= 0.0) || !std::isfinite(covariance_trace_)) {
    throw DomainError("TaskNoiseProfile: covariance trace must be finite and >= 0");
  }
  if (batch_size_ < 1) throw ConfigError("TaskNoiseProfile: batch size must be >= 1");
  if (expected_gradient_.empty()) throw DimensionError("TaskNoiseProfile: empty gradient");
  if (!expected_gradient_.is_finite()) throw DomainError("TaskNoiseProfile: non-finite gradient");
}

TaskNoiseProfile TaskNoiseProfile::with_batch_size(int batch_size) const {
  return TaskNoiseProfile(task_id_, expected_gradient_, covariance_trace_, batch_size);
}

MultiTaskNoiseModel::MultiTaskNoiseModel(std::vector<TaskNoiseProfile> profiles)
    : profiles_(std::move(profiles)) {
  if (profiles_.size() < 2) throw ConfigError("MultiTaskNoiseModel: need at least two tasks");
  for (const auto& p : profiles_) {
    if (p.batch_size() != profiles_.front().batch_size()) {
      throw ConfigError("MultiTaskNoiseModel: tasks must share one batch size");
    }
    if (p.dim() != profiles_.front().dim()) {
      throw DimensionError("MultiTaskNoiseModel: gradient dimensions differ");
    }
  }
}

const TaskNoiseProfile& MultiTaskNoiseModel::profile(std::size_t task) const {
  if (task >= profiles_.size()) throw LookupError("unknown task " + std::to_string(task));
  return profiles_[task];
}

std::vector<double> MultiTaskNoiseModel::traces() const {
  std::vector<double> out;
  out.reserve(profiles_.size());
  for (const auto& p : profiles_) out.push_back(p.covariance_trace());
  return out;
}

std::vector<ParamVector> MultiTaskNoiseModel::expected_gradients() const {
  std::vector<ParamVector> out;
  out.reserve(profiles_.size());
  for (const auto& p : profiles_) out.push_back(p.expected_gradient());
  return out;
}

double noise_magnitude(const TaskNoiseProfile& profile) {
  return profile.covariance_trace() / static_cast<double>(profile.batch_size());
}

ParamVector sample_task_noise(const TaskNoiseProfile& profile, RandomStream& rng) {
  const double per_coordinate = noise_magnitude(profile) / static_cast<double>(profile.dim());
  return sample_gaussian(ParamVector(profile.dim()), per_coordinate, rng);
}

ParamVector sample_task_gradient(const TaskNoiseProfile& profile, RandomStream& rng) {
  return profile.expected_gradient() + sample_task_noise(profile, rng);
}

std::vector<ParamVector> sample_task_noises(const MultiTaskNoiseModel& model, RandomStream& rng) {
  std::vector<ParamVector> out;
  out.reserve(model.task_count());
  for (const auto& p : model.profiles()) out.push_back(sample_task_noise(p, rng));
  return out;
}

ParamVector sample_weighted_gradient(const MultiTaskNoiseModel& model, const WeightVector& weights,
                                     RandomStream& rng) {
  if (weights.size() != model.task_count()) {
    throw DimensionError("sample_weighted_gradient: weight count != task count");
  }
  ParamVector out(model.dim());
  for (std::size_t k = 0; k < model.task_count(); ++k) {
    axpy(weights[k], sample_task_gradient(model.profile(k), rng), out);
  }
  return out;
}

double weighted_noise_power(const MultiTaskNoiseModel& model, const WeightVector& weights) {
  if (weights.size() != model.task_count()) {
    throw DimensionError("weighted_noise_power: weight count != task count");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < model.task_count(); ++k) {
    total += weights[k] * weights[k] * noise_magnitude(model.profile(k));
  }
  return total;
}

double itgn_variance(const MultiTaskNoiseModel& model, const WeightVector& weights,
                     std::size_t task) {
  if (task >= model.task_count()) throw LookupError("unknown task " + std::to_string(task));
  if (weights.size() != model.task_count()) {
    throw DimensionError("itgn_variance: weight count != task count");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < model.task_count(); ++k) {
    if (k == task) continue;
    total += weights[k] * weights[k] * noise_magnitude(model.profile(k));
  }
  return total;
}

ParamVector random_gradient(std::size_t dim, double norm_value, std::uint64_t seed) {
  if (dim == 0) throw DimensionError("random_gradient: zero dimension");
  if (!(norm_value >= 0.0)) throw DomainError("random_gradient: negative norm");
  RandomStream rng(seed);
  ParamVector v = sample_gaussian(ParamVector(dim), 1.0, rng);
  const double n = norm(v);
  return n > 0.0 ? v * (norm_value / n) : v;
}

}  // namespace maxgnr
