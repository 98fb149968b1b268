#include "maxgnr/momentum.hpp"

#include <string>

#include "maxgnr/errors.hpp"

namespace maxgnr {

MomentumState MomentumState::init(std::vector<ParamVector> first_gradients, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw ConfigError("momentum gamma must lie in [0, 1), got " + std::to_string(gamma));
  }
  if (first_gradients.empty()) throw ConfigError("momentum needs at least one task");
  common_dimension(first_gradients);
  MomentumState state;
  state.momenta_ = std::move(first_gradients);
  state.gamma_ = gamma;
  state.step_ = 0;
  return state;
}

const ParamVector& MomentumState::momentum(std::size_t task) const {
  if (task >= momenta_.size()) throw LookupError("unknown task " + std::to_string(task));
  return momenta_[task];
}

void MomentumState::check_gradients(std::span<const ParamVector> gradients) const {
  if (!initialized()) throw StateError("momentum state is not initialized");
  if (gradients.size() != momenta_.size()) {
    throw DimensionError("momentum: expected " + std::to_string(momenta_.size()) +
                         " task gradients, got " + std::to_string(gradients.size()));
  }
  for (const auto& g : gradients) {
    if (g.size() != dim()) throw DimensionError("momentum: gradient dimension mismatch");
  }
}

MomentumState MomentumState::update(std::span<const ParamVector> gradients) const {
  MomentumState next = *this;
  next.update_in_place(gradients);
  return next;
}

void MomentumState::update_in_place(std::span<const ParamVector> gradients) {
  check_gradients(gradients);
  for (std::size_t k = 0; k < momenta_.size(); ++k) {
    auto m = momenta_[k].span();
    auto g = gradients[k].span();
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = gamma_ * m[i] + (1.0 - gamma_) * g[i];
  }
  ++step_;
}

NoiseEstimate estimate_noise(const MomentumState& state, std::span<const ParamVector> gradients) {
  state.check_gradients(gradients);
  NoiseEstimate out;
  out.noises.reserve(gradients.size());
  for (std::size_t k = 0; k < gradients.size(); ++k) {
    out.noises.push_back(gradients[k] - state.momentum(k));
  }
  return out;
}

double momentum_variance_factor(double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("momentum gamma must lie in [0, 1)");
  return (1.0 - gamma) / (1.0 + gamma);
}

}  // namespace maxgnr
