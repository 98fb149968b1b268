#include <gtest/gtest.h>

#include <cmath>

#include "maxgnr/errors.hpp"
#include "maxgnr/momentum.hpp"
#include "maxgnr/noise_model.hpp"

namespace maxgnr {
namespace {

TEST(MomentumInit, CopiesFirstGradients) {
  const std::vector<ParamVector> g{{1.0, 2.0}, {-3.0, 0.5}};
  const MomentumState s = MomentumState::init(g, 0.5);
  EXPECT_EQ(s.momenta(), g);
  EXPECT_EQ(s.step(), 0u);
}

TEST(MomentumInit, ValidatesGamma) {
  const std::vector<ParamVector> g{{1.0}, {2.0}};
  EXPECT_NO_THROW(MomentumState::init(g, 0.0));
  EXPECT_THROW(MomentumState::init(g, 1.0), ConfigError);
  EXPECT_THROW(MomentumState::init(g, -0.1), ConfigError);
  EXPECT_THROW(MomentumState::init({}, 0.5), ConfigError);
  EXPECT_THROW(MomentumState::init({{1.0}, {1.0, 2.0}}, 0.5), DimensionError);
}

TEST(MomentumUpdate, DirectValues) {
  const MomentumState s = MomentumState::init({{1.0, 1.0}}, 0.5);
  const std::vector<ParamVector> g{{3.0, 1.0}};
  EXPECT_EQ(s.update(g).momentum(0), (ParamVector{2.0, 1.0}));
  EXPECT_EQ(s.update(g).step(), 1u);

  const MomentumState zero = MomentumState::init({{1.0, 1.0}}, 0.0);
  EXPECT_EQ(zero.update(g).momentum(0), g[0]);
}

TEST(MomentumUpdate, ErrorsOnMismatchOrUninitialized) {
  const MomentumState s = MomentumState::init({{1.0, 1.0}, {0.0, 0.0}}, 0.5);
  const std::vector<ParamVector> short_vec{{1.0}, {1.0}};
  const std::vector<ParamVector> one_task{{1.0, 1.0}};
  EXPECT_THROW(s.update(short_vec), DimensionError);
  EXPECT_THROW(s.update(one_task), DimensionError);
  EXPECT_THROW(MomentumState{}.update(one_task), StateError);
  EXPECT_THROW(estimate_noise(MomentumState{}, one_task), StateError);
}

TEST(MomentumUpdate, ConstantInputConvergesGeometrically) {
  const ParamVector target{0.7, -1.3, 2.0};
  MomentumState s = MomentumState::init({ParamVector{5.0, 5.0, 5.0}}, 0.8);
  const double start = norm(s.momentum(0) - target);
  const std::vector<ParamVector> g{target};
  for (int t = 1; t <= 40; ++t) {
    s.update_in_place(g);
    EXPECT_NEAR(norm(s.momentum(0) - target), std::pow(0.8, t) * start, 1e-12);
  }
}

TEST(EstimateNoise, DirectValues) {
  const MomentumState s = MomentumState::init({{2.0, 1.0}}, 0.5);
  const std::vector<ParamVector> same{{2.0, 1.0}};
  const std::vector<ParamVector> g{{3.0, 1.0}};
  EXPECT_EQ(estimate_noise(s, same).noises[0], (ParamVector{0.0, 0.0}));
  EXPECT_EQ(estimate_noise(s, g).noises[0], (ParamVector{1.0, 0.0}));
}

TEST(MomentumVarianceFactor, ClosedForm) {
  EXPECT_DOUBLE_EQ(momentum_variance_factor(0.5), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(momentum_variance_factor(0.0), 1.0);
  EXPECT_THROW(momentum_variance_factor(1.0), ConfigError);
}

// Stationary stream: fixed mean, trace 4, batch 1, γ = 0.5.
class StationaryStream : public ::testing::Test {
 protected:
  static constexpr double kGamma = 0.5;
  const TaskNoiseProfile profile{0, ParamVector{1.0, -1.0, 0.5, 2.0}, 4.0, 1};
};

TEST_F(StationaryStream, MomentumVarianceContracts) {
  RandomStream rng(31);
  MomentumState s = MomentumState::init({sample_task_gradient(profile, rng)}, kGamma);
  for (int t = 0; t < 500; ++t) s.update_in_place(std::vector<ParamVector>{sample_task_gradient(profile, rng)});
  double total = 0.0;
  const int steps = 10000;
  for (int t = 0; t < steps; ++t) {
    s.update_in_place(std::vector<ParamVector>{sample_task_gradient(profile, rng)});
    total += norm_sq(s.momentum(0) - profile.expected_gradient());
  }
  const double ratio = total / steps / noise_magnitude(profile);
  EXPECT_NEAR(ratio, momentum_variance_factor(kGamma), 0.1 * momentum_variance_factor(kGamma));
}

TEST_F(StationaryStream, NoiseEstimateIsCenteredWithInflatedPower) {
  RandomStream rng(32);
  MomentumState s = MomentumState::init({sample_task_gradient(profile, rng)}, kGamma);
  for (int t = 0; t < 500; ++t) s.update_in_place(std::vector<ParamVector>{sample_task_gradient(profile, rng)});
  const int steps = 10000;
  ParamVector mean(profile.dim());
  double power = 0.0;
  for (int t = 0; t < steps; ++t) {
    const std::vector<ParamVector> g{sample_task_gradient(profile, rng)};
    const ParamVector n = estimate_noise(s, g).noises[0];
    axpy(1.0 / steps, n, mean);
    power += norm_sq(n);
    s.update_in_place(g);
  }
  const double expected_power = (1.0 + momentum_variance_factor(kGamma)) * noise_magnitude(profile);
  EXPECT_NEAR(power / steps, expected_power, 0.1 * expected_power);
  // Successive estimates are correlated through m, so bound each coordinate by
  // three standard errors of the inflated per-coordinate variance times the
  // long-run variance factor 1/(1-γ)² of the AR(1) stream.
  const double coord_var = expected_power / static_cast<double>(profile.dim());
  const double se = std::sqrt(coord_var / steps) / (1.0 - kGamma);
  for (double x : mean) EXPECT_LT(std::abs(x), 3.0 * se);
}

}  // namespace
}  // namespace maxgnr
