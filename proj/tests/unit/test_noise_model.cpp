#include <gtest/gtest.h>

#include "maxgnr/errors.hpp"
#include "maxgnr/noise_model.hpp"

namespace maxgnr {
namespace {

MultiTaskNoiseModel two_tasks(double trace_a, double trace_b, int batch) {
  return MultiTaskNoiseModel({TaskNoiseProfile(0, ParamVector{1.0, 0.0, 0.0, 0.0}, trace_a, batch),
                              TaskNoiseProfile(1, ParamVector{0.0, 2.0, 0.0, 0.0}, trace_b, batch)});
}

TEST(NoiseMagnitude, DirectValues) {
  EXPECT_DOUBLE_EQ(noise_magnitude(TaskNoiseProfile(0, ParamVector(3), 8.0, 4)), 2.0);
  EXPECT_DOUBLE_EQ(noise_magnitude(TaskNoiseProfile(0, ParamVector(3), 0.0, 4)), 0.0);
  EXPECT_DOUBLE_EQ(noise_magnitude(TaskNoiseProfile(0, ParamVector(3), 4.0, 2)), 2.0);
}

TEST(TaskNoiseProfile, RejectsBadInputs) {
  EXPECT_THROW(TaskNoiseProfile(0, ParamVector(3), -1.0, 4), DomainError);
  EXPECT_THROW(TaskNoiseProfile(0, ParamVector(3), 1.0, 0), ConfigError);
  EXPECT_THROW(MultiTaskNoiseModel({TaskNoiseProfile(0, ParamVector(3), 1.0, 1)}), ConfigError);
  EXPECT_THROW(MultiTaskNoiseModel({TaskNoiseProfile(0, ParamVector(3), 1.0, 1),
                                    TaskNoiseProfile(1, ParamVector(2), 1.0, 1)}),
               DimensionError);
}

TEST(SampleTaskGradient, ZeroTraceIsExact) {
  RandomStream rng(1);
  const TaskNoiseProfile p(0, ParamVector{1.5, -2.0}, 0.0, 3);
  EXPECT_EQ(sample_task_gradient(p, rng), p.expected_gradient());
}

TEST(SampleTaskGradient, NoisePowerMatchesTraceOverBatch) {
  RandomStream rng(2);
  const TaskNoiseProfile p(0, ParamVector(16, 0.5), 8.0, 4);
  double total = 0.0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) total += norm_sq(sample_task_gradient(p, rng) - p.expected_gradient());
  EXPECT_NEAR(total / draws, 2.0, 0.02 * 2.0);
}

TEST(SampleTaskGradient, BatchScalingHalvesNoise) {
  RandomStream rng(3);
  const TaskNoiseProfile small(0, ParamVector(8), 6.0, 1);
  const TaskNoiseProfile large = small.with_batch_size(2);
  double a = 0.0, b = 0.0;
  for (int i = 0; i < 50000; ++i) {
    a += norm_sq(sample_task_noise(small, rng));
    b += norm_sq(sample_task_noise(large, rng));
  }
  EXPECT_NEAR(b / a, 0.5, 0.02);
}

TEST(SampleWeightedGradient, ZeroTracesGiveWeightedSum) {
  RandomStream rng(4);
  const auto model = two_tasks(0.0, 0.0, 1);
  const WeightVector w({0.25, 0.75});
  EXPECT_EQ(sample_weighted_gradient(model, w, rng), (ParamVector{0.25, 1.5, 0.0, 0.0}));
}

TEST(SampleWeightedGradient, OneHotMatchesSingleTaskDistribution) {
  const auto model = two_tasks(3.0, 5.0, 2);
  const WeightVector w({1.0, 0.0});
  RandomStream rng(5);
  const int draws = 100000;
  ParamVector mean(4);
  double power = 0.0;
  for (int i = 0; i < draws; ++i) {
    const ParamVector s = sample_weighted_gradient(model, w, rng);
    axpy(1.0 / draws, s, mean);
    power += norm_sq(s - model.profile(0).expected_gradient());
  }
  EXPECT_NEAR(mean[0], 1.0, 0.03);
  EXPECT_NEAR(power / draws, 1.5, 0.03 * 1.5);
}

TEST(SampleWeightedGradient, TotalNoisePowerMatchesClosedForm) {
  const auto model = two_tasks(3.0, 5.0, 2);
  const WeightVector w({0.3, 0.7});
  RandomStream rng(6);
  const ParamVector expected = weighted_sum(w.span(), model.expected_gradients());
  double power = 0.0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) power += norm_sq(sample_weighted_gradient(model, w, rng) - expected);
  const double closed = weighted_noise_power(model, w);
  EXPECT_NEAR(closed, 0.09 * 1.5 + 0.49 * 2.5, 1e-12);
  EXPECT_NEAR(power / draws, closed, 0.03 * closed);
}

TEST(SampleWeightedGradient, WeightCountMismatchThrows) {
  RandomStream rng(7);
  EXPECT_THROW(sample_weighted_gradient(two_tasks(1, 1, 1), WeightVector::equal(3), rng), DimensionError);
}

TEST(ItgnVariance, DirectValues) {
  const auto model = two_tasks(4.0, 8.0, 2);
  EXPECT_DOUBLE_EQ(itgn_variance(model, WeightVector({0.5, 0.5}), 0), 1.0);
  EXPECT_DOUBLE_EQ(itgn_variance(model, WeightVector({1.0, 0.0}), 0), 0.0);
  EXPECT_THROW(itgn_variance(model, WeightVector({0.5, 0.5}), 2), LookupError);
}

TEST(RandomGradient, HasRequestedNormAndIsReproducible) {
  const ParamVector a = random_gradient(50, 3.0, 9);
  EXPECT_NEAR(norm(a), 3.0, 1e-12);
  EXPECT_EQ(a, random_gradient(50, 3.0, 9));
  EXPECT_NE(a, random_gradient(50, 3.0, 10));
}

}  // namespace
}  // namespace maxgnr
