#include <gtest/gtest.h>

#include <cmath>

#include "maxgnr/errors.hpp"
#include "maxgnr/noise_model.hpp"
#include "maxgnr/strategies.hpp"

namespace maxgnr {
namespace {

StrategyInput make_input(const LossHistory& losses, const std::vector<ParamVector>& grads, std::size_t t,
                         RandomStream* rng = nullptr) {
  StrategyInput in;
  in.losses = &losses;
  in.gradients = grads;
  in.iteration = t;
  in.rng = rng;
  return in;
}

TEST(StrategyKind, NamesRoundTrip) {
  for (StrategyKind k : all_strategy_kinds()) EXPECT_EQ(parse_strategy_kind(to_string(k)), k);
  EXPECT_EQ(all_strategy_kinds().size(), 7u);
  EXPECT_THROW(parse_strategy_kind("maxgnrr"), ConfigError);
}

TEST(EqualWeights, Values) {
  EXPECT_NEAR(equal_weights(3).weights()[1], 1.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(equal_weights(1).weights()[0], 1.0);
  EXPECT_DOUBLE_EQ(equal_weights(2).weights()[1], 0.5);
  EXPECT_THROW(equal_weights(0), ConfigError);
}

TEST(Dwa, ColdStartAndEqualRatios) {
  LossHistory h;
  h.push({1.0, 2.0});
  EXPECT_DOUBLE_EQ(dwa_weights(h, 2.0, 2)[0], 0.5);
  h.push({0.5, 1.0});
  EXPECT_DOUBLE_EQ(dwa_weights(h, 2.0, 2)[0], 0.5);
  h.push({0.4, 0.3});
  EXPECT_NEAR(dwa_weights(h, 2.0, 2)[0], 0.5, 1e-15);
}

TEST(Dwa, SoftmaxOfRatios) {
  LossHistory h;
  h.push({1.0, 1.0});  // t-2
  h.push({1.0, 2.0});  // t-1, ratios (1, 2)
  h.push({9.0, 9.0});  // current, unused
  const WeightVector w = dwa_weights(h, 2.0, 2);
  EXPECT_NEAR(w[0], 0.3775406688, 1e-9);
  EXPECT_NEAR(w[1], 0.6224593312, 1e-9);
}

TEST(Dwa, ZeroPriorLossIsNeutral) {
  LossHistory h;
  h.push({0.0, 1.0});
  h.push({3.0, 1.0});
  h.push({1.0, 1.0});
  const WeightVector w = dwa_weights(h, 2.0, 2);
  EXPECT_NEAR(w[0], 0.5, 1e-15);
}

TEST(Uncertainty, WeightsFromLogVariances) {
  const std::vector<double> equal{0.7, 0.7, 0.7};
  EXPECT_NEAR(uncertainty_weights(equal)[2], 1.0 / 3.0, 1e-15);
  const std::vector<double> s{0.0, std::log(3.0)};
  const WeightVector w = uncertainty_weights(s);
  EXPECT_NEAR(w[0], 0.75, 1e-12);
  EXPECT_NEAR(w[1], 0.25, 1e-12);
  EXPECT_NEAR(w[0] + w[1], 1.0, 1e-9);
}

TEST(Uncertainty, GradientMatchesFiniteDifferences) {
  const std::vector<double> losses{0.8, 3.5, 0.05};
  std::vector<double> s{0.3, -1.2, 2.0};
  const auto grad = uncertainty_log_var_gradient(losses, s);
  for (std::size_t k = 0; k < s.size(); ++k) {
    EXPECT_NEAR(grad[k], 1.0 - std::exp(-s[k]) * losses[k], 1e-15);
    const double h = 1e-6;
    std::vector<double> up = s, down = s;
    up[k] += h;
    down[k] -= h;
    const double fd = (uncertainty_loss(losses, up) - uncertainty_loss(losses, down)) / (2 * h);
    EXPECT_NEAR(grad[k], fd, 1e-6);
  }
}

TEST(Mgda, TwoTaskExamples) {
  const std::vector<ParamVector> ortho{{1, 0}, {0, 1}};
  const WeightVector a = mgda_min_norm_weights(ortho);
  EXPECT_NEAR(a[0], 0.5, 1e-12);
  EXPECT_NEAR(norm_sq(weighted_sum(a.span(), ortho)), 0.5, 1e-12);
  const std::vector<ParamVector> parallel{{1, 0}, {2, 0}};
  const WeightVector b = mgda_min_norm_weights(parallel);
  EXPECT_NEAR(b[0], 1.0, 1e-12);
  const std::vector<ParamVector> zeros{{0, 0}, {0, 0}};
  EXPECT_DOUBLE_EQ(mgda_min_norm_weights(zeros)[0], 0.5);
}

double grid_min_norm3(const std::vector<ParamVector>& g, double res) {
  double best = 1e300;
  const int steps = static_cast<int>(std::lround(1.0 / res));
  for (int i = 0; i <= steps; ++i) {
    for (int j = 0; i + j <= steps; ++j) {
      const std::vector<double> w{i * res, j * res, (steps - i - j) * res};
      best = std::min(best, norm_sq(weighted_sum(w, g)));
    }
  }
  return best;
}

TEST(Mgda, FrankWolfeMatchesGridOnThreeTasks) {
  RandomStream rng(51);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<ParamVector> g;
    for (int k = 0; k < 3; ++k) g.push_back(random_gradient(4, std::exp(rng.normal()), rng.next_u64()));
    const WeightVector w = mgda_min_norm_weights(g);
    EXPECT_LE(norm_sq(weighted_sum(w.span(), g)), grid_min_norm3(g, 1e-3) + 1e-3);
  }
}

TEST(Mgda, NoWorseThanAnyVertex) {
  RandomStream rng(52);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<ParamVector> g;
    const std::size_t n = 2 + rng.index(5);
    for (std::size_t k = 0; k < n; ++k) g.push_back(random_gradient(5, std::exp(rng.normal()), rng.next_u64()));
    const WeightVector w = mgda_min_norm_weights(g);
    double min_norm = 1e300;
    for (const auto& v : g) min_norm = std::min(min_norm, norm(v));
    EXPECT_LE(norm(weighted_sum(w.span(), g)), min_norm + 1e-9);
  }
}

TEST(PcGrad, ProjectsConflictingPair) {
  RandomStream rng(53);
  const std::vector<ParamVector> g{{1, 0}, {-1, 1}};
  // g1 -> (0.5, 0.5); g2 -> (-1,1) - (-1/1)(1,0) = (0, 1); mean (0.25, 0.75).
  const ParamVector out = pcgrad_combine(g, rng);
  EXPECT_NEAR(out[0], 0.25, 1e-15);
  EXPECT_NEAR(out[1], 0.75, 1e-15);
  EXPECT_NEAR(dot(ParamVector{0.5, 0.5}, g[1]), 0.0, 1e-15);
}

TEST(PcGrad, NonConflictingIsPlainMean) {
  RandomStream rng(54);
  const std::vector<ParamVector> g{{1, 0, 1}, {0, 1, 1}, {1, 1, 0}};
  const ParamVector out = pcgrad_combine(g, rng);
  EXPECT_NEAR(out[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(out[2], 2.0 / 3.0, 1e-15);
}

TEST(PcGrad, ZeroGradientIsSkipped) {
  RandomStream rng(55);
  const std::vector<ParamVector> g{{1, 0}, {0, 0}};
  EXPECT_EQ(pcgrad_combine(g, rng), (ParamVector{0.5, 0.0}));
}

TEST(PcGrad, TwoTaskOutputNeverOpposesOriginals) {
  RandomStream rng(56);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::vector<ParamVector> g{random_gradient(3, std::exp(rng.normal()), rng.next_u64()),
                                     random_gradient(3, std::exp(rng.normal()), rng.next_u64())};
    const ParamVector out = pcgrad_combine(g, rng);
    EXPECT_GE(dot(out, g[0]), -1e-12);
    EXPECT_GE(dot(out, g[1]), -1e-12);
  }
}

TEST(PcGrad, DeterministicGivenSeed) {
  const std::vector<ParamVector> g{{1, 0, 0}, {-1, 1, 0}, {0, -1, 1}};
  RandomStream a(57), b(57);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(pcgrad_combine(g, a), pcgrad_combine(g, b));
}

TEST(MaxGnrStrategy, FirstStepSeedsMomentumAndReturnsEqual) {
  MaxGnrStrategy s(2, 0.5, SolverConfig{});
  LossHistory h;
  h.push({1.0, 1.0});
  const std::vector<ParamVector> g{{1, 2}, {3, 4}};
  const StrategyOutput out = s.step(make_input(h, g, 0));
  EXPECT_DOUBLE_EQ(out.weights()[0], 0.5);
  EXPECT_EQ(s.momentum().momenta(), g);
}

TEST(MaxGnrStrategy, IdenticalTasksGetEqualWeights) {
  MaxGnrStrategy s(2, 0.5, SolverConfig{});
  RandomStream rng(58);
  const TaskNoiseProfile p(0, ParamVector{1.0, -0.5, 0.3}, 0.5, 1);
  LossHistory h;
  for (std::size_t t = 0; t < 50; ++t) {
    const ParamVector draw = sample_task_gradient(p, rng);
    const std::vector<ParamVector> g{draw, draw};
    h.push({1.0, 1.0});
    const StrategyOutput out = s.step(make_input(h, g, t));
    EXPECT_NEAR(out.weights()[0], 0.5, 1e-6);
  }
}

TEST(MaxGnrStrategy, DiagnosticsAndDimensionErrors) {
  MaxGnrStrategy s(2, 0.5, SolverConfig{});
  LossHistory h;
  h.push({1.0, 1.0});
  const std::vector<ParamVector> g0{{1, 0}, {0, 1}};
  const std::vector<ParamVector> g1{{1.1, 0}, {0, 0.9}};
  s.step(make_input(h, g0, 0));
  const StrategyOutput out = s.step(make_input(h, g1, 1));
  EXPECT_TRUE(out.diagnostics.count("objective"));
  EXPECT_TRUE(out.diagnostics.count("gnr_multi.0"));
  const std::vector<ParamVector> bad{{1, 0, 0}, {0, 1, 0}};
  EXPECT_THROW(s.step(make_input(h, bad, 2)), DimensionError);
}

// Long run on an analytic model with ||g1|| = 2 ||g2|| and equal traces. The
// oracle solves each step's problem by grid search on the true gradients and
// an independent noise draw.
TEST(MaxGnrStrategy, LongRunAverageTracksGridOracle) {
  const MultiTaskNoiseModel model({TaskNoiseProfile(0, random_gradient(8, 2.0, 1), 0.5, 1),
                                   TaskNoiseProfile(1, random_gradient(8, 1.0, 2), 0.5, 1)});
  MaxGnrStrategy s(2, 0.5, SolverConfig{});
  RandomStream rng(59), oracle_rng(60);
  LossHistory h;
  const auto truth = model.expected_gradients();
  double strategy_sum = 0.0, oracle_sum = 0.0;
  const int steps = 2000;
  for (int t = 0; t <= steps; ++t) {
    std::vector<ParamVector> g;
    for (const auto& p : model.profiles()) g.push_back(sample_task_gradient(p, rng));
    h.push({1.0, 1.0});
    const StrategyOutput out = s.step(make_input(h, g, static_cast<std::size_t>(t)));
    if (t == 0) continue;
    strategy_sum += out.weights()[0];
    oracle_sum += solve_weights_grid(truth, sample_task_noises(model, oracle_rng), 1e-3)[0];
  }
  EXPECT_NEAR(strategy_sum / steps, oracle_sum / steps, 0.05);
}

TEST(GradNormStrategy, IdenticalTasksStayEqual) {
  GradNormStrategy s(3, 1.5, 0.025);
  LossHistory h;
  const std::vector<ParamVector> g(3, ParamVector{1.0, 2.0});
  for (std::size_t t = 0; t < 20; ++t) {
    h.push({1.0 / (1.0 + t), 1.0 / (1.0 + t), 1.0 / (1.0 + t)});
    const WeightVector w = s.step(make_input(h, g, t)).weights();
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(w[k], 1.0 / 3.0, 1e-12);
  }
}

TEST(GradNormStrategy, LargerGradientLosesWeight) {
  GradNormStrategy s(2, 1.5, 0.025);
  LossHistory h;
  const std::vector<ParamVector> g{{2.0, 0.0}, {0.0, 1.0}};
  h.push({1.0, 1.0});
  s.step(make_input(h, g, 0));
  h.push({0.5, 0.5});
  s.step(make_input(h, g, 1));
  EXPECT_GT(s.raw_weights()[1], s.raw_weights()[0]);
}

TEST(StatefulStrategies, EmitValidWeightsEveryIteration) {
  RandomStream rng(61);
  for (StrategyKind kind : all_strategy_kinds()) {
    StrategyConfig config;
    config.kind = kind;
    auto s = make_strategy(config, 3, 1e-3);
    ASSERT_EQ(s->kind(), kind);
    LossHistory h;
    for (std::size_t t = 0; t < 30; ++t) {
      std::vector<ParamVector> g;
      for (int k = 0; k < 3; ++k) g.push_back(random_gradient(4, std::exp(rng.normal()), rng.next_u64()));
      h.push({rng.uniform() + 0.1, rng.uniform() + 0.1, rng.uniform() + 0.1});
      const StrategyOutput out = s->step(make_input(h, g, t, &rng));
      const WeightVector w = out.head_weights(3);
      double sum = 0.0;
      for (double x : w.values()) {
        EXPECT_GE(x, 0.0);
        sum += x;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12) << to_string(kind);
      if (!out.has_weights()) EXPECT_EQ(out.combined_gradient().size(), 4u);
    }
  }
}

TEST(PcGradStrategy, RequiresRandomStream) {
  PcGradStrategy s;
  LossHistory h;
  h.push({1.0, 1.0});
  const std::vector<ParamVector> g{{1, 0}, {0, 1}};
  EXPECT_THROW(s.step(make_input(h, g, 0)), StateError);
}

}  // namespace
}  // namespace maxgnr
