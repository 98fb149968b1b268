#include <gtest/gtest.h>

#include <cmath>

#include "maxgnr/errors.hpp"
#include "maxgnr/gnr.hpp"

namespace maxgnr {
namespace {

struct Instance {
  std::vector<ParamVector> momenta;
  std::vector<ParamVector> noises;
};

Instance symmetric_pair() { return {{{1, 0}, {0, 1}}, {{0.1, 0}, {0, 0.1}}}; }
Instance asymmetric_pair() { return {{{2, 0}, {0, 1}}, {{0.1, 0}, {0, 0.1}}}; }

Instance random_instance(RandomStream& rng, std::size_t n, std::size_t dim) {
  Instance inst;
  for (std::size_t k = 0; k < n; ++k) {
    ParamVector m(dim), e(dim);
    const double scale = std::exp(2.0 * rng.normal());
    for (std::size_t i = 0; i < dim; ++i) {
      m[i] = scale * rng.normal();
      e[i] = 0.3 * scale * std::exp(rng.normal()) * rng.normal();
    }
    inst.momenta.push_back(m);
    inst.noises.push_back(e);
  }
  return inst;
}

double objective(const Instance& inst, const WeightVector& w, double guard = 1e-12) {
  return empirical_objective(inst.momenta, inst.noises, w.span(), guard);
}

TEST(GnrSingle, DirectValues) {
  EXPECT_DOUBLE_EQ(gnr_single(4.0, 2.0, 1), 2.0);
  EXPECT_DOUBLE_EQ(gnr_single(0.0, 2.0, 1), 0.0);
  EXPECT_TRUE(std::isinf(gnr_single(1.0, 0.0, 1)));
  EXPECT_DOUBLE_EQ(gnr_single(4.0, 2.0, 4), 8.0);
}

TEST(GnrMultiAnalytic, DirectValues) {
  const MultiTaskNoiseModel model({TaskNoiseProfile(0, ParamVector{1, 0}, 2.0, 1),
                                   TaskNoiseProfile(1, ParamVector{0, 1}, 2.0, 1)});
  EXPECT_DOUBLE_EQ(gnr_multi_analytic(model, WeightVector({0.5, 0.5}), 0), 0.25);
  EXPECT_DOUBLE_EQ(gnr_single(1.0, 2.0, 1), 0.5);
  EXPECT_DOUBLE_EQ(gnr_multi_analytic(model, WeightVector({1.0, 0.0}), 0), gnr_single(1.0, 2.0, 1));
}

TEST(GnrMultiAnalytic, ZeroTracesHitTheGuard) {
  const MultiTaskNoiseModel model({TaskNoiseProfile(0, ParamVector{1, 0}, 0.0, 1),
                                   TaskNoiseProfile(1, ParamVector{0, 1}, 0.0, 1)});
  const double v = gnr_multi_analytic(model, WeightVector({0.5, 0.5}), 0);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, 0.25 / 1e-12, 1e-3 * 0.25 / 1e-12);
}

TEST(GnrMultiAnalytic, NeverExceedsSingleTaskGnr) {
  RandomStream rng(41);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng.index(4);
    const int batch = 1 + static_cast<int>(rng.index(32));
    std::vector<TaskNoiseProfile> profiles;
    for (std::size_t k = 0; k < n; ++k) {
      profiles.emplace_back(static_cast<int>(k), random_gradient(6, std::exp(rng.normal()), rng.next_u64()),
                            std::exp(2.0 * rng.normal()), batch);
    }
    const MultiTaskNoiseModel model(profiles);
    std::vector<double> raw(n);
    for (double& x : raw) x = rng.uniform();
    const WeightVector w = project_simplex(raw);
    for (std::size_t k = 0; k < n; ++k) {
      const double single = gnr_single(norm_sq(profiles[k].expected_gradient()), profiles[k].covariance_trace(), batch);
      EXPECT_LE(gnr_multi_analytic(model, w, k), single * (1.0 + 1e-9) + 1e-9);
    }
  }
}

TEST(EmpiricalObjective, DirectValues) {
  const Instance inst = symmetric_pair();
  EXPECT_NEAR(objective(inst, WeightVector({0.5, 0.5})), 0.25 / (0.0025 + 0.0025 + 1e-12), 1e-6);
  const std::vector<ParamVector> zero{{0, 0}, {0, 0}};
  const std::vector<double> w{0.5, 0.5};
  EXPECT_NEAR(empirical_objective(inst.momenta, zero, w, 1e-12), 0.25 / 1e-12, 1.0);
}

TEST(EmpiricalObjective, InvariantToPositiveScaling) {
  RandomStream rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const Instance inst = random_instance(rng, 3, 5);
    const std::vector<double> w{rng.uniform() + 0.01, rng.uniform() + 0.01, rng.uniform() + 0.01};
    const double c = std::exp(3.0 * rng.normal());
    const std::vector<double> scaled{c * w[0], c * w[1], c * w[2]};
    const double a = empirical_objective(inst.momenta, inst.noises, w, 1e-12);
    const double b = empirical_objective(inst.momenta, inst.noises, scaled, 1e-12);
    EXPECT_NEAR(b, a, 1e-12 * std::max(1.0, std::abs(a)));
  }
}

TEST(ActiveTask, TiesGoToLowestIndex) {
  const std::vector<ParamVector> m{{1, 0}, {0, 1}};
  const std::vector<double> w{0.5, 0.5};
  EXPECT_EQ(active_task(m, w), 0u);
  const std::vector<double> tilted{0.6, 0.4};
  EXPECT_EQ(active_task(m, tilted), 1u);
}

TEST(SolveWeights, SymmetricPairStaysEqual) {
  const Instance inst = symmetric_pair();
  const WeightVector w = solve_weights(inst.momenta, inst.noises, SolverConfig{});
  EXPECT_NEAR(w[0], 0.5, 1e-6);
  EXPECT_NEAR(w[1], 0.5, 1e-6);
}

TEST(SolveWeights, AsymmetricPairBalancesWeightedNorms) {
  const Instance inst = asymmetric_pair();
  const WeightVector w = solve_weights(inst.momenta, inst.noises, SolverConfig{});
  EXPECT_NEAR(w[0], 1.0 / 3.0, 0.02);
  EXPECT_NEAR(w[1], 2.0 / 3.0, 0.02);
}

TEST(SolveWeights, ActiveBranchMethodIsAvailable) {
  SolverConfig config;
  config.method = SolverMethod::kActiveBranch;
  const Instance inst = symmetric_pair();
  const WeightVector w = solve_weights(inst.momenta, inst.noises, config);
  EXPECT_NEAR(w[0], 0.5, 1e-6);
}

TEST(SolveWeights, ThreeSymmetricTasks) {
  const std::vector<ParamVector> m{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const std::vector<ParamVector> e{{0.1, 0, 0}, {0, 0.1, 0}, {0, 0, 0.1}};
  const WeightVector w = solve_weights(m, e, SolverConfig{});
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(w[k], 1.0 / 3.0, 1e-3);
}

TEST(SolveWeights, Errors) {
  const std::vector<ParamVector> none;
  EXPECT_THROW(solve_weights(none, none, SolverConfig{}), StateError);
  const std::vector<ParamVector> one{{1, 0}};
  EXPECT_THROW(solve_weights(one, one, SolverConfig{}), ConfigError);
  const std::vector<ParamVector> m{{1, 0}, {0, 1}};
  const std::vector<ParamVector> bad{{1, 0}, {0, 1, 2}};
  EXPECT_THROW(solve_weights(m, bad, SolverConfig{}), DimensionError);
  SolverConfig config;
  config.steps = 0;
  EXPECT_THROW(config.validate(), ConfigError);
}

TEST(SolveWeights, ReturnsFeasibleWeightsAboveFloor) {
  RandomStream rng(43);
  SolverConfig config;
  for (int trial = 0; trial < 200; ++trial) {
    const Instance inst = random_instance(rng, 2 + rng.index(4), 4);
    const WeightVector w = solve_weights(inst.momenta, inst.noises, config);
    double sum = 0.0;
    for (double x : w.values()) {
      EXPECT_GE(x, config.weight_floor - 1e-15);
      sum += x;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(SolveWeights, AgreesWithGridOracle) {
  RandomStream rng(44);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = trial % 2 == 0 ? 2 : 3;
    const Instance inst = random_instance(rng, n, 4);
    const double solved = objective(inst, solve_weights(inst.momenta, inst.noises, SolverConfig{}));
    const double grid = objective(inst, solve_weights_grid(inst.momenta, inst.noises, 1e-3));
    EXPECT_GE(solved, 0.99 * grid) << "trial " << trial;
  }
}

TEST(SolveWeights, WarmStartAtOwnOutputIsAFixedPoint) {
  RandomStream rng(45);
  for (int trial = 0; trial < 100; ++trial) {
    const Instance inst = random_instance(rng, 2 + rng.index(3), 4);
    const WeightVector first = solve_weights(inst.momenta, inst.noises, SolverConfig{});
    const WeightVector again = solve_weights(inst.momenta, inst.noises, SolverConfig{}, first);
    const double before = objective(inst, first);
    EXPECT_GE(objective(inst, again), before - 1e-9 * std::max(1.0, before));
  }
}

TEST(SolveWeightsGrid, Examples) {
  const Instance sym = symmetric_pair();
  const WeightVector a = solve_weights_grid(sym.momenta, sym.noises, 1e-3);
  EXPECT_NEAR(a[0], 0.5, 1e-12);
  const Instance asym = asymmetric_pair();
  const WeightVector b = solve_weights_grid(asym.momenta, asym.noises, 1e-3);
  EXPECT_NEAR(b[0], 0.333, 1e-3 + 1e-12);
  EXPECT_NEAR(b[1], 0.667, 1e-3 + 1e-12);
}

TEST(SolveWeightsGrid, Errors) {
  const Instance sym = symmetric_pair();
  EXPECT_THROW(solve_weights_grid(sym.momenta, sym.noises, 0.6), ConfigError);
  EXPECT_THROW(solve_weights_grid(sym.momenta, sym.noises, 0.0), ConfigError);
  const std::vector<ParamVector> four(4, ParamVector{1, 0});
  EXPECT_THROW(solve_weights_grid(four, four, 0.1), UnsupportedError);
}

TEST(LimitWeights, GradientOnly) {
  const std::vector<ParamVector> m{{2, 0}, {0, 1}};
  const WeightVector w = gradient_only_weights(m, 0.0);
  EXPECT_NEAR(w[0], 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(w[1], 2.0 / 3.0, 1e-12);
}

TEST(LimitWeights, NoiseOnly) {
  const std::vector<double> equal{2.0, 2.0};
  EXPECT_NEAR(noise_only_weights(equal, 1, 0.0)[0], 0.5, 1e-12);
  const std::vector<double> skewed{1.0, 3.0};
  const WeightVector w = noise_only_weights(skewed, 1, 0.0);
  EXPECT_NEAR(w[0], 0.75, 1e-12);
  EXPECT_NEAR(w[1], 0.25, 1e-12);
}

TEST(LimitWeights, GradientOnlyEqualizesWeightedNorms) {
  RandomStream rng(46);
  for (int trial = 0; trial < 200; ++trial) {
    const Instance inst = random_instance(rng, 2 + rng.index(5), 3);
    const WeightVector w = gradient_only_weights(inst.momenta, 0.0);
    const double ref = w[0] * norm(inst.momenta[0]);
    for (std::size_t k = 1; k < w.size(); ++k) EXPECT_NEAR(w[k] * norm(inst.momenta[k]), ref, 1e-9 * std::max(1.0, ref));
  }
}

TEST(LimitWeights, NoiseOnlySatisfiesStationarity) {
  RandomStream rng(47);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> traces(2 + rng.index(5));
    for (double& t : traces) t = std::exp(rng.normal());
    const WeightVector w = noise_only_weights(traces, 4, 0.0);
    for (std::size_t k = 1; k < traces.size(); ++k) EXPECT_NEAR(w[k] * traces[k], w[0] * traces[0], 1e-9);
  }
}

TEST(Reports, AnalyticAndEmpiricalAgreeOnDirectInputs) {
  const MultiTaskNoiseModel model({TaskNoiseProfile(0, ParamVector{1, 0}, 2.0, 1),
                                   TaskNoiseProfile(1, ParamVector{0, 1}, 2.0, 1)});
  const GnrReport r = analytic_report(model, WeightVector({0.5, 0.5}));
  EXPECT_DOUBLE_EQ(r.gnr_multi[0], 0.25);
  EXPECT_DOUBLE_EQ(r.gnr_single[0], 0.5);
  EXPECT_DOUBLE_EQ(r.objective, 0.25);

  const Instance inst = symmetric_pair();
  const GnrReport e = empirical_report(inst.momenta, inst.noises, WeightVector({0.5, 0.5}));
  EXPECT_NEAR(e.objective, objective(inst, WeightVector({0.5, 0.5})), 1e-9);
  EXPECT_NEAR(e.gnr_single[0], 1.0 / 0.01, 1e-6);
}

}  // namespace
}  // namespace maxgnr
