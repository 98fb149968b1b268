#include "maxgnr_app/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <utility>

#include "maxgnr/gnr.hpp"
#include "maxgnr/momentum.hpp"
#include "maxgnr/noise_model.hpp"
#include "maxgnr/strategies.hpp"
#include "maxgnr/tasks.hpp"

namespace maxgnr::app {
namespace {

using CheckFn = CheckResult (*)(const VerifyOptions&, RandomStream&);

double log_uniform(RandomStream& rng, double lo, double hi) {
  return lo * std::exp(rng.uniform() * std::log(hi / lo));
}

WeightVector random_simplex(std::size_t n, RandomStream& rng) {
  std::vector<double> w(n);
  for (double& x : w) x = -std::log(1.0 - rng.uniform());
  double sum = 0.0;
  for (double x : w) sum += x;
  for (double& x : w) x /= sum;
  return project_simplex(w, 0.0);
}

ParamVector random_vector(std::size_t dim, double scale, RandomStream& rng) {
  ParamVector v(dim);
  for (double& x : v.span()) x = scale * rng.normal();
  return v;
}

TaskNoiseProfile random_profile(int id, std::size_t dim, int batch, RandomStream& rng) {
  return TaskNoiseProfile(id, random_vector(dim, 1.0, rng), log_uniform(rng, 0.5, 50.0), batch);
}

double mean_noise_power(const TaskNoiseProfile& p, std::size_t draws, RandomStream& rng) {
  double total = 0.0;
  for (std::size_t i = 0; i < draws; ++i) total += norm_sq(sample_task_noise(p, rng));
  return total / static_cast<double>(draws);
}

CheckResult check_noise_magnitude(const VerifyOptions&, RandomStream& rng) {
  CheckResult r{"noise.magnitude", true, 0.0, 0.03, ""};
  for (int i = 0; i < 5; ++i) {
    const auto dim = 5 + rng.index(46);
    const auto batch = static_cast<int>(1 + rng.index(64));
    const TaskNoiseProfile p = random_profile(i, dim, batch, rng);
    const double rel = std::abs(mean_noise_power(p, 100000, rng) / noise_magnitude(p) - 1.0);
    r.measured = std::max(r.measured, rel);
  }
  r.passed = r.measured <= r.expected;
  r.detail = "max relative error of E||n||^2 vs tr(C)/|S|";
  return r;
}

CheckResult check_batch_scaling(const VerifyOptions&, RandomStream& rng) {
  CheckResult r{"noise.batch_scaling", true, 0.0, 0.05, ""};
  for (int i = 0; i < 5; ++i) {
    const TaskNoiseProfile p = random_profile(i, 5 + rng.index(46), static_cast<int>(1 + rng.index(32)), rng);
    const double ratio = mean_noise_power(p, 100000, rng) /
                         mean_noise_power(p.with_batch_size(2 * p.batch_size()), 100000, rng);
    r.measured = std::max(r.measured, std::abs(ratio / 2.0 - 1.0));
  }
  r.passed = r.measured <= r.expected;
  r.detail = "max relative deviation of the |S| -> 2|S| power ratio from 2";
  return r;
}

CheckResult check_itgn(const VerifyOptions&, RandomStream& rng) {
  CheckResult r{"noise.itgn", true, 0.0, 0.03, ""};
  constexpr std::size_t kDraws = 100000;
  for (int model_index = 0; model_index < 3; ++model_index) {
    const std::size_t dim = 4 + rng.index(20);
    const int batch = static_cast<int>(1 + rng.index(32));
    std::vector<TaskNoiseProfile> profiles;
    for (int k = 0; k < 3; ++k) profiles.push_back(random_profile(k, dim, batch, rng));
    const MultiTaskNoiseModel model(profiles);
    const WeightVector w = random_simplex(3, rng);
    std::vector<double> power(3, 0.0);
    for (std::size_t draw = 0; draw < kDraws; ++draw) {
      const auto noises = sample_task_noises(model, rng);
      for (std::size_t i = 0; i < 3; ++i) {
        ParamVector others(dim);
        for (std::size_t k = 0; k < 3; ++k) {
          if (k != i) axpy(w[k], noises[k], others);
        }
        power[i] += norm_sq(others);
      }
    }
    for (std::size_t i = 0; i < 3; ++i) {
      const double expected = itgn_variance(model, w, i);
      r.measured = std::max(r.measured, std::abs(power[i] / kDraws / expected - 1.0));
    }
  }
  r.passed = r.measured <= r.expected;
  r.detail = "max relative error of inter-task noise power, 3-task models";
  return r;
}

CheckResult check_gnr_inequality(const VerifyOptions&, RandomStream& rng) {
  CheckResult r{"gnr.inequality", true, -1e300, 1e-9, ""};
  for (int i = 0; i < 10000; ++i) {
    const std::size_t n = 2 + rng.index(4);
    const std::size_t dim = 1 + rng.index(8);
    const int batch = static_cast<int>(1 + rng.index(64));
    std::vector<TaskNoiseProfile> profiles;
    for (std::size_t k = 0; k < n; ++k) {
      profiles.emplace_back(static_cast<int>(k), random_vector(dim, log_uniform(rng, 0.1, 10.0), rng),
                            log_uniform(rng, 0.01, 100.0), batch);
    }
    const MultiTaskNoiseModel model(profiles);
    const WeightVector w = random_simplex(n, rng);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& p = model.profile(k);
      const double single = gnr_single(norm_sq(p.expected_gradient()), p.covariance_trace(), batch);
      r.measured = std::max(r.measured, gnr_multi_analytic(model, w, k) - single);
    }
  }
  r.passed = r.measured <= r.expected;
  r.detail = "max of GNR_M - GNR_S over 1e4 random pairs";
  return r;
}

CheckResult check_contraction(const VerifyOptions& options, RandomStream& rng) {
  CheckResult r{"momentum.contraction", true, 0.0, 0.10, ""};
  const auto factor = options.contraction_factor ? options.contraction_factor : momentum_variance_factor;
  constexpr std::size_t kDim = 64;
  const TaskNoiseProfile p(0, random_vector(kDim, 1.0, rng), 8.0, 8);
  for (double gamma : {0.5, 0.7, 0.9}) {
    MomentumState state = MomentumState::init({sample_task_gradient(p, rng)}, gamma);
    for (int t = 0; t < 200; ++t) state.update_in_place(std::vector<ParamVector>{sample_task_gradient(p, rng)});
    double total = 0.0;
    constexpr int kSteps = 20000;
    for (int t = 0; t < kSteps; ++t) {
      state.update_in_place(std::vector<ParamVector>{sample_task_gradient(p, rng)});
      total += norm_sq(state.momentum(0) - p.expected_gradient());
    }
    const double ratio = total / kSteps / noise_magnitude(p);
    r.measured = std::max(r.measured, std::abs(ratio / factor(gamma) - 1.0));
  }
  r.passed = r.measured <= r.expected;
  r.detail = "max relative error of the stationary variance ratio, gamma in {0.5,0.7,0.9}";
  return r;
}

struct SolverInstance {
  std::vector<ParamVector> momenta;
  std::vector<ParamVector> noises;
};

SolverInstance random_instance(std::size_t n, RandomStream& rng) {
  SolverInstance s;
  const std::size_t dim = 8;
  for (std::size_t k = 0; k < n; ++k) {
    s.momenta.push_back(random_vector(dim, log_uniform(rng, 0.1, 10.0), rng));
    s.noises.push_back(random_vector(dim, log_uniform(rng, 0.1, 10.0), rng));
  }
  return s;
}

CheckResult check_solver_vs_grid(const VerifyOptions&, RandomStream& rng) {
  CheckResult r{"gnr.solver_vs_grid", true, 1e300, 0.99, ""};
  const SolverConfig config;
  for (int i = 0; i < 100; ++i) {
    const SolverInstance s = random_instance(2 + static_cast<std::size_t>(i % 2), rng);
    const WeightVector solved = solve_weights(s.momenta, s.noises, config);
    const WeightVector grid = solve_weights_grid(s.momenta, s.noises, 1e-3, config.denominator_guard);
    const double ours = empirical_objective(s.momenta, s.noises, solved.span(), config.denominator_guard);
    const double best = empirical_objective(s.momenta, s.noises, grid.span(), config.denominator_guard);
    r.measured = std::min(r.measured, ours / best);
  }
  r.passed = r.measured >= r.expected;
  r.detail = "min ratio of solver objective to the 1e-3 grid optimum";
  return r;
}

CheckResult check_solver_symmetric(const VerifyOptions&, RandomStream& rng) {
  CheckResult r{"gnr.symmetric_weights", true, 0.0, 1e-6, ""};
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = 2 + static_cast<std::size_t>(i % 2);
    // Cyclic shifts of one vector give permutation-symmetric Gram matrices.
    const ParamVector m = random_vector(n, 1.0, rng);
    const ParamVector e = random_vector(n, log_uniform(rng, 0.1, 10.0), rng);
    std::vector<ParamVector> momenta, noises;
    for (std::size_t k = 0; k < n; ++k) {
      ParamVector mk(n), ek(n);
      for (std::size_t j = 0; j < n; ++j) {
        mk[j] = m[(j + k) % n];
        ek[j] = e[(j + k) % n];
      }
      momenta.push_back(mk);
      noises.push_back(ek);
    }
    const WeightVector w = solve_weights(momenta, noises, SolverConfig{});
    for (std::size_t k = 0; k < n; ++k) {
      r.measured = std::max(r.measured, std::abs(w[k] - 1.0 / static_cast<double>(n)));
    }
  }
  r.passed = r.measured <= r.expected;
  r.detail = "max deviation from equal weights on task-symmetric inputs";
  return r;
}

CheckResult check_homogeneity(const VerifyOptions&, RandomStream& rng) {
  CheckResult r{"gnr.homogeneity", true, 0.0, 1e-12, ""};
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + rng.index(4);
    const SolverInstance s = random_instance(n, rng);
    const WeightVector w = random_simplex(n, rng);
    const double scale = log_uniform(rng, 1e-3, 1e3);
    std::vector<double> scaled(w.values());
    for (double& x : scaled) x *= scale;
    const double a = empirical_objective(s.momenta, s.noises, w.span(), 1e-12);
    const double b = empirical_objective(s.momenta, s.noises, scaled, 1e-12);
    r.measured = std::max(r.measured, std::abs(a - b) / std::max(1.0, std::abs(a)));
  }
  r.passed = r.measured <= r.expected;
  r.detail = "max change of the objective under positive scaling of the weights";
  return r;
}

CheckResult check_finite_difference(const VerifyOptions&, RandomStream& rng) {
  CheckResult r{"tasks.finite_difference", true, 0.0, 1e-4, ""};
  constexpr double kStep = 1e-6;
  for (int i = 0; i < 50; ++i) {
    SyntheticTaskSpec spec;
    spec.input_dim = 6;
    spec.hidden_dim = 4;
    spec.loss_scales = {log_uniform(rng, 0.1, 10.0), log_uniform(rng, 0.1, 10.0)};
    spec.label_noise_std = {0.3, 0.3};
    spec.dataset_size = 8;
    spec.generator_seed = rng.next_u64();
    const Dataset data = generate(spec);
    const SharedEncoderModel model = SharedEncoderModel::random(spec, rng.next_u64());
    const MiniBatch batch = sample_batch(data, 5, rng);
    const TaskGradients exact = loss_and_grads(model, data, batch, spec);
    const ParamVector flat = model.flatten();
    const std::size_t shared = model.shared_dim();
    const std::size_t h = model.hidden_dim();
    for (std::size_t k = 0; k < 2; ++k) {
      ParamVector fd_shared(shared), fd_head(h);
      for (std::size_t p = 0; p < flat.size(); ++p) {
        const bool in_head = p >= shared + k * h && p < shared + (k + 1) * h;
        if (p >= shared && !in_head) continue;
        ParamVector plus = flat, minus = flat;
        plus[p] += kStep;
        minus[p] -= kStep;
        const auto up = loss_and_grads(SharedEncoderModel::unflatten(6, 4, 2, plus), data, batch, spec);
        const auto down = loss_and_grads(SharedEncoderModel::unflatten(6, 4, 2, minus), data, batch, spec);
        const double d = (up.losses[k] - down.losses[k]) / (2.0 * kStep);
        if (p < shared) {
          fd_shared[p] = d;
        } else {
          fd_head[p - shared - k * h] = d;
        }
      }
      r.measured = std::max(r.measured, norm(exact.shared[k] - fd_shared) / norm(fd_shared));
      r.measured = std::max(r.measured, norm(exact.heads[k] - fd_head) / norm(fd_head));
    }
  }
  r.passed = r.measured < r.expected;
  r.detail = "max relative error ||analytic - central FD|| / ||FD||, h=1e-6";
  return r;
}

CheckResult check_pcgrad(const VerifyOptions&, RandomStream& rng) {
  CheckResult r{"strategies.pcgrad", true, 1e300, -1e-12, ""};
  for (int i = 0; i < 1000; ++i) {
    const std::size_t dim = 2 + rng.index(6);
    const std::vector<ParamVector> g{random_vector(dim, 1.0, rng), random_vector(dim, 1.0, rng)};
    const ParamVector combined = pcgrad_combine(g, rng);
    r.measured = std::min({r.measured, dot(combined, g[0]), dot(combined, g[1])});
  }
  r.passed = r.measured >= r.expected;
  r.detail = "min dot of the combined gradient with each original gradient";
  return r;
}

CheckResult check_mgda(const VerifyOptions&, RandomStream& rng) {
  CheckResult r{"strategies.mgda", true, -1e300, 1e-9, ""};
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + rng.index(3);
    const std::size_t dim = 2 + rng.index(6);
    std::vector<ParamVector> g;
    double min_norm = 1e300;
    for (std::size_t k = 0; k < n; ++k) {
      g.push_back(random_vector(dim, log_uniform(rng, 0.1, 10.0), rng));
      min_norm = std::min(min_norm, norm(g.back()));
    }
    const WeightVector w = mgda_min_norm_weights(g);
    r.measured = std::max(r.measured, norm(weighted_sum(w.span(), g)) - min_norm);
  }
  r.passed = r.measured <= r.expected;
  r.detail = "max of ||min-norm point|| - min vertex norm";
  return r;
}

CheckResult check_symmetric_strategies(const VerifyOptions&, RandomStream& rng) {
  CheckResult r{"strategies.symmetric", true, 0.0, 1e-9, ""};
  constexpr std::size_t kTasks = 3;
  const ParamVector g = random_vector(6, 1.0, rng);
  const std::vector<ParamVector> grads(kTasks, g);
  std::vector<std::unique_ptr<WeightStrategy>> strategies;
  strategies.push_back(std::make_unique<DwaStrategy>(kTasks, 2.0));
  strategies.push_back(std::make_unique<UncertaintyStrategy>(kTasks, 0.1));
  strategies.push_back(std::make_unique<GradNormStrategy>(kTasks, 1.5, 0.025));
  for (auto& s : strategies) {
    LossHistory history;
    for (std::size_t t = 0; t < 10; ++t) {
      history.push(std::vector<double>(kTasks, 1.0 / (1.0 + static_cast<double>(t))));
      const StrategyOutput out = s->step(StrategyInput{&history, grads, t, &rng});
      for (std::size_t k = 0; k < kTasks; ++k) {
        r.measured = std::max(r.measured, std::abs(out.weights()[k] - 1.0 / kTasks));
      }
    }
  }
  r.passed = r.measured <= r.expected;
  r.detail = "max deviation from 1/n for DWA, uncertainty and GradNorm on symmetric input";
  return r;
}

const std::vector<std::pair<std::string, CheckFn>>& registry() {
  static const std::vector<std::pair<std::string, CheckFn>> checks = {
      {"noise.magnitude", check_noise_magnitude},
      {"noise.batch_scaling", check_batch_scaling},
      {"noise.itgn", check_itgn},
      {"gnr.inequality", check_gnr_inequality},
      {"momentum.contraction", check_contraction},
      {"gnr.solver_vs_grid", check_solver_vs_grid},
      {"gnr.symmetric_weights", check_solver_symmetric},
      {"gnr.homogeneity", check_homogeneity},
      {"tasks.finite_difference", check_finite_difference},
      {"strategies.pcgrad", check_pcgrad},
      {"strategies.mgda", check_mgda},
      {"strategies.symmetric", check_symmetric_strategies},
  };
  return checks;
}

}  // namespace

std::vector<std::string> verify_check_names() {
  std::vector<std::string> names;
  for (const auto& entry : registry()) names.push_back(entry.first);
  return names;
}

std::vector<CheckResult> run_checks(const VerifyOptions& options) {
  std::vector<CheckResult> results;
  const RandomStream root(options.seed);
  const auto& checks = registry();
  for (std::size_t i = 0; i < checks.size(); ++i) {
    if (!options.filter.empty() && checks[i].first.find(options.filter) == std::string::npos) continue;
    RandomStream rng = root.substream(i);
    try {
      results.push_back(checks[i].second(options, rng));
    } catch (const std::exception& e) {
      results.push_back(CheckResult{checks[i].first, false, 0.0, 0.0, std::string("error: ") + e.what()});
    }
  }
  return results;
}

int report_checks(const std::vector<CheckResult>& results, std::ostream& out) {
  char line[256];
  std::snprintf(line, sizeof line, "%-26s %-6s %14s %14s  %s\n", "check", "result", "measured",
                "bound", "detail");
  out << line;
  std::vector<std::string> failed;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-26s %-6s %14.6g %14.6g  ", r.name.c_str(),
                  r.passed ? "PASS" : "FAIL", r.measured, r.expected);
    out << line << r.detail << '\n';
    if (!r.passed) failed.push_back(r.name);
  }
  if (results.empty()) {
    out << "no checks matched the filter\n";
    return 1;
  }
  if (failed.empty()) {
    out << "all " << results.size() << " checks passed\n";
    return 0;
  }
  out << failed.size() << " check(s) failed:";
  for (const auto& name : failed) out << ' ' << name;
  out << '\n';
  return 1;
}

}  // namespace maxgnr::app
