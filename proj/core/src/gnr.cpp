#include "maxgnr/gnr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "maxgnr/errors.hpp"

namespace maxgnr {
namespace {

// Dense row-major n x n matrix; n is the task count, so tiny.
struct SmallMatrix {
  std::size_t n = 0;
  std::vector<double> data;

  explicit SmallMatrix(std::size_t size) : n(size), data(size * size, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return data[i * n + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * n + j]; }
};

SmallMatrix gram(std::span<const ParamVector> vectors) {
  SmallMatrix g(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    for (std::size_t j = i; j < vectors.size(); ++j) {
      g(i, j) = g(j, i) = dot(vectors[i], vectors[j]);
    }
  }
  return g;
}

std::vector<double> squared_norms(std::span<const ParamVector> vectors) {
  std::vector<double> out;
  out.reserve(vectors.size());
  for (const auto& v : vectors) out.push_back(norm_sq(v));
  return out;
}

double quadratic_form(const SmallMatrix& h, std::span<const double> w) {
  double total = 0.0;
  for (std::size_t i = 0; i < h.n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < h.n; ++j) row += h(i, j) * w[j];
    total += w[i] * row;
  }
  return total;
}

// Objective in Gram form for weights already on the simplex:
// min_k a_k w_k² / (wᵀGw + guard).
double gram_objective(std::span<const double> sq_norms, const SmallMatrix& noise_gram,
                      std::span<const double> w, double guard) {
  double numerator = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < w.size(); ++k) {
    numerator = std::min(numerator, sq_norms[k] * w[k] * w[k]);
  }
  return numerator / (std::max(0.0, quadratic_form(noise_gram, w)) + guard);
}

void check_pair(std::span<const ParamVector> momenta, std::span<const ParamVector> noises) {
  if (momenta.empty()) throw StateError("momenta are not initialized");
  if (noises.size() != momenta.size()) {
    throw DimensionError("momenta and noises differ in task count");
  }
  if (common_dimension(momenta) != common_dimension(noises)) {
    throw DimensionError("momenta and noises differ in dimension");
  }
}

std::vector<double> normalized(std::span<const double> weights) {
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw DomainError("weights must be finite and nonnegative");
    }
    sum += w;
  }
  if (!(sum > 0.0)) throw DomainError("weights must not all be zero");
  std::vector<double> out(weights.begin(), weights.end());
  for (double& w : out) w /= sum;
  return out;
}

// Gaussian elimination with partial pivoting on an m x (m+1) augmented
// matrix. Returns false when a pivot vanishes.
bool solve_dense(std::vector<double>& a, std::size_t m, std::vector<double>& x) {
  const std::size_t w = m + 1;
  double largest = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < m; ++c) largest = std::max(largest, std::abs(a[r * w + c]));
  }
  for (std::size_t col = 0; col < m; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < m; ++r) {
      if (std::abs(a[r * w + col]) > std::abs(a[pivot * w + col])) pivot = r;
    }
    if (!(std::abs(a[pivot * w + col]) > 1e-14 * largest)) return false;
    for (std::size_t c = 0; c < w; ++c) std::swap(a[col * w + c], a[pivot * w + c]);
    for (std::size_t r = col + 1; r < m; ++r) {
      const double f = a[r * w + col] / a[col * w + col];
      for (std::size_t c = col; c < w; ++c) a[r * w + c] -= f * a[col * w + c];
    }
  }
  x.assign(m, 0.0);
  for (std::size_t r = m; r-- > 0;) {
    double value = a[r * w + m];
    for (std::size_t c = r + 1; c < m; ++c) value -= a[r * w + c] * x[c];
    x[r] = value / a[r * w + r];
  }
  return true;
}

WeightVector solve_convex_program(std::span<const double> sq_norms, const SmallMatrix& noise_gram,
                                  const WeightVector& start, const SolverConfig& config) {
  const std::size_t n = sq_norms.size();
  for (double a : sq_norms) {
    // A task with zero momentum pins the objective at zero everywhere.
    if (!(a > 0.0) || !std::isfinite(a)) return start;
  }
  const double floor = config.weight_floor;

  // Jacobi scaling ω_k = d_k v_k gives the Hessian P a unit diagonal.
  std::vector<double> d(n);
  SmallMatrix p(n);
  for (std::size_t k = 0; k < n; ++k) {
    d[k] = 1.0 / std::sqrt(noise_gram(k, k) + config.denominator_guard);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) p(i, j) = d[i] * d[j] * (noise_gram(i, j) + config.denominator_guard);
  }

  // Constraints cᵀv >= rhs: first the normalization sqrt(a_k) ω_k >= 1, then the
  // homogeneous floor ω_k - floor Σ_j ω_j >= 0.
  const std::size_t m = floor > 0.0 ? 2 * n : n;
  std::vector<std::vector<double>> rows(m, std::vector<double>(n, 0.0));
  std::vector<double> rhs(m, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    rows[k][k] = std::sqrt(sq_norms[k]) * d[k];
    rhs[k] = 1.0;
  }
  if (floor > 0.0) {
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t j = 0; j < n; ++j) rows[n + k][j] = (j == k ? d[j] : 0.0) - floor * d[j];
    }
  }
  // Unit rows keep the KKT system balanced against P's unit diagonal.
  for (std::size_t i = 0; i < m; ++i) {
    double len = 0.0;
    for (double x : rows[i]) len += x * x;
    len = std::sqrt(len);
    for (double& x : rows[i]) x /= len;
    rhs[i] /= len;
  }
  auto slack = [&](std::size_t i, const std::vector<double>& v) {
    double s = -rhs[i];
    for (std::size_t j = 0; j < n; ++j) s += rows[i][j] * v[j];
    return s;
  };

  // Feasible start: the (floored) start weights rescaled so the tightest
  // normalization constraint holds with equality.
  std::vector<double> v(n);
  double tightest = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) tightest = std::min(tightest, std::sqrt(sq_norms[k]) * start[k]);
  if (!(tightest > 0.0)) return start;
  for (std::size_t k = 0; k < n; ++k) v[k] = start[k] / tightest / d[k];

  // Primal active-set method on min vᵀPv. Each pass solves the equality
  // problem on the working set W through its KKT system, then either steps
  // to the first blocking constraint or drops the constraint with the most
  // negative multiplier. `steps` caps the number of passes.
  std::vector<std::size_t> working;
  std::vector<double> kkt, sol;
  double ridge = 0.0;
  for (int pass = 0; pass < config.steps; ++pass) {
    const std::size_t w = working.size();
    const std::size_t size = n + w;
    kkt.assign(size * (size + 1), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double gradient = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        kkt[i * (size + 1) + j] = 2.0 * p(i, j) + (i == j ? ridge : 0.0);
        gradient += 2.0 * p(i, j) * v[j];
      }
      for (std::size_t c = 0; c < w; ++c) kkt[i * (size + 1) + n + c] = -rows[working[c]][i];
      kkt[i * (size + 1) + size] = -gradient;
    }
    for (std::size_t c = 0; c < w; ++c) {
      for (std::size_t j = 0; j < n; ++j) kkt[(n + c) * (size + 1) + j] = rows[working[c]][j];
    }
    if (!solve_dense(kkt, size, sol)) {
      // Flat directions of a rank-deficient noise Gram matrix.
      if (ridge >= 1e-8) break;
      ridge = ridge == 0.0 ? 1e-12 : ridge * 100.0;
      --pass;
      continue;
    }

    double step_norm = 0.0, v_norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      step_norm = std::max(step_norm, std::abs(sol[j]));
      v_norm = std::max(v_norm, std::abs(v[j]));
    }
    if (step_norm <= 1e-9 * std::max(1.0, v_norm)) {
      std::size_t drop = w;
      double most_negative = -1e-12;
      for (std::size_t c = 0; c < w; ++c) {
        if (sol[n + c] < most_negative) {
          most_negative = sol[n + c];
          drop = c;
        }
      }
      if (drop == w) break;
      working.erase(working.begin() + static_cast<std::ptrdiff_t>(drop));
      continue;
    }

    // With the ridge the solution is only a descent direction, so take the
    // exact minimizer along it under the unregularized P.
    double alpha = 1.0;
    if (ridge > 0.0) {
      double slope = 0.0, curvature = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double pv = 0.0, pp = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          pv += p(i, j) * v[j];
          pp += p(i, j) * sol[j];
        }
        slope += 2.0 * sol[i] * pv;
        curvature += 2.0 * sol[i] * pp;
      }
      if (slope >= 0.0) break;
      alpha = curvature > 0.0 ? -slope / curvature : std::numeric_limits<double>::infinity();
    }
    std::size_t blocking = m;
    for (std::size_t i = 0; i < m; ++i) {
      if (std::find(working.begin(), working.end(), i) != working.end()) continue;
      double rate = 0.0;
      for (std::size_t j = 0; j < n; ++j) rate += rows[i][j] * sol[j];
      if (rate < 0.0) {
        const double limit = std::max(0.0, slack(i, v)) / -rate;
        if (limit < alpha) {
          alpha = limit;
          blocking = i;
        }
      }
    }
    if (!std::isfinite(alpha)) break;
    for (std::size_t j = 0; j < n; ++j) v[j] += alpha * sol[j];
    if (blocking != m) working.push_back(blocking);
  }

  std::vector<double> omega(n);
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    omega[k] = std::max(0.0, d[k] * v[k]);
    sum += omega[k];
  }
  for (double& x : omega) x /= sum;
  // Clears rounding below the floor.
  return project_simplex(omega, floor);
}

WeightVector solve_active_branch(std::span<const double> sq_norms, const SmallMatrix& noise_gram,
                                 const WeightVector& start, const SolverConfig& config) {
  const std::size_t n = sq_norms.size();
  const double guard = config.denominator_guard;
  std::vector<double> w = start.values();
  std::vector<double> best = w;
  double best_value = gram_objective(sq_norms, noise_gram, w, guard);

  std::vector<double> hw(n), gradient(n), trial(n);
  for (int it = 0; it < config.steps; ++it) {
    std::size_t active = 0;
    for (std::size_t k = 1; k < n; ++k) {
      if (sq_norms[k] * w[k] * w[k] < sq_norms[active] * w[active] * w[active]) active = k;
    }
    for (std::size_t i = 0; i < n; ++i) {
      hw[i] = 0.0;
      for (std::size_t j = 0; j < n; ++j) hw[i] += noise_gram(i, j) * w[j];
    }
    const double denom = quadratic_form(noise_gram, w) + guard;
    const double numer = sq_norms[active] * w[active] * w[active];
    for (std::size_t i = 0; i < n; ++i) {
      // The guard term is guard·(Σω)²; on the simplex its gradient is 2·guard.
      gradient[i] = -numer * 2.0 * (hw[i] + guard) / (denom * denom);
    }
    gradient[active] += 2.0 * sq_norms[active] * w[active] / denom;
    for (std::size_t i = 0; i < n; ++i) trial[i] = w[i] + config.step_size * gradient[i];
    w = project_simplex(trial, config.weight_floor).values();
    const double value = gram_objective(sq_norms, noise_gram, w, guard);
    if (value > best_value) {
      best_value = value;
      best = w;
    }
  }
  return WeightVector(std::move(best), config.weight_floor);
}

WeightVector mass_on_zero_entries(std::span<const double> magnitudes, double floor) {
  std::vector<double> raw(magnitudes.size(), 0.0);
  bool any_zero = false;
  for (std::size_t k = 0; k < magnitudes.size(); ++k) {
    if (!(magnitudes[k] >= 0.0) || !std::isfinite(magnitudes[k])) {
      throw DomainError("magnitudes must be finite and nonnegative");
    }
    if (magnitudes[k] == 0.0) {
      raw[k] = 1.0;
      any_zero = true;
    }
  }
  if (any_zero) return project_simplex(normalized(raw), floor);
  double sum = 0.0;
  for (std::size_t k = 0; k < magnitudes.size(); ++k) {
    raw[k] = 1.0 / magnitudes[k];
    sum += raw[k];
  }
  for (double& r : raw) r /= sum;
  return project_simplex(raw, floor);
}

}  // namespace

void SolverConfig::validate() const {
  if (steps < 1) throw ConfigError("solver steps must be >= 1");
  if (!(step_size > 0.0) || !std::isfinite(step_size)) {
    throw ConfigError("solver step size must be > 0");
  }
  if (!(denominator_guard > 0.0)) throw ConfigError("denominator guard must be > 0");
  if (!(weight_floor >= 0.0)) throw ConfigError("weight floor must be >= 0");
}

double gnr_single(double g_norm_sq, double trace, int batch_size) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(trace >= 0.0) || !(g_norm_sq >= 0.0)) {
    throw DomainError("gnr_single: negative trace or squared norm");
  }
  if (trace == 0.0) {
    return g_norm_sq == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return g_norm_sq / (trace / static_cast<double>(batch_size));
}

double gnr_multi_analytic(const MultiTaskNoiseModel& model, const WeightVector& weights,
                          std::size_t task, double guard) {
  const auto& profile = model.profile(task);
  const double denom = weighted_noise_power(model, weights);
  const double numer = weights[task] * weights[task] * norm_sq(profile.expected_gradient());
  return numer / (denom > 0.0 ? denom : guard);
}

double empirical_objective(std::span<const ParamVector> momenta,
                           std::span<const ParamVector> noises, std::span<const double> weights,
                           double guard) {
  check_pair(momenta, noises);
  if (weights.size() != momenta.size()) {
    throw DimensionError("empirical_objective: weight count != task count");
  }
  const std::vector<double> w = normalized(weights);
  double numerator = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < w.size(); ++k) {
    numerator = std::min(numerator, w[k] * w[k] * norm_sq(momenta[k]));
  }
  return numerator / (norm_sq(weighted_sum(w, noises)) + guard);
}

std::size_t active_task(std::span<const ParamVector> momenta, std::span<const double> weights) {
  if (momenta.empty() || weights.size() != momenta.size()) {
    throw DimensionError("active_task: weight count != task count");
  }
  std::size_t active = 0;
  double lowest = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < momenta.size(); ++k) {
    const double value = weights[k] * weights[k] * norm_sq(momenta[k]);
    if (value < lowest) {
      lowest = value;
      active = k;
    }
  }
  return active;
}

WeightVector solve_weights(std::span<const ParamVector> momenta,
                           std::span<const ParamVector> noises, const SolverConfig& config,
                           const std::optional<WeightVector>& warm) {
  config.validate();
  check_pair(momenta, noises);
  const std::size_t n = momenta.size();
  if (n < 2) throw ConfigError("solve_weights needs at least two tasks");

  std::vector<double> initial(n, 1.0 / static_cast<double>(n));
  if (warm && config.warm_start) {
    if (warm->size() != n) throw DimensionError("warm start has wrong task count");
    initial = warm->values();
  }
  const WeightVector start = project_simplex(initial, config.weight_floor);

  const std::vector<double> sq_norms = squared_norms(momenta);
  const SmallMatrix noise_gram = gram(noises);

  WeightVector candidate = config.method == SolverMethod::kConvexProgram
                               ? solve_convex_program(sq_norms, noise_gram, start, config)
                               : solve_active_branch(sq_norms, noise_gram, start, config);

  // Compared on the vectors: near a noise-cancelling point the Gram form
  // loses all precision to cancellation.
  const double guard = config.denominator_guard;
  if (empirical_objective(momenta, noises, candidate.span(), guard) <
      empirical_objective(momenta, noises, start.span(), guard)) {
    return start;
  }
  return candidate;
}

WeightVector solve_weights_grid(std::span<const ParamVector> momenta,
                                std::span<const ParamVector> noises, double resolution,
                                double guard) {
  check_pair(momenta, noises);
  const std::size_t n = momenta.size();
  if (n != 2 && n != 3) {
    throw UnsupportedError("grid oracle supports 2 or 3 tasks, got " + std::to_string(n));
  }
  if (!(resolution > 0.0) || resolution > 1.0 / static_cast<double>(n)) {
    throw ConfigError("grid resolution must lie in (0, 1/n]");
  }
  const auto steps = static_cast<std::size_t>(std::floor(1.0 / resolution + 1e-9));
  const double inv = 1.0 / static_cast<double>(steps);
  const std::vector<double> sq_norms = squared_norms(momenta);
  const SmallMatrix noise_gram = gram(noises);

  std::vector<double> best(n, 1.0 / static_cast<double>(n));
  double best_value = -1.0;
  std::vector<double> w(n);
  for (std::size_t i = 0; i <= steps; ++i) {
    const std::size_t j_max = n == 2 ? 0 : steps - i;
    for (std::size_t j = 0; j <= j_max; ++j) {
      w[0] = static_cast<double>(i) * inv;
      if (n == 2) {
        w[1] = static_cast<double>(steps - i) * inv;
      } else {
        w[1] = static_cast<double>(j) * inv;
        w[2] = static_cast<double>(steps - i - j) * inv;
      }
      const double value = gram_objective(sq_norms, noise_gram, w, guard);
      if (value > best_value) {
        best_value = value;
        best = w;
      }
    }
  }
  return WeightVector(normalized(best));
}

WeightVector gradient_only_weights(std::span<const ParamVector> momenta, double floor) {
  if (momenta.size() < 2) throw ConfigError("gradient_only_weights needs at least two tasks");
  std::vector<double> norms;
  norms.reserve(momenta.size());
  for (const auto& m : momenta) norms.push_back(norm(m));
  return mass_on_zero_entries(norms, floor);
}

WeightVector noise_only_weights(std::span<const double> traces, int batch_size, double floor) {
  if (traces.size() < 2) throw ConfigError("noise_only_weights needs at least two tasks");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  // |S| scales every term equally and drops out of the minimizer.
  return mass_on_zero_entries(traces, floor);
}

GnrReport analytic_report(const MultiTaskNoiseModel& model, const WeightVector& weights,
                          double guard) {
  GnrReport report;
  report.weights_used = weights;
  report.objective = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < model.task_count(); ++k) {
    const auto& p = model.profile(k);
    const double single_denom = noise_magnitude(p);
    report.gnr_single.push_back(norm_sq(p.expected_gradient()) /
                                (single_denom > 0.0 ? single_denom : guard));
    report.gnr_multi.push_back(gnr_multi_analytic(model, weights, k, guard));
    report.objective = std::min(report.objective, report.gnr_multi.back());
  }
  return report;
}

GnrReport empirical_report(std::span<const ParamVector> momenta,
                           std::span<const ParamVector> noises, const WeightVector& weights,
                           double guard) {
  check_pair(momenta, noises);
  if (weights.size() != momenta.size()) {
    throw DimensionError("empirical_report: weight count != task count");
  }
  GnrReport report;
  report.weights_used = weights;
  const double combined = norm_sq(weighted_sum(weights.span(), noises)) + guard;
  report.objective = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < momenta.size(); ++k) {
    const double m2 = norm_sq(momenta[k]);
    report.gnr_single.push_back(m2 / (norm_sq(noises[k]) + guard));
    report.gnr_multi.push_back(weights[k] * weights[k] * m2 / combined);
    report.objective = std::min(report.objective, report.gnr_multi.back());
  }
  return report;
}

}  // namespace maxgnr
