#include "maxgnr/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "maxgnr/errors.hpp"

namespace maxgnr {
namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": length mismatch (" + std::to_string(a) +
                         " vs " + std::to_string(b) + ")");
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

ParamVector::ParamVector(std::size_t dim, double fill) : values_(dim, fill) {
  if (!std::isfinite(fill)) throw DomainError("ParamVector: non-finite fill value");
}

ParamVector::ParamVector(std::initializer_list<double> values) : values_(values) {
  if (!is_finite()) throw DomainError("ParamVector: non-finite entry");
}

ParamVector::ParamVector(std::vector<double> values) : values_(std::move(values)) {
  if (!is_finite()) throw DomainError("ParamVector: non-finite entry");
}

bool ParamVector::is_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

ParamVector& ParamVector::operator+=(const ParamVector& other) {
  require_same_size(size(), other.size(), "ParamVector +=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

ParamVector& ParamVector::operator-=(const ParamVector& other) {
  require_same_size(size(), other.size(), "ParamVector -=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

ParamVector& ParamVector::operator*=(double scale) {
  for (double& v : values_) v *= scale;
  return *this;
}

double dot(const ParamVector& a, const ParamVector& b) {
  require_same_size(a.size(), b.size(), "dot");
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm_sq(const ParamVector& a) { return dot(a, a); }

double norm(const ParamVector& a) { return std::sqrt(norm_sq(a)); }

void axpy(double alpha, const ParamVector& x, ParamVector& y) {
  require_same_size(x.size(), y.size(), "axpy");
  auto ys = y.span();
  auto xs = x.span();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] += alpha * xs[i];
}

std::size_t common_dimension(std::span<const ParamVector> vectors) {
  if (vectors.empty()) throw DimensionError("empty vector set");
  const std::size_t d = vectors.front().size();
  if (d == 0) throw DimensionError("zero-length vector");
  for (const auto& v : vectors) require_same_size(v.size(), d, "vector set");
  return d;
}

ParamVector weighted_sum(std::span<const double> weights, std::span<const ParamVector> vectors) {
  require_same_size(weights.size(), vectors.size(), "weighted_sum");
  ParamVector out(common_dimension(vectors));
  for (std::size_t k = 0; k < vectors.size(); ++k) axpy(weights[k], vectors[k], out);
  return out;
}

WeightVector::WeightVector(std::vector<double> weights, double floor)
    : weights_(std::move(weights)), floor_(floor) {
  if (weights_.empty()) throw ConfigError("WeightVector: no weights");
  if (!(floor_ >= 0.0)) throw ConfigError("WeightVector: negative floor");
  double sum = 0.0;
  for (double w : weights_) {
    if (!std::isfinite(w)) throw DomainError("WeightVector: non-finite weight");
    if (w < floor_ - 1e-15) throw DomainError("WeightVector: weight below floor");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw DomainError("WeightVector: weights sum to " + std::to_string(sum) + ", not 1");
  }
}

WeightVector WeightVector::equal(std::size_t n) {
  if (n == 0) throw ConfigError("equal weights need at least one task");
  return WeightVector(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

RandomStream::RandomStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

double RandomStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RandomStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u = 0.0, v = 0.0, s = 0.0;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * factor;
  has_spare_ = true;
  return u * factor;
}

std::size_t RandomStream::index(std::size_t n) {
  if (n == 0) throw DomainError("RandomStream::index: empty range");
  // Lemire's nearly-divisionless rejection method.
  __extension__ using u128 = unsigned __int128;
  const std::uint64_t range = n;
  u128 m = static_cast<u128>(engine_()) * range;
  auto low = static_cast<std::uint64_t>(m);
  if (low < range) {
    const std::uint64_t threshold = (0 - range) % range;
    while (low < threshold) {
      m = static_cast<u128>(engine_()) * range;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::size_t>(m >> 64);
}

RandomStream RandomStream::substream(std::uint64_t stream_id) const {
  return RandomStream(splitmix64(seed_ ^ splitmix64(stream_id + 0x5851f42d4c957f2dULL)));
}

ParamVector sample_gaussian(const ParamVector& mean, double variance, RandomStream& rng) {
  if (!(variance >= 0.0) || !std::isfinite(variance)) {
    throw DomainError("sample_gaussian: variance must be finite and >= 0");
  }
  ParamVector out = mean;
  if (variance == 0.0) return out;
  const double sd = std::sqrt(variance);
  for (double& v : out.span()) v += sd * rng.normal();
  return out;
}

WeightVector project_simplex(std::span<const double> raw, double floor) {
  const std::size_t n = raw.size();
  if (n == 0) throw ConfigError("project_simplex: empty input");
  if (!(floor >= 0.0) || floor * static_cast<double>(n) >= 1.0) {
    throw ConfigError("project_simplex: floor must satisfy 0 <= floor < 1/n");
  }
  for (double r : raw) {
    if (!std::isfinite(r)) throw DomainError("project_simplex: non-finite input");
  }
  // Shift by the floor and project onto the scaled simplex {u >= 0, Σu = budget}.
  const double budget = 1.0 - floor * static_cast<double>(n);
  std::vector<double> sorted(raw.begin(), raw.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double threshold = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    cumulative += sorted[j] - floor;
    const double candidate = (cumulative - budget) / static_cast<double>(j + 1);
    if (sorted[j] - floor - candidate > 0.0) threshold = candidate;
  }
  std::vector<double> out(n);
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = std::max(raw[k] - floor - threshold, 0.0);
    sum += out[k];
  }
  // Remove rounding drift so the result sums to one.
  if (sum > 0.0) {
    for (double& w : out) w = floor + w * (budget / sum);
  } else {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(n));
  }
  return WeightVector(std::move(out), floor);
}

}  // namespace maxgnr
