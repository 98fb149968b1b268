#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace maxgnr {

/// Flat real vector over model parameters. The length is fixed at
/// construction and all binary arithmetic requires matching lengths.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t dim, double fill = 0.0);
  ParamVector(std::initializer_list<double> values);
  /// Throws DomainError if any entry is NaN or infinite.
  explicit ParamVector(std::vector<double> values);

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  std::span<const double> span() const { return values_; }
  std::span<double> span() { return values_; }
  const std::vector<double>& values() const { return values_; }

  auto begin() const { return values_.begin(); }
  auto end() const { return values_.end(); }

  bool is_finite() const;

  ParamVector& operator+=(const ParamVector& other);
  ParamVector& operator-=(const ParamVector& other);
  ParamVector& operator*=(double scale);

  friend ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
  friend ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
  friend ParamVector operator*(ParamVector a, double s) { return a *= s; }
  friend ParamVector operator*(double s, ParamVector a) { return a *= s; }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<double> values_;
};

double dot(const ParamVector& a, const ParamVector& b);
double norm_sq(const ParamVector& a);
double norm(const ParamVector& a);

/// y += alpha * x
void axpy(double alpha, const ParamVector& x, ParamVector& y);

/// Σ_k weights[k] * vectors[k]. Throws DimensionError on length mismatch.
ParamVector weighted_sum(std::span<const double> weights, std::span<const ParamVector> vectors);

/// Throws DimensionError unless all vectors share one nonzero length.
std::size_t common_dimension(std::span<const ParamVector> vectors);

/// Task weights on the probability simplex, each at least `floor()`.
class WeightVector {
 public:
  WeightVector() = default;
  /// Validates: every weight >= floor (to 1e-15), weights sum to 1 within 1e-12.
  explicit WeightVector(std::vector<double> weights, double floor = 0.0);

  static WeightVector equal(std::size_t n);

  std::size_t size() const { return weights_.size(); }
  double operator[](std::size_t i) const { return weights_[i]; }
  double floor() const { return floor_; }
  std::span<const double> span() const { return weights_; }
  const std::vector<double>& values() const { return weights_; }

  friend bool operator==(const WeightVector&, const WeightVector&) = default;

 private:
  std::vector<double> weights_;
  double floor_ = 0.0;
};

/// Seeded pseudo-random source. Uses the standard-mandated mt19937_64 engine and
/// hand-written distributions so a seed reproduces the same draws on any
/// conforming toolchain. Single owner; never share across threads.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal (Marsaglia polar method).
  double normal();
  /// Unbiased integer in [0, n).
  std::size_t index(std::size_t n);
  std::uint64_t next_u64() { return engine_(); }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

  /// Independent stream derived from this stream's seed and `stream_id`
  /// (does not consume draws from this stream).
  RandomStream substream(std::uint64_t stream_id) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// mean + z with z_i ~ N(0, variance) i.i.d. Throws DomainError if variance < 0.
ParamVector sample_gaussian(const ParamVector& mean, double variance, RandomStream& rng);

/// Euclidean projection of `raw` onto {w : w_k >= floor, Σ w_k = 1}.
/// Idempotent. Throws ConfigError unless 0 <= floor < 1/n, DomainError on
/// non-finite input.
WeightVector project_simplex(std::span<const double> raw, double floor = 0.0);

inline constexpr double kDefaultWeightFloor = 1e-4;

}  // namespace maxgnr
