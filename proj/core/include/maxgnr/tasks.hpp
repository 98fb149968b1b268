#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "maxgnr/numerics.hpp"

namespace maxgnr {

/// Shared-encoder regression problem. Targets are y_k = a_k · tanh(B0 x) + η_k
/// with η_k ~ N(0, label_noise_std_k²); the loss of task k is c_k · MSE.
struct SyntheticTaskSpec {
  std::size_t input_dim = 32;
  std::size_t hidden_dim = 16;
  std::vector<double> loss_scales{1.0, 100.0};
  std::vector<double> label_noise_std{0.1, 0.1};
  std::size_t dataset_size = 2048;
  std::uint64_t generator_seed = 0;

  std::size_t task_count() const { return loss_scales.size(); }
  /// Throws ConfigError on zero dims, fewer than two tasks, mismatched
  /// per-task lists, c_k <= 0, std_k < 0 or an empty dataset.
  void validate() const;
};

enum class DatasetSplit { kTrain, kTest };

/// Row-major inputs (size × input_dim) and per-task targets.
struct Dataset {
  std::size_t input_dim = 0;
  std::vector<double> inputs;
  std::vector<std::vector<double>> targets;

  std::size_t size() const { return input_dim == 0 ? 0 : inputs.size() / input_dim; }
  std::size_t task_count() const { return targets.size(); }
  std::span<const double> input(std::size_t i) const {
    return std::span<const double>(inputs).subspan(i * input_dim, input_dim);
  }
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Encoder W (hidden × input, row-major) followed by tanh, then one linear head
/// per task. The encoder is the only shared parameter block.
class SharedEncoderModel {
 public:
  SharedEncoderModel(std::size_t input_dim, std::size_t hidden_dim, std::size_t task_count);
  SharedEncoderModel(std::size_t input_dim, ParamVector encoder, std::vector<ParamVector> heads);

  /// W ~ N(0, 1/d), v_k ~ N(0, 1/h), drawn from `seed`.
  static SharedEncoderModel random(const SyntheticTaskSpec& spec, std::uint64_t seed);
  /// The generator's (B0, a_k) for this spec.
  static SharedEncoderModel ground_truth(const SyntheticTaskSpec& spec);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden_dim() const { return heads_.front().size(); }
  std::size_t task_count() const { return heads_.size(); }
  std::size_t shared_dim() const { return encoder_.size(); }
  std::size_t parameter_count() const;

  const ParamVector& encoder() const { return encoder_; }
  ParamVector& encoder() { return encoder_; }
  const ParamVector& head(std::size_t task) const;
  ParamVector& head(std::size_t task);

  /// Encoder block, then heads in task order.
  ParamVector flatten() const;
  /// Inverse of flatten for a model of the same shape.
  static SharedEncoderModel unflatten(std::size_t input_dim, std::size_t hidden_dim,
                                      std::size_t task_count, const ParamVector& flat);

  /// tanh(W x)
  std::vector<double> features(std::span<const double> x) const;
  double predict(std::span<const double> x, std::size_t task) const;

  friend bool operator==(const SharedEncoderModel&, const SharedEncoderModel&) = default;

 private:
  std::size_t input_dim_;
  ParamVector encoder_;
  std::vector<ParamVector> heads_;
};

/// Sample indices into a dataset.
struct MiniBatch {
  std::vector<std::size_t> indices;
};

struct TaskGradients {
  /// c_k · MSE_k on the batch.
  std::vector<double> losses;
  /// ∂loss_k/∂W per task.
  std::vector<ParamVector> shared;
  /// ∂loss_k/∂v_k per task.
  std::vector<ParamVector> heads;
};

/// Draws the split's inputs and targets. Train and test use independent
/// streams derived from generator_seed; the ground truth is shared.
Dataset generate(const SyntheticTaskSpec& spec, DatasetSplit split = DatasetSplit::kTrain);

/// i.i.d. uniform indices with replacement. Throws ConfigError on batch_size 0
/// or an empty dataset.
MiniBatch sample_batch(const Dataset& data, std::size_t batch_size, RandomStream& rng);
MiniBatch full_batch(const Dataset& data);

/// Exact losses and gradients of c_k · MSE_k. Throws ConfigError on an empty
/// batch, DimensionError when model, data and spec disagree.
TaskGradients loss_and_grads(const SharedEncoderModel& model, const Dataset& data,
                             const MiniBatch& batch, const SyntheticTaskSpec& spec);

/// Per-task mean squared error over the whole dataset, without loss scales.
std::vector<double> evaluate(const SharedEncoderModel& model, const Dataset& data);

struct NormHistogram {
  double lower = 0.0;
  double upper = 0.0;
  std::vector<std::size_t> counts;
};

/// Equal-width bins over [min, max] of `values`. Identical values put all mass
/// in a single bin at that value.
NormHistogram make_histogram(std::span<const double> values, std::size_t bins);

struct TaskCensus {
  /// ||ḡ|| of the full-dataset gradient.
  double full_gradient_norm = 0.0;
  double mean_grad_norm = 0.0;
  double grad_norm_variance = 0.0;
  /// Estimate of tr(C)/|S|: E||ĝ - ḡ||² with ḡ the mean of the sampled gradients.
  double noise_estimate = 0.0;
  /// ||ḡ||² / noise_estimate; +infinity for a noise-free task with nonzero gradient.
  double gnr_estimate = 0.0;
  std::vector<double> grad_norms;
};

/// Samples `num_batches` mini-batch gradients per task at the frozen model.
/// A batch of at least the dataset size is taken as the whole dataset, which is
/// noise free. Throws ConfigError when num_batches < 2.
std::vector<TaskCensus> gradient_noise_census(const SharedEncoderModel& model, const Dataset& data,
                                              const SyntheticTaskSpec& spec,
                                              std::size_t batch_size, std::size_t num_batches,
                                              RandomStream& rng);

/// FNV-1a 64 over the little-endian bytes of inputs then targets.
std::uint64_t dataset_checksum(const Dataset& data);

/// Writes `<path>` (raw little-endian doubles) and `<path>.json` (dims, seed,
/// split, checksum).
void save_dataset(const std::filesystem::path& path, const Dataset& data,
                  const SyntheticTaskSpec& spec, DatasetSplit split);
/// Reads a file written by save_dataset. Throws ConfigError on a missing or
/// malformed sidecar and DomainError on a checksum mismatch.
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace maxgnr
