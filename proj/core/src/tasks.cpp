#include "maxgnr/tasks.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include <nlohmann/json.hpp>

#include "maxgnr/errors.hpp"

namespace maxgnr {
namespace {

constexpr std::uint64_t kGroundTruthStream = 101;
constexpr std::uint64_t kTrainStream = 102;
constexpr std::uint64_t kTestStream = 103;

ParamVector gaussian_vector(std::size_t n, double variance, RandomStream& rng) {
  return sample_gaussian(ParamVector(n), variance, rng);
}

void check_shapes(const SharedEncoderModel& model, const Dataset& data,
                  const SyntheticTaskSpec& spec) {
  if (model.input_dim() != data.input_dim) {
    throw DimensionError("model input dim " + std::to_string(model.input_dim()) +
                         " != dataset input dim " + std::to_string(data.input_dim));
  }
  if (model.task_count() != data.task_count() || spec.task_count() != data.task_count()) {
    throw DimensionError("model, dataset and spec disagree on the task count");
  }
}

// Little-endian byte image of a double, independent of host order.
void append_le(std::string& out, double value) {
  auto bits = std::bit_cast<std::uint64_t>(value);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits & 0xffU));
    bits >>= 8;
  }
}

double read_le(const unsigned char* bytes) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | bytes[i];
  return std::bit_cast<double>(bits);
}

std::string dataset_bytes(const Dataset& data) {
  std::string out;
  out.reserve(8 * (data.inputs.size() + data.size() * data.task_count()));
  for (double v : data.inputs) append_le(out, v);
  for (const auto& t : data.targets) {
    for (double v : t) append_le(out, v);
  }
  return out;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace

void SyntheticTaskSpec::validate() const {
  if (input_dim == 0 || hidden_dim == 0) throw ConfigError("task spec: dims must be >= 1");
  if (loss_scales.size() < 2) throw ConfigError("task spec: need at least two tasks");
  if (label_noise_std.size() != loss_scales.size()) {
    throw ConfigError("task spec: loss_scales and label_noise_std lengths differ");
  }
  for (double c : loss_scales) {
    if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("task spec: loss scales must be > 0");
  }
  for (double s : label_noise_std) {
    if (!(s >= 0.0) || !std::isfinite(s)) {
      throw ConfigError("task spec: label noise std must be >= 0");
    }
  }
  if (dataset_size == 0) throw ConfigError("task spec: dataset_size must be >= 1");
}

SharedEncoderModel::SharedEncoderModel(std::size_t input_dim, std::size_t hidden_dim,
                                       std::size_t task_count)
    : input_dim_(input_dim), encoder_(hidden_dim * input_dim), heads_(task_count, ParamVector(hidden_dim)) {
  if (input_dim == 0 || hidden_dim == 0 || task_count == 0) {
    throw ConfigError("SharedEncoderModel: dims and task count must be >= 1");
  }
}

SharedEncoderModel::SharedEncoderModel(std::size_t input_dim, ParamVector encoder,
                                       std::vector<ParamVector> heads)
    : input_dim_(input_dim), encoder_(std::move(encoder)), heads_(std::move(heads)) {
  if (input_dim_ == 0 || heads_.empty() || heads_.front().empty()) {
    throw ConfigError("SharedEncoderModel: dims and task count must be >= 1");
  }
  common_dimension(heads_);
  if (encoder_.size() != input_dim_ * heads_.front().size()) {
    throw DimensionError("SharedEncoderModel: encoder size != hidden * input");
  }
}

SharedEncoderModel SharedEncoderModel::random(const SyntheticTaskSpec& spec, std::uint64_t seed) {
  spec.validate();
  RandomStream rng(seed);
  ParamVector encoder =
      gaussian_vector(spec.hidden_dim * spec.input_dim, 1.0 / static_cast<double>(spec.input_dim), rng);
  std::vector<ParamVector> heads;
  for (std::size_t k = 0; k < spec.task_count(); ++k) {
    heads.push_back(gaussian_vector(spec.hidden_dim, 1.0 / static_cast<double>(spec.hidden_dim), rng));
  }
  return SharedEncoderModel(spec.input_dim, std::move(encoder), std::move(heads));
}

SharedEncoderModel SharedEncoderModel::ground_truth(const SyntheticTaskSpec& spec) {
  return random(spec, RandomStream(spec.generator_seed).substream(kGroundTruthStream).next_u64());
}

std::size_t SharedEncoderModel::parameter_count() const {
  return encoder_.size() + heads_.size() * hidden_dim();
}

const ParamVector& SharedEncoderModel::head(std::size_t task) const {
  if (task >= heads_.size()) throw LookupError("unknown task " + std::to_string(task));
  return heads_[task];
}

ParamVector& SharedEncoderModel::head(std::size_t task) {
  if (task >= heads_.size()) throw LookupError("unknown task " + std::to_string(task));
  return heads_[task];
}

ParamVector SharedEncoderModel::flatten() const {
  std::vector<double> flat(encoder_.begin(), encoder_.end());
  for (const auto& h : heads_) flat.insert(flat.end(), h.begin(), h.end());
  return ParamVector(std::move(flat));
}

SharedEncoderModel SharedEncoderModel::unflatten(std::size_t input_dim, std::size_t hidden_dim,
                                                 std::size_t task_count, const ParamVector& flat) {
  const std::size_t shared = input_dim * hidden_dim;
  if (flat.size() != shared + task_count * hidden_dim) {
    throw DimensionError("unflatten: parameter vector has the wrong length");
  }
  const auto values = flat.span();
  ParamVector encoder(std::vector<double>(values.begin(), values.begin() + shared));
  std::vector<ParamVector> heads;
  for (std::size_t k = 0; k < task_count; ++k) {
    auto first = values.begin() + shared + k * hidden_dim;
    heads.emplace_back(std::vector<double>(first, first + hidden_dim));
  }
  return SharedEncoderModel(input_dim, std::move(encoder), std::move(heads));
}

std::vector<double> SharedEncoderModel::features(std::span<const double> x) const {
  if (x.size() != input_dim_) throw DimensionError("features: input has the wrong length");
  const std::size_t h = hidden_dim();
  std::vector<double> out(h);
  for (std::size_t j = 0; j < h; ++j) {
    double z = 0.0;
    for (std::size_t i = 0; i < input_dim_; ++i) z += encoder_[j * input_dim_ + i] * x[i];
    out[j] = std::tanh(z);
  }
  return out;
}

double SharedEncoderModel::predict(std::span<const double> x, std::size_t task) const {
  const auto a = features(x);
  const ParamVector& v = head(task);
  double y = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) y += v[j] * a[j];
  return y;
}

Dataset generate(const SyntheticTaskSpec& spec, DatasetSplit split) {
  spec.validate();
  const SharedEncoderModel truth = SharedEncoderModel::ground_truth(spec);
  RandomStream rng = RandomStream(spec.generator_seed)
                         .substream(split == DatasetSplit::kTrain ? kTrainStream : kTestStream);
  const std::size_t n = spec.task_count();
  Dataset data;
  data.input_dim = spec.input_dim;
  data.inputs.resize(spec.dataset_size * spec.input_dim);
  data.targets.assign(n, std::vector<double>(spec.dataset_size));
  for (std::size_t s = 0; s < spec.dataset_size; ++s) {
    for (std::size_t i = 0; i < spec.input_dim; ++i) {
      data.inputs[s * spec.input_dim + i] = rng.normal();
    }
    const auto a = truth.features(data.input(s));
    for (std::size_t k = 0; k < n; ++k) {
      double y = 0.0;
      for (std::size_t j = 0; j < a.size(); ++j) y += truth.head(k)[j] * a[j];
      data.targets[k][s] = y + spec.label_noise_std[k] * rng.normal();
    }
  }
  return data;
}

MiniBatch sample_batch(const Dataset& data, std::size_t batch_size, RandomStream& rng) {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (data.size() == 0) throw ConfigError("cannot sample from an empty dataset");
  MiniBatch batch;
  batch.indices.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) batch.indices.push_back(rng.index(data.size()));
  return batch;
}

MiniBatch full_batch(const Dataset& data) {
  MiniBatch batch;
  batch.indices.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) batch.indices[i] = i;
  return batch;
}

TaskGradients loss_and_grads(const SharedEncoderModel& model, const Dataset& data,
                             const MiniBatch& batch, const SyntheticTaskSpec& spec) {
  if (batch.indices.empty()) throw ConfigError("loss_and_grads: empty batch");
  check_shapes(model, data, spec);
  const std::size_t n = model.task_count();
  const std::size_t h = model.hidden_dim();
  const std::size_t d = model.input_dim();
  const double inv_b = 1.0 / static_cast<double>(batch.indices.size());

  TaskGradients out;
  out.losses.assign(n, 0.0);
  out.shared.assign(n, ParamVector(model.shared_dim()));
  out.heads.assign(n, ParamVector(h));
  std::vector<double> delta(h);
  for (std::size_t s : batch.indices) {
    if (s >= data.size()) throw DimensionError("loss_and_grads: batch index out of range");
    const auto x = data.input(s);
    const auto a = model.features(x);
    for (std::size_t k = 0; k < n; ++k) {
      const ParamVector& v = model.head(k);
      double pred = 0.0;
      for (std::size_t j = 0; j < h; ++j) pred += v[j] * a[j];
      const double r = pred - data.targets[k][s];
      const double c = spec.loss_scales[k];
      out.losses[k] += c * r * r * inv_b;
      const double dpred = 2.0 * c * r * inv_b;
      ParamVector& gv = out.heads[k];
      ParamVector& gw = out.shared[k];
      for (std::size_t j = 0; j < h; ++j) {
        gv[j] += dpred * a[j];
        delta[j] = dpred * v[j] * (1.0 - a[j] * a[j]);
      }
      for (std::size_t j = 0; j < h; ++j) {
        if (delta[j] == 0.0) continue;
        for (std::size_t i = 0; i < d; ++i) gw[j * d + i] += delta[j] * x[i];
      }
    }
  }
  return out;
}

std::vector<double> evaluate(const SharedEncoderModel& model, const Dataset& data) {
  if (model.input_dim() != data.input_dim || model.task_count() != data.task_count()) {
    throw DimensionError("evaluate: model and dataset shapes differ");
  }
  if (data.size() == 0) throw ConfigError("evaluate: empty dataset");
  std::vector<double> mse(data.task_count(), 0.0);
  for (std::size_t s = 0; s < data.size(); ++s) {
    const auto a = model.features(data.input(s));
    for (std::size_t k = 0; k < mse.size(); ++k) {
      double pred = 0.0;
      for (std::size_t j = 0; j < a.size(); ++j) pred += model.head(k)[j] * a[j];
      const double r = pred - data.targets[k][s];
      mse[k] += r * r;
    }
  }
  for (double& m : mse) m /= static_cast<double>(data.size());
  return mse;
}

NormHistogram make_histogram(std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  NormHistogram hist;
  if (values.empty()) {
    hist.counts.assign(bins, 0);
    return hist;
  }
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  hist.lower = *lo;
  hist.upper = *hi;
  if (hist.upper == hist.lower) {
    hist.counts.assign(1, values.size());
    return hist;
  }
  hist.counts.assign(bins, 0);
  const double width = (hist.upper - hist.lower) / static_cast<double>(bins);
  for (double v : values) {
    auto bin = static_cast<std::size_t>((v - hist.lower) / width);
    hist.counts[std::min(bin, bins - 1)] += 1;
  }
  return hist;
}

std::vector<TaskCensus> gradient_noise_census(const SharedEncoderModel& model, const Dataset& data,
                                              const SyntheticTaskSpec& spec,
                                              std::size_t batch_size, std::size_t num_batches,
                                              RandomStream& rng) {
  if (num_batches < 2) throw ConfigError("census needs at least two batches");
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  check_shapes(model, data, spec);
  const std::size_t n = model.task_count();
  const TaskGradients full = loss_and_grads(model, data, full_batch(data), spec);
  const bool whole_dataset = batch_size >= data.size();

  std::vector<std::vector<ParamVector>> draws(n);
  for (std::size_t b = 0; b < num_batches; ++b) {
    const TaskGradients g = whole_dataset
                                ? full
                                : loss_and_grads(model, data, sample_batch(data, batch_size, rng), spec);
    for (std::size_t k = 0; k < n; ++k) draws[k].push_back(g.shared[k]);
  }

  std::vector<TaskCensus> out(n);
  const double count = static_cast<double>(num_batches);
  for (std::size_t k = 0; k < n; ++k) {
    TaskCensus& c = out[k];
    c.full_gradient_norm = norm(full.shared[k]);
    ParamVector mean(model.shared_dim());
    for (const auto& g : draws[k]) axpy(1.0 / count, g, mean);
    double spread = 0.0;
    for (const auto& g : draws[k]) {
      spread += norm_sq(g - mean);
      c.grad_norms.push_back(norm(g));
    }
    c.noise_estimate = whole_dataset ? 0.0 : spread / (count - 1.0);
    for (double v : c.grad_norms) c.mean_grad_norm += v / count;
    for (double v : c.grad_norms) {
      c.grad_norm_variance += (v - c.mean_grad_norm) * (v - c.mean_grad_norm) / (count - 1.0);
    }
    const double signal = c.full_gradient_norm * c.full_gradient_norm;
    if (c.noise_estimate > 0.0) {
      c.gnr_estimate = signal / c.noise_estimate;
    } else {
      c.gnr_estimate = signal > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
  }
  return out;
}

std::uint64_t dataset_checksum(const Dataset& data) { return fnv1a(dataset_bytes(data)); }

void save_dataset(const std::filesystem::path& path, const Dataset& data,
                  const SyntheticTaskSpec& spec, DatasetSplit split) {
  const std::string bytes = dataset_bytes(data);
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  nlohmann::json header = {
      {"format", "maxgnr-dataset-v1"},
      {"input_dim", data.input_dim},
      {"size", data.size()},
      {"task_count", data.task_count()},
      {"generator_seed", spec.generator_seed},
      {"split", split == DatasetSplit::kTrain ? "train" : "test"},
      {"checksum", fnv1a(bytes)},
  };
  std::ofstream sidecar(path.string() + ".json");
  if (!sidecar) throw ConfigError("cannot write " + path.string() + ".json");
  sidecar << header.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& path) {
  nlohmann::json header;
  try {
    std::ifstream sidecar(path.string() + ".json");
    if (!sidecar) throw ConfigError("missing dataset sidecar " + path.string() + ".json");
    header = nlohmann::json::parse(sidecar);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed dataset sidecar: " + std::string(e.what()));
  }
  std::size_t dim = 0, size = 0, tasks = 0;
  std::uint64_t checksum = 0;
  try {
    dim = header.at("input_dim").get<std::size_t>();
    size = header.at("size").get<std::size_t>();
    tasks = header.at("task_count").get<std::size_t>();
    checksum = header.at("checksum").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed dataset sidecar: " + std::string(e.what()));
  }

  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() != 8 * size * (dim + tasks)) {
    throw DomainError("dataset file " + path.string() + " has the wrong length");
  }
  if (fnv1a(bytes) != checksum) throw DomainError("dataset checksum mismatch for " + path.string());

  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  Dataset data;
  data.input_dim = dim;
  data.inputs.resize(size * dim);
  for (double& v : data.inputs) {
    v = read_le(raw);
    raw += 8;
  }
  data.targets.assign(tasks, std::vector<double>(size));
  for (auto& t : data.targets) {
    for (double& v : t) {
      v = read_le(raw);
      raw += 8;
    }
  }
  return data;
}

}  // namespace maxgnr
