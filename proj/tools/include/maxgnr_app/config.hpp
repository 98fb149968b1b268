#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "maxgnr/noise_model.hpp"
#include "maxgnr/tasks.hpp"
#include "maxgnr/trainer.hpp"

namespace maxgnr::app {

/// Which parameters the per-task GNR diagnostics cover. The synthetic model's
/// only shared block is the encoder, so both scopes select the same vector.
enum class GnrScope { kAllShared, kEncoderOnly };

struct SweepAxes {
  std::vector<StrategyKind> strategies;
  std::vector<std::uint64_t> seeds;
  std::vector<double> momentum_gammas;
  std::vector<std::vector<double>> loss_scales;
};

struct CensusOptions {
  std::size_t num_batches = 2000;
  std::size_t bins = 20;
  /// 0 means "use batch_size".
  std::size_t batch_size = 0;
  /// Model written by `run` (model.json); empty means a fresh model per seed.
  std::string model_path;
};

/// Analytic noise model. Each task entry holds "trace" and either an explicit
/// "gradient" array or "dim", "gradient_norm" and "gradient_seed".
struct NoiseModelConfig {
  nlohmann::json tasks = nlohmann::json::array();
  int batch_size = 1;

  bool empty() const { return tasks.empty(); }
  /// Throws ConfigError on malformed entries.
  MultiTaskNoiseModel build() const;
};

struct ExperimentConfig {
  SyntheticTaskSpec task;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0};
  GnrScope gnr_scope = GnrScope::kAllShared;
  std::optional<std::string> output_dir;
  SweepAxes sweep;
  CensusOptions census;
  NoiseModelConfig noise_model;

  /// Flat dotted-key object holding every resolved value except output_dir.
  /// Parsing it back yields an identical config.
  nlohmann::json resolved() const;
};

/// Accepts flat dotted keys ("dwa.temperature") or the equivalent nested
/// objects. Unknown keys, wrong types and invalid values throw ConfigError with
/// a "<source>:<line>: " prefix.
ExperimentConfig parse_config(std::string_view text, std::string_view source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every accepted key with its default, in sorted order.
const std::vector<std::string>& known_config_keys();

std::string_view to_string(GnrScope scope);

}  // namespace maxgnr::app
