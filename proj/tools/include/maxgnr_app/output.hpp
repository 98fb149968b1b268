#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "maxgnr/tasks.hpp"
#include "maxgnr/trainer.hpp"
#include "maxgnr_app/config.hpp"

namespace maxgnr::app {

inline constexpr std::string_view kMetricsHeader =
    "iter,task,loss,weight,grad_norm,noise_norm_sq,gnr_multi,objective";

inline constexpr std::string_view kArtifactVersion = "maxgnr 0.1.0";

/// printf "%.9g"; NaN and infinities print as nan, inf, -inf.
std::string format_real(double value);

/// Header plus one row per task per record, ordered by (iter, task). Values
/// missing from a record (a divergence record carries no weights) print as nan.
void write_metrics_csv(std::ostream& out, const std::vector<IterationRecord>& records,
                       std::size_t task_count);

/// Per-seed run summary: resolved config echo, seed, status, final losses.
nlohmann::json make_run_summary(const ExperimentConfig& config, std::uint64_t seed,
                                const TrainResult& result, const std::vector<double>& test_loss,
                                const std::vector<double>& train_loss);

nlohmann::json model_to_json(const SharedEncoderModel& model);
SharedEncoderModel model_from_json(const nlohmann::json& doc);
SharedEncoderModel load_model(const std::filesystem::path& path);

struct CensusEntry {
  TaskCensus census;
  NormHistogram histogram;
};

struct CensusReport {
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::size_t batch_size = 0;
  std::size_t num_batches = 0;
  std::vector<CensusEntry> tasks;
  /// Closed-form GNR of the configured noise model; null when none is set.
  nlohmann::json analytic;
};

/// gnr_single and gnr_multi of `model` at equal weights and at the
/// noise-only weights.
nlohmann::json analytic_gnr_json(const MultiTaskNoiseModel& model);

/// Infinite GNR estimates (noise-free tasks) are written as null and read back
/// as +infinity. Per-batch norms are not stored; only their histogram.
nlohmann::json census_to_json(const CensusReport& report);
CensusReport census_from_json(const nlohmann::json& doc);
CensusReport read_census(const std::filesystem::path& path);

/// Writes `doc` with two-space indentation and a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace maxgnr::app
