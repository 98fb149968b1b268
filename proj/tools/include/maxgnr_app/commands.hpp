#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "maxgnr_app/config.hpp"
#include "maxgnr_app/verify.hpp"

namespace maxgnr::app {

enum ExitCode : int {
  kExitOk = 0,
  kExitVerifyFailed = 1,
  kExitConfigError = 2,
  kExitDiverged = 3,
};

struct CommandOptions {
  std::string config_path;
  std::optional<std::string> out_dir;
  std::size_t jobs = 1;
  std::optional<std::uint64_t> seed;
  std::string filter;
};

/// --out, then the config's output_dir, then $GNR_MTL_OUT, then "maxgnr_out".
std::filesystem::path output_root(const CommandOptions& options, const ExperimentConfig& config);

/// Trains every seed; writes <out>/config.json and, per seed, metrics.csv,
/// summary.json and model.json under <out>/seed<N>/.
int cmd_run(const CommandOptions& options, std::ostream& log);

/// Cross product of strategies × momentum gammas × loss scales × seeds. Each
/// run writes under <out>/runs/; <out>/sweep.csv holds one row per run sorted
/// by those coordinates.
int cmd_sweep(const CommandOptions& options, std::ostream& log);

/// Per seed, writes <out>/seed<N>/census.json.
int cmd_census(const CommandOptions& options, std::ostream& log);

int cmd_verify(const CommandOptions& options, std::ostream& log, VerifyOptions verify = {});

/// Parses argv with subcommands run, sweep, census and verify.
int run_cli(int argc, char** argv);

}  // namespace maxgnr::app
