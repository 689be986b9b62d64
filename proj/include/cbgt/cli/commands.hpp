#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cbgt/cli/experiment.hpp"

namespace cbgt::cli {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

/// Trains one model and writes <stem>.ckpt, <stem>_train_log.csv and
/// <stem>_config.txt into config.out. Completed runs are skipped unless
/// overwrite is set.
int cmd_train(const ExperimentConfig& config, bool overwrite, std::ostream& log);

/// Evaluates a checkpoint (default <out>/<stem>.ckpt) on the test split and
/// writes the report files into config.out.
int cmd_eval(const ExperimentConfig& config, const std::optional<std::filesystem::path>& checkpoint, bool overwrite,
             std::ostream& log);

struct SweepGrid {
  std::vector<std::size_t> patch_sizes;  // empty: config.patch_size
  std::vector<double> taus;              // cbgt; empty: config.tau
  std::vector<std::size_t> seq_lens;     // lstm; empty: config.seq_len
};

/// Trains and evaluates every cell of the grid, then writes sweep.csv with
/// one aggregate row per completed cell. Failed cells are reported and the
/// sweep carries on; the exit code is non-zero if any cell failed.
int cmd_sweep(const ExperimentConfig& config, const SweepGrid& grid, bool overwrite, std::ostream& log,
              std::ostream& err);

/// Collects every report summary in dir into dir/report.csv. With both logs
/// given, also prints how many fewer episodes CBGT-Net needed to converge.
int cmd_report(const std::filesystem::path& dir, const std::optional<std::filesystem::path>& cbgt_log,
               const std::optional<std::filesystem::path>& lstm_log, std::ostream& log);

/// Parses argv and dispatches to a subcommand; never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cbgt::cli
