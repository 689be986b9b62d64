#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cbgt/cbgt/stream.hpp"
#include "cbgt/env/environment.hpp"
#include "cbgt/train/convergence.hpp"
#include "cbgt/train/model.hpp"

namespace cbgt::eval {

inline constexpr std::size_t kDefaultEvalEpisodes = 2048;

struct EvalReport {
  std::string environment_id;
  std::string model_id;
  train::ModelKind kind = train::ModelKind::cbgt;
  double tau = 0;
  std::size_t sequence_length = 0;
  double accuracy = 0;
  double avg_decision_time = 0;
  std::size_t n_episodes = 0;
  std::optional<std::size_t> episodes_to_convergence;
  std::vector<StreamResult> rows;

  /// "{environment}_{model}", e.g. "mnist_20x20_tau2".
  std::string stem() const { return environment_id + "_" + model_id; }
};

struct Aggregates {
  double accuracy = 0;
  double avg_decision_time = 0;
};

/// accuracy = correct / n, avg_decision_time = mean t_d.
Aggregates aggregate(const std::vector<StreamResult>& rows);

/// Runs n_episodes fresh episodes from env in lockstep batches. Results are
/// identical to running each episode on its own; the model is not modified.
template <typename T>
EvalReport evaluate(const train::Model<T>& model, env::Environment& env, std::size_t n_episodes,
                    std::size_t batch_size = 256);

nlohmann::json to_json(const EvalReport& report);
/// Inverse of to_json for the summary fields; rows are left empty.
EvalReport summary_from_json(const nlohmann::json& j);
std::string aggregate_csv_header();
std::string aggregate_csv_row(const EvalReport& report);

/// Writes <stem>.csv (aggregates), <stem>_episodes.csv and <stem>.json into dir.
void write_report(const EvalReport& report, const std::filesystem::path& dir);

using EnvFactory = std::function<std::unique_ptr<env::Environment>()>;
using PatchEnvFactory = std::function<std::unique_ptr<env::Environment>(std::size_t patch_size)>;

/// One report per threshold, evaluated from checkpoints[tau].
template <typename T>
std::vector<EvalReport> sweep_thresholds(const std::map<double, std::filesystem::path>& checkpoints,
                                         const std::vector<double>& taus, const EnvFactory& make_env,
                                         std::size_t n_episodes);

/// One report per patch size, evaluated from checkpoints[p] on make_env(p).
template <typename T>
std::vector<EvalReport> sweep_patch_sizes(const std::map<std::size_t, std::filesystem::path>& checkpoints,
                                          const std::vector<std::size_t>& sizes, const PatchEnvFactory& make_env,
                                          std::size_t n_episodes);

/// 100 * (lstm - cbgt) / lstm over episodes-to-convergence; throws
/// NotConvergedError naming the log that never converged.
double compare_convergence(const train::TrainingLog& cbgt_log, const train::TrainingLog& lstm_log);

}  // namespace cbgt::eval
