#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cbgt/env/environment.hpp"
#include "cbgt/models/encoder.hpp"
#include "cbgt/train/train.hpp"

namespace cbgt::cli {

/// Every setting of one train/eval run. Keys in config files and snapshots
/// are the long flag names (data-root, patch-size, ...).
struct ExperimentConfig {
  std::string dataset = "synthetic";  // mnist | cifar10 | synthetic
  std::filesystem::path data_root;
  std::size_t patch_size = 20;
  std::string model = "cbgt";  // cbgt | lstm | single_patch
  std::string encoder;         // empty: lenet5 / resnet_lite / mlp by dataset
  std::string activation = "softmax";
  std::vector<std::size_t> hidden{32};  // mlp widths
  std::optional<double> tau;
  std::optional<std::size_t> seq_len;
  std::uint64_t seed = 1;
  std::size_t max_steps = 100;
  std::string precision = "f32";

  std::size_t budget = 1 << 20;  // training episodes
  std::size_t batch_size = 512;
  double learning_rate = 1e-3;
  std::size_t validation_episodes = 1024;
  std::size_t validation_interval = 2;
  std::uint64_t validation_seed = 7;
  bool stop_on_convergence = true;
  std::size_t validation_pool = 5000;  // last images of the train split
  std::size_t train_subset = 0;        // 0: every image outside the pool
  std::size_t test_subset = 0;         // 0: whole test split

  std::size_t num_categories = 10;  // synthetic
  double eta = 0.0;                 // synthetic

  std::size_t episodes = 2048;  // evaluation
  std::uint64_t eval_seed = 2024;
  std::filesystem::path out = "runs";
};

/// Throws ConfigError naming the first offending field.
void validate(const ExperimentConfig& config);

bool is_image_dataset(const ExperimentConfig& config);
models::EncoderConfig encoder_config(const ExperimentConfig& config);
train::TrainConfig train_config(const ExperimentConfig& config);

/// "mnist_20x20", "synthetic_1x1", ...
std::string environment_id(const ExperimentConfig& config);
/// "tau2", "L3" or "single".
std::string model_id(const ExperimentConfig& config);
/// environment_id + "_" + model_id; prefix of every artifact of the run.
std::string stem(const ExperimentConfig& config);

/// Fully resolved settings as "key = value" lines, readable by --config.
std::string to_config_text(const ExperimentConfig& config);

struct Environments {
  std::unique_ptr<env::Environment> train;
  train::ValidationEnvFactory validation;
  std::function<std::unique_ptr<env::Environment>()> test;
};

/// Loads the dataset (if any) and builds the training, validation and test
/// environments. Training and validation images come from disjoint parts of
/// the train split; evaluation always uses the test split.
Environments make_environments(const ExperimentConfig& config, bool with_training);

}  // namespace cbgt::cli
