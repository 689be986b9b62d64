#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "cbgt/cbgt/stream.hpp"
#include "cbgt/env/environment.hpp"
#include "cbgt/numerics/tape.hpp"
#include "cbgt/train/convergence.hpp"
#include "cbgt/train/model.hpp"

namespace cbgt::train {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 512;
  std::size_t max_episodes = 1 << 20;
  std::size_t validation_episodes = 1024;
  std::uint64_t validation_seed = 0x5eed;
  std::size_t validation_interval = 2;  // batches between validation points
  bool stop_on_convergence = true;
  DetectorConfig detector;
};

/// Throws ConfigError naming the offending field.
void validate(const TrainConfig& config);

/// Output of one batched forward pass over a set of episodes. `loss` is the
/// mean decision-time cross-entropy on `tape`; `results` holds the per-episode
/// outcome with y taken at t_d.
template <typename T>
struct BatchForward {
  numerics::Var loss;
  std::vector<StreamResult> results;
};

using EpisodeBatch = std::vector<std::unique_ptr<env::Episode>>;

/// Runs every episode of the batch through the model in lockstep, recording
/// the computation on `tape`. Encoder and LSTM parameters are bound as
/// trainable leaves; for CBGT-Net an episode stops consuming observations
/// once it crosses the threshold (or hits max_steps) and its accumulator row
/// is frozen from then on.
template <typename T>
BatchForward<T> forward_batch(numerics::Tape<T>& tape, Model<T>& model, EpisodeBatch& episodes);

/// -log(y[target]) for a finished stream, with the same floor as the
/// training loss.
double loss_at_decision(const StreamResult& result);

/// Replays `tape` from `loss`, accumulating parameter gradients. The stopping
/// time is not differentiated; each step's encoder application receives
/// dL/da at t_d. Throws InternalError when the tape is missing or was already
/// replayed.
template <typename T>
void backward_through_stream(numerics::Tape<T>* tape, numerics::Var loss);

/// Fresh validation environment; called with TrainConfig::validation_seed so
/// every validation point scores the same episodes.
using ValidationEnvFactory = std::function<std::unique_ptr<env::Environment>(std::uint64_t seed)>;

/// Called after every validation point.
using ProgressFn = std::function<void(const LogRow&)>;

/// Adam on the mean decision-time loss over batches drawn from `env`;
/// validates every validation_interval batches and stops on convergence
/// (when enabled) or once max_episodes training episodes have been used.
/// Throws std::runtime_error if the mean loss stops being finite.
template <typename T>
TrainingLog train(Model<T>& model, env::Environment& env, const ValidationEnvFactory& make_validation_env,
                  const TrainConfig& config, const ProgressFn& progress = {});

template <typename T>
TrainingLog train_cbgt(Model<T>& model, env::Environment& env, const ValidationEnvFactory& make_validation_env,
                       const TrainConfig& config, const ProgressFn& progress = {});
template <typename T>
TrainingLog train_lstm_baseline(Model<T>& model, env::Environment& env,
                                const ValidationEnvFactory& make_validation_env, const TrainConfig& config,
                                const ProgressFn& progress = {});
template <typename T>
TrainingLog train_single_patch(Model<T>& model, env::Environment& env,
                               const ValidationEnvFactory& make_validation_env, const TrainConfig& config,
                               const ProgressFn& progress = {});

}  // namespace cbgt::train
