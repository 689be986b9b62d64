#include "cbgt/train/train.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cbgt/cbgt/accumulator.hpp"
#include "cbgt/errors.hpp"
#include "cbgt/eval/evaluate.hpp"
#include "cbgt/numerics/adam.hpp"
#include "cbgt/numerics/math.hpp"
#include "cbgt/numerics/ops.hpp"

namespace cbgt::train {

using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

void validate(const TrainConfig& c) {
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) {
    throw ConfigError("learning_rate", "must be a positive finite number");
  }
  if (c.batch_size == 0) throw ConfigError("batch_size", "must be at least 1");
  if (c.max_episodes == 0) throw ConfigError("max_episodes", "must be at least 1");
  if (c.validation_episodes == 0) throw ConfigError("validation_episodes", "must be at least 1");
  if (c.validation_interval == 0) throw ConfigError("validation_interval", "must be at least 1");
  try {
    ConvergenceDetector check(c.detector);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("detector", e.what());
  }
}

namespace {

template <typename T>
Var observe(Tape<T>& tape, EpisodeBatch& episodes, const std::vector<std::size_t>& rows,
            const models::InputShape& s) {
  Tensor<T> obs({rows.size(), s.height, s.width, s.channels});
  const std::size_t stride = s.size();
  for (std::size_t j = 0; j < rows.size(); ++j) {
    episodes[rows[j]]->next_observation(std::span<T>(obs.data() + j * stride, stride));
  }
  return tape.constant(std::move(obs));
}

template <typename T>
bool all_finite(const numerics::ParamStore<T>& store) {
  for (const auto& e : store)
    for (std::size_t k = 0; k < e.value.size(); ++k)
      if (!std::isfinite(e.value[k])) return false;
  return true;
}

[[noreturn]] void diverged(const std::string& what, std::size_t step, std::size_t episodes_seen,
                           const std::string& model_id, double lr) {
  std::ostringstream msg;
  msg << "training diverged: " << what << " at step " << step << " after " << episodes_seen << " episodes (model "
      << model_id << ", learning rate " << lr << ")";
  throw std::runtime_error(msg.str());
}

template <typename T>
std::vector<StreamResult> collect(const EpisodeBatch& episodes, const Tensor<T>& probs,
                                  const std::vector<std::size_t>& decision_time, const std::vector<bool>& decided) {
  const std::size_t k = probs.shape()[1];
  std::vector<StreamResult> out(episodes.size());
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const std::span<const T> y(probs.data() + i * k, k);
    auto& r = out[i];
    r.episode_id = i;
    r.target = episodes[i]->target();
    r.decision_time = decision_time[i];
    r.decided_by_threshold = decided[i];
    r.output.assign(y.begin(), y.end());
    r.prediction = numerics::argmax(y);
  }
  return out;
}

template <typename T>
TrainingLog run_training(Model<T>& model, env::Environment& env, const ValidationEnvFactory& make_validation_env,
                         const TrainConfig& config, const ProgressFn& progress) {
  validate(config);
  if (!(env.observation_shape() == model.encoder.config().input)) {
    throw std::invalid_argument("environment " + env.id() + " does not match the model's encoder input shape");
  }
  if (env.num_categories() != model.num_categories()) {
    throw std::invalid_argument("environment " + env.id() + " has a different number of categories than the model");
  }
  const numerics::AdamConfig adam{config.learning_rate};
  numerics::AdamState<T> encoder_state(model.encoder.params(), adam);
  numerics::AdamState<T> lstm_state;
  if (model.lstm) lstm_state = numerics::AdamState<T>(model.lstm->params(), adam);

  TrainingLog log;
  ConvergenceDetector detector(config.detector);
  std::size_t episodes_seen = 0;
  double loss_sum = 0;
  std::size_t loss_batches = 0;
  for (std::size_t step = 1; episodes_seen < config.max_episodes; ++step) {
    const std::size_t n = std::min(config.batch_size, config.max_episodes - episodes_seen);
    EpisodeBatch episodes;
    for (std::size_t i = 0; i < n; ++i) episodes.push_back(env.start_episode());

    model.encoder.params().zero_grad();
    if (model.lstm) model.lstm->params().zero_grad();
    Tape<T> tape;
    BatchForward<T> fwd;
    try {
      fwd = forward_batch(tape, model, episodes);
    } catch (const std::invalid_argument& e) {
      const bool finite = all_finite(model.encoder.params()) && (!model.lstm || all_finite(model.lstm->params()));
      if (finite) throw;
      diverged(std::string("non-finite parameters (") + e.what() + ")", step, episodes_seen, model.id(),
               config.learning_rate);
    }
    const double loss = static_cast<double>(tape.value(fwd.loss)[0]);
    if (!std::isfinite(loss)) {
      diverged("mean loss is " + std::to_string(loss), step, episodes_seen, model.id(), config.learning_rate);
    }
    backward_through_stream(&tape, fwd.loss);
    numerics::adam_step(model.encoder.params(), encoder_state);
    if (model.lstm) numerics::adam_step(model.lstm->params(), lstm_state);
    episodes_seen += n;
    loss_sum += loss;
    ++loss_batches;

    const bool last = episodes_seen >= config.max_episodes;
    if (step % config.validation_interval != 0 && !last) continue;
    auto val_env = make_validation_env(config.validation_seed);
    const auto report = eval::evaluate(model, *val_env, config.validation_episodes);
    const bool converged = detector.update(report.accuracy);
    LogRow row;
    row.step = step;
    row.episodes_seen = episodes_seen;
    row.mean_loss = loss_sum / static_cast<double>(loss_batches);
    row.val_accuracy = report.accuracy;
    row.smoothed_val_accuracy = detector.smoothed();
    row.nrmsd = detector.nrmsd();
    row.avg_decision_time = report.avg_decision_time;
    log.rows.push_back(row);
    loss_sum = 0;
    loss_batches = 0;
    if (progress) progress(row);
    if (converged && !log.episodes_to_convergence) {
      log.episodes_to_convergence = episodes_seen;
      if (config.stop_on_convergence) break;
    }
  }
  return log;
}

void require_kind(ModelKind actual, ModelKind expected) {
  if (actual != expected) {
    throw std::invalid_argument("expected a " + to_string(expected) + " model, got " + to_string(actual));
  }
}

}  // namespace

template <typename T>
BatchForward<T> forward_batch(Tape<T>& tape, Model<T>& model, EpisodeBatch& episodes) {
  if (episodes.empty()) throw std::invalid_argument("forward_batch needs at least one episode");
  const auto& shape = model.encoder.config().input;
  const std::size_t b = episodes.size();
  const std::size_t k = model.num_categories();
  std::vector<std::size_t> targets(b), decision_time(b, 0);
  std::vector<bool> decided(b, false);
  for (std::size_t i = 0; i < b; ++i) targets[i] = episodes[i]->target();
  std::vector<std::size_t> all(b);
  std::iota(all.begin(), all.end(), std::size_t{0});

  const auto enc = model.encoder.bind(tape);
  Var probs;
  switch (model.kind) {
    case ModelKind::cbgt: {
      const Threshold threshold(model.tau);
      Var acc = tape.constant(Tensor<T>({b, k}));
      std::vector<std::size_t> active = all;
      for (std::size_t t = 1; !active.empty(); ++t) {
        const Var ev = model.encoder.forward_train(tape, enc, observe(tape, episodes, active, shape));
        acc = scatter_add_rows(tape, acc, ev, active);
        const auto& a = tape.value(acc);
        std::vector<std::size_t> still;
        for (std::size_t i : active) {
          const bool crossed = crosses(std::span<const T>(a.data() + i * k, k), threshold);
          if (crossed || t == model.max_steps) {
            decision_time[i] = t;
            decided[i] = crossed;
          } else {
            still.push_back(i);
          }
        }
        active.swap(still);
      }
      probs = softmax_rows(tape, acc);
      break;
    }
    case ModelKind::lstm: {
      if (!model.lstm) throw InternalError("LSTM model without an LSTM");
      std::vector<Var> seq;
      for (std::size_t t = 0; t < model.sequence_length; ++t) {
        seq.push_back(model.encoder.forward_train(tape, enc, observe(tape, episodes, all, shape)));
      }
      const auto bound = model.lstm->bind(tape);
      probs = model.lstm->forward(tape, bound, seq);
      std::fill(decision_time.begin(), decision_time.end(), model.sequence_length);
      break;
    }
    case ModelKind::single_patch: {
      const Var ev = model.encoder.forward_train(tape, enc, observe(tape, episodes, all, shape));
      probs = single_patch_needs_softmax(model.encoder.config()) ? softmax_rows(tape, ev) : ev;
      std::fill(decision_time.begin(), decision_time.end(), std::size_t{1});
      break;
    }
  }
  BatchForward<T> out;
  out.loss = cross_entropy(tape, probs, std::span<const std::size_t>(targets));
  out.results = collect(episodes, tape.value(probs), decision_time, decided);
  return out;
}

double loss_at_decision(const StreamResult& result) {
  return numerics::cross_entropy(std::span<const double>(result.output), result.target);
}

template <typename T>
void backward_through_stream(Tape<T>* tape, Var loss) {
  if (tape == nullptr) throw InternalError("no forward tape recorded for this stream");
  if (tape->consumed()) throw InternalError("forward tape was already replayed");
  if (!loss.valid() || loss.id >= tape->size()) throw InternalError("loss node is not on the forward tape");
  tape->backward(loss);
}

template <typename T>
TrainingLog train(Model<T>& model, env::Environment& env, const ValidationEnvFactory& make_validation_env,
                  const TrainConfig& config, const ProgressFn& progress) {
  return run_training(model, env, make_validation_env, config, progress);
}

template <typename T>
TrainingLog train_cbgt(Model<T>& model, env::Environment& env, const ValidationEnvFactory& make_validation_env,
                       const TrainConfig& config, const ProgressFn& progress) {
  require_kind(model.kind, ModelKind::cbgt);
  return run_training(model, env, make_validation_env, config, progress);
}

template <typename T>
TrainingLog train_lstm_baseline(Model<T>& model, env::Environment& env,
                                const ValidationEnvFactory& make_validation_env, const TrainConfig& config,
                                const ProgressFn& progress) {
  require_kind(model.kind, ModelKind::lstm);
  return run_training(model, env, make_validation_env, config, progress);
}

template <typename T>
TrainingLog train_single_patch(Model<T>& model, env::Environment& env,
                               const ValidationEnvFactory& make_validation_env, const TrainConfig& config,
                               const ProgressFn& progress) {
  require_kind(model.kind, ModelKind::single_patch);
  return run_training(model, env, make_validation_env, config, progress);
}

#define CBGT_INSTANTIATE(T)                                                                                  \
  template BatchForward<T> forward_batch(Tape<T>&, Model<T>&, EpisodeBatch&);                                \
  template void backward_through_stream(Tape<T>*, Var);                                                      \
  template TrainingLog train(Model<T>&, env::Environment&, const ValidationEnvFactory&, const TrainConfig&,  \
                             const ProgressFn&);                                                             \
  template TrainingLog train_cbgt(Model<T>&, env::Environment&, const ValidationEnvFactory&,                 \
                                  const TrainConfig&, const ProgressFn&);                                    \
  template TrainingLog train_lstm_baseline(Model<T>&, env::Environment&, const ValidationEnvFactory&,        \
                                           const TrainConfig&, const ProgressFn&);                           \
  template TrainingLog train_single_patch(Model<T>&, env::Environment&, const ValidationEnvFactory&,         \
                                          const TrainConfig&, const ProgressFn&);

CBGT_INSTANTIATE(float)
CBGT_INSTANTIATE(double)

}  // namespace cbgt::train
