#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "cbgt/env/dataset.hpp"
#include "cbgt/env/environment.hpp"
#include "cbgt/errors.hpp"
#include "cbgt/eval/evaluate.hpp"
#include "cbgt/numerics/adam.hpp"
#include "cbgt/numerics/ops.hpp"
#include "cbgt/train/train.hpp"
#include "support/fixtures.hpp"
#include "support/stream_gradcheck.hpp"

namespace md = cbgt::models;
namespace tr = cbgt::train;
namespace ev = cbgt::env;
using cbgt::testing::Script;

namespace {

md::EncoderConfig mlp(md::InputShape in, std::size_t k, std::vector<std::size_t> hidden,
                      md::OutputActivation act = md::OutputActivation::softmax) {
  return md::EncoderConfig{md::Architecture::mlp, in, k, act, std::move(hidden), 16};
}

std::vector<Script> random_scripts(std::size_t episodes, std::size_t steps, std::size_t dim, std::size_t k,
                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Script> out;
  for (std::size_t e = 0; e < episodes; ++e) {
    Script s{e % k, {}};
    for (std::size_t t = 0; t < steps; ++t) {
      std::vector<double> obs(dim);
      for (auto& v : obs) v = n(rng);
      s.observations.push_back(obs);
    }
    out.push_back(s);
  }
  return out;
}

tr::ValidationEnvFactory synthetic_factory(std::size_t k, double eta) {
  return [k, eta](std::uint64_t seed) { return std::make_unique<ev::SyntheticEvidenceEnv>(k, eta, seed); };
}

tr::TrainConfig small_config(std::size_t batch, std::size_t batches) {
  tr::TrainConfig c;
  c.batch_size = batch;
  c.max_episodes = batch * batches;
  c.validation_episodes = 128;
  c.stop_on_convergence = false;
  return c;
}

template <typename T>
std::vector<T> flatten(const cbgt::numerics::ParamStore<T>& store) {
  std::vector<T> out;
  for (const auto& e : store) out.insert(out.end(), e.value.data(), e.value.data() + e.value.size());
  return out;
}

std::shared_ptr<const ev::ImageDataset> real_mnist(ev::Split split, std::size_t count) {
  const auto root = cbgt::testing::mnist_root();
  if (root.empty()) return nullptr;
  return std::make_shared<const ev::ImageDataset>(ev::load_mnist(root, split).slice(0, count));
}

}  // namespace

TEST(LossAtDecision, CertainTargetCostsNothing) {
  cbgt::StreamResult r;
  r.target = 2;
  r.output = {0.0, 0.0, 1.0};
  EXPECT_EQ(tr::loss_at_decision(r), 0.0);
}

TEST(LossAtDecision, UniformOverTenIsLogTen) {
  cbgt::StreamResult r;
  r.target = 7;
  r.output.assign(10, 0.1);
  EXPECT_NEAR(tr::loss_at_decision(r), std::log(10.0), 1e-12);
}

TEST(LossAtDecision, IgnoresHowNonTargetMassIsSpread) {
  cbgt::StreamResult a, b;
  a.target = b.target = 0;
  a.output = {0.4, 0.1, 0.2, 0.3};
  b.output = {0.4, 0.3, 0.1, 0.2};
  EXPECT_EQ(tr::loss_at_decision(a), tr::loss_at_decision(b));
}

TEST(StreamGradient, MatchesFiniteDifferences) {
  auto model = tr::Model<double>::make_cbgt(mlp({1, 1, 4}, 3, {5}), 1.5, 4, 11);
  const auto scripts = random_scripts(6, 4, 4, 3, 12);
  const auto check = cbgt::testing::check_stream_gradients(model, scripts);
  EXPECT_TRUE(check.stopping_times_stable);
  for (auto t : check.decision_times) {
    EXPECT_GE(t, 2u);
    EXPECT_LE(t, 4u);
  }
  EXPECT_LT(check.max_rel_error, 1e-4) << check.worst;
}

TEST(StreamGradient, MatchesFiniteDifferencesWithLinearHead) {
  auto model = tr::Model<double>::make_cbgt(mlp({1, 1, 3}, 3, {4}, md::OutputActivation::linear), 0.8, 4, 5);
  const auto scripts = random_scripts(5, 4, 3, 3, 6);
  const auto check = cbgt::testing::check_stream_gradients(model, scripts);
  EXPECT_TRUE(check.stopping_times_stable);
  EXPECT_LT(check.max_rel_error, 1e-4) << check.worst;
}

TEST(StreamGradient, TwoIdenticalObservationsDoubleTheEvidencePath) {
  namespace nm = cbgt::numerics;
  const auto cfg = mlp({1, 1, 4}, 3, {6});
  auto model = tr::Model<double>::make_cbgt(cfg, 100.0, 2, 3);
  const std::vector<double> x{0.3, -1.2, 0.7, 0.1};
  const std::vector<Script> scripts{{1, {x}}};

  auto batch = cbgt::testing::scripted_batch(scripts, cfg.input);
  model.encoder.params().zero_grad();
  {
    nm::Tape<double> tape;
    const auto fwd = tr::forward_batch(tape, model, batch);
    ASSERT_EQ(fwd.results[0].decision_time, 2u);
    tr::backward_through_stream(&tape, fwd.loss);
  }
  const auto stream_grads = model.encoder.params();

  // Same graph built by hand: a = e(x) + e(x).
  md::Encoder<double> manual(cfg, 3);
  manual.params().zero_grad();
  {
    nm::Tape<double> tape;
    const auto bound = manual.bind(tape);
    nm::Tensor<double> obs({1, 1, 1, 4});
    std::copy(x.begin(), x.end(), obs.data());
    const auto in = tape.constant(obs);
    const auto e1 = manual.forward_train(tape, bound, in);
    const auto e2 = manual.forward_train(tape, bound, in);
    const std::vector<std::size_t> target{1};
    tape.backward(nm::cross_entropy(tape, nm::softmax_rows(tape, nm::add(tape, e1, e2)), std::span(target)));
  }
  // And through a single application scaled by two.
  md::Encoder<double> doubled(cfg, 3);
  doubled.params().zero_grad();
  {
    nm::Tape<double> tape;
    const auto bound = doubled.bind(tape);
    nm::Tensor<double> obs({1, 1, 1, 4});
    std::copy(x.begin(), x.end(), obs.data());
    const auto e = doubled.forward_train(tape, bound, tape.constant(obs));
    const std::vector<std::size_t> target{1};
    tape.backward(nm::cross_entropy(tape, nm::softmax_rows(tape, nm::scale(tape, e, 2.0)), std::span(target)));
  }
  for (std::size_t i = 0; i < stream_grads.size(); ++i) {
    const auto& g = stream_grads.grad(i);
    for (std::size_t k = 0; k < g.size(); ++k) {
      EXPECT_NEAR(g[k], manual.params().grad(i)[k], 1e-12);
      EXPECT_NEAR(g[k], doubled.params().grad(i)[k], 1e-12);
    }
  }
}

TEST(StreamGradient, MissingOrReplayedTapeIsInternalError) {
  EXPECT_THROW(tr::backward_through_stream<double>(nullptr, cbgt::numerics::Var{0}), cbgt::InternalError);
  auto model = tr::Model<double>::make_cbgt(mlp({1, 1, 2}, 2, {}), 1.0, 3, 1);
  auto batch = cbgt::testing::scripted_batch({{0, {{1.0, 0.0}}}}, {1, 1, 2});
  cbgt::numerics::Tape<double> tape;
  const auto fwd = tr::forward_batch(tape, model, batch);
  tr::backward_through_stream(&tape, fwd.loss);
  EXPECT_THROW(tr::backward_through_stream(&tape, fwd.loss), cbgt::InternalError);
}

TEST(ForwardBatch, DecisionsMatchSingleEpisodeStreams) {
  auto model = tr::Model<double>::make_cbgt(mlp({1, 1, 4}, 3, {5}), 1.7, 6, 21);
  const auto scripts = random_scripts(16, 6, 4, 3, 22);
  auto batch = cbgt::testing::scripted_batch(scripts, {1, 1, 4});
  cbgt::numerics::Tape<double> tape;
  const auto fwd = tr::forward_batch(tape, model, batch);
  for (std::size_t i = 0; i < scripts.size(); ++i) {
    cbgt::testing::ScriptedEpisode ep(scripts[i].target, {1, 1, 4}, scripts[i].observations);
    const auto single = cbgt::run_episode(model.encoder, cbgt::Threshold{1.7}, ep, 6);
    EXPECT_EQ(fwd.results[i].decision_time, single.decision_time) << i;
    EXPECT_EQ(fwd.results[i].decided_by_threshold, single.decided_by_threshold) << i;
    EXPECT_EQ(fwd.results[i].prediction, single.prediction) << i;
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(fwd.results[i].output[c], single.output[c], 1e-12);
  }
}

TEST(ForwardBatch, FirstStepDecisionReproducesSinglePatchLosses) {
  const auto cfg = mlp({1, 1, 4}, 4, {6}, md::OutputActivation::linear);
  auto cbgt_model = tr::Model<float>::make_cbgt(cfg, 1.0, 1, 9);
  auto single = tr::Model<float>::make_single_patch(cfg, 9);
  ev::SyntheticEvidenceEnv env_a(4, 0.3, 17), env_b(4, 0.3, 17);
  const auto config = small_config(32, 6);
  const auto log_a = tr::train(cbgt_model, env_a, synthetic_factory(4, 0.3), config);
  const auto log_b = tr::train(single, env_b, synthetic_factory(4, 0.3), config);
  EXPECT_EQ(tr::to_csv(log_a), tr::to_csv(log_b));
  EXPECT_EQ(flatten(cbgt_model.encoder.params()), flatten(single.encoder.params()));
}

TEST(TrainConfig, RejectsBadFields) {
  tr::TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(tr::validate(c), cbgt::ConfigError);
  c = {};
  c.learning_rate = 0;
  EXPECT_THROW(tr::validate(c), cbgt::ConfigError);
  c = {};
  c.learning_rate = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(tr::validate(c), cbgt::ConfigError);
  c = {};
  c.detector.window = 1;
  try {
    tr::validate(c);
    FAIL();
  } catch (const cbgt::ConfigError& e) {
    EXPECT_EQ(e.field(), "detector");
  }
  EXPECT_NO_THROW(tr::validate(tr::TrainConfig{}));
}

TEST(Train, RejectsWrongModelKind) {
  auto model = tr::Model<float>::make_single_patch(mlp({1, 1, 3}, 3, {}), 1);
  ev::SyntheticEvidenceEnv env(3, 0.0, 1);
  EXPECT_THROW(tr::train_cbgt(model, env, synthetic_factory(3, 0.0), small_config(8, 1)), std::invalid_argument);
}

TEST(Train, NonFiniteLossAborts) {
  auto model = tr::Model<float>::make_cbgt(mlp({1, 1, 3}, 3, {4}), 1.0, 5, 1);
  model.encoder.params().entry(0).value[0] = std::numeric_limits<float>::quiet_NaN();
  ev::SyntheticEvidenceEnv env(3, 0.0, 1);
  try {
    tr::train(model, env, synthetic_factory(3, 0.0), small_config(8, 2));
    FAIL() << "expected divergence error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("diverged"), std::string::npos);
  }
}

TEST(Train, SyntheticThresholdOneReachesPerfectAccuracy) {
  auto model = tr::Model<float>::make_cbgt(mlp({1, 1, 4}, 4, {8}), 1.0, 20, 3);
  ev::SyntheticEvidenceEnv env(4, 0.0, 4);
  const auto log = tr::train_cbgt(model, env, synthetic_factory(4, 0.0), small_config(64, 300));
  ASSERT_FALSE(log.rows.empty());
  EXPECT_EQ(log.rows.back().val_accuracy, 1.0);
}

TEST(Train, SyntheticLstmOfThreeReachesPerfectAccuracy) {
  auto model = tr::Model<float>::make_lstm(mlp({1, 1, 4}, 4, {8}), 3, 3);
  ev::SyntheticEvidenceEnv env(4, 0.0, 4);
  const auto log = tr::train_lstm_baseline(model, env, synthetic_factory(4, 0.0), small_config(64, 300));
  ASSERT_FALSE(log.rows.empty());
  EXPECT_EQ(log.rows.back().val_accuracy, 1.0);
  EXPECT_EQ(log.rows.back().avg_decision_time, 3.0);
}

TEST(Train, ValidatesEveryOtherBatch) {
  auto model = tr::Model<float>::make_cbgt(mlp({1, 1, 3}, 3, {4}), 2.0, 10, 8);
  ev::SyntheticEvidenceEnv env(3, 0.2, 9);
  const auto log = tr::train(model, env, synthetic_factory(3, 0.2), small_config(16, 10));
  ASSERT_EQ(log.rows.size(), 5u);
  for (std::size_t i = 0; i < log.rows.size(); ++i) {
    EXPECT_EQ(log.rows[i].step, 2 * (i + 1));
    EXPECT_EQ(log.rows[i].episodes_seen, 32 * (i + 1));
  }
}

TEST(Train, FixedSeedGivesIdenticalLogsAndParameters) {
  auto run = [] {
    auto model = tr::Model<float>::make_cbgt(mlp({1, 1, 5}, 5, {8}), 2.0, 30, 77);
    ev::SyntheticEvidenceEnv env(5, 0.25, 78);
    const auto log = tr::train(model, env, synthetic_factory(5, 0.25), small_config(32, 20));
    return std::make_pair(tr::to_csv(log), flatten(model.encoder.params()));
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Train, LstmFixedSeedGivesIdenticalLogs) {
  auto run = [] {
    auto model = tr::Model<float>::make_lstm(mlp({1, 1, 4}, 4, {6}), 2, 5);
    ev::SyntheticEvidenceEnv env(4, 0.2, 6);
    return tr::to_csv(tr::train(model, env, synthetic_factory(4, 0.2), small_config(32, 8)));
  };
  EXPECT_EQ(run(), run());
}

TEST(Train, StopsAtConvergenceWhenAsked) {
  auto model = tr::Model<float>::make_cbgt(mlp({1, 1, 3}, 3, {4}), 1.0, 10, 2);
  ev::SyntheticEvidenceEnv env(3, 0.0, 3);
  auto config = small_config(16, 1000);
  config.stop_on_convergence = true;
  config.validation_interval = 1;
  config.detector.window = 10;
  config.detector.threshold = 0.01;
  const auto log = tr::train(model, env, synthetic_factory(3, 0.0), config);
  ASSERT_TRUE(log.converged());
  EXPECT_EQ(*log.episodes_to_convergence, log.rows.back().episodes_seen);
  EXPECT_LT(log.rows.back().episodes_seen, config.max_episodes);
}

TEST(SinglePatch, OneClassTrainingPredictsThatClassEverywhere) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> px(0, 255);
  std::vector<std::uint8_t> pixels(200 * 28 * 28), labels(200, 3), test_labels(200);
  for (auto& p : pixels) p = static_cast<std::uint8_t>(px(rng));
  for (std::size_t i = 0; i < test_labels.size(); ++i) test_labels[i] = static_cast<std::uint8_t>(i % 10);
  auto train_set = std::make_shared<const ev::ImageDataset>("mnist", ev::Split::train, 28, 28, 1, pixels, labels);
  auto test_set = std::make_shared<const ev::ImageDataset>("mnist", ev::Split::test, 28, 28, 1, pixels, test_labels);

  auto model = tr::Model<float>::make_single_patch(mlp({28, 28, 1}, 10, {16}), 6);
  ev::PatchStreamEnv env(train_set, 16, 7);
  auto factory = [train_set](std::uint64_t seed) { return std::make_unique<ev::PatchStreamEnv>(train_set, 16, seed); };
  tr::train_single_patch(model, env, factory, small_config(32, 40));

  ev::PatchStreamEnv test_env(test_set, 16, 8);
  const auto report = cbgt::eval::evaluate(model, test_env, 500);
  std::size_t threes = 0;
  for (const auto& r : report.rows) {
    EXPECT_EQ(r.prediction, 3u);
    threes += r.target == 3 ? 1 : 0;
  }
  EXPECT_EQ(report.accuracy, static_cast<double>(threes) / 500.0);
}

TEST(SinglePatch, MnistLossFallsOverFirstTenBatches) {
  const auto data = real_mnist(ev::Split::train, 5000);
  if (!data) GTEST_SKIP() << "MNIST not available";
  auto model = tr::Model<float>::make_single_patch(md::lenet5_config(), 1);
  ev::PatchStreamEnv env(data, 16, 2);
  cbgt::numerics::AdamState<float> adam(model.encoder.params(), cbgt::numerics::AdamConfig{});
  std::vector<double> losses;
  for (int step = 0; step < 10; ++step) {
    tr::EpisodeBatch batch;
    for (int i = 0; i < 64; ++i) batch.push_back(env.start_episode());
    model.encoder.params().zero_grad();
    cbgt::numerics::Tape<float> tape;
    const auto fwd = tr::forward_batch(tape, model, batch);
    losses.push_back(tape.value(fwd.loss)[0]);
    tr::backward_through_stream(&tape, fwd.loss);
    cbgt::numerics::adam_step(model.encoder.params(), adam);
  }
  const double early = (losses[0] + losses[1] + losses[2]) / 3;
  const double late = (losses[7] + losses[8] + losses[9]) / 3;
  EXPECT_LT(late, early);
}

TEST(SinglePatch, LenetOnWholeMnistImagesExceedsNinetyPercent) {
  const auto train_set = real_mnist(ev::Split::train, 5000);
  const auto test_set = real_mnist(ev::Split::test, 2000);
  if (!train_set || !test_set) GTEST_SKIP() << "MNIST not available";
  auto model = tr::Model<float>::make_single_patch(md::lenet5_config(), 1);
  ev::PatchStreamEnv env(train_set, 28, 2);
  auto config = small_config(64, 320);
  config.validation_interval = 1000;
  config.validation_episodes = 2000;
  auto factory = [test_set](std::uint64_t seed) { return std::make_unique<ev::PatchStreamEnv>(test_set, 28, seed); };
  const auto log = tr::train_single_patch(model, env, factory, config);
  ASSERT_EQ(log.rows.size(), 1u);
  EXPECT_GT(log.rows.back().val_accuracy, 0.9);
}
