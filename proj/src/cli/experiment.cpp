#include "cbgt/cli/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cbgt/cbgt/stream.hpp"
#include "cbgt/env/dataset.hpp"
#include "cbgt/errors.hpp"

namespace cbgt::cli {

using train::ModelKind;

namespace {

constexpr std::uint64_t kEnvSeedMix = 0xa0761d6478bd642fULL;

std::string resolved_encoder(const ExperimentConfig& c) {
  if (!c.encoder.empty()) return c.encoder;
  if (c.dataset == "mnist") return "lenet5";
  if (c.dataset == "cifar10") return "resnet_lite";
  return "mlp";
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

env::ImageDataset load(const ExperimentConfig& c, env::Split split) {
  return c.dataset == "mnist" ? env::load_mnist(c.data_root, split) : env::load_cifar10(c.data_root, split);
}

}  // namespace

bool is_image_dataset(const ExperimentConfig& c) { return c.dataset == "mnist" || c.dataset == "cifar10"; }

void validate(const ExperimentConfig& c) {
  if (c.dataset != "mnist" && c.dataset != "cifar10" && c.dataset != "synthetic") {
    throw ConfigError("dataset", "expected mnist, cifar10 or synthetic, got '" + c.dataset + "'");
  }
  ModelKind kind;
  try {
    kind = train::parse_model_kind(c.model);
  } catch (const std::invalid_argument&) {
    throw ConfigError("model", "expected cbgt, lstm or single_patch, got '" + c.model + "'");
  }
  if (is_image_dataset(c)) {
    if (c.data_root.empty()) throw ConfigError("data-root", "required for " + c.dataset);
    if (std::find(std::begin(env::kPatchSizes), std::end(env::kPatchSizes), c.patch_size) == std::end(env::kPatchSizes)) {
      throw ConfigError("patch-size", "must be one of 5, 8, 10, 12, 16, 20");
    }
    if (c.validation_pool == 0) throw ConfigError("validation-pool", "must be at least 1");
  } else {
    if (c.num_categories < 2) throw ConfigError("num-categories", "must be at least 2");
    if (!(c.eta >= 0.0 && c.eta <= 1.0)) throw ConfigError("eta", "must lie in [0,1]");
  }

  const std::string enc = resolved_encoder(c);
  models::Architecture arch;
  try {
    arch = models::parse_architecture(enc);
  } catch (const std::invalid_argument&) {
    throw ConfigError("encoder", "unknown encoder '" + enc + "'");
  }
  if (arch == models::Architecture::lenet5 && c.dataset != "mnist") {
    throw ConfigError("encoder", "lenet5 needs 28x28 greyscale input (mnist)");
  }
  if (arch == models::Architecture::resnet_lite && c.dataset != "cifar10") {
    throw ConfigError("encoder", "resnet_lite needs 32x32 colour input (cifar10)");
  }
  if (arch == models::Architecture::identity && c.dataset != "synthetic") {
    throw ConfigError("encoder", "identity is only meaningful on the synthetic dataset");
  }
  try {
    models::parse_activation(c.activation);
  } catch (const std::invalid_argument&) {
    throw ConfigError("activation", "expected softmax, sigmoid or linear, got '" + c.activation + "'");
  }

  if (c.tau && c.seq_len) throw ConfigError("tau", "tau and seq-len are mutually exclusive");
  switch (kind) {
    case ModelKind::cbgt:
      if (!c.tau) throw ConfigError("tau", "required for the cbgt model");
      if (!std::isfinite(*c.tau) || *c.tau < 0) throw ConfigError("tau", "must be a non-negative finite number");
      break;
    case ModelKind::lstm:
      if (!c.seq_len) throw ConfigError("seq-len", "required for the lstm model");
      if (*c.seq_len == 0) throw ConfigError("seq-len", "must be at least 1");
      break;
    case ModelKind::single_patch:
      if (c.tau) throw ConfigError("tau", "not used by the single_patch model");
      if (c.seq_len) throw ConfigError("seq-len", "not used by the single_patch model");
      break;
  }
  if (c.precision != "f32" && c.precision != "f64") throw ConfigError("precision", "expected f32 or f64");
  if (c.max_steps == 0) throw ConfigError("max-steps", "must be at least 1");
  if (c.budget == 0) throw ConfigError("budget", "must be at least 1");
  if (c.episodes == 0) throw ConfigError("episodes", "must be at least 1");
  if (c.out.empty()) throw ConfigError("out", "must not be empty");
  auto tc = train::TrainConfig{};
  tc.learning_rate = c.learning_rate;
  tc.batch_size = c.batch_size;
  tc.validation_episodes = c.validation_episodes;
  tc.validation_interval = c.validation_interval;
  try {
    train::validate(tc);
  } catch (const ConfigError& e) {
    std::string field = e.field();
    std::replace(field.begin(), field.end(), '_', '-');
    const std::string what = e.what();
    throw ConfigError(field, what.substr(what.find(": ") + 2));
  }
  try {
    models::validate(encoder_config(c));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("encoder", e.what());
  }
}

models::EncoderConfig encoder_config(const ExperimentConfig& c) {
  models::EncoderConfig e;
  e.architecture = models::parse_architecture(resolved_encoder(c));
  e.activation = models::parse_activation(c.activation);
  if (c.dataset == "mnist") {
    e.input = {28, 28, 1};
  } else if (c.dataset == "cifar10") {
    e.input = {32, 32, 3};
  } else {
    e.input = {1, 1, c.num_categories};
  }
  e.num_categories = is_image_dataset(c) ? 10 : c.num_categories;
  if (e.architecture == models::Architecture::mlp) e.hidden = c.hidden;
  return e;
}

train::TrainConfig train_config(const ExperimentConfig& c) {
  train::TrainConfig t;
  t.learning_rate = c.learning_rate;
  t.batch_size = c.batch_size;
  t.max_episodes = c.budget;
  t.validation_episodes = c.validation_episodes;
  t.validation_interval = c.validation_interval;
  t.validation_seed = c.validation_seed;
  t.stop_on_convergence = c.stop_on_convergence;
  return t;
}

std::string environment_id(const ExperimentConfig& c) {
  if (!is_image_dataset(c)) return "synthetic_1x1";
  const auto p = std::to_string(c.patch_size);
  return c.dataset + "_" + p + "x" + p;
}

std::string model_id(const ExperimentConfig& c) {
  if (c.model == "cbgt") return "tau" + format_real(c.tau.value_or(0.0));
  if (c.model == "lstm") return "L" + std::to_string(c.seq_len.value_or(0));
  return "single";
}

std::string stem(const ExperimentConfig& c) { return environment_id(c) + "_" + model_id(c); }

std::string to_config_text(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "dataset = " << c.dataset << "\n";
  if (!c.data_root.empty()) o << "data-root = \"" << c.data_root.string() << "\"\n";
  if (is_image_dataset(c)) o << "patch-size = " << c.patch_size << "\n";
  o << "model = " << c.model << "\n";
  o << "encoder = " << resolved_encoder(c) << "\n";
  o << "activation = " << c.activation << "\n";
  if (resolved_encoder(c) == "mlp") o << "hidden = \"" << join(c.hidden) << "\"\n";
  if (c.tau) o << "tau = " << format_real(*c.tau) << "\n";
  if (c.seq_len) o << "seq-len = " << *c.seq_len << "\n";
  o << "seed = " << c.seed << "\n";
  o << "max-steps = " << c.max_steps << "\n";
  o << "precision = " << c.precision << "\n";
  o << "budget = " << c.budget << "\n";
  o << "batch-size = " << c.batch_size << "\n";
  o << "learning-rate = " << format_real(c.learning_rate) << "\n";
  o << "validation-episodes = " << c.validation_episodes << "\n";
  o << "validation-interval = " << c.validation_interval << "\n";
  o << "validation-seed = " << c.validation_seed << "\n";
  o << "stop-on-convergence = " << (c.stop_on_convergence ? "true" : "false") << "\n";
  if (is_image_dataset(c)) {
    o << "validation-pool = " << c.validation_pool << "\n";
    o << "train-subset = " << c.train_subset << "\n";
    o << "test-subset = " << c.test_subset << "\n";
  } else {
    o << "num-categories = " << c.num_categories << "\n";
    o << "eta = " << format_real(c.eta) << "\n";
  }
  o << "episodes = " << c.episodes << "\n";
  o << "eval-seed = " << c.eval_seed << "\n";
  o << "out = \"" << c.out.string() << "\"\n";
  return o.str();
}

Environments make_environments(const ExperimentConfig& c, bool with_training) {
  validate(c);
  Environments out;
  const std::uint64_t train_seed = c.seed ^ kEnvSeedMix;
  if (!is_image_dataset(c)) {
    const std::size_t k = c.num_categories;
    const double eta = c.eta;
    if (with_training) out.train = std::make_unique<env::SyntheticEvidenceEnv>(k, eta, train_seed);
    out.validation = [k, eta](std::uint64_t seed) { return std::make_unique<env::SyntheticEvidenceEnv>(k, eta, seed); };
    const std::uint64_t eval_seed = c.eval_seed;
    out.test = [k, eta, eval_seed] { return std::make_unique<env::SyntheticEvidenceEnv>(k, eta, eval_seed); };
    return out;
  }
  const std::size_t p = c.patch_size;
  if (with_training) {
    const auto full = load(c, env::Split::train);
    const std::size_t n = full.size();
    if (c.validation_pool >= n) throw ConfigError("validation-pool", "leaves no training images");
    const std::size_t train_count = c.train_subset ? c.train_subset : n - c.validation_pool;
    if (train_count + c.validation_pool > n) {
      throw ConfigError("train-subset", "train-subset plus validation-pool exceeds the " + std::to_string(n) +
                                            " images of the train split");
    }
    auto train_set = std::make_shared<const env::ImageDataset>(full.slice(0, train_count));
    auto pool = std::make_shared<const env::ImageDataset>(full.slice(n - c.validation_pool, c.validation_pool));
    out.train = std::make_unique<env::PatchStreamEnv>(train_set, p, train_seed);
    out.validation = [pool, p](std::uint64_t seed) { return std::make_unique<env::PatchStreamEnv>(pool, p, seed); };
  }
  auto test_full = load(c, env::Split::test);
  if (c.test_subset > test_full.size()) throw ConfigError("test-subset", "exceeds the size of the test split");
  auto test_set = std::make_shared<const env::ImageDataset>(
      c.test_subset ? test_full.slice(0, c.test_subset) : std::move(test_full));
  const std::uint64_t eval_seed = c.eval_seed;
  out.test = [test_set, p, eval_seed] { return std::make_unique<env::PatchStreamEnv>(test_set, p, eval_seed); };
  return out;
}

}  // namespace cbgt::cli
