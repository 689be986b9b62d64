#include "cbgt/models/encoder.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "cbgt/numerics/ops.hpp"

namespace cbgt::models {

using numerics::ParamStore;
using numerics::Shape;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

std::string to_string(Architecture arch) {
  switch (arch) {
    case Architecture::lenet5: return "lenet5";
    case Architecture::resnet_lite: return "resnet_lite";
    case Architecture::mlp: return "mlp";
    case Architecture::identity: return "identity";
  }
  return "unknown";
}

std::string to_string(OutputActivation act) {
  switch (act) {
    case OutputActivation::softmax: return "softmax";
    case OutputActivation::sigmoid: return "sigmoid";
    case OutputActivation::linear: return "linear";
  }
  return "unknown";
}

Architecture parse_architecture(const std::string& tag) {
  if (tag == "lenet5") return Architecture::lenet5;
  if (tag == "resnet_lite") return Architecture::resnet_lite;
  if (tag == "mlp") return Architecture::mlp;
  if (tag == "identity") return Architecture::identity;
  throw std::invalid_argument("unknown encoder architecture '" + tag + "'");
}

OutputActivation parse_activation(const std::string& tag) {
  if (tag == "softmax") return OutputActivation::softmax;
  if (tag == "sigmoid") return OutputActivation::sigmoid;
  if (tag == "linear") return OutputActivation::linear;
  throw std::invalid_argument("unknown output activation '" + tag + "'");
}

EncoderConfig lenet5_config(std::size_t num_categories) {
  return EncoderConfig{Architecture::lenet5, {28, 28, 1}, num_categories, OutputActivation::softmax, {}, 16};
}

EncoderConfig resnet_lite_config(std::size_t num_categories) {
  return EncoderConfig{Architecture::resnet_lite, {32, 32, 3}, num_categories, OutputActivation::softmax, {}, 16};
}

void validate(const EncoderConfig& c) {
  if (c.num_categories < 2) throw std::invalid_argument("encoder needs at least 2 categories");
  if (c.input.size() == 0) throw std::invalid_argument("encoder input shape must be positive");
  switch (c.architecture) {
    case Architecture::lenet5:
      if (!(c.input == InputShape{28, 28, 1})) {
        throw std::invalid_argument("lenet5 expects 28x28x1 input");
      }
      break;
    case Architecture::resnet_lite:
      if (c.input.height != 32 || c.input.width != 32) {
        throw std::invalid_argument("resnet_lite expects 32x32 input");
      }
      if (c.resnet_width == 0) throw std::invalid_argument("resnet_lite width must be positive");
      break;
    case Architecture::mlp:
      for (auto h : c.hidden)
        if (h == 0) throw std::invalid_argument("mlp hidden widths must be positive");
      break;
    case Architecture::identity:
      if (c.input.size() != c.num_categories) {
        throw std::invalid_argument("identity encoder needs input size == num_categories");
      }
      break;
  }
}

namespace {

template <typename T>
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  // Uniform in +-1/sqrt(fan_in).
  Tensor<T> fan_in_uniform(Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor<T> t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng_));
    return t;
  }

 private:
  std::mt19937_64 rng_;
};

template <typename T>
void add_dense(ParamStore<T>& p, Initializer<T>& init, const std::string& name, std::size_t in,
               std::size_t out) {
  p.add(name + ".weight", init.fan_in_uniform({out, in}, in));
  p.add(name + ".bias", Tensor<T>({out}));
}

template <typename T>
void add_conv(ParamStore<T>& p, Initializer<T>& init, const std::string& name, std::size_t in,
              std::size_t out, std::size_t k, bool bias) {
  p.add(name + ".weight", init.fan_in_uniform({out, k, k, in}, k * k * in));
  if (bias) p.add(name + ".bias", Tensor<T>({out}));
}

template <typename T>
void add_batch_norm(ParamStore<T>& p, const std::string& name, std::size_t channels) {
  p.add(name + ".gamma", Tensor<T>({channels}, T{1}));
  p.add(name + ".beta", Tensor<T>({channels}));
  p.add(name + ".running_mean", Tensor<T>({channels}), false);
  p.add(name + ".running_var", Tensor<T>({channels}, T{1}), false);
}

// Helper bundling what a forward pass needs to look up parameters.
template <typename T>
struct Ctx {
  Tape<T>& tape;
  const std::vector<Var>& bound;
  const ParamStore<T>& params;
  ParamStore<T>* train_store;

  Var operator[](const std::string& name) const { return bound.at(params.index_of(name)); }

  Var batch_norm(Var x, const std::string& name) const {
    if (train_store) {
      return numerics::batch_norm_train(tape, x, (*this)[name + ".gamma"], (*this)[name + ".beta"],
                                        train_store->value(name + ".running_mean"),
                                        train_store->value(name + ".running_var"));
    }
    return numerics::batch_norm_eval(tape, x, (*this)[name + ".gamma"], (*this)[name + ".beta"],
                                     params.value(name + ".running_mean"),
                                     params.value(name + ".running_var"));
  }

  Var dense(Var x, const std::string& name) const {
    return numerics::dense(tape, x, (*this)[name + ".weight"], (*this)[name + ".bias"]);
  }
};

constexpr std::size_t kResnetBlocks = 6;

}  // namespace

template <typename T>
Encoder<T>::Encoder(EncoderConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
  validate(config_);
  Initializer<T> init(seed_);
  const std::size_t k = config_.num_categories;
  switch (config_.architecture) {
    case Architecture::lenet5:
      add_conv(params_, init, "conv1", 1, 6, 5, true);
      params_.add("sub2.coeff", Tensor<T>({6}, T{1}));
      params_.add("sub2.bias", Tensor<T>({6}));
      add_conv(params_, init, "conv3", 6, 16, 5, true);
      params_.add("sub4.coeff", Tensor<T>({16}, T{1}));
      params_.add("sub4.bias", Tensor<T>({16}));
      add_dense(params_, init, "fc5", 5 * 5 * 16, 120);
      add_dense(params_, init, "fc6", 120, 84);
      add_dense(params_, init, "out", 84, k);
      break;
    case Architecture::resnet_lite: {
      const std::size_t w = config_.resnet_width;
      add_conv(params_, init, "stem.conv", config_.input.channels, w, 3, false);
      add_batch_norm(params_, "stem.bn", w);
      for (std::size_t b = 0; b < kResnetBlocks; ++b) {
        const std::string name = "block" + std::to_string(b);
        add_conv(params_, init, name + ".conv1", w, w, 3, false);
        add_batch_norm(params_, name + ".bn1", w);
        add_conv(params_, init, name + ".conv2", w, w, 3, false);
        add_batch_norm(params_, name + ".bn2", w);
      }
      add_dense(params_, init, "out", w, k);
      break;
    }
    case Architecture::mlp: {
      std::size_t in = config_.input.size();
      for (std::size_t i = 0; i < config_.hidden.size(); ++i) {
        add_dense(params_, init, "hidden" + std::to_string(i), in, config_.hidden[i]);
        in = config_.hidden[i];
      }
      add_dense(params_, init, "out", in, k);
      break;
    }
    case Architecture::identity:
      break;
  }
}

template <typename T>
std::vector<Var> Encoder<T>::bind(Tape<T>& tape) {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) vars.push_back(tape.parameter(params_, i));
  return vars;
}

template <typename T>
std::vector<Var> Encoder<T>::bind_frozen(Tape<T>& tape) const {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) vars.push_back(tape.constant(params_.value(i)));
  return vars;
}

template <typename T>
void Encoder<T>::check_input(const Shape& shape) const {
  const auto& in = config_.input;
  if (shape.size() != 4 || shape[1] != in.height || shape[2] != in.width || shape[3] != in.channels) {
    throw std::invalid_argument("encoder expects (N," + std::to_string(in.height) + "," +
                                std::to_string(in.width) + "," + std::to_string(in.channels) +
                                ") observations, got " + numerics::shape_string(shape));
  }
}

template <typename T>
Var Encoder<T>::forward_train(Tape<T>& tape, const std::vector<Var>& bound, Var observations) {
  return run(tape, bound, observations, &params_);
}

template <typename T>
Var Encoder<T>::forward_eval(Tape<T>& tape, const std::vector<Var>& bound, Var observations) const {
  return run(tape, bound, observations, nullptr);
}

template <typename T>
Var Encoder<T>::run(Tape<T>& tape, const std::vector<Var>& bound, Var x, ParamStore<T>* train_store,
                    std::vector<Shape>* trace) const {
  check_input(tape.value(x).shape());
  if (bound.size() != params_.size()) throw std::invalid_argument("bound parameter list does not match encoder");
  const std::size_t n = tape.value(x).dim(0);
  const Ctx<T> ctx{tape, bound, params_, train_store};
  namespace ops = numerics;
  Var h = x;
  switch (config_.architecture) {
    case Architecture::lenet5: {
      h = ops::tanh(tape, ops::conv2d(tape, h, ctx["conv1.weight"], ctx["conv1.bias"], 1, 2));
      h = ops::tanh(tape, ops::subsample(tape, h, ctx["sub2.coeff"], ctx["sub2.bias"], 2));
      h = ops::tanh(tape, ops::conv2d(tape, h, ctx["conv3.weight"], ctx["conv3.bias"], 1, 0));
      h = ops::tanh(tape, ops::subsample(tape, h, ctx["sub4.coeff"], ctx["sub4.bias"], 2));
      h = ops::reshape(tape, h, {n, 5 * 5 * 16});
      h = ops::tanh(tape, ctx.dense(h, "fc5"));
      h = ops::tanh(tape, ctx.dense(h, "fc6"));
      h = ctx.dense(h, "out");
      break;
    }
    case Architecture::resnet_lite: {
      const std::size_t w = config_.resnet_width;
      const Var no_bias = tape.constant(Tensor<T>({w}));
      auto conv = [&](Var in, const std::string& name) {
        return ops::conv2d(tape, in, ctx[name + ".weight"], no_bias, 1, 1);
      };
      h = ops::relu(tape, ctx.batch_norm(conv(h, "stem.conv"), "stem.bn"));
      if (trace) trace->push_back(tape.value(h).shape());
      for (std::size_t b = 0; b < kResnetBlocks; ++b) {
        const std::string name = "block" + std::to_string(b);
        Var r = ops::relu(tape, ctx.batch_norm(conv(h, name + ".conv1"), name + ".bn1"));
        r = ctx.batch_norm(conv(r, name + ".conv2"), name + ".bn2");
        h = ops::relu(tape, ops::add(tape, h, r));
        if (b % 2 == 1) h = ops::avg_pool(tape, h, 2);
        if (trace) trace->push_back(tape.value(h).shape());
      }
      const std::size_t side = tape.value(h).dim(1);
      h = ops::reshape(tape, ops::avg_pool(tape, h, side), {n, w});
      h = ctx.dense(h, "out");
      break;
    }
    case Architecture::mlp: {
      h = ops::reshape(tape, h, {n, config_.input.size()});
      for (std::size_t i = 0; i < config_.hidden.size(); ++i) {
        h = ops::tanh(tape, ctx.dense(h, "hidden" + std::to_string(i)));
      }
      h = ctx.dense(h, "out");
      break;
    }
    case Architecture::identity:
      h = ops::reshape(tape, h, {n, config_.input.size()});
      break;
  }
  switch (config_.activation) {
    case OutputActivation::softmax: return ops::softmax_rows(tape, h);
    case OutputActivation::sigmoid: return ops::sigmoid(tape, h);
    case OutputActivation::linear: return h;
  }
  return h;
}

template <typename T>
EvidenceVector<T> Encoder<T>::encode(const Tensor<T>& observation) const {
  Tensor<T> batch = observation;
  if (observation.rank() == 3) {
    batch = observation.reshaped({1, observation.dim(0), observation.dim(1), observation.dim(2)});
  }
  if (batch.rank() != 4 || batch.dim(0) != 1) {
    throw std::invalid_argument("encode expects a single observation, got " +
                                numerics::shape_string(observation.shape()));
  }
  const auto out = encode_batch(batch);
  return EvidenceVector<T>(out.values().begin(), out.values().end());
}

template <typename T>
Tensor<T> Encoder<T>::encode_batch(const Tensor<T>& observations) const {
  Tape<T> tape;
  const auto bound = bind_frozen(tape);
  return tape.value(forward_eval(tape, bound, tape.constant(observations)));
}

template <typename T>
std::vector<Shape> Encoder<T>::feature_map_shapes() const {
  std::vector<Shape> shapes;
  if (config_.architecture != Architecture::resnet_lite) return shapes;
  Tape<T> tape;
  const auto bound = bind_frozen(tape);
  const auto& in = config_.input;
  run(tape, bound, tape.constant(Tensor<T>({1, in.height, in.width, in.channels})), nullptr, &shapes);
  return shapes;
}

template <typename T>
Encoder<T> build_lenet5(EncoderConfig config, std::uint64_t seed) {
  if (config.architecture != Architecture::lenet5) throw std::invalid_argument("config is not lenet5");
  return Encoder<T>(std::move(config), seed);
}

template <typename T>
Encoder<T> build_resnet_lite(EncoderConfig config, std::uint64_t seed) {
  if (config.architecture != Architecture::resnet_lite) {
    throw std::invalid_argument("config is not resnet_lite");
  }
  return Encoder<T>(std::move(config), seed);
}

template <typename T>
Encoder<T> build_mlp(EncoderConfig config, std::uint64_t seed) {
  if (config.architecture != Architecture::mlp) throw std::invalid_argument("config is not mlp");
  return Encoder<T>(std::move(config), seed);
}

template class Encoder<float>;
template class Encoder<double>;
template Encoder<float> build_lenet5<float>(EncoderConfig, std::uint64_t);
template Encoder<double> build_lenet5<double>(EncoderConfig, std::uint64_t);
template Encoder<float> build_resnet_lite<float>(EncoderConfig, std::uint64_t);
template Encoder<double> build_resnet_lite<double>(EncoderConfig, std::uint64_t);
template Encoder<float> build_mlp<float>(EncoderConfig, std::uint64_t);
template Encoder<double> build_mlp<double>(EncoderConfig, std::uint64_t);

}  // namespace cbgt::models
