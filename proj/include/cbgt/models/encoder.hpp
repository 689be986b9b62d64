#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cbgt/numerics/param_store.hpp"
#include "cbgt/numerics/tape.hpp"

namespace cbgt::models {

enum class Architecture { lenet5, resnet_lite, mlp, identity };
enum class OutputActivation { softmax, sigmoid, linear };

std::string to_string(Architecture arch);
std::string to_string(OutputActivation act);
Architecture parse_architecture(const std::string& tag);
OutputActivation parse_activation(const std::string& tag);

struct InputShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t size() const { return height * width * channels; }
  friend bool operator==(const InputShape&, const InputShape&) = default;
};

struct EncoderConfig {
  Architecture architecture = Architecture::mlp;
  InputShape input;
  std::size_t num_categories = 10;
  OutputActivation activation = OutputActivation::softmax;
  std::vector<std::size_t> hidden;  // mlp only
  std::size_t resnet_width = 16;    // resnet_lite only

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Throws std::invalid_argument if the configuration cannot be built.
void validate(const EncoderConfig& config);

/// Per-observation evidence e_t; one element per decision category.
template <typename T>
using EvidenceVector = std::vector<T>;

/// Evidence encoder: maps a batch of observations (N,H,W,C) to (N,K).
///
/// Architectures:
///  - lenet5: 28x28x1 input; conv5x5(6, pad 2) - tanh - subsample2 - tanh -
///    conv5x5(16) - tanh - subsample2 - tanh - fc120 - tanh - fc84 - tanh - fcK.
///  - resnet_lite: 32x32xC input; conv3x3 + batch norm + relu, then six
///    residual blocks (conv-bn-relu-conv-bn + identity, relu) with 2x2 average
///    pooling after every second block, global average pooling, fcK.
///  - mlp: tanh hidden layers of the configured widths, then fcK.
///  - identity: no parameters; the flattened observation is the output.
/// The configured output activation is applied last.
template <typename T>
class Encoder {
 public:
  Encoder(EncoderConfig config, std::uint64_t seed);

  const EncoderConfig& config() const noexcept { return config_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t num_categories() const noexcept { return config_.num_categories; }
  numerics::ParamStore<T>& params() noexcept { return params_; }
  const numerics::ParamStore<T>& params() const noexcept { return params_; }

  /// Parameter leaves whose gradients flow into params().
  std::vector<numerics::Var> bind(numerics::Tape<T>& tape);
  /// Parameters recorded as constants (no gradients).
  std::vector<numerics::Var> bind_frozen(numerics::Tape<T>& tape) const;

  /// Training-mode forward pass; batch norm uses batch statistics and
  /// updates its running estimates.
  numerics::Var forward_train(numerics::Tape<T>& tape, const std::vector<numerics::Var>& bound,
                              numerics::Var observations);
  /// Evaluation-mode forward pass.
  numerics::Var forward_eval(numerics::Tape<T>& tape, const std::vector<numerics::Var>& bound,
                             numerics::Var observations) const;

  /// Evaluation-mode evidence for a single observation of shape (H,W,C) or
  /// (1,H,W,C).
  EvidenceVector<T> encode(const numerics::Tensor<T>& observation) const;
  /// Evaluation-mode evidence for a batch (N,H,W,C) -> (N,K).
  numerics::Tensor<T> encode_batch(const numerics::Tensor<T>& observations) const;

  /// Shapes of the resnet_lite stem output and of each block output for one
  /// observation; empty for other architectures.
  std::vector<numerics::Shape> feature_map_shapes() const;

 private:
  numerics::Var run(numerics::Tape<T>& tape, const std::vector<numerics::Var>& bound,
                    numerics::Var x, numerics::ParamStore<T>* train_store,
                    std::vector<numerics::Shape>* trace = nullptr) const;
  void check_input(const numerics::Shape& shape) const;

  EncoderConfig config_;
  std::uint64_t seed_;
  numerics::ParamStore<T> params_;
};

template <typename T>
Encoder<T> build_lenet5(EncoderConfig config, std::uint64_t seed);
template <typename T>
Encoder<T> build_resnet_lite(EncoderConfig config, std::uint64_t seed);
template <typename T>
Encoder<T> build_mlp(EncoderConfig config, std::uint64_t seed);

/// LeNet-5 configuration for 28x28 greyscale input.
EncoderConfig lenet5_config(std::size_t num_categories = 10);
/// ResNet-lite configuration for 32x32 colour input.
EncoderConfig resnet_lite_config(std::size_t num_categories = 10);

}  // namespace cbgt::models
