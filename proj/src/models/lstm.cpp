#include "cbgt/models/lstm.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "cbgt/numerics/ops.hpp"

namespace cbgt::models {

using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

void validate(const LstmConfig& c) {
  if (c.input_size == 0) throw std::invalid_argument("lstm input size must be positive");
  if (c.hidden_size != kLstmHiddenSize) {
    throw std::invalid_argument("lstm hidden size must be " + std::to_string(kLstmHiddenSize));
  }
  if (c.sequence_length == 0) throw std::invalid_argument("lstm sequence length must be at least 1");
  if (c.num_categories < 2) throw std::invalid_argument("lstm needs at least 2 categories");
}

namespace {

template <typename T>
Tensor<T> uniform(numerics::Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng));
  return t;
}

}  // namespace

template <typename T>
LstmClassifier<T>::LstmClassifier(LstmConfig config, std::uint64_t seed) : config_(config) {
  validate(config_);
  std::mt19937_64 rng(seed);
  const std::size_t h = config_.hidden_size;
  params_.add("w_ih", uniform<T>({4 * h, config_.input_size}, config_.input_size, rng));
  params_.add("w_hh", uniform<T>({4 * h, h}, h, rng));
  params_.add("bias", Tensor<T>({4 * h}));
  params_.add("head.weight", uniform<T>({config_.num_categories, h}, h, rng));
  params_.add("head.bias", Tensor<T>({config_.num_categories}));
}

template <typename T>
std::vector<Var> LstmClassifier<T>::bind(Tape<T>& tape) {
  std::vector<Var> vars;
  for (std::size_t i = 0; i < params_.size(); ++i) vars.push_back(tape.parameter(params_, i));
  return vars;
}

template <typename T>
std::vector<Var> LstmClassifier<T>::bind_frozen(Tape<T>& tape) const {
  std::vector<Var> vars;
  for (std::size_t i = 0; i < params_.size(); ++i) vars.push_back(tape.constant(params_.value(i)));
  return vars;
}

template <typename T>
Var LstmClassifier<T>::final_hidden(Tape<T>& tape, const std::vector<Var>& bound,
                                    const std::vector<Var>& sequence) const {
  if (sequence.size() != config_.sequence_length) {
    throw std::invalid_argument("lstm expects a sequence of length " +
                                std::to_string(config_.sequence_length) + ", got " +
                                std::to_string(sequence.size()));
  }
  if (bound.size() != params_.size()) throw std::invalid_argument("bound parameter list does not match lstm");
  const Var w_ih = bound[0], w_hh = bound[1], bias = bound[2];
  const std::size_t h = config_.hidden_size;
  const Var no_bias = tape.constant(Tensor<T>({4 * h}));

  Var hidden, cell;
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    const auto& xs = tape.value(sequence[t]).shape();
    if (xs.size() != 2 || xs[1] != config_.input_size) {
      throw std::invalid_argument("lstm input must be (N," + std::to_string(config_.input_size) + "), got " +
                                  numerics::shape_string(xs));
    }
    Var gates = numerics::dense(tape, sequence[t], w_ih, bias);
    if (t > 0) gates = numerics::add(tape, gates, numerics::dense(tape, hidden, w_hh, no_bias));
    const Var i = numerics::sigmoid(tape, numerics::slice_cols(tape, gates, 0, h));
    const Var f = numerics::sigmoid(tape, numerics::slice_cols(tape, gates, h, 2 * h));
    const Var g = numerics::tanh(tape, numerics::slice_cols(tape, gates, 2 * h, 3 * h));
    const Var o = numerics::sigmoid(tape, numerics::slice_cols(tape, gates, 3 * h, 4 * h));
    cell = t == 0 ? numerics::mul(tape, i, g)
                  : numerics::add(tape, numerics::mul(tape, f, cell), numerics::mul(tape, i, g));
    hidden = numerics::mul(tape, o, numerics::tanh(tape, cell));
  }
  return hidden;
}

template <typename T>
Var LstmClassifier<T>::forward(Tape<T>& tape, const std::vector<Var>& bound,
                               const std::vector<Var>& sequence) const {
  const Var hidden = final_hidden(tape, bound, sequence);
  return numerics::softmax_rows(tape, numerics::dense(tape, hidden, bound[3], bound[4]));
}

template <typename T>
std::vector<T> lstm_forward(const LstmClassifier<T>& lstm, const std::vector<EvidenceVector<T>>& sequence) {
  Tape<T> tape;
  const auto bound = lstm.bind_frozen(tape);
  std::vector<Var> inputs;
  for (const auto& e : sequence) {
    if (e.size() != lstm.config().input_size) {
      throw std::invalid_argument("evidence vector length does not match lstm input size");
    }
    inputs.push_back(tape.constant(Tensor<T>({1, e.size()}, e)));
  }
  const auto& out = tape.value(lstm.forward(tape, bound, inputs));
  return std::vector<T>(out.values().begin(), out.values().end());
}

template class LstmClassifier<float>;
template class LstmClassifier<double>;
template std::vector<float> lstm_forward(const LstmClassifier<float>&, const std::vector<EvidenceVector<float>>&);
template std::vector<double> lstm_forward(const LstmClassifier<double>&,
                                          const std::vector<EvidenceVector<double>>&);

}  // namespace cbgt::models
