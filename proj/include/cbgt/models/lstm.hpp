#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cbgt/models/encoder.hpp"
#include "cbgt/numerics/param_store.hpp"
#include "cbgt/numerics/tape.hpp"

namespace cbgt::models {

inline constexpr std::size_t kLstmHiddenSize = 10;

struct LstmConfig {
  std::size_t input_size = 10;
  std::size_t hidden_size = kLstmHiddenSize;
  std::size_t sequence_length = 1;
  std::size_t num_categories = 10;

  friend bool operator==(const LstmConfig&, const LstmConfig&) = default;
};

void validate(const LstmConfig& config);

/// Single-layer LSTM over a sequence of (N, input_size) inputs with a
/// dense + softmax head on the final hidden state. Gate order in the stacked
/// weights is input, forget, cell, output.
template <typename T>
class LstmClassifier {
 public:
  LstmClassifier(LstmConfig config, std::uint64_t seed);

  const LstmConfig& config() const noexcept { return config_; }
  numerics::ParamStore<T>& params() noexcept { return params_; }
  const numerics::ParamStore<T>& params() const noexcept { return params_; }

  std::vector<numerics::Var> bind(numerics::Tape<T>& tape);
  std::vector<numerics::Var> bind_frozen(numerics::Tape<T>& tape) const;

  /// Class probabilities (N,K) after consuming the whole sequence.
  numerics::Var forward(numerics::Tape<T>& tape, const std::vector<numerics::Var>& bound,
                        const std::vector<numerics::Var>& sequence) const;
  /// Final hidden state (N,H).
  numerics::Var final_hidden(numerics::Tape<T>& tape, const std::vector<numerics::Var>& bound,
                             const std::vector<numerics::Var>& sequence) const;

 private:
  LstmConfig config_;
  numerics::ParamStore<T> params_;
};

/// Probability vector for one sequence of evidence vectors.
template <typename T>
std::vector<T> lstm_forward(const LstmClassifier<T>& lstm, const std::vector<EvidenceVector<T>>& sequence);

}  // namespace cbgt::models
