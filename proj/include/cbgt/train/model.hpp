#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "cbgt/cbgt/stream.hpp"
#include "cbgt/models/encoder.hpp"
#include "cbgt/models/lstm.hpp"

namespace cbgt::train {

enum class ModelKind { cbgt, lstm, single_patch };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& tag);

/// A trainable classifier: an evidence encoder plus either the threshold
/// mechanism, an LSTM over a fixed number of observations, or nothing
/// (single-patch baseline).
template <typename T>
struct Model {
  ModelKind kind = ModelKind::cbgt;
  models::Encoder<T> encoder;
  std::optional<models::LstmClassifier<T>> lstm;
  double tau = 0;                       // cbgt
  std::size_t sequence_length = 0;      // lstm
  std::size_t max_steps = kDefaultMaxSteps;

  static Model make_cbgt(const models::EncoderConfig& encoder, double tau, std::size_t max_steps,
                         std::uint64_t seed);
  static Model make_lstm(const models::EncoderConfig& encoder, std::size_t sequence_length, std::uint64_t seed);
  static Model make_single_patch(const models::EncoderConfig& encoder, std::uint64_t seed);

  /// "tau2", "L3" or "single".
  std::string id() const;
  std::size_t num_categories() const { return encoder.num_categories(); }

  nlohmann::json header() const;
  void save(const std::filesystem::path& path, const nlohmann::json& extra = nlohmann::json::object()) const;
  static Model load(const std::filesystem::path& path);
};

/// Distribution the single-patch baseline is scored on: the encoder output
/// itself for softmax heads, otherwise its softmax.
inline bool single_patch_needs_softmax(const models::EncoderConfig& config) {
  return config.activation != models::OutputActivation::softmax;
}

}  // namespace cbgt::train
