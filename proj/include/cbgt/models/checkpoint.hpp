#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cbgt/models/encoder.hpp"
#include "cbgt/models/lstm.hpp"
#include "cbgt/numerics/param_store.hpp"

// Checkpoint layout (all integers little-endian):
//   "CBGTCKPT"                      8-byte magic
//   u32 version                     currently 1
//   u32 header_len, header bytes    UTF-8 JSON object
//   u32 tensor_count
//   per tensor:
//     u16 name_len, name bytes
//     u8 dtype                      1 = float32, 2 = float64
//     u8 trainable                  0 or 1
//     u32 ndim, u32 dims[ndim]
//     payload                       product(dims) values, row-major
namespace cbgt::models {

inline constexpr std::uint32_t kCheckpointVersion = 1;

nlohmann::json to_json(const EncoderConfig& config);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LstmConfig& config);
LstmConfig lstm_config_from_json(const nlohmann::json& j);

/// A parameter store written under "<prefix>.<name>".
template <typename T>
using CheckpointGroup = std::pair<std::string, const numerics::ParamStore<T>*>;
template <typename T>
using MutableCheckpointGroup = std::pair<std::string, numerics::ParamStore<T>*>;

/// Writes atomically (temporary file + rename).
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& header,
                     const std::vector<CheckpointGroup<T>>& groups);

/// Throws FormatError on a malformed file, std::runtime_error if it cannot be opened.
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

/// Fills every parameter of every group from the file. Names, shapes and
/// trainability must match exactly (std::invalid_argument otherwise); values
/// stored at the other precision are converted.
template <typename T>
void load_checkpoint_tensors(const std::filesystem::path& path,
                             const std::vector<MutableCheckpointGroup<T>>& groups);

}  // namespace cbgt::models
