#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cbgt/numerics/tensor.hpp"

namespace cbgt::env {

enum class Split { train, test };

std::string to_string(Split split);

/// Greyscale or colour images kept as raw bytes in (H,W,C) order; pixel values
/// are exposed as byte / 255.
class ImageDataset {
 public:
  ImageDataset(std::string name, Split split, std::size_t height, std::size_t width, std::size_t channels,
               std::vector<std::uint8_t> pixels, std::vector<std::uint8_t> labels, std::size_t num_categories = 10);

  const std::string& name() const noexcept { return name_; }
  Split split() const noexcept { return split_; }
  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t image_size() const noexcept { return height_ * width_ * channels_; }
  std::size_t num_categories() const noexcept { return num_categories_; }

  std::size_t label(std::size_t i) const { return labels_.at(i); }
  std::span<const std::uint8_t> image_bytes(std::size_t i) const;
  const std::vector<std::uint8_t>& labels() const noexcept { return labels_; }

  /// Image i as an (H,W,C) tensor with values in [0,1].
  template <typename T>
  numerics::Tensor<T> image(std::size_t i) const;

  /// Images [begin, begin + count) as a new dataset.
  ImageDataset slice(std::size_t begin, std::size_t count) const;

 private:
  std::string name_;
  Split split_;
  std::size_t height_, width_, channels_;
  std::vector<std::uint8_t> pixels_;
  std::vector<std::uint8_t> labels_;
  std::size_t num_categories_;
};

template <typename T>
inline T pixel_value(std::uint8_t byte) {
  return static_cast<T>(byte) / static_cast<T>(255);
}

/// Reads <root>/{train,t10k}-{images-idx3,labels-idx1}-ubyte.
ImageDataset load_mnist(const std::filesystem::path& root, Split split);

/// Reads <root>/data_batch_{1..5}.bin (train) or <root>/test_batch.bin (test).
ImageDataset load_cifar10(const std::filesystem::path& root, Split split);

inline constexpr std::size_t kCifarRecordBytes = 3073;
extern const std::array<std::string, 10> kCifar10Categories;

/// Binary-batch record (label byte + channel-planar pixels) for image i.
std::vector<std::uint8_t> encode_cifar10_record(const ImageDataset& dataset, std::size_t i);

/// Files load_mnist / load_cifar10 expect under the root for a split.
std::vector<std::filesystem::path> mnist_files(const std::filesystem::path& root, Split split);
std::vector<std::filesystem::path> cifar10_files(const std::filesystem::path& root, Split split);

}  // namespace cbgt::env
