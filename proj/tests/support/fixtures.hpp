#pragma once

// Writers for small IDX and CIFAR-10 binary files used as loader fixtures.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace cbgt::testing {

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

/// Writes an MNIST-style split ("train" or "t10k") of `labels.size()` images
/// with the given row-major pixels.
inline void write_idx_split(const std::filesystem::path& root, const std::string& prefix, std::size_t rows,
                            std::size_t cols, const std::vector<std::uint8_t>& pixels,
                            const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> images;
  put_be32(images, 0x00000803);
  put_be32(images, static_cast<std::uint32_t>(labels.size()));
  put_be32(images, static_cast<std::uint32_t>(rows));
  put_be32(images, static_cast<std::uint32_t>(cols));
  images.insert(images.end(), pixels.begin(), pixels.end());
  write_bytes(root / (prefix + "-images-idx3-ubyte"), images);

  std::vector<std::uint8_t> label_file;
  put_be32(label_file, 0x00000801);
  put_be32(label_file, static_cast<std::uint32_t>(labels.size()));
  label_file.insert(label_file.end(), labels.begin(), labels.end());
  write_bytes(root / (prefix + "-labels-idx1-ubyte"), label_file);
}

/// A 28x28 MNIST-like split where image i has label i % 10 and every pixel
/// equal to 20 * label + 5.
inline void write_labelled_mnist(const std::filesystem::path& root, const std::string& prefix, std::size_t count) {
  std::vector<std::uint8_t> pixels, labels;
  for (std::size_t i = 0; i < count; ++i) {
    const auto label = static_cast<std::uint8_t>(i % 10);
    labels.push_back(label);
    pixels.insert(pixels.end(), 28 * 28, static_cast<std::uint8_t>(20 * label + 5));
  }
  write_idx_split(root, prefix, 28, 28, pixels, labels);
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("cbgt_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Directory holding the real MNIST files, or empty if unavailable.
inline std::filesystem::path mnist_root() {
  const char* env = std::getenv("CBGT_MNIST_ROOT");
#ifdef CBGT_DEFAULT_MNIST_ROOT
  const std::filesystem::path root = env ? env : CBGT_DEFAULT_MNIST_ROOT;
#else
  const std::filesystem::path root = env ? env : "";
#endif
  if (root.empty() || !std::filesystem::exists(root / "train-images-idx3-ubyte")) return {};
  return root;
}

}  // namespace cbgt::testing
