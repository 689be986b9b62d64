#include "cbgt/env/dataset.hpp"

#include <fstream>
#include <iterator>
#include <stdexcept>

#include "cbgt/errors.hpp"

namespace cbgt::env {

namespace fs = std::filesystem;

const std::array<std::string, 10> kCifar10Categories = {"airplane", "automobile", "bird",  "cat",  "deer",
                                                         "dog",      "frog",       "horse", "ship", "truck"};

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

ImageDataset::ImageDataset(std::string name, Split split, std::size_t height, std::size_t width,
                           std::size_t channels, std::vector<std::uint8_t> pixels, std::vector<std::uint8_t> labels,
                           std::size_t num_categories)
    : name_(std::move(name)),
      split_(split),
      height_(height),
      width_(width),
      channels_(channels),
      pixels_(std::move(pixels)),
      labels_(std::move(labels)),
      num_categories_(num_categories) {
  if (height_ == 0 || width_ == 0 || channels_ == 0) throw std::invalid_argument("image dimensions must be positive");
  if (pixels_.size() != labels_.size() * image_size()) {
    throw std::invalid_argument("pixel buffer does not match image count");
  }
  for (auto l : labels_) {
    if (l >= num_categories_) throw std::invalid_argument("label " + std::to_string(l) + " out of range");
  }
}

std::span<const std::uint8_t> ImageDataset::image_bytes(std::size_t i) const {
  if (i >= size()) throw std::out_of_range("image index " + std::to_string(i) + " out of range");
  return std::span<const std::uint8_t>(pixels_).subspan(i * image_size(), image_size());
}

template <typename T>
numerics::Tensor<T> ImageDataset::image(std::size_t i) const {
  const auto bytes = image_bytes(i);
  numerics::Tensor<T> t({height_, width_, channels_});
  for (std::size_t k = 0; k < bytes.size(); ++k) t[k] = pixel_value<T>(bytes[k]);
  return t;
}

template numerics::Tensor<float> ImageDataset::image<float>(std::size_t) const;
template numerics::Tensor<double> ImageDataset::image<double>(std::size_t) const;

ImageDataset ImageDataset::slice(std::size_t begin, std::size_t count) const {
  if (begin > size() || count > size() - begin || count == 0) {
    throw std::invalid_argument("slice [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                                ") outside dataset of " + std::to_string(size()));
  }
  const auto first = pixels_.begin() + static_cast<std::ptrdiff_t>(begin * image_size());
  std::vector<std::uint8_t> pixels(first, first + static_cast<std::ptrdiff_t>(count * image_size()));
  std::vector<std::uint8_t> labels(labels_.begin() + static_cast<std::ptrdiff_t>(begin),
                                   labels_.begin() + static_cast<std::ptrdiff_t>(begin + count));
  return ImageDataset(name_, split_, height_, width_, channels_, std::move(pixels), std::move(labels),
                      num_categories_);
}

namespace {

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void require_files(const std::vector<fs::path>& files, const std::string& dataset) {
  std::string missing;
  for (const auto& f : files) {
    if (!fs::is_regular_file(f)) missing += "\n  " + f.string();
  }
  if (!missing.empty()) {
    throw std::runtime_error(dataset + " files not found; expected:" + missing +
                             "\n(set data_root / --data-root to the directory holding them)");
  }
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t offset, const fs::path& file) {
  if (buf.size() < offset + 4) throw FormatError(file.string(), offset, "truncated IDX header");
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

}  // namespace

std::vector<fs::path> mnist_files(const fs::path& root, Split split) {
  const std::string prefix = split == Split::train ? "train" : "t10k";
  return {root / (prefix + "-images-idx3-ubyte"), root / (prefix + "-labels-idx1-ubyte")};
}

std::vector<fs::path> cifar10_files(const fs::path& root, Split split) {
  if (split == Split::test) return {root / "test_batch.bin"};
  std::vector<fs::path> files;
  for (int b = 1; b <= 5; ++b) files.push_back(root / ("data_batch_" + std::to_string(b) + ".bin"));
  return files;
}

ImageDataset load_mnist(const fs::path& root, Split split) {
  const auto files = mnist_files(root, split);
  require_files(files, "MNIST");
  const auto& image_path = files[0];
  const auto& label_path = files[1];

  const auto images = read_file(image_path);
  if (read_be32(images, 0, image_path) != 0x00000803) {
    throw FormatError(image_path.string(), 0, "bad IDX magic for image file (expected 0x00000803)");
  }
  const std::size_t count = read_be32(images, 4, image_path);
  const std::size_t rows = read_be32(images, 8, image_path);
  const std::size_t cols = read_be32(images, 12, image_path);
  if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096) {
    throw FormatError(image_path.string(), 8, "implausible image dimensions");
  }
  const std::size_t expected = 16 + count * rows * cols;
  if (images.size() < expected) {
    throw FormatError(image_path.string(), images.size(),
                      "truncated: expected " + std::to_string(expected) + " bytes for " + std::to_string(count) +
                          " images");
  }

  const auto labels = read_file(label_path);
  if (read_be32(labels, 0, label_path) != 0x00000801) {
    throw FormatError(label_path.string(), 0, "bad IDX magic for label file (expected 0x00000801)");
  }
  const std::size_t label_count = read_be32(labels, 4, label_path);
  if (label_count != count) {
    throw FormatError(label_path.string(), 4,
                      "label count " + std::to_string(label_count) + " != image count " + std::to_string(count));
  }
  if (labels.size() < 8 + count) {
    throw FormatError(label_path.string(), labels.size(),
                      "truncated: expected " + std::to_string(8 + count) + " bytes");
  }
  std::vector<std::uint8_t> label_bytes(labels.begin() + 8, labels.begin() + 8 + static_cast<std::ptrdiff_t>(count));
  for (std::size_t i = 0; i < count; ++i) {
    if (label_bytes[i] > 9) throw FormatError(label_path.string(), 8 + i, "label outside 0..9");
  }
  std::vector<std::uint8_t> pixels(images.begin() + 16, images.begin() + static_cast<std::ptrdiff_t>(expected));
  return ImageDataset("mnist", split, rows, cols, 1, std::move(pixels), std::move(label_bytes));
}

ImageDataset load_cifar10(const fs::path& root, Split split) {
  const auto files = cifar10_files(root, split);
  require_files(files, "CIFAR-10");
  constexpr std::size_t side = 32, plane = side * side;
  std::vector<std::uint8_t> pixels, labels;
  for (const auto& file : files) {
    const auto buf = read_file(file);
    if (buf.empty() || buf.size() % kCifarRecordBytes != 0) {
      throw FormatError(file.string(), buf.size() - buf.size() % kCifarRecordBytes,
                        "file size " + std::to_string(buf.size()) + " is not a multiple of the " +
                            std::to_string(kCifarRecordBytes) + "-byte record length");
    }
    for (std::size_t r = 0; r < buf.size() / kCifarRecordBytes; ++r) {
      const std::size_t base = r * kCifarRecordBytes;
      if (buf[base] > 9) throw FormatError(file.string(), base, "label outside 0..9");
      labels.push_back(buf[base]);
      for (std::size_t p = 0; p < plane; ++p) {
        for (std::size_t c = 0; c < 3; ++c) pixels.push_back(buf[base + 1 + c * plane + p]);
      }
    }
  }
  return ImageDataset("cifar10", split, side, side, 3, std::move(pixels), std::move(labels));
}

std::vector<std::uint8_t> encode_cifar10_record(const ImageDataset& dataset, std::size_t i) {
  if (dataset.height() != 32 || dataset.width() != 32 || dataset.channels() != 3) {
    throw std::invalid_argument("not a 32x32x3 dataset");
  }
  const auto bytes = dataset.image_bytes(i);
  constexpr std::size_t plane = 32 * 32;
  std::vector<std::uint8_t> record(kCifarRecordBytes);
  record[0] = static_cast<std::uint8_t>(dataset.label(i));
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) record[1 + c * plane + p] = bytes[p * 3 + c];
  }
  return record;
}

}  // namespace cbgt::env
