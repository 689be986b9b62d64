#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "cbgt/env/dataset.hpp"
#include "cbgt/env/environment.hpp"
#include "cbgt/errors.hpp"
#include "support/fixtures.hpp"

namespace fs = std::filesystem;
namespace ev = cbgt::env;
using cbgt::testing::fresh_dir;
using cbgt::testing::write_bytes;
using cbgt::testing::write_idx_split;
using cbgt::testing::write_labelled_mnist;

namespace {

std::shared_ptr<const ev::ImageDataset> labelled_dataset(std::size_t count) {
  const auto dir = fresh_dir("labelled");
  write_labelled_mnist(dir, "train", count);
  return std::make_shared<const ev::ImageDataset>(ev::load_mnist(dir, ev::Split::train));
}

std::shared_ptr<const ev::ImageDataset> single_image(std::size_t side, std::vector<std::uint8_t> pixels) {
  return std::make_shared<const ev::ImageDataset>("fixture", ev::Split::train, side, side, 1, std::move(pixels),
                                                  std::vector<std::uint8_t>{3});
}

std::vector<std::uint8_t> cifar_records(std::size_t count, std::uint8_t salt) {
  std::vector<std::uint8_t> out;
  for (std::size_t r = 0; r < count; ++r) {
    out.push_back(static_cast<std::uint8_t>((r + salt) % 10));
    for (std::size_t k = 0; k < 3072; ++k) out.push_back(static_cast<std::uint8_t>((k * 7 + r * 13 + salt) % 256));
  }
  return out;
}

}  // namespace

TEST(Mnist, FixtureLoadsWithExactScaling) {
  const auto dir = fresh_dir("idx_scaling");
  std::vector<std::uint8_t> pixels(2 * 16 * 16);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<std::uint8_t>(i % 256);
  write_idx_split(dir, "t10k", 16, 16, pixels, {7, 0});
  const auto ds = ev::load_mnist(dir, ev::Split::test);
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.height(), 16u);
  EXPECT_EQ(ds.channels(), 1u);
  EXPECT_EQ(ds.label(0), 7u);
  const auto img = ds.image<double>(1);
  for (std::size_t k = 0; k < img.size(); ++k) EXPECT_EQ(img[k], pixels[256 + k] / 255.0);
}

TEST(Mnist, BadMagicNamesFileAndOffset) {
  const auto dir = fresh_dir("idx_magic");
  write_labelled_mnist(dir, "train", 3);
  auto path = dir / "train-labels-idx1-ubyte";
  write_bytes(path, {0, 0, 8, 3, 0, 0, 0, 0});
  try {
    ev::load_mnist(dir, ev::Split::train);
    FAIL() << "expected FormatError";
  } catch (const cbgt::FormatError& e) {
    EXPECT_EQ(e.file(), path.string());
    EXPECT_EQ(e.offset(), 0u);
  }
}

TEST(Mnist, TruncatedImagesRejected) {
  const auto dir = fresh_dir("idx_truncated");
  write_labelled_mnist(dir, "train", 3);
  const auto path = dir / "train-images-idx3-ubyte";
  const auto size = fs::file_size(path);
  fs::resize_file(path, size - 10);
  try {
    ev::load_mnist(dir, ev::Split::train);
    FAIL() << "expected FormatError";
  } catch (const cbgt::FormatError& e) {
    EXPECT_EQ(e.file(), path.string());
    EXPECT_EQ(e.offset(), size - 10);
  }
}

TEST(Mnist, MissingFilesListedInError) {
  const auto dir = fresh_dir("idx_missing");
  try {
    ev::load_mnist(dir, ev::Split::test);
    FAIL() << "expected runtime_error";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("t10k-images-idx3-ubyte"), std::string::npos);
    EXPECT_NE(msg.find("t10k-labels-idx1-ubyte"), std::string::npos);
  }
}

TEST(Mnist, RealFilesHaveStatedCounts) {
  const auto root = cbgt::testing::mnist_root();
  if (root.empty()) GTEST_SKIP() << "MNIST not available";
  const auto train = ev::load_mnist(root, ev::Split::train);
  const auto test = ev::load_mnist(root, ev::Split::test);
  EXPECT_EQ(train.size(), 60000u);
  EXPECT_EQ(test.size(), 10000u);
  EXPECT_EQ(train.height(), 28u);
  EXPECT_EQ(train.width(), 28u);
  for (auto l : train.labels()) EXPECT_LE(l, 9);
  for (auto l : test.labels()) EXPECT_LE(l, 9);
}

TEST(Cifar10, DecodesPlanarRecordsAndRoundTrips) {
  const auto dir = fresh_dir("cifar");
  write_bytes(dir / "test_batch.bin", cifar_records(4, 1));
  const auto ds = ev::load_cifar10(dir, ev::Split::test);
  ASSERT_EQ(ds.size(), 4u);
  EXPECT_EQ(ds.channels(), 3u);
  EXPECT_EQ(ds.label(2), 3u);
  const auto raw = cifar_records(4, 1);
  const auto img = ds.image<double>(2);
  // pixel (row 5, col 9), green channel
  const std::size_t p = 5 * 32 + 9;
  EXPECT_EQ(img[p * 3 + 1], raw[2 * 3073 + 1 + 1024 + p] / 255.0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto rec = ev::encode_cifar10_record(ds, i);
    EXPECT_TRUE(std::equal(rec.begin(), rec.end(), raw.begin() + static_cast<std::ptrdiff_t>(i * 3073)));
  }
}

TEST(Cifar10, TrainSplitReadsFiveBatches) {
  const auto dir = fresh_dir("cifar_train");
  for (int b = 1; b <= 5; ++b) {
    write_bytes(dir / ("data_batch_" + std::to_string(b) + ".bin"), cifar_records(2, static_cast<std::uint8_t>(b)));
  }
  EXPECT_EQ(ev::load_cifar10(dir, ev::Split::train).size(), 10u);
}

TEST(Cifar10, WrongRecordLengthRejected) {
  const auto dir = fresh_dir("cifar_bad");
  auto bytes = cifar_records(2, 0);
  bytes.pop_back();
  write_bytes(dir / "test_batch.bin", bytes);
  EXPECT_THROW(ev::load_cifar10(dir, ev::Split::test), cbgt::FormatError);
}

TEST(Cifar10, CategoryNamesInListedOrder) {
  const std::array<std::string, 10> listed = {"airplane", "automobile", "bird",  "cat",  "deer",
                                              "dog",      "frog",       "horse", "ship", "truck"};
  EXPECT_EQ(ev::kCifar10Categories, listed);
}

TEST(PatchStream, EqualSeedsGiveIdenticalEpisodes) {
  const auto ds = labelled_dataset(50);
  ev::PatchStreamEnv a(ds, 8, 42), b(ds, 8, 42);
  for (int e = 0; e < 20; ++e) {
    auto ea = a.start_episode();
    auto eb = b.start_episode();
    EXPECT_EQ(ea->target(), eb->target());
    for (int s = 0; s < 5; ++s) EXPECT_EQ(ea->next_observation<float>(), eb->next_observation<float>());
  }
}

TEST(PatchStream, TargetMatchesSourceImage) {
  const auto ds = labelled_dataset(30);
  ev::PatchStreamEnv env(ds, 12, 3);
  for (int e = 0; e < 200; ++e) {
    auto ep = env.start_episode();
    const auto obs = ep->next_observation<double>();
    const double expected = (20.0 * static_cast<double>(ep->target()) + 5.0) / 255.0;
    for (double v : obs.values()) EXPECT_TRUE(v == 0.0 || v == expected);
  }
}

TEST(PatchStream, ClassFrequenciesWithinFiveSigma) {
  const auto ds = labelled_dataset(100);
  ev::PatchStreamEnv env(ds, 5, 17);
  const int n = 10000;
  std::vector<int> counts(10);
  for (int e = 0; e < n; ++e) ++counts[env.start_episode()->target()];
  const double sigma = std::sqrt(n * 0.1 * 0.9);
  for (int c = 0; c < 10; ++c) EXPECT_LE(std::abs(counts[c] - n * 0.1), 5 * sigma) << "class " << c;
}

TEST(PatchStream, FullSizePatchIsTheImage) {
  std::vector<std::uint8_t> pixels(28 * 28);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<std::uint8_t>((i * 31) % 251);
  const auto ds = single_image(28, pixels);
  ev::PatchStreamEnv env(ds, 28, 1);
  auto ep = env.start_episode();
  for (int s = 0; s < 3; ++s) EXPECT_EQ(ep->next_observation<double>(), ds->image<double>(0).reshaped({28, 28, 1}));
}

TEST(PatchStream, ZeroImageGivesZeroObservations) {
  const auto ds = single_image(28, std::vector<std::uint8_t>(28 * 28, 0));
  for (std::size_t p : ev::kPatchSizes) {
    ev::PatchStreamEnv env(ds, p, p);
    auto ep = env.start_episode();
    const auto obs = ep->next_observation<double>();
    for (double v : obs.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(PatchStream, FivePixelPatchOccupiesOnlyTheCentre) {
  const auto ds = single_image(28, std::vector<std::uint8_t>(28 * 28, 255));
  ev::PatchStreamEnv env(ds, 5, 9);
  auto ep = env.start_episode();
  for (int s = 0; s < 20; ++s) {
    const auto obs = ep->next_observation<double>();
    std::size_t zeros = 0;
    for (std::size_t r = 0; r < 28; ++r) {
      for (std::size_t c = 0; c < 28; ++c) {
        const bool centre = r >= 11 && r < 16 && c >= 11 && c < 16;
        const double v = obs[r * 28 + c];
        if (centre) {
          EXPECT_EQ(v, 1.0);
        } else {
          EXPECT_EQ(v, 0.0);
          ++zeros;
        }
      }
    }
    EXPECT_EQ(zeros, 759u);
  }
}

TEST(PatchStream, PatchesComeFromEveryInsidePosition) {
  const std::size_t side = 16, p = 10;
  std::vector<std::uint8_t> pixels(side * side);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<std::uint8_t>(i);
  const auto ds = single_image(side, pixels);
  ev::PatchStreamEnv env(ds, p, 5);
  auto ep = env.start_episode();
  const std::size_t off = (side - p) / 2;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (int s = 0; s < 2000; ++s) {
    const auto obs = ep->next_observation<double>();
    const auto corner = static_cast<std::size_t>(std::lround(obs[off * side + off] * 255.0));
    const std::size_t top = corner / side, left = corner % side;
    ASSERT_LE(top, side - p);
    ASSERT_LE(left, side - p);
    for (std::size_t r = 0; r < p; ++r) {
      for (std::size_t c = 0; c < p; ++c) {
        EXPECT_EQ(obs[(off + r) * side + off + c], pixels[(top + r) * side + left + c] / 255.0);
      }
    }
    seen.insert({top, left});
  }
  EXPECT_EQ(seen.size(), (side - p + 1) * (side - p + 1));
}

TEST(PatchStream, RejectsOversizedPatch) {
  EXPECT_THROW(ev::PatchStreamEnv(labelled_dataset(10), 29, 0), std::invalid_argument);
}

TEST(Synthetic, NoiselessStreamAlwaysEmitsTarget) {
  ev::SyntheticEvidenceEnv env(6, 0.0, 4);
  for (int e = 0; e < 100; ++e) {
    auto ep = env.start_episode();
    for (int s = 0; s < 10; ++s) {
      const auto obs = ep->next_observation<double>();
      for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(obs[k], k == ep->target() ? 1.0 : 0.0);
    }
  }
}

TEST(Synthetic, EmissionMatrixRowsSumToOne) {
  for (double eta : {0.0, 0.3, 1.0}) {
    ev::SyntheticEvidenceEnv env(5, eta, 0);
    for (const auto& row : env.emission_matrix()) {
      double total = 0;
      for (double v : row) total += v;
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Synthetic, EmpiricalEmissionsMatchWithinOnePercent) {
  const std::size_t k = 10;
  const int draws_per_class = 100000;
  ev::SyntheticEvidenceEnv env(k, 0.5, 23);
  std::vector<std::vector<int>> counts(k, std::vector<int>(k));
  std::vector<int> episodes(k);
  while (*std::min_element(episodes.begin(), episodes.end()) < draws_per_class / 1000) {
    auto ep = env.start_episode();
    if (episodes[ep->target()] >= draws_per_class / 1000) continue;
    ++episodes[ep->target()];
    std::vector<double> obs(k);
    for (int s = 0; s < 1000; ++s) {
      ep->next_observation(std::span<double>(obs));
      for (std::size_t j = 0; j < k; ++j) counts[ep->target()][j] += obs[j] == 1.0;
    }
  }
  const double off = 0.5 / 9.0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < k; ++j) {
      const double freq = counts[c][j] / static_cast<double>(draws_per_class);
      EXPECT_NEAR(freq, c == j ? 0.5 : off, 0.01) << c << "->" << j;
    }
  }
}

TEST(Synthetic, RejectsInvalidParameters) {
  EXPECT_THROW(ev::SyntheticEvidenceEnv(1, 0.0, 0), std::invalid_argument);
  EXPECT_THROW(ev::SyntheticEvidenceEnv(3, 1.5, 0), std::invalid_argument);
}
