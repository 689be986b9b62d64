#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cbgt/env/dataset.hpp"
#include "cbgt/models/encoder.hpp"

namespace cbgt::env {

/// One classification trial: a target and an unbounded observation stream.
class Episode {
 public:
  virtual ~Episode() = default;

  std::size_t target() const noexcept { return target_; }
  virtual models::InputShape observation_shape() const = 0;

  /// Writes the next observation (H*W*C values, channels last) into `out`.
  virtual void next_observation(std::span<float> out) = 0;
  virtual void next_observation(std::span<double> out) = 0;

  template <typename T>
  numerics::Tensor<T> next_observation() {
    const auto s = observation_shape();
    numerics::Tensor<T> t({s.height, s.width, s.channels});
    next_observation(std::span<T>(t.data(), t.size()));
    return t;
  }

 protected:
  explicit Episode(std::size_t target) : target_(target) {}

 private:
  std::size_t target_;
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::unique_ptr<Episode> start_episode() = 0;
  virtual models::InputShape observation_shape() const = 0;
  virtual std::size_t num_categories() const = 0;
  /// Short identifier used in report names, e.g. "mnist_20x20".
  virtual std::string id() const = 0;
};

inline constexpr std::size_t kPatchSizes[] = {5, 8, 10, 12, 16, 20};

/// Random p x p crops of dataset images, each copied into the centre of an
/// all-zero canvas of the full image size.
class PatchStreamEnv : public Environment {
 public:
  PatchStreamEnv(std::shared_ptr<const ImageDataset> dataset, std::size_t patch_size, std::uint64_t seed);

  std::unique_ptr<Episode> start_episode() override;
  models::InputShape observation_shape() const override;
  std::size_t num_categories() const override { return dataset_->num_categories(); }
  std::string id() const override;

  std::size_t patch_size() const noexcept { return patch_; }
  const ImageDataset& dataset() const noexcept { return *dataset_; }

 private:
  std::shared_ptr<const ImageDataset> dataset_;
  std::size_t patch_;
  std::mt19937_64 rng_;
};

/// Each step emits a one-hot symbol of shape (1,1,K): the target class with
/// probability 1 - eta, otherwise one of the other K - 1 symbols uniformly.
class SyntheticEvidenceEnv : public Environment {
 public:
  SyntheticEvidenceEnv(std::size_t num_categories, double eta, std::uint64_t seed);

  std::unique_ptr<Episode> start_episode() override;
  models::InputShape observation_shape() const override { return {1, 1, k_}; }
  std::size_t num_categories() const override { return k_; }
  std::string id() const override { return "synthetic_1x1"; }

  double eta() const noexcept { return eta_; }
  /// Row c holds P(symbol | class c).
  std::vector<std::vector<double>> emission_matrix() const;

 private:
  std::size_t k_;
  double eta_;
  std::mt19937_64 rng_;
};

}  // namespace cbgt::env
