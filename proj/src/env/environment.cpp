#include "cbgt/env/environment.hpp"

#include <algorithm>
#include <stdexcept>

namespace cbgt::env {

namespace {

class PatchEpisode final : public Episode {
 public:
  PatchEpisode(std::shared_ptr<const ImageDataset> dataset, std::size_t image, std::size_t patch,
               std::uint64_t seed)
      : Episode(dataset->label(image)), owner_(std::move(dataset)), dataset_(*owner_), image_(image), patch_(patch),
        rng_(seed) {}

  models::InputShape observation_shape() const override {
    return {dataset_.height(), dataset_.width(), dataset_.channels()};
  }
  void next_observation(std::span<float> out) override { fill(out); }
  void next_observation(std::span<double> out) override { fill(out); }

 private:
  template <typename T>
  void fill(std::span<T> out) {
    const std::size_t h = dataset_.height(), w = dataset_.width(), c = dataset_.channels();
    if (out.size() != h * w * c) throw std::invalid_argument("observation buffer has the wrong size");
    std::uniform_int_distribution<std::size_t> row(0, h - patch_);
    std::uniform_int_distribution<std::size_t> col(0, w - patch_);
    const std::size_t top = row(rng_);
    const std::size_t left = col(rng_);
    const std::size_t off_r = (h - patch_) / 2, off_c = (w - patch_) / 2;
    const auto src = dataset_.image_bytes(image_);
    std::fill(out.begin(), out.end(), T{0});
    for (std::size_t r = 0; r < patch_; ++r) {
      const std::size_t s = ((top + r) * w + left) * c;
      const std::size_t d = ((off_r + r) * w + off_c) * c;
      for (std::size_t k = 0; k < patch_ * c; ++k) out[d + k] = pixel_value<T>(src[s + k]);
    }
  }

  std::shared_ptr<const ImageDataset> owner_;
  const ImageDataset& dataset_;
  std::size_t image_;
  std::size_t patch_;
  std::mt19937_64 rng_;
};

class SyntheticEpisode final : public Episode {
 public:
  SyntheticEpisode(std::size_t target, std::size_t k, double eta, std::uint64_t seed)
      : Episode(target), k_(k), eta_(eta), rng_(seed) {}

  models::InputShape observation_shape() const override { return {1, 1, k_}; }
  void next_observation(std::span<float> out) override { fill(out); }
  void next_observation(std::span<double> out) override { fill(out); }

 private:
  template <typename T>
  void fill(std::span<T> out) {
    if (out.size() != k_) throw std::invalid_argument("observation buffer has the wrong size");
    std::fill(out.begin(), out.end(), T{0});
    out[next_symbol()] = T{1};
  }

  std::size_t next_symbol() {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng_) < 1.0 - eta_) return target();
    std::uniform_int_distribution<std::size_t> other(0, k_ - 2);
    const std::size_t s = other(rng_);
    return s >= target() ? s + 1 : s;
  }

  std::size_t k_;
  double eta_;
  std::mt19937_64 rng_;
};

}  // namespace

PatchStreamEnv::PatchStreamEnv(std::shared_ptr<const ImageDataset> dataset, std::size_t patch_size,
                               std::uint64_t seed)
    : dataset_(std::move(dataset)), patch_(patch_size), rng_(seed) {
  if (!dataset_ || dataset_->size() == 0) throw std::invalid_argument("patch environment needs a non-empty dataset");
  if (patch_ == 0 || patch_ > std::min(dataset_->height(), dataset_->width())) {
    throw std::invalid_argument("patch size " + std::to_string(patch_) + " does not fit " +
                                std::to_string(dataset_->height()) + "x" + std::to_string(dataset_->width()) +
                                " images");
  }
}

std::unique_ptr<Episode> PatchStreamEnv::start_episode() {
  std::uniform_int_distribution<std::size_t> pick(0, dataset_->size() - 1);
  const std::size_t image = pick(rng_);
  return std::make_unique<PatchEpisode>(dataset_, image, patch_, rng_());
}

models::InputShape PatchStreamEnv::observation_shape() const {
  return {dataset_->height(), dataset_->width(), dataset_->channels()};
}

std::string PatchStreamEnv::id() const {
  return dataset_->name() + "_" + std::to_string(patch_) + "x" + std::to_string(patch_);
}

SyntheticEvidenceEnv::SyntheticEvidenceEnv(std::size_t num_categories, double eta, std::uint64_t seed)
    : k_(num_categories), eta_(eta), rng_(seed) {
  if (k_ < 2) throw std::invalid_argument("synthetic environment needs at least 2 categories");
  if (!(eta_ >= 0.0 && eta_ <= 1.0)) throw std::invalid_argument("noise rate eta must lie in [0,1]");
}

std::unique_ptr<Episode> SyntheticEvidenceEnv::start_episode() {
  std::uniform_int_distribution<std::size_t> pick(0, k_ - 1);
  const std::size_t target = pick(rng_);
  return std::make_unique<SyntheticEpisode>(target, k_, eta_, rng_());
}

std::vector<std::vector<double>> SyntheticEvidenceEnv::emission_matrix() const {
  std::vector<std::vector<double>> m(k_, std::vector<double>(k_, eta_ / static_cast<double>(k_ - 1)));
  for (std::size_t c = 0; c < k_; ++c) m[c][c] = 1.0 - eta_;
  return m;
}

}  // namespace cbgt::env
