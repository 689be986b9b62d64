#pragma once

#include <memory>
#include <stdexcept>
#include <vector>

#include "cbgt/env/environment.hpp"

namespace cbgt::testing {

/// Replays a fixed list of flattened observations, cycling once exhausted.
class ScriptedEpisode : public env::Episode {
 public:
  ScriptedEpisode(std::size_t target, models::InputShape shape, std::vector<std::vector<double>> script)
      : Episode(target), shape_(shape), script_(std::move(script)) {}

  models::InputShape observation_shape() const override { return shape_; }
  void next_observation(std::span<float> out) override { emit(out); }
  void next_observation(std::span<double> out) override { emit(out); }

 private:
  template <typename T>
  void emit(std::span<T> out) {
    const auto& obs = script_[t_++ % script_.size()];
    if (out.size() != obs.size()) throw std::invalid_argument("scripted observation has the wrong size");
    for (std::size_t i = 0; i < obs.size(); ++i) out[i] = static_cast<T>(obs[i]);
  }

  models::InputShape shape_;
  std::vector<std::vector<double>> script_;
  std::size_t t_ = 0;
};

struct Script {
  std::size_t target;
  std::vector<std::vector<double>> observations;
};

inline std::vector<std::unique_ptr<env::Episode>> scripted_batch(const std::vector<Script>& scripts,
                                                                 models::InputShape shape) {
  std::vector<std::unique_ptr<env::Episode>> batch;
  for (const auto& s : scripts) batch.push_back(std::make_unique<ScriptedEpisode>(s.target, shape, s.observations));
  return batch;
}

}  // namespace cbgt::testing
