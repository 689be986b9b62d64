#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbgt/errors.hpp"
#include "cbgt/numerics/math.hpp"

namespace cbgt {

/// Running evidence sum a_t and the number of steps t consumed so far.
template <typename T>
class AccumulatorState {
 public:
  explicit AccumulatorState(std::size_t num_categories) : a_(num_categories, T{0}) {
    if (num_categories == 0) throw std::invalid_argument("accumulator needs at least one category");
  }

  const std::vector<T>& values() const noexcept { return a_; }
  std::size_t steps() const noexcept { return t_; }
  std::size_t size() const noexcept { return a_.size(); }

  void add(std::span<const T> evidence) {
    if (evidence.size() != a_.size()) {
      throw std::invalid_argument("evidence length " + std::to_string(evidence.size()) +
                                  " does not match accumulator length " + std::to_string(a_.size()));
    }
    for (std::size_t i = 0; i < a_.size(); ++i) a_[i] += evidence[i];
    ++t_;
  }

 private:
  std::vector<T> a_;
  std::size_t t_ = 0;
};

template <typename T>
AccumulatorState<T> accumulate(AccumulatorState<T> state, std::span<const T> evidence) {
  state.add(evidence);
  return state;
}

/// softmax(a_t); throws InvalidState before the first observation.
template <typename T>
std::vector<T> readout(const AccumulatorState<T>& state) {
  if (state.steps() == 0) throw InvalidState("readout before any evidence was accumulated");
  return numerics::softmax(std::span<const T>(state.values()));
}

class Threshold {
 public:
  explicit Threshold(double tau) : tau_(tau) {
    if (!(tau >= 0.0) || !std::isfinite(tau)) throw std::invalid_argument("threshold must be finite and >= 0");
  }
  double tau() const noexcept { return tau_; }

 private:
  double tau_;
};

/// True iff some accumulator element has reached the threshold (inclusive).
template <typename T>
bool crosses(std::span<const T> a, const Threshold& threshold) {
  for (const T v : a) {
    if (static_cast<double>(v) >= threshold.tau()) return true;
  }
  return false;
}

template <typename T>
bool check_threshold(const AccumulatorState<T>& state, const Threshold& threshold) {
  return crosses(std::span<const T>(state.values()), threshold);
}

}  // namespace cbgt
