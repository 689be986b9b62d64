#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbgt::numerics {

/// Probabilities below this are clamped before taking the log.
inline constexpr double kLogFloor = 1e-12;

/// Max-shifted softmax. Throws std::invalid_argument on empty or
/// non-finite input.
template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax of an empty vector");
  for (T v : logits)
    if (!std::isfinite(v)) throw std::invalid_argument("softmax input is not finite");
  const T peak = *std::max_element(logits.begin(), logits.end());
  std::vector<T> out(logits.size());
  T total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

template <typename T>
std::vector<T> softmax(const std::vector<T>& logits) {
  return softmax(std::span<const T>(logits));
}

/// -log(probs[target]) with the probability clamped at kLogFloor.
template <typename T>
double cross_entropy(std::span<const T> probs, std::size_t target) {
  if (target >= probs.size()) {
    throw std::invalid_argument("target " + std::to_string(target) + " out of range for " +
                                std::to_string(probs.size()) + " categories");
  }
  const double p = std::max(static_cast<double>(probs[target]), kLogFloor);
  return -std::log(p);
}

template <typename T>
double cross_entropy(const std::vector<T>& probs, std::size_t target) {
  return cross_entropy(std::span<const T>(probs), target);
}

/// Index of the largest element; ties go to the lowest index.
template <typename T>
std::size_t argmax(std::span<const T> values) {
  if (values.empty()) throw std::invalid_argument("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

template <typename T>
std::size_t argmax(const std::vector<T>& values) {
  return argmax(std::span<const T>(values));
}

}  // namespace cbgt::numerics
