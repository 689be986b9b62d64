#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "cbgt/cbgt/accumulator.hpp"
#include "cbgt/env/environment.hpp"
#include "cbgt/models/encoder.hpp"

namespace cbgt {

inline constexpr std::size_t kDefaultMaxSteps = 100;

struct StreamResult {
  std::size_t episode_id = 0;
  std::size_t target = 0;
  std::size_t prediction = 0;
  std::size_t decision_time = 0;
  bool decided_by_threshold = false;
  std::vector<double> output;  // readout at the decision time

  bool correct() const noexcept { return prediction == target; }
  friend bool operator==(const StreamResult&, const StreamResult&) = default;
};

/// "episode_id,target,prediction,t_d,decided_by_threshold,y_0,...,y_{K-1}"
std::string stream_csv_header(std::size_t num_categories);
std::string to_csv_row(const StreamResult& result);

/// Shortest decimal text that reads back to the same double.
std::string format_real(double value);

template <typename T>
using EvidenceSource = std::function<std::vector<T>()>;

/// Pulls evidence until the threshold is first reached or max_steps evidence
/// vectors have been consumed. If `trace` is given, every consumed evidence
/// vector is appended to it.
template <typename T>
StreamResult run_stream(const EvidenceSource<T>& next_evidence, std::size_t target, const Threshold& threshold,
                        std::size_t max_steps = kDefaultMaxSteps, std::vector<std::vector<T>>* trace = nullptr) {
  if (max_steps == 0) throw std::invalid_argument("max_steps must be at least 1");
  std::vector<T> first = next_evidence();
  AccumulatorState<T> state(first.size());
  std::vector<T> e = std::move(first);
  bool decided = false;
  while (true) {
    state.add(e);
    if (trace) trace->push_back(e);
    decided = check_threshold(state, threshold);
    if (decided || state.steps() == max_steps) break;
    e = next_evidence();
  }
  const auto y = readout(state);
  StreamResult r;
  r.target = target;
  r.decision_time = state.steps();
  r.decided_by_threshold = decided;
  r.output.assign(y.begin(), y.end());
  r.prediction = numerics::argmax(y);
  return r;
}

/// encode -> accumulate -> check loop over one episode's observation stream.
template <typename T>
StreamResult run_episode(const models::Encoder<T>& encoder, const Threshold& threshold, env::Episode& episode,
                         std::size_t max_steps = kDefaultMaxSteps);

}  // namespace cbgt
