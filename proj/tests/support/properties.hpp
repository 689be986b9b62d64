#pragma once

// Randomised property checks over the accumulate-to-threshold mechanism.
// Each returns the number of failing cases out of `cases`.

#include <cmath>
#include <random>
#include <vector>

#include "cbgt/cbgt/stream.hpp"
#include "cbgt/numerics/math.hpp"

namespace cbgt::testing {

struct RandomStream {
  std::vector<std::vector<double>> evidence;
  std::size_t k = 0;
};

/// Softmax evidence vectors from N(0, spread^2) logits.
inline RandomStream random_softmax_stream(std::mt19937_64& rng, std::size_t length) {
  std::uniform_int_distribution<std::size_t> ks(2, 12);
  std::uniform_real_distribution<double> spreads(0.1, 8.0);
  RandomStream s;
  s.k = ks(rng);
  std::normal_distribution<double> logit(0.0, spreads(rng));
  for (std::size_t t = 0; t < length; ++t) {
    std::vector<double> x(s.k);
    for (auto& v : x) v = logit(rng);
    s.evidence.push_back(numerics::softmax(x));
  }
  return s;
}

inline EvidenceSource<double> replay(const RandomStream& s) {
  auto cursor = std::make_shared<std::size_t>(0);
  return [&s, cursor]() { return s.evidence.at((*cursor)++); };
}

/// Decided results have max(a_t) < tau for every t < t_d and >= tau at t_d.
inline int first_crossing_failures(int cases, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> taus(0.0, 5.0);
  int failures = 0;
  for (int c = 0; c < cases; ++c) {
    const auto stream = random_softmax_stream(rng, 100);
    const Threshold threshold(taus(rng));
    const auto r = run_stream(replay(stream), 0, threshold, 100);
    std::vector<double> a(stream.k, 0.0);
    bool ok = r.decided_by_threshold;
    for (std::size_t t = 1; ok && t <= r.decision_time; ++t) {
      for (std::size_t i = 0; i < stream.k; ++i) a[i] += stream.evidence[t - 1][i];
      const double peak = *std::max_element(a.begin(), a.end());
      ok = t < r.decision_time ? peak < threshold.tau() : peak >= threshold.tau();
    }
    failures += ok ? 0 : 1;
  }
  return failures;
}

/// Accumulator contents against an independently summed (long double) oracle.
inline int accumulator_sum_failures(int cases, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> lengths(1, 200);
  std::normal_distribution<double> raw(0.0, 3.0);
  int failures = 0;
  for (int c = 0; c < cases; ++c) {
    const std::size_t k = 2 + static_cast<std::size_t>(c % 11);
    const std::size_t n = lengths(rng);
    AccumulatorState<double> state(k);
    std::vector<long double> oracle(k, 0.0L);
    for (std::size_t t = 0; t < n; ++t) {
      std::vector<double> e(k);
      for (auto& v : e) v = raw(rng);
      state = accumulate(state, std::span<const double>(e));
      for (std::size_t i = 0; i < k; ++i) oracle[i] += e[i];
    }
    bool ok = state.steps() == n;
    for (std::size_t i = 0; i < k; ++i) ok = ok && std::abs(state.values()[i] - static_cast<double>(oracle[i])) <= 1e-9;
    failures += ok ? 0 : 1;
  }
  return failures;
}

/// Softmax output on the simplex and unchanged by adding a constant.
inline int softmax_failures(int cases, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> lengths(1, 30);
  std::normal_distribution<double> logit(0.0, 10.0);
  std::uniform_real_distribution<double> shift(-100.0, 100.0);
  int failures = 0;
  for (int c = 0; c < cases; ++c) {
    std::vector<double> x(lengths(rng));
    for (auto& v : x) v = logit(rng);
    const auto p = numerics::softmax(x);
    double total = 0;
    bool ok = true;
    for (double v : p) {
      ok = ok && v > 0.0 && v <= 1.0;
      total += v;
    }
    ok = ok && std::abs(total - 1.0) <= 1e-9;
    const double s = shift(rng);
    for (auto& v : x) v += s;
    const auto q = numerics::softmax(x);
    for (std::size_t i = 0; i < p.size(); ++i) ok = ok && std::abs(p[i] - q[i]) <= 1e-12;
    failures += ok ? 0 : 1;
  }
  return failures;
}

/// Softmax evidence adds at most 1 per step, so t_d >= ceil(tau).
inline int min_decision_time_failures(int cases, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> taus(0.0, 5.0);
  int failures = 0;
  for (int c = 0; c < cases; ++c) {
    const auto stream = random_softmax_stream(rng, 100);
    const double tau = c % 5 == 0 ? static_cast<double>(c % 6) : taus(rng);
    const auto r = run_stream(replay(stream), 0, Threshold(tau), 100);
    const auto floor_td = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(tau)));
    failures += r.decision_time >= floor_td ? 0 : 1;
  }
  return failures;
}

/// On a fixed stream, tau1 <= tau2 implies t_d(tau1) <= t_d(tau2).
inline int monotone_threshold_failures(int cases, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> taus(0.0, 5.0);
  int failures = 0;
  for (int c = 0; c < cases; ++c) {
    const auto stream = random_softmax_stream(rng, 100);
    double t1 = taus(rng), t2 = taus(rng);
    if (t1 > t2) std::swap(t1, t2);
    const auto r1 = run_stream(replay(stream), 0, Threshold(t1), 100);
    const auto r2 = run_stream(replay(stream), 0, Threshold(t2), 100);
    failures += r1.decision_time <= r2.decision_time ? 0 : 1;
  }
  return failures;
}

}  // namespace cbgt::testing
