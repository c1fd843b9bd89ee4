#pragma once

#include <string>
#include <vector>

#include "metacc/bench.hpp"

namespace fixture {

// Three learners (erm baseline, a, b) on two scenarios. "s1" has two seeds and
// one test point; "s2" has a single seed, so every s2 win cell is N/A.
//   s1 seed 0: a 0.1, b 0.5, erm 0.5  -> ranks a 1, b 2.5, erm 2.5
//   s1 seed 1: a 0.1, b 0.35, erm 0.5 -> ranks a 1, b 2, erm 3
//   s2 seed 0: a 0.2, b 0.3, erm 0.2  -> ranks a 1.5, b 3, erm 1.5
inline std::vector<metacc::ResultRow> rows() {
  auto row = [](std::string sc, std::string learner, std::uint64_t seed, std::vector<double> eps) {
    metacc::ResultRow r;
    r.scenario = std::move(sc);
    r.learner = std::move(learner);
    r.seed = seed;
    r.train_digest = "0000000000000000";
    r.test_point = R"({"family":"awgn","snr_db":0.0})";
    double total = 0.0;
    for (double e : eps) total += e;
    r.ber = total / static_cast<double>(eps.size());
    r.episode_bers = std::move(eps);
    return r;
  };
  return {
      row("s1", "erm", 0, {0.5, 0.5, 0.4, 0.6}), row("s1", "erm", 1, {0.5, 0.4, 0.6, 0.5}),
      row("s1", "a", 0, {0.1, 0.1, 0.1, 0.1}),   row("s1", "a", 1, {0.1, 0.1, 0.1, 0.1}),
      row("s1", "b", 0, {0.5, 0.5, 0.4, 0.6}),   row("s1", "b", 1, {0.3, 0.4, 0.3, 0.4}),
      row("s2", "erm", 0, {0.2, 0.2}),           row("s2", "a", 0, {0.2, 0.2}),
      row("s2", "b", 0, {0.3, 0.3}),
  };
}

// Hand-computed expectations.
inline constexpr double kRankA = 7.0 / 6.0, kRankAStderr = 1.0 / 6.0;
inline constexpr double kRankB = 2.5, kRankBStderr = 0.28867513459481287;   // sd 0.5 / sqrt 3
inline constexpr double kRankErm = 7.0 / 3.0, kRankErmStderr = 0.44095855184409843;  // sqrt(7/12) / sqrt 3
// Welch p-value of b against erm on s1 (pooled episodes), scipy reference.
inline constexpr double kPValueB = 0.12219108273273491;

}  // namespace fixture
