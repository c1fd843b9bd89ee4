#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "metacc/channels.hpp"
#include "metacc/rng.hpp"
#include "metacc/taskdist.hpp"

namespace metacc {

/// n points of dimension d, row-major.
struct SampleMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  SampleMatrix() = default;
  SampleMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  std::span<double> row(std::size_t i) { return std::span(data).subspan(i * cols, cols); }
  std::span<const double> row(std::size_t i) const { return std::span(data).subspan(i * cols, cols); }
};

enum class Estimator { kKsg, kKnnKl, kMcOracle };
std::string_view estimator_name(Estimator e);

/// Magnitude of the uniform jitter that breaks duplicate distances.
inline constexpr double kJitter = 1e-10;
inline constexpr std::uint64_t kJitterSeed = 0x6a09e667f3bcc908ULL;

struct MetricEstimate {
  double value = 0.0;      // nats
  double std_error = 0.0;  // across codeword replicates
  Estimator estimator = Estimator::kKsg;
  std::size_t n = 0;  // samples per codeword
  std::size_t m = 0;  // codeword replicates
  std::size_t k = 0;  // neighbors (0 for oracles)
  double jitter = kJitter;
  bool short_circuit = false;  // true when a point prior returned 0 without estimation
  std::vector<double> per_codeword;
};

/// KSG estimator #1 of I(X;Y) with max-norm neighborhoods:
///   psi(k) + psi(n) - mean[psi(n_x + 1) + psi(n_y + 1)].
double ksg_mi(const SampleMatrix& x, const SampleMatrix& y, std::size_t k = 3,
              std::uint64_t jitter_seed = kJitterSeed);

/// k-NN divergence estimate of KL(p || q) with Euclidean distances:
///   (d/n) sum_i ln(nu_k(i) / rho_k(i)) + ln(m / (n - 1)).
double knn_kl(const SampleMatrix& p, const SampleMatrix& q, std::size_t k = 3,
              std::uint64_t jitter_seed = kJitterSeed);

struct MetricBudget {
  std::size_t codewords = 20;
  std::size_t samples = 2000;
  std::size_t k = 3;
  std::size_t message_bits = kDefaultMessageBits;
};

/// Numeric task embedding. A single-family prior uses ChannelSpec::omega();
/// a multi-family mixture uses (snr, snr_b, alpha, beta, family index * scale)
/// with unused entries 0.
struct OmegaEncoder {
  bool mixed = false;
  double family_scale = 1.0;

  explicit OmegaEncoder(const TaskDistributionSpec& spec);
  std::vector<double> encode(const ChannelSpec& task) const;
};

/// Paired (omega, y) draws for one codeword.
struct PairedSamples {
  SampleMatrix omega;
  SampleMatrix y;
};
PairedSamples draw_paired(const TaskDistributionSpec& spec, const Codeword& c, std::size_t n, Rng& rng);

/// Received signals with a fresh task per draw (the marginal over omega).
SampleMatrix draw_marginal(const TaskDistributionSpec& spec, const Codeword& c, std::size_t n, Rng& rng);

/// Uniformly random message of `k` bits, encoded.
Codeword random_codeword(std::size_t k, Rng& rng);

/// E_c[I(omega; y | c)] by KSG over `budget.codewords` random codewords. Point
/// priors return exactly 0 unless `short_circuit` is false.
MetricEstimate diversity_score(const TaskDistributionSpec& spec, const MetricBudget& budget, const Rng& rng,
                               bool short_circuit = true);

enum class ShiftMode { kSymmetric, kAsymmetric };

struct ShiftTerms {
  double forward = 0.0;   // KL(a || b)
  double backward = 0.0;  // KL(b || a)
  double value(ShiftMode mode) const { return mode == ShiftMode::kSymmetric ? forward + backward : forward; }
};

ShiftTerms shift_terms(const SampleMatrix& ya, const SampleMatrix& yb, std::size_t k = 3);

/// Codeword-conditioned KL between the received-signal laws of two priors,
/// averaged over shared random codewords.
MetricEstimate shift_distance(const TaskDistributionSpec& a, const TaskDistributionSpec& b,
                              const MetricBudget& budget, ShiftMode mode, const Rng& rng);

struct OracleBudget {
  std::size_t codewords = 20;
  std::size_t samples = 2000;
  /// Task draws used to marginalize the density over omega (1 for point priors).
  std::size_t task_draws = 256;
  std::size_t message_bits = kDefaultMessageBits;
};

/// Monte-Carlo KL from channel log-densities; symmetric mode adds KL(b || a).
MetricEstimate mc_kl_oracle(const TaskDistributionSpec& a, const TaskDistributionSpec& b,
                            const OracleBudget& budget, ShiftMode mode, const Rng& rng);

/// Monte-Carlo E_c[I(omega; y | c)] = E[log p(y|c,omega) - log p(y|c)]. Point priors give 0.
MetricEstimate mc_mi_oracle(const TaskDistributionSpec& spec, const OracleBudget& budget, const Rng& rng);

/// {scenario, estimator, value, stderr, n, M, k, seed}
nlohmann::json metric_row(std::string_view scenario, const MetricEstimate& e, std::uint64_t seed);

}  // namespace metacc
