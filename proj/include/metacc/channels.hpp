#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "metacc/codec.hpp"
#include "metacc/rng.hpp"

namespace metacc {

enum class Family { kAwgn, kBursty, kMemory, kMultipath };

inline constexpr Family kAllFamilies[] = {Family::kAwgn, Family::kBursty, Family::kMemory,
                                          Family::kMultipath};

std::string_view family_name(Family f);
Family family_from_name(std::string_view name);

/// One concrete channel (a task). Parameters are held in the benchmark's
/// conventional units: SNRs in dB, alpha and beta as plain numbers.
///
///   AWGN      snr_db
///   Bursty    snr_db, snr_b_db, alpha (burst probability, [0,1])
///   Memory    snr_db, alpha (AR(1) coefficient, (-1,1))
///   Multipath snr_db, beta (echo attenuation, >= 0)
struct ChannelSpec {
  Family family = Family::kAwgn;
  double snr_db = 0.0;
  double snr_b_db = 0.0;
  double alpha = 0.0;
  double beta = 0.0;

  double sigma() const;
  double sigma_b() const;

  /// Throws std::invalid_argument if a parameter is out of its domain.
  void validate() const;

  /// Family-specific parameter vector in fixed order (used as the numeric omega).
  std::vector<double> omega() const;

  bool operator==(const ChannelSpec&) const = default;

  static ChannelSpec awgn(double snr_db);
  static ChannelSpec bursty(double snr_db, double snr_b_db, double alpha);
  static ChannelSpec memory(double snr_db, double alpha);
  static ChannelSpec multipath(double snr_db, double beta);
  /// Convenience for tests: AWGN with a given linear noise std.
  static ChannelSpec awgn_sigma(double sigma);
};

std::string to_string(const ChannelSpec& spec);

namespace channels {

/// sigma = 10^(-snr_db / 20).
double snr_to_sigma(double snr_db);
double sigma_to_snr(double sigma);

/// Simulate one transmission. Random draws consumed per call (n = c.size()):
///   AWGN      n normals
///   Bursty    per coordinate: normal z, uniform for the burst flag, normal burst
///   Memory    n normals
///   Multipath one index draw for the delay, then n normals
ReceivedSignal transmit(const Codeword& c, const ChannelSpec& spec, Rng& rng);

/// Multipath transmission with a fixed delay d in [1, K] (consumes n normals).
ReceivedSignal transmit_with_delay(const Codeword& c, const ChannelSpec& spec, std::size_t delay,
                                   Rng& rng);

/// Log density (nats) of y given the codeword under the channel. Multipath
/// marginalizes the delay uniformly over 1..K.
double log_density(std::span<const double> y, std::span<const double> c, const ChannelSpec& spec);
inline double log_density(const ReceivedSignal& y, const Codeword& c, const ChannelSpec& spec) {
  return log_density(y.values, c.symbols, spec);
}

struct Moments {
  std::vector<double> mean;
  std::vector<double> variance;  // unbiased
};

Moments empirical_moments(const ChannelSpec& spec, const Codeword& c, std::size_t n, Rng& rng);

}  // namespace channels
}  // namespace metacc
