#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "metacc/channels.hpp"
#include "metacc/codec.hpp"
#include "metacc/rng.hpp"

using namespace metacc;

namespace {

Codeword test_codeword() { return codec::conv_encode(codec::bits_from_integer(0b1011001110, 10)); }

double gauss_logpdf(double x, double mean, double var) {
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - (x - mean) * (x - mean) / (2.0 * var);
}

}  // namespace

TEST_CASE("snr and sigma conversions") {
  CHECK(channels::snr_to_sigma(0.0) == doctest::Approx(1.0));
  CHECK(channels::snr_to_sigma(20.0) == doctest::Approx(0.1));
  CHECK(channels::snr_to_sigma(-6.0) == doctest::Approx(1.9952623149688795));
  for (double snr : {-10.0, -3.0, 0.0, 4.5, 13.0}) {
    CHECK(channels::sigma_to_snr(channels::snr_to_sigma(snr)) == doctest::Approx(snr));
  }
  CHECK(ChannelSpec::awgn(6.0).sigma() == doctest::Approx(std::pow(10.0, -0.3)));
}

TEST_CASE("parameter validation") {
  CHECK_NOTHROW(ChannelSpec::bursty(3, -10, 0.2).validate());
  CHECK_THROWS_AS(ChannelSpec::bursty(3, -10, 1.5).validate(), std::invalid_argument);
  CHECK_THROWS_AS(ChannelSpec::memory(0, 1.0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(ChannelSpec::multipath(0, -0.1).validate(), std::invalid_argument);
  CHECK(family_from_name("multipath") == Family::kMultipath);
  CHECK_THROWS_AS(family_from_name("rayleigh"), std::invalid_argument);
}

TEST_CASE("AWGN moments") {
  Rng rng(1);
  const Codeword c = test_codeword();
  const auto m = channels::empirical_moments(ChannelSpec::awgn_sigma(0.7), c, 40000, rng);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(m.mean[i] == doctest::Approx(c.symbols[i]).epsilon(0.02));
    CHECK(m.variance[i] == doctest::Approx(0.49).epsilon(0.04));
  }
}

TEST_CASE("bursty variance is sigma^2 + alpha sigma_b^2") {
  Rng rng(2);
  const ChannelSpec spec = ChannelSpec::bursty(0.0, channels::sigma_to_snr(2.0), 0.25);
  const auto m = channels::empirical_moments(spec, test_codeword(), 40000, rng);
  double mean_var = 0.0;
  for (double v : m.variance) mean_var += v / static_cast<double>(m.variance.size());
  CHECK(mean_var == doctest::Approx(1.0 + 0.25 * 4.0).epsilon(0.02));
}

TEST_CASE("memory channel is stationary AR(1)") {
  Rng rng(3);
  const double alpha = 0.6, sigma = 0.8;
  const ChannelSpec spec = ChannelSpec::memory(channels::sigma_to_snr(sigma), alpha);
  const Codeword c = test_codeword();
  const int n = 40000;
  double s0 = 0, s1 = 0, s01 = 0, s00 = 0, s11 = 0, last_var = 0;
  for (int t = 0; t < n; ++t) {
    const auto y = channels::transmit(c, spec, rng);
    const double z0 = y.values[4] - c.symbols[4], z1 = y.values[5] - c.symbols[5];
    s0 += z0, s1 += z1, s00 += z0 * z0, s11 += z1 * z1, s01 += z0 * z1;
    const double zl = y.values.back() - c.symbols.back();
    last_var += zl * zl / n;
  }
  const double cov = s01 / n - (s0 / n) * (s1 / n);
  const double corr = cov / std::sqrt((s00 / n - s0 * s0 / n / n) * (s11 / n - s1 * s1 / n / n));
  CHECK(corr == doctest::Approx(alpha).epsilon(0.03));
  CHECK(last_var == doctest::Approx(sigma * sigma).epsilon(0.04));
}

TEST_CASE("multipath adds a delayed, attenuated echo") {
  Rng rng(4);
  const Codeword c = test_codeword();
  const ChannelSpec spec = ChannelSpec::multipath(200.0, 0.5);
  const auto y = channels::transmit_with_delay(c, spec, 3, rng);
  for (std::size_t j = 0; j < c.size(); ++j) {
    const double expected = c.symbols[j] + (j >= 3 ? 0.5 * c.symbols[j - 3] : 0.0);
    CHECK(y.values[j] == doctest::Approx(expected).epsilon(1e-9));
  }
  CHECK_THROWS_AS(channels::transmit_with_delay(c, spec, 0, rng), std::invalid_argument);
  CHECK_THROWS_AS(channels::transmit_with_delay(c, spec, 11, rng), std::invalid_argument);
}

TEST_CASE("draw accounting per transmission") {
  const Codeword c = test_codeword();
  const std::size_t n = c.size();
  auto consumed = [&](const ChannelSpec& spec) {
    Rng a(9), b(9);
    channels::transmit(c, spec, a);
    const auto target = a.next_u64();
    std::size_t draws = 0;
    while (b.next_u64() != target) ++draws;
    return draws;
  };
  CHECK(consumed(ChannelSpec::awgn(0)) == 2 * n);
  CHECK(consumed(ChannelSpec::bursty(0, -5, 0.3)) == 5 * n);
  CHECK(consumed(ChannelSpec::memory(0, 0.3)) == 2 * n);
  CHECK(consumed(ChannelSpec::multipath(0, 0.3)) == 1 + 2 * n);
}

TEST_CASE("log densities against direct Gaussian sums") {
  Rng rng(6);
  const Codeword c = test_codeword();
  const auto& cs = c.symbols;

  const ChannelSpec awgn = ChannelSpec::awgn_sigma(0.9);
  const auto y = channels::transmit(c, awgn, rng);
  double ref = 0.0;
  for (std::size_t i = 0; i < cs.size(); ++i) ref += gauss_logpdf(y.values[i], cs[i], 0.81);
  CHECK(channels::log_density(y, c, awgn) == doctest::Approx(ref).epsilon(1e-12));

  const ChannelSpec bursty = ChannelSpec::bursty(0.0, channels::sigma_to_snr(3.0), 0.2);
  ref = 0.0;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    ref += std::log(0.8 * std::exp(gauss_logpdf(y.values[i], cs[i], 1.0)) +
                    0.2 * std::exp(gauss_logpdf(y.values[i], cs[i], 10.0)));
  }
  CHECK(channels::log_density(y, c, bursty) == doctest::Approx(ref).epsilon(1e-10));

  const ChannelSpec mp = ChannelSpec::multipath(channels::sigma_to_snr(0.9), 0.4);
  double mix = 0.0;
  for (std::size_t d = 1; d <= 10; ++d) {
    double lp = 0.0;
    for (std::size_t j = 0; j < cs.size(); ++j) {
      lp += gauss_logpdf(y.values[j], cs[j] + (j >= d ? 0.4 * cs[j - d] : 0.0), 0.81);
    }
    mix += std::exp(lp) / 10.0;
  }
  CHECK(channels::log_density(y, c, mp) == doctest::Approx(std::log(mix)).epsilon(1e-10));
}

TEST_CASE("memory log density equals the Gaussian with Toeplitz covariance") {
  // Three coordinates: invert the covariance var * a^|i-j| directly.
  const double a = 0.5, var = 0.64;
  const std::vector<double> z{0.3, -0.7, 0.2};
  const std::vector<double> c{1.0, -1.0, 1.0};
  std::vector<double> y(3);
  for (int i = 0; i < 3; ++i) y[i] = c[i] + z[i];
  double cov[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) cov[i][j] = var * std::pow(a, std::abs(i - j));
  const double det = cov[0][0] * (cov[1][1] * cov[2][2] - cov[1][2] * cov[2][1]) -
                     cov[0][1] * (cov[1][0] * cov[2][2] - cov[1][2] * cov[2][0]) +
                     cov[0][2] * (cov[1][0] * cov[2][1] - cov[1][1] * cov[2][0]);
  double inv[3][3];
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const int r0 = (j + 1) % 3, r1 = (j + 2) % 3, c0 = (i + 1) % 3, c1 = (i + 2) % 3;
      inv[i][j] = (cov[r0][c0] * cov[r1][c1] - cov[r0][c1] * cov[r1][c0]) / det;
    }
  }
  double quad = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) quad += z[i] * inv[i][j] * z[j];
  const double ref = -0.5 * (3 * std::log(2 * std::numbers::pi) + std::log(det) + quad);
  const ChannelSpec spec = ChannelSpec::memory(channels::sigma_to_snr(0.8), a);
  CHECK(channels::log_density(std::span<const double>(y), std::span<const double>(c), spec) ==
        doctest::Approx(ref).epsilon(1e-10));
}

TEST_CASE("log density rejects mismatched lengths") {
  const std::vector<double> y(4, 0.0), c(6, 1.0);
  CHECK_THROWS_AS(channels::log_density(std::span<const double>(y), std::span<const double>(c), ChannelSpec::awgn(0)),
                  std::invalid_argument);
}
