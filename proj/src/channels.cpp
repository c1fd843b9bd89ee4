#include "metacc/channels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace metacc {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // ln(2*pi)

double log_normal(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var)) - d * d / (2.0 * var);
}

double log_add(double a, double b) {
  const double m = std::max(a, b);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double awgn_log_density(std::span<const double> y, std::span<const double> mean, double var) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += log_normal(y[i], mean[i], var);
  return acc;
}

void delayed_mean(std::span<const double> c, double beta, std::size_t delay, std::vector<double>& out) {
  out.assign(c.begin(), c.end());
  for (std::size_t i = delay; i < c.size(); ++i) out[i] += beta * c[i - delay];
}

}  // namespace

std::string_view family_name(Family f) {
  switch (f) {
    case Family::kAwgn: return "awgn";
    case Family::kBursty: return "bursty";
    case Family::kMemory: return "memory";
    case Family::kMultipath: return "multipath";
  }
  return "unknown";
}

Family family_from_name(std::string_view name) {
  for (const Family f : kAllFamilies) {
    if (family_name(f) == name) return f;
  }
  throw std::invalid_argument("unknown channel family '" + std::string(name) +
                              "' (valid: awgn, bursty, memory, multipath)");
}

double ChannelSpec::sigma() const { return channels::snr_to_sigma(snr_db); }
double ChannelSpec::sigma_b() const { return channels::snr_to_sigma(snr_b_db); }

void ChannelSpec::validate() const {
  auto fail = [this](const std::string& what) {
    throw std::invalid_argument("invalid channel " + to_string(*this) + ": " + what);
  };
  if (!std::isfinite(snr_db)) fail("snr must be finite");
  if (!(sigma() > 0.0)) fail("sigma must be positive");
  switch (family) {
    case Family::kAwgn: break;
    case Family::kBursty:
      if (!std::isfinite(snr_b_db) || !(sigma_b() > 0.0)) fail("sigma_b must be positive");
      if (!(alpha >= 0.0 && alpha <= 1.0)) fail("burst probability must lie in [0,1]");
      break;
    case Family::kMemory:
      if (!(std::abs(alpha) < 1.0)) fail("AR coefficient must satisfy |alpha| < 1");
      break;
    case Family::kMultipath:
      if (!(beta >= 0.0) || !std::isfinite(beta)) fail("beta must be >= 0");
      break;
  }
}

std::vector<double> ChannelSpec::omega() const {
  switch (family) {
    case Family::kAwgn: return {snr_db};
    case Family::kBursty: return {snr_db, snr_b_db, alpha};
    case Family::kMemory: return {snr_db, alpha};
    case Family::kMultipath: return {snr_db, beta};
  }
  return {};
}

ChannelSpec ChannelSpec::awgn(double snr_db) { return {Family::kAwgn, snr_db, 0.0, 0.0, 0.0}; }
ChannelSpec ChannelSpec::bursty(double snr_db, double snr_b_db, double alpha) {
  return {Family::kBursty, snr_db, snr_b_db, alpha, 0.0};
}
ChannelSpec ChannelSpec::memory(double snr_db, double alpha) {
  return {Family::kMemory, snr_db, 0.0, alpha, 0.0};
}
ChannelSpec ChannelSpec::multipath(double snr_db, double beta) {
  return {Family::kMultipath, snr_db, 0.0, 0.0, beta};
}
ChannelSpec ChannelSpec::awgn_sigma(double sigma) { return awgn(channels::sigma_to_snr(sigma)); }

std::string to_string(const ChannelSpec& spec) {
  std::ostringstream os;
  os << family_name(spec.family) << "(snr=" << spec.snr_db;
  switch (spec.family) {
    case Family::kAwgn: break;
    case Family::kBursty: os << ", snr_b=" << spec.snr_b_db << ", alpha=" << spec.alpha; break;
    case Family::kMemory: os << ", alpha=" << spec.alpha; break;
    case Family::kMultipath: os << ", beta=" << spec.beta; break;
  }
  os << ")";
  return os.str();
}

namespace channels {

double snr_to_sigma(double snr_db) { return std::pow(10.0, -snr_db / 20.0); }
double sigma_to_snr(double sigma) { return -20.0 * std::log10(sigma); }

ReceivedSignal transmit_with_delay(const Codeword& c, const ChannelSpec& spec, std::size_t delay,
                                   Rng& rng) {
  spec.validate();
  const std::size_t n = c.size();
  if (delay < 1 || delay > n / 2) throw std::invalid_argument("multipath delay must lie in [1, K]");
  const double sigma = spec.sigma();
  ReceivedSignal y;
  delayed_mean(c.symbols, spec.beta, delay, y.values);
  for (double& v : y.values) v += sigma * rng.normal();
  return y;
}

ReceivedSignal transmit(const Codeword& c, const ChannelSpec& spec, Rng& rng) {
  spec.validate();
  if (c.symbols.empty()) throw std::invalid_argument("transmit: empty codeword");
  const std::size_t n = c.size();
  const double sigma = spec.sigma();
  ReceivedSignal y;
  y.values.resize(n);
  switch (spec.family) {
    case Family::kAwgn:
      for (std::size_t i = 0; i < n; ++i) y.values[i] = c.symbols[i] + sigma * rng.normal();
      break;
    case Family::kBursty: {
      const double sigma_b = spec.sigma_b();
      for (std::size_t i = 0; i < n; ++i) {
        const double z = sigma * rng.normal();
        const bool burst = rng.bernoulli(spec.alpha);
        const double b = sigma_b * rng.normal();
        y.values[i] = c.symbols[i] + z + (burst ? b : 0.0);
      }
      break;
    }
    case Family::kMemory: {
      const double a = spec.alpha;
      const double innov = std::sqrt(1.0 - a * a);
      double z = sigma * rng.normal();
      y.values[0] = c.symbols[0] + z;
      for (std::size_t i = 1; i < n; ++i) {
        z = a * z + innov * sigma * rng.normal();
        y.values[i] = c.symbols[i] + z;
      }
      break;
    }
    case Family::kMultipath: {
      const std::size_t delay = 1 + rng.index(n / 2);
      return transmit_with_delay(c, spec, delay, rng);
    }
  }
  return y;
}

double log_density(std::span<const double> y, std::span<const double> c, const ChannelSpec& spec) {
  spec.validate();
  if (y.size() != c.size()) throw std::invalid_argument("log_density: length mismatch");
  for (const double v : y) {
    if (!std::isfinite(v)) throw std::invalid_argument("log_density: non-finite received value");
  }
  const double var = spec.sigma() * spec.sigma();
  switch (spec.family) {
    case Family::kAwgn: return awgn_log_density(y, c, var);
    case Family::kBursty: {
      const double var_burst = var + spec.sigma_b() * spec.sigma_b();
      const double log_quiet = spec.alpha < 1.0 ? std::log1p(-spec.alpha) : -INFINITY;
      const double log_burst = spec.alpha > 0.0 ? std::log(spec.alpha) : -INFINITY;
      double acc = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        acc += log_add(log_quiet + log_normal(y[i], c[i], var), log_burst + log_normal(y[i], c[i], var_burst));
      }
      return acc;
    }
    case Family::kMemory: {
      // Stationary AR(1): first residual ~ N(0, var), then conditionals with
      // innovation variance var * (1 - alpha^2). Equivalent to the tridiagonal
      // precision form of the Toeplitz covariance var * alpha^|i-j|.
      const double a = spec.alpha;
      const double cond_var = var * (1.0 - a * a);
      double acc = log_normal(y[0] - c[0], 0.0, var);
      for (std::size_t i = 1; i < y.size(); ++i) {
        acc += log_normal(y[i] - c[i], a * (y[i - 1] - c[i - 1]), cond_var);
      }
      return acc;
    }
    case Family::kMultipath: {
      const std::size_t k = y.size() / 2;
      if (k == 0) throw std::invalid_argument("log_density: empty signal");
      std::vector<double> mean;
      std::vector<double> terms(k);
      for (std::size_t d = 1; d <= k; ++d) {
        delayed_mean(c, spec.beta, d, mean);
        terms[d - 1] = awgn_log_density(y, mean, var);
      }
      const double m = *std::max_element(terms.begin(), terms.end());
      double s = 0.0;
      for (const double t : terms) s += std::exp(t - m);
      return m + std::log(s) - std::log(static_cast<double>(k));
    }
  }
  return 0.0;
}

Moments empirical_moments(const ChannelSpec& spec, const Codeword& c, std::size_t n, Rng& rng) {
  if (n < 2) throw std::invalid_argument("empirical_moments: need at least 2 samples");
  const std::size_t dim = c.size();
  // Welford accumulation per coordinate
  Moments m{std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
  std::vector<double> m2(dim, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const ReceivedSignal y = transmit(c, spec, rng);
    const double count = static_cast<double>(s + 1);
    for (std::size_t i = 0; i < dim; ++i) {
      const double delta = y.values[i] - m.mean[i];
      m.mean[i] += delta / count;
      m2[i] += delta * (y.values[i] - m.mean[i]);
    }
  }
  for (std::size_t i = 0; i < dim; ++i) m.variance[i] = m2[i] / static_cast<double>(n - 1);
  return m;
}

}  // namespace channels
}  // namespace metacc
