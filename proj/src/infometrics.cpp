#include "metacc/infometrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include <boost/math/special_functions/digamma.hpp>

#include "metacc/codec.hpp"
#include "metacc/parallel.hpp"

namespace metacc {

namespace {

SampleMatrix jittered(const SampleMatrix& s, Rng rng) {
  SampleMatrix out = s;
  for (double& v : out.data) v += rng.uniform(-kJitter, kJitter);
  return out;
}

double max_norm(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

/// k-th smallest (1-based) of `v`; reorders v.
double kth_smallest(std::vector<double>& v, std::size_t k) {
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k - 1), v.end());
  return v[k - 1];
}

/// Per-column z-scoring; constant columns are only centered.
SampleMatrix standardized(const SampleMatrix& s) {
  SampleMatrix out = s;
  for (std::size_t c = 0; c < s.cols; ++c) {
    double mean = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < s.rows; ++i) mean += s.data[i * s.cols + c];
    mean /= static_cast<double>(s.rows);
    for (std::size_t i = 0; i < s.rows; ++i) ss += std::pow(s.data[i * s.cols + c] - mean, 2);
    const double sd = std::sqrt(ss / static_cast<double>(s.rows));
    const double scale = sd > 0.0 ? 1.0 / sd : 1.0;
    for (std::size_t i = 0; i < s.rows; ++i) out.data[i * s.cols + c] = (s.data[i * s.cols + c] - mean) * scale;
  }
  return out;
}

void summarize(MetricEstimate& e, std::vector<double> values) {
  const double m = static_cast<double>(values.size());
  e.value = std::accumulate(values.begin(), values.end(), 0.0) / m;
  e.std_error = 0.0;
  if (values.size() > 1) {
    double ss = 0.0;
    for (const double v : values) ss += (v - e.value) * (v - e.value);
    e.std_error = std::sqrt(ss / (m - 1.0) / m);
  }
  e.per_codeword = std::move(values);
}

double log_mean_exp(std::span<const double> v) {
  const double hi = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (const double x : v) s += std::exp(x - hi);
  return hi + std::log(s / static_cast<double>(v.size()));
}

std::vector<ChannelSpec> draw_tasks(const TaskDistributionSpec& spec, std::size_t count, Rng& rng) {
  if (spec.is_point_mass()) count = 1;
  std::vector<ChannelSpec> out;
  out.reserve(count);
  for (std::size_t j = 0; j < count; ++j) out.push_back(sample_task(spec, rng));
  return out;
}

double log_marginal(std::span<const double> y, const Codeword& c, std::span<const ChannelSpec> tasks) {
  std::vector<double> lp(tasks.size());
  for (std::size_t j = 0; j < tasks.size(); ++j) lp[j] = channels::log_density(y, c.symbols, tasks[j]);
  return log_mean_exp(lp);
}

/// Mean over y ~ p_a of log p_a(y|c) - log p_b(y|c).
double mc_kl_one(const TaskDistributionSpec& a, const TaskDistributionSpec& b, const Codeword& c,
                 const OracleBudget& budget, Rng& rng) {
  const auto tasks_a = draw_tasks(a, budget.task_draws, rng);
  const auto tasks_b = draw_tasks(b, budget.task_draws, rng);
  double total = 0.0;
  for (std::size_t i = 0; i < budget.samples; ++i) {
    const ChannelSpec task = sample_task(a, rng);
    const ReceivedSignal y = channels::transmit(c, task, rng);
    total += log_marginal(y.values, c, tasks_a) - log_marginal(y.values, c, tasks_b);
  }
  return total / static_cast<double>(budget.samples);
}

void check_budget(std::size_t codewords, std::size_t samples, std::size_t k) {
  if (codewords == 0) throw std::invalid_argument("metric budget needs at least one codeword");
  if (samples <= k || k == 0) throw std::invalid_argument("metric budget needs samples > k >= 1");
}

}  // namespace

std::string_view estimator_name(Estimator e) {
  switch (e) {
    case Estimator::kKsg: return "ksg";
    case Estimator::kKnnKl: return "knn_kl";
    case Estimator::kMcOracle: return "mc_oracle";
  }
  return "unknown";
}

double ksg_mi(const SampleMatrix& x_in, const SampleMatrix& y_in, std::size_t k, std::uint64_t jitter_seed) {
  const std::size_t n = x_in.rows;
  if (y_in.rows != n) throw std::invalid_argument("ksg_mi: x and y must be paired (same row count)");
  if (k == 0 || n <= k) throw std::invalid_argument("ksg_mi: requires n > k >= 1");
  const Rng base(jitter_seed);
  const SampleMatrix x = jittered(x_in, base.split(0));
  const SampleMatrix y = jittered(y_in, base.split(1));

  std::vector<double> terms(n);
  parallel_for(n, [&](std::size_t i) {
    std::vector<double> dx(n), dy(n), joint;
    joint.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      dx[j] = max_norm(x.row(i), x.row(j));
      dy[j] = max_norm(y.row(i), y.row(j));
      if (j != i) joint.push_back(std::max(dx[j], dy[j]));
    }
    const double eps = kth_smallest(joint, k);
    std::size_t nx = 0, ny = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      nx += dx[j] < eps;
      ny += dy[j] < eps;
    }
    terms[i] = boost::math::digamma(static_cast<double>(nx + 1)) + boost::math::digamma(static_cast<double>(ny + 1));
  });
  const double mean = std::accumulate(terms.begin(), terms.end(), 0.0) / static_cast<double>(n);
  return boost::math::digamma(static_cast<double>(k)) + boost::math::digamma(static_cast<double>(n)) - mean;
}

double knn_kl(const SampleMatrix& p_in, const SampleMatrix& q_in, std::size_t k, std::uint64_t jitter_seed) {
  const std::size_t n = p_in.rows, m = q_in.rows;
  if (p_in.cols != q_in.cols) throw std::invalid_argument("knn_kl: dimension mismatch");
  if (k == 0 || n <= k || m < k) throw std::invalid_argument("knn_kl: requires n, m > k >= 1");
  const Rng base(jitter_seed);
  const SampleMatrix p = jittered(p_in, base.split(0));
  const SampleMatrix q = jittered(q_in, base.split(1));

  std::vector<double> log_ratio(n);
  parallel_for(n, [&](std::size_t i) {
    std::vector<double> within, across(m);
    within.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) within.push_back(squared_distance(p.row(i), p.row(j)));
    }
    for (std::size_t j = 0; j < m; ++j) across[j] = squared_distance(p.row(i), q.row(j));
    const double rho2 = kth_smallest(within, k);
    const double nu2 = kth_smallest(across, k);
    log_ratio[i] = 0.5 * (std::log(nu2) - std::log(rho2));
  });
  const double d = static_cast<double>(p.cols);
  const double sum = std::accumulate(log_ratio.begin(), log_ratio.end(), 0.0);
  return d / static_cast<double>(n) * sum + std::log(static_cast<double>(m) / static_cast<double>(n - 1));
}

OmegaEncoder::OmegaEncoder(const TaskDistributionSpec& spec) {
  std::set<Family> families;
  double widest = 0.0;
  for (const auto& c : spec.components) {
    if (c.weight <= 0.0) continue;
    families.insert(c.family);
    for (const auto& r : c.active_ranges()) widest = std::max(widest, r.hi - r.lo);
  }
  mixed = families.size() > 1;
  family_scale = widest > 0.0 ? widest : 1.0;
}

std::vector<double> OmegaEncoder::encode(const ChannelSpec& task) const {
  if (!mixed) return task.omega();
  std::vector<double> out{task.snr_db, 0.0, 0.0, 0.0, family_scale * static_cast<double>(task.family)};
  switch (task.family) {
    case Family::kAwgn: break;
    case Family::kBursty:
      out[1] = task.snr_b_db;
      out[2] = task.alpha;
      break;
    case Family::kMemory: out[2] = task.alpha; break;
    case Family::kMultipath: out[3] = task.beta; break;
  }
  return out;
}

Codeword random_codeword(std::size_t k, Rng& rng) {
  if (k == 0 || k > 62) throw std::invalid_argument("random_codeword: message length must be in [1, 62]");
  return codec::conv_encode(codec::bits_from_integer(rng.index(std::size_t{1} << k), k));
}

PairedSamples draw_paired(const TaskDistributionSpec& spec, const Codeword& c, std::size_t n, Rng& rng) {
  const OmegaEncoder enc(spec);
  PairedSamples out;
  for (std::size_t i = 0; i < n; ++i) {
    const ChannelSpec task = sample_task(spec, rng);
    const auto w = enc.encode(task);
    const ReceivedSignal y = channels::transmit(c, task, rng);
    if (i == 0) {
      out.omega = SampleMatrix(n, w.size());
      out.y = SampleMatrix(n, y.values.size());
    }
    std::copy(w.begin(), w.end(), out.omega.row(i).begin());
    std::copy(y.values.begin(), y.values.end(), out.y.row(i).begin());
  }
  return out;
}

SampleMatrix draw_marginal(const TaskDistributionSpec& spec, const Codeword& c, std::size_t n, Rng& rng) {
  SampleMatrix out(n, c.symbols.size());
  for (std::size_t i = 0; i < n; ++i) {
    const ReceivedSignal y = channels::transmit(c, sample_task(spec, rng), rng);
    std::copy(y.values.begin(), y.values.end(), out.row(i).begin());
  }
  return out;
}

MetricEstimate diversity_score(const TaskDistributionSpec& spec, const MetricBudget& budget, const Rng& rng,
                               bool short_circuit) {
  spec.validate();
  check_budget(budget.codewords, budget.samples, budget.k);
  MetricEstimate e;
  e.estimator = Estimator::kKsg;
  e.n = budget.samples;
  e.m = budget.codewords;
  e.k = budget.k;
  if (short_circuit && spec.is_point_mass()) {
    e.short_circuit = true;
    e.per_codeword.assign(budget.codewords, 0.0);
    return e;
  }
  std::vector<double> values(budget.codewords);
  parallel_for(budget.codewords, [&](std::size_t m) {
    Rng r = rng.split(m);
    const Codeword c = random_codeword(budget.message_bits, r);
    const PairedSamples s = draw_paired(spec, c, budget.samples, r);
    values[m] = ksg_mi(standardized(s.omega), standardized(s.y), budget.k, r.next_u64());
  }, 1);
  summarize(e, std::move(values));
  return e;
}

ShiftTerms shift_terms(const SampleMatrix& ya, const SampleMatrix& yb, std::size_t k) {
  return {knn_kl(ya, yb, k), knn_kl(yb, ya, k)};
}

MetricEstimate shift_distance(const TaskDistributionSpec& a, const TaskDistributionSpec& b,
                              const MetricBudget& budget, ShiftMode mode, const Rng& rng) {
  a.validate();
  b.validate();
  check_budget(budget.codewords, budget.samples, budget.k);
  MetricEstimate e;
  e.estimator = Estimator::kKnnKl;
  e.n = budget.samples;
  e.m = budget.codewords;
  e.k = budget.k;
  std::vector<double> values(budget.codewords);
  parallel_for(budget.codewords, [&](std::size_t m) {
    Rng r = rng.split(m);
    const Codeword c = random_codeword(budget.message_bits, r);
    Rng ra = r.split(1), rb = r.split(2);
    const SampleMatrix ya = draw_marginal(a, c, budget.samples, ra);
    const SampleMatrix yb = draw_marginal(b, c, budget.samples, rb);
    if (mode == ShiftMode::kSymmetric) {
      values[m] = shift_terms(ya, yb, budget.k).value(mode);
    } else {
      values[m] = knn_kl(ya, yb, budget.k);
    }
  }, 1);
  summarize(e, std::move(values));
  return e;
}

MetricEstimate mc_kl_oracle(const TaskDistributionSpec& a, const TaskDistributionSpec& b,
                            const OracleBudget& budget, ShiftMode mode, const Rng& rng) {
  a.validate();
  b.validate();
  if (budget.codewords == 0 || budget.samples == 0 || budget.task_draws == 0) {
    throw std::invalid_argument("oracle budget entries must be >= 1");
  }
  MetricEstimate e;
  e.estimator = Estimator::kMcOracle;
  e.n = budget.samples;
  e.m = budget.codewords;
  std::vector<double> values(budget.codewords);
  parallel_for(budget.codewords, [&](std::size_t m) {
    Rng r = rng.split(m);
    const Codeword c = random_codeword(budget.message_bits, r);
    Rng ra = r.split(1), rb = r.split(2);
    double v = mc_kl_one(a, b, c, budget, ra);
    if (mode == ShiftMode::kSymmetric) v += mc_kl_one(b, a, c, budget, rb);
    values[m] = v;
  });
  summarize(e, std::move(values));
  return e;
}

MetricEstimate mc_mi_oracle(const TaskDistributionSpec& spec, const OracleBudget& budget, const Rng& rng) {
  spec.validate();
  if (budget.codewords == 0 || budget.samples == 0 || budget.task_draws == 0) {
    throw std::invalid_argument("oracle budget entries must be >= 1");
  }
  MetricEstimate e;
  e.estimator = Estimator::kMcOracle;
  e.n = budget.samples;
  e.m = budget.codewords;
  if (spec.is_point_mass()) {
    e.short_circuit = true;
    e.per_codeword.assign(budget.codewords, 0.0);
    return e;
  }
  std::vector<double> values(budget.codewords);
  parallel_for(budget.codewords, [&](std::size_t m) {
    Rng r = rng.split(m);
    const Codeword c = random_codeword(budget.message_bits, r);
    const auto tasks = draw_tasks(spec, budget.task_draws, r);
    double total = 0.0;
    for (std::size_t i = 0; i < budget.samples; ++i) {
      const ChannelSpec task = sample_task(spec, r);
      const ReceivedSignal y = channels::transmit(c, task, r);
      total += channels::log_density(y.values, c.symbols, task) - log_marginal(y.values, c, tasks);
    }
    values[m] = total / static_cast<double>(budget.samples);
  });
  summarize(e, std::move(values));
  return e;
}

nlohmann::json metric_row(std::string_view scenario, const MetricEstimate& e, std::uint64_t seed) {
  return {{"scenario", scenario},
          {"estimator", estimator_name(e.estimator)},
          {"value", e.value},
          {"stderr", e.std_error},
          {"n", e.n},
          {"M", e.m},
          {"k", e.k},
          {"seed", seed}};
}

}  // namespace metacc
