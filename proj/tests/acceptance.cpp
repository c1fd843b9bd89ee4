// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance            run all criteria
//   acceptance --only N   run criterion N
#include <sys/wait.h>

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "aggregation_fixture.hpp"
#include "gradcheck.hpp"
#include "metacc/bench.hpp"
#include "metacc/channels.hpp"
#include "metacc/codec.hpp"
#include "metacc/infometrics.hpp"
#include "metacc/metalearn.hpp"

namespace fs = std::filesystem;
using namespace metacc;

namespace {

// Pinned tolerances and budgets.
constexpr std::size_t kCodecTrials = 500;
constexpr double kCodecSigma = 1.0;
constexpr double kMaxBerGap = 0.002;
constexpr double kTieEps = 1e-9;
constexpr double kCodecSeconds = 10.0;
constexpr double kNoiselessSeconds = 5.0;

constexpr std::size_t kChannelSamples = 100000;
constexpr double kBurstyVariance = 5.5;
constexpr double kBurstyVarianceTol = 0.2;
constexpr double kMemoryAlpha = 0.5;
constexpr double kAutocorrTol = 0.02;
constexpr double kChannelSeconds = 10.0;

constexpr std::size_t kEstimatorSamples = 5000;
constexpr double kGaussianRho = 0.9;
constexpr double kMiTol = 0.05;
constexpr double kKlTol = 0.1;
constexpr double kEstimatorSeconds = 30.0;

constexpr double kPointDiversityTol = 0.05;
constexpr double kOracleSeconds = 60.0;

constexpr std::size_t kDiversitySeeds = 5;

constexpr std::size_t kGradCases = 200;
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 30.0;

constexpr std::size_t kLearningIterations = 2000;
constexpr double kLearningBerBound = 0.2;
constexpr std::size_t kPairedEpisodes = 200;
constexpr double kSignificance = 0.05;
constexpr double kLearningSeconds = 15.0 * 60.0;

constexpr std::size_t kCrossingIterations = 500;
const std::vector<std::string> kCrossingLearners{"fomaml", "reptile", "anil", "metasgd", "protonet"};
constexpr std::size_t kCrossingSeeds = 3;
constexpr std::size_t kCrossingEpisodes = 100;

constexpr double kRankTol = 1e-12;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

MessageBits random_message(std::size_t k, Rng& rng) {
  MessageBits m;
  for (std::size_t i = 0; i < k; ++i) m.bits.push_back(static_cast<std::uint8_t>(rng.index(2)));
  return m;
}

Outcome codec_equivalence() {
  const auto start = Clock::now();
  Rng rng(2024);
  const ChannelSpec ch = ChannelSpec::awgn_sigma(kCodecSigma);
  std::size_t ties = 0, mismatches = 0;
  double err_v = 0.0, err_b = 0.0;
  for (std::size_t t = 0; t < kCodecTrials; ++t) {
    const MessageBits m = random_message(10, rng);
    const ReceivedSignal y = channels::transmit(codec::conv_encode(m), ch, rng);
    const MessageBits v = codec::viterbi_decode(y), b = codec::brute_force_ml(y);
    err_v += codec::ber(v, m);
    err_b += codec::ber(b, m);
    auto d = codec::codeword_distances(y.values);
    std::sort(d.begin(), d.end());
    if (d[1] - d[0] <= kTieEps) {
      ++ties;
      continue;
    }
    mismatches += !(v == b);
  }
  const double gap = (err_v - err_b) / static_cast<double>(kCodecTrials);
  const double secs = seconds_since(start);
  return {mismatches == 0 && gap <= kMaxBerGap && secs < kCodecSeconds,
          "mismatches=" + std::to_string(mismatches) + " ties=" + std::to_string(ties) + " ber_gap=" + fmt(gap) +
              " time=" + fmt(secs, 3) + "s"};
}

Outcome noiseless_identity() {
  const auto start = Clock::now();
  std::size_t failures = 0;
  for (std::uint64_t v = 0; v < 1024; ++v) {
    const MessageBits m = codec::bits_from_integer(v, 10);
    failures += !(codec::viterbi_decode(codec::conv_encode(m).symbols) == m);
  }
  const double secs = seconds_since(start);
  return {failures == 0 && secs < kNoiselessSeconds,
          "failures=" + std::to_string(failures) + "/1024 time=" + fmt(secs, 3) + "s"};
}

Outcome channel_statistics() {
  const auto start = Clock::now();
  Rng rng(31);
  const Codeword c = codec::conv_encode(codec::bits_from_integer(0b1101001011, 10));
  const ChannelSpec bursty = ChannelSpec::bursty(channels::sigma_to_snr(1.0), channels::sigma_to_snr(3.0), 0.5);
  const auto m = channels::empirical_moments(bursty, c, kChannelSamples, rng);
  double worst = 0.0;
  for (double v : m.variance) worst = std::max(worst, std::abs(v - kBurstyVariance));

  const ChannelSpec memory = ChannelSpec::memory(0.0, kMemoryAlpha);
  double sxy = 0.0, sxx = 0.0, syy = 0.0, sx = 0.0, sy = 0.0;
  double pairs = 0.0;
  for (std::size_t t = 0; t < kChannelSamples; ++t) {
    const auto y = channels::transmit(c, memory, rng);
    for (std::size_t i = 1; i < c.size(); ++i) {
      const double a = y.values[i - 1] - c.symbols[i - 1], b = y.values[i] - c.symbols[i];
      sx += a, sy += b, sxx += a * a, syy += b * b, sxy += a * b;
      pairs += 1.0;
    }
  }
  const double cov = sxy / pairs - (sx / pairs) * (sy / pairs);
  const double corr =
      cov / std::sqrt((sxx / pairs - (sx / pairs) * (sx / pairs)) * (syy / pairs - (sy / pairs) * (sy / pairs)));
  const double secs = seconds_since(start);
  return {worst <= kBurstyVarianceTol && std::abs(corr - kMemoryAlpha) <= kAutocorrTol && secs < kChannelSeconds,
          "bursty_var_max_dev=" + fmt(worst) + " memory_lag1=" + fmt(corr) + " time=" + fmt(secs, 3) + "s"};
}

Outcome estimator_closed_forms() {
  const auto start = Clock::now();
  Rng rng(41);
  SampleMatrix x(kEstimatorSamples, 1), y(kEstimatorSamples, 1);
  for (std::size_t i = 0; i < kEstimatorSamples; ++i) {
    x.data[i] = rng.normal();
    y.data[i] = kGaussianRho * x.data[i] + std::sqrt(1 - kGaussianRho * kGaussianRho) * rng.normal();
  }
  const double mi = ksg_mi(x, y, 3);
  const double mi_ref = -0.5 * std::log(1 - kGaussianRho * kGaussianRho);
  SampleMatrix p(kEstimatorSamples, 1), q(kEstimatorSamples, 1);
  for (double& v : p.data) v = rng.normal();
  for (double& v : q.data) v = 1.0 + rng.normal();
  const double kl = knn_kl(p, q, 3);
  const double secs = seconds_since(start);
  return {std::abs(mi - mi_ref) <= kMiTol && std::abs(kl - 0.5) <= kKlTol && secs < kEstimatorSeconds,
          "ksg=" + fmt(mi) + " (ref " + fmt(mi_ref) + ") knn_kl=" + fmt(kl) + " (ref 0.5) time=" + fmt(secs, 3) + "s"};
}

TaskDistributionSpec awgn_point(double snr) { return TaskDistributionSpec::point(ChannelSpec::awgn(snr)); }

Outcome metric_oracle_agreement() {
  const auto start = Clock::now();
  const MetricBudget budget;
  const OracleBudget ob;
  const MetricEstimate s = shift_distance(awgn_point(0), awgn_point(6), budget, ShiftMode::kSymmetric, Rng(51));
  const MetricEstimate o = mc_kl_oracle(awgn_point(0), awgn_point(6), ob, ShiftMode::kSymmetric, Rng(52));
  const double tol = 2.0 * std::hypot(s.std_error, o.std_error);
  const bool agree = std::abs(s.value - o.value) <= tol;

  const MetricEstimate exact = diversity_score(awgn_point(0), budget, Rng(53));
  const MetricEstimate est = diversity_score(awgn_point(0), budget, Rng(53), false);
  const bool point_ok = exact.short_circuit && exact.value == 0.0 && std::abs(est.value) <= kPointDiversityTol;
  const double secs = seconds_since(start);
  return {agree && point_ok && secs < kOracleSeconds,
          "shift=" + fmt(s.value) + "+-" + fmt(s.std_error) + " oracle=" + fmt(o.value) + "+-" + fmt(o.std_error) +
              " tol=" + fmt(tol) + " point_diversity=" + fmt(exact.value) + "/" + fmt(est.value) +
              " time=" + fmt(secs, 3) + "s"};
}

Outcome monotonicity() {
  const MetricBudget budget;
  const OracleBudget ob;
  std::string detail = "shift:";
  bool increasing = true;
  double last = -INFINITY, last_oracle = -INFINITY;
  for (double gap : {0.0, 2.0, 4.0, 6.0}) {
    const double s = shift_distance(awgn_point(0), awgn_point(gap), budget, ShiftMode::kSymmetric, Rng(61)).value;
    const double o = mc_kl_oracle(awgn_point(0), awgn_point(gap), ob, ShiftMode::kSymmetric, Rng(62)).value;
    increasing = increasing && s > last && o > last_oracle;
    last = s;
    last_oracle = o;
    detail += " " + fmt(s) + "/" + fmt(o);
  }
  detail += " diversity(expanded>focused):";
  bool ordered = true;
  for (std::uint64_t seed = 0; seed < kDiversitySeeds; ++seed) {
    const double f = diversity_score(scenario("awgn-focused").train, budget, Rng(seed)).value;
    const double e = diversity_score(scenario("awgn-expanded").train, budget, Rng(seed)).value;
    ordered = ordered && e > f;
    detail += " " + fmt(e, 3) + ">" + fmt(f, 3);
  }
  return {increasing && ordered, detail};
}

Outcome autodiff() {
  const auto start = Clock::now();
  const auto results = gradcheck::run_suite(kGradCases, 71);
  double worst = 0.0;
  std::string worst_op;
  for (const auto& r : results) {
    if (r.rel_error > worst) worst = r.rel_error, worst_op = r.op;
  }
  const double secs = seconds_since(start);
  return {worst <= kGradTol && results.size() == kGradCases && secs < kGradSeconds,
          "cases=" + std::to_string(results.size()) + " max_rel_err=" + fmt(worst, 3) + " (" + worst_op +
              ") time=" + fmt(secs, 3) + "s"};
}

struct Trained {
  ExperimentConfig cfg;
  MetaState state;
};

Trained train_learner(const std::string& learner, const std::string& scen, std::uint64_t seed,
                      std::size_t iterations) {
  Trained t;
  t.cfg.scenario = scen;
  t.cfg.learners = {learner};
  t.cfg.meta.algorithm = algorithm_from_name(learner);
  t.state = init_state(t.cfg.meta, seed);
  meta_train(t.state, t.cfg.meta, experiment_train_dataset(t.cfg, seed), iterations, seed);
  return t;
}

std::vector<Episode> test_episodes(const ExperimentConfig& cfg, const ChannelSpec& point, std::size_t index,
                                   std::uint64_t seed, std::size_t count) {
  ExperimentConfig c = cfg;
  c.eval_episodes = count;
  return experiment_episodes(experiment_test_dataset(point, index, seed), c, index, seed);
}

// Two-sided paired t-test on (a - b).
double paired_p_value(const std::vector<double>& a, const std::vector<double>& b, double& mean_diff) {
  const double n = static_cast<double>(a.size());
  mean_diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean_diff += (a[i] - b[i]) / n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ss += std::pow(a[i] - b[i] - mean_diff, 2);
  const double se = std::sqrt(ss / (n - 1.0) / n);
  if (se == 0.0) return mean_diff == 0.0 ? 1.0 : 0.0;
  const boost::math::students_t dist(n - 1.0);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(mean_diff / se)));
}

Outcome desk_learning() {
  const auto start = Clock::now();
  const Trained awgn = train_learner("fomaml", "awgn-focused", 0, kLearningIterations);
  const auto awgn_eps = test_episodes(awgn.cfg, ChannelSpec::awgn(0), 0, 0, awgn.cfg.eval_episodes);
  const EvalResult awgn_eval = evaluate(awgn.state, awgn.cfg.meta, awgn_eps, true);

  const Trained bursty = train_learner("fomaml", "bursty-focused", 0, kLearningIterations);
  const ChannelSpec bpoint = scenario("bursty-focused").test_points.front();
  const auto beps = test_episodes(bursty.cfg, bpoint, 0, 0, kPairedEpisodes);
  const EvalResult pre = evaluate(bursty.state, bursty.cfg.meta, beps, false);
  const EvalResult post = evaluate(bursty.state, bursty.cfg.meta, beps, true);
  double diff = 0.0;
  const double p = paired_p_value(post.per_episode, pre.per_episode, diff);
  const double secs = seconds_since(start);
  const bool pass =
      awgn_eval.mean_ber <= kLearningBerBound && diff < 0.0 && p < kSignificance && secs < kLearningSeconds;
  return {pass, "awgn_focused_ber=" + fmt(awgn_eval.mean_ber) + " bursty_pre=" + fmt(pre.mean_ber) +
                    " bursty_post=" + fmt(post.mean_ber) + " paired_p=" + fmt(p, 3) + " episodes=" +
                    std::to_string(beps.size()) + " time=" + fmt(secs, 4) + "s"};
}

Outcome shift_crossing() {
  const auto grid = scenario("bursty-shift-low").test_points;
  const ChannelSpec lowest = grid.front(), highest = grid.back();
  const std::size_t hi_index = grid.size() - 1;
  std::string detail;
  for (const auto& learner : kCrossingLearners) {
    std::size_t crossings = 0;
    detail += " " + learner + ":";
    for (std::uint64_t seed = 0; seed < kCrossingSeeds; ++seed) {
      const Trained low = train_learner(learner, "bursty-shift-low", seed, kCrossingIterations);
      const Trained high = train_learner(learner, "bursty-shift-high", seed, kCrossingIterations);
      const auto eps_lo = test_episodes(low.cfg, lowest, 0, seed, kCrossingEpisodes);
      const auto eps_hi = test_episodes(low.cfg, highest, hi_index, seed, kCrossingEpisodes);
      const double low_at_lo = evaluate(low.state, low.cfg.meta, eps_lo, true).mean_ber;
      const double high_at_lo = evaluate(high.state, high.cfg.meta, eps_lo, true).mean_ber;
      const double low_at_hi = evaluate(low.state, low.cfg.meta, eps_hi, true).mean_ber;
      const double high_at_hi = evaluate(high.state, high.cfg.meta, eps_hi, true).mean_ber;
      const bool crossed = low_at_lo < high_at_lo && high_at_hi < low_at_hi;
      crossings += crossed;
      detail += " seed" + std::to_string(seed) + "[snr_b " + fmt(lowest.snr_b_db, 3) + ": low " + fmt(low_at_lo) +
                " high " + fmt(high_at_lo) + "; snr_b " + fmt(highest.snr_b_db, 3) + ": low " + fmt(low_at_hi) +
                " high " + fmt(high_at_hi) + "]";
      std::fprintf(stderr, "  %s seed %llu crossed=%d\n", learner.c_str(), static_cast<unsigned long long>(seed),
                   static_cast<int>(crossed));
      // Sign test over seeds: every seed must show the crossing.
      if (!crossed) break;
    }
    if (crossings == kCrossingSeeds) return {true, "learner=" + learner + detail};
  }
  return {false, "no learner crossed in all seeds" + detail};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(METACC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  return std::equal(std::istreambuf_iterator<char>(fa), std::istreambuf_iterator<char>(),
                    std::istreambuf_iterator<char>(fb), std::istreambuf_iterator<char>());
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "metacc_acceptance_determinism";
  fs::remove_all(root);
  const fs::path a = root / "a", b = root / "b";
  std::size_t compared = 0, identical = 0;
  bool ok = true;
  for (const auto& dir : {a, b}) {
    ok = ok && run_cli("gen-data --scenario bursty-focused --seed 11 --out " + dir.string()) == 0;
    ok = ok && run_cli("train --scenario bursty-focused --learner fomaml,metasgd,erm --seed 11 --iterations 3 --out " +
                       dir.string()) == 0;
  }
  if (ok) {
    for (const auto& entry : fs::directory_iterator(a)) {
      ++compared;
      identical += same_bytes(entry.path(), b / entry.path().filename());
    }
  }
  fs::remove_all(root);
  return {ok && compared >= 5 && identical == compared,
          "cli_ok=" + std::string(ok ? "yes" : "no") + " files=" + std::to_string(compared) +
              " identical=" + std::to_string(identical)};
}

Outcome aggregation() {
  const auto rows = fixture::rows();
  const WinTable w = win_table(rows, "erm");
  std::map<std::pair<std::string, std::string>, CellStatus> status;
  for (const auto& c : w.cells) status[{c.scenario, c.learner}] = c.status;
  const bool wins = status.at({"s1", "a"}) == CellStatus::kWin && status.at({"s1", "b"}) == CellStatus::kNoWin &&
                    status.at({"s1", "erm"}) == CellStatus::kNotApplicable &&
                    status.at({"s2", "a"}) == CellStatus::kNotApplicable &&
                    status.at({"s2", "b"}) == CellStatus::kNotApplicable &&
                    status.at({"s2", "erm"}) == CellStatus::kNotApplicable && w.win_percentage.at("a") == 100.0 &&
                    w.win_percentage.at("b") == 0.0 && w.win_percentage.count("erm") == 0;
  const auto r = rank_table(rows);
  auto near = [](double x, double y) { return std::abs(x - y) <= kRankTol; };
  const bool ranks = near(r.at("a").mean_rank, fixture::kRankA) && near(r.at("a").std_error, fixture::kRankAStderr) &&
                     near(r.at("b").mean_rank, fixture::kRankB) && near(r.at("b").std_error, fixture::kRankBStderr) &&
                     near(r.at("erm").mean_rank, fixture::kRankErm) &&
                     near(r.at("erm").std_error, fixture::kRankErmStderr);
  return {wins && ranks, "win_table=" + std::string(wins ? "ok" : "mismatch") + " rank_table: a " +
                             fmt(r.at("a").mean_rank) + " b " + fmt(r.at("b").mean_rank) + " erm " +
                             fmt(r.at("erm").mean_rank)};
}

const std::map<int, std::pair<std::string, std::function<Outcome()>>>& criteria() {
  static const std::map<int, std::pair<std::string, std::function<Outcome()>>> table{
      {1, {"codec oracle equivalence", codec_equivalence}},
      {2, {"noiseless identity", noiseless_identity}},
      {3, {"channel statistics", channel_statistics}},
      {4, {"information estimators vs closed forms", estimator_closed_forms}},
      {5, {"metric oracle agreement", metric_oracle_agreement}},
      {6, {"monotonicity properties", monotonicity}},
      {7, {"autodiff finite differences", autodiff}},
      {8, {"desk-scale learning", desk_learning}},
      {9, {"desk-scale shift crossing", shift_crossing}},
      {10, {"determinism", determinism}},
      {11, {"aggregation correctness", aggregation}},
  };
  return table;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      selected.push_back(std::atoi(argv[++i]));
    } else {
      std::cerr << "usage: acceptance [--only N]...\n";
      return 2;
    }
  }
  if (selected.empty()) {
    for (const auto& [n, _] : criteria()) selected.push_back(n);
  }
  int failures = 0;
  for (const int n : selected) {
    const auto it = criteria().find(n);
    if (it == criteria().end()) {
      std::cerr << "no criterion " << n << "\n";
      return 2;
    }
    Outcome o;
    try {
      o = it->second.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << "criterion " << n << " [" << it->second.first << "]: " << (o.pass ? "PASS" : "FAIL") << "  "
              << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
