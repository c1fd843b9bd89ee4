#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "metacc/infometrics.hpp"
#include "metacc/metalearn.hpp"
#include "metacc/taskdist.hpp"

namespace metacc {

/// Learner names accepted by experiments: the meta-learners, ERM, and "viterbi".
std::vector<std::string> learner_names();

/// SNR used for the noiseless variant of test points.
inline constexpr double kNoiselessSnrDb = 300.0;

struct ExperimentConfig {
  std::string scenario;
  std::vector<std::string> learners;
  MetaConfig meta;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out_dir = "metacc-out";
  bool desk_scale = false;
  /// Meta-iterations used instead of meta.meta_iterations when desk_scale is set.
  std::size_t desk_iterations = 500;
  std::size_t eval_episodes = 100;
  bool metrics = true;
  MetricBudget metric_budget;
  /// Replace every test point by its noise-free counterpart.
  bool noiseless = false;
  /// Also evaluate at the test points of families absent from the training prior.
  bool cross_family_eval = false;
  std::optional<TaskDistributionSpec> train_override;
  std::optional<std::vector<ChannelSpec>> test_points_override;
  /// Meta-train grid; defaults to the scenario's grid.
  std::optional<DatasetCounts> train_counts;

  void validate() const;
  std::size_t iterations() const { return desk_scale ? desk_iterations : meta.meta_iterations; }
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

struct ResultRow {
  std::string scenario;
  std::string learner;
  std::uint64_t seed = 0;
  std::string train_digest;
  std::string test_point;  // compact JSON of the test channel
  double ber = 0.0;
  double std_error = 0.0;
  double wall_time_s = 0.0;
  double diversity = 0.0;
  double shift_distance = 0.0;
  std::vector<double> episode_bers;

  bool operator==(const ResultRow&) const = default;
};

/// Short hex digest of the canonical JSON of a task prior.
std::string spec_digest(const TaskDistributionSpec& spec);

struct ExperimentResult {
  std::vector<ResultRow> rows;
  /// digest -> prior, for every train spec referenced by the rows.
  std::map<std::string, TaskDistributionSpec> specs;
};

/// Dataset and episode derivation used by run_experiment (stream-split from the seed).
BenchmarkDataset experiment_train_dataset(const ExperimentConfig& cfg, std::uint64_t seed);
BenchmarkDataset experiment_test_dataset(const ChannelSpec& point, std::size_t index, std::uint64_t seed);
std::vector<Episode> experiment_episodes(const BenchmarkDataset& test_ds, const ExperimentConfig& cfg,
                                         std::size_t index, std::uint64_t seed);

/// Datasets, training, evaluation and metric annotation for every (learner, seed).
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Test points actually evaluated for a configuration.
std::vector<ChannelSpec> resolved_test_points(const ExperimentConfig& cfg, const Scenario& sc);
TaskDistributionSpec resolved_train_spec(const ExperimentConfig& cfg, const Scenario& sc);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};
/// Two-sided Welch t-test.
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

enum class CellStatus { kWin, kNoWin, kNotApplicable };

struct WinCell {
  std::string scenario;
  std::string learner;
  CellStatus status = CellStatus::kNotApplicable;
  double p_value = 1.0;
  double mean_learner = 0.0;
  double mean_baseline = 0.0;
};

struct WinTable {
  std::string baseline;
  std::vector<WinCell> cells;
  /// learner -> percentage of applicable scenarios won (absent if none applicable).
  std::map<std::string, double> win_percentage;
};

/// Per (scenario, learner): Welch test of pooled per-episode BERs against the
/// baseline; a win needs a lower mean and p < 0.05. Fewer than 2 seeds on
/// either side, or the baseline itself, is N/A.
WinTable win_table(const std::vector<ResultRow>& rows, const std::string& baseline);

struct RankEntry {
  double mean_rank = 0.0;
  double std_error = 0.0;
  std::size_t cells = 0;
};

/// Ranks learners by BER within each (scenario, seed, test point); ties share the mean rank.
std::map<std::string, RankEntry> rank_table(const std::vector<ResultRow>& rows);

std::string_view status_name(CellStatus s);

// results.csv with a fixed header; doubles are written in shortest round-trip form.
std::string rows_to_csv(const std::vector<ResultRow>& rows);
std::vector<ResultRow> rows_from_csv(std::string_view text);
const std::vector<std::string>& csv_header();

nlohmann::json summary_json(const ExperimentResult& result, const std::string& baseline);

/// Writes results.csv, summary.json and plotdata/*.csv under `dir`.
void emit_reports(const ExperimentResult& result, const std::filesystem::path& dir,
                  const std::string& baseline = "erm");

}  // namespace metacc
