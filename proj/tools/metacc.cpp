// metacc: dataset generation, training, evaluation, metrics and reports.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "metacc/bench.hpp"
#include "metacc/checkpoint.hpp"
#include "metacc/infometrics.hpp"
#include "metacc/json_io.hpp"
#include "metacc/metalearn.hpp"
#include "metacc/taskdist.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace metacc;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool desk_scale = false;
  std::string scenario;
  std::string learners;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "JSON experiment configuration");
  cmd->add_option("--seed", o.seed, "Seed (overrides the config's seed list)");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_flag("--desk-scale", o.desk_scale, "Use the reduced desk-scale iteration count");
  cmd->add_option("--scenario", o.scenario, "Scenario name");
  cmd->add_option("--learner", o.learners, "Comma-separated learner names");
}

ExperimentConfig resolve(const CommonOptions& o, bool need_learners) {
  json j = json::object();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw std::invalid_argument("cannot read config '" + o.config + "'");
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw std::invalid_argument("config '" + o.config + "' is not valid JSON: " + e.what());
    }
  }
  if (!o.scenario.empty()) j["scenario"] = o.scenario;
  if (!o.learners.empty()) j["learners"] = o.learners;
  if (o.seed) j["seeds"] = json::array({*o.seed});
  if (!o.out.empty()) j["out_dir"] = o.out;
  if (o.desk_scale) j["desk_scale"] = true;
  if (!j.contains("scenario")) throw std::invalid_argument("--scenario (or a config with \"scenario\") is required");
  if (!j.contains("learners")) {
    if (need_learners) throw std::invalid_argument("--learner (or a config with \"learners\") is required");
    j["learners"] = "viterbi";
  }
  return config_from_json(j);
}

std::string iteration_note(const ExperimentConfig& cfg) {
  return std::to_string(cfg.iterations()) + (cfg.desk_scale ? " (desk scale)" : "");
}

int cmd_gen_data(const CommonOptions& o) {
  const ExperimentConfig cfg = resolve(o, false);
  const Scenario sc = scenario(cfg.scenario);
  const auto points = resolved_test_points(cfg, sc);
  fs::create_directories(cfg.out_dir);
  for (const std::uint64_t seed : cfg.seeds) {
    const std::string tag = cfg.scenario + "-seed" + std::to_string(seed);
    const fs::path train_path = cfg.out_dir / (tag + "-meta-train.mcc");
    save_dataset(experiment_train_dataset(cfg, seed), train_path);
    std::cout << "wrote " << train_path.string() << "\n";
    for (std::size_t t = 0; t < points.size(); ++t) {
      const fs::path test_path = cfg.out_dir / (tag + "-meta-test-" + std::to_string(t) + ".mcc");
      save_dataset(experiment_test_dataset(points[t], t, seed), test_path);
      std::cout << "wrote " << test_path.string() << "  " << to_string(points[t]) << "\n";
    }
  }
  return 0;
}

int cmd_train(const CommonOptions& o, const std::string& data_path, std::optional<std::size_t> iterations) {
  ExperimentConfig cfg = resolve(o, true);
  if (iterations) {
    cfg.desk_scale = false;
    cfg.meta.meta_iterations = *iterations;
  }
  fs::create_directories(cfg.out_dir);
  for (const std::uint64_t seed : cfg.seeds) {
    const BenchmarkDataset ds = data_path.empty() ? experiment_train_dataset(cfg, seed) : load_dataset(data_path);
    for (const auto& learner : cfg.learners) {
      if (learner == "viterbi") {
        std::cerr << "skipping viterbi (no parameters to train)\n";
        continue;
      }
      MetaConfig mc = cfg.meta;
      mc.algorithm = algorithm_from_name(learner);
      MetaState state = init_state(mc, seed);
      std::cerr << "training " << learner << " seed " << seed << " for " << iteration_note(cfg) << " iterations\n";
      const std::size_t total = cfg.iterations();
      meta_train(state, mc, ds, total, seed, [&](std::uint64_t it, double) {
        if (it % 100 == 0 || it == total) std::cerr << "  iteration " << it << "/" << total << "\n";
      });
      Checkpoint ckpt = state.to_checkpoint(mc);
      ckpt.meta["scenario"] = cfg.scenario;
      ckpt.meta["seed"] = seed;
      ckpt.meta["inner_lr"] = mc.inner_lr;
      ckpt.meta["inner_steps"] = mc.inner_steps;
      const fs::path path = cfg.out_dir / (learner + "-" + cfg.scenario + "-seed" + std::to_string(seed) + ".ckpt");
      save_checkpoint(ckpt, path);
      std::cout << "wrote " << path.string() << "\n";
    }
  }
  return 0;
}

int cmd_eval_checkpoint(const CommonOptions& o, const std::string& ckpt_path) {
  ExperimentConfig cfg = resolve(o, false);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  MetaConfig mc = cfg.meta;
  mc.algorithm = algorithm_from_name(ckpt.meta.at("algorithm").get<std::string>());
  mc.inner_lr = ckpt.meta.value("inner_lr", mc.inner_lr);
  mc.inner_steps = ckpt.meta.value("inner_steps", mc.inner_steps);
  const MetaState state = MetaState::from_checkpoint(ckpt);
  const Scenario sc = scenario(cfg.scenario);
  const auto points = resolved_test_points(cfg, sc);
  const std::uint64_t seed = cfg.seeds.front();

  ExperimentResult result;
  const TaskDistributionSpec train_spec = resolved_train_spec(cfg, sc);
  const std::string digest = spec_digest(train_spec);
  result.specs[digest] = train_spec;
  for (std::size_t t = 0; t < points.size(); ++t) {
    const auto episodes = experiment_episodes(experiment_test_dataset(points[t], t, seed), cfg, t, seed);
    const EvalResult r = evaluate(state, mc, episodes, true);
    ResultRow row;
    row.scenario = cfg.scenario;
    row.learner = std::string(algorithm_name(mc.algorithm));
    row.seed = seed;
    row.train_digest = digest;
    row.test_point = json(points[t]).dump();
    row.ber = r.mean_ber;
    row.std_error = r.std_error;
    row.episode_bers = r.per_episode;
    std::cout << to_string(points[t]) << "  BER " << r.mean_ber << " +- " << r.std_error << "\n";
    result.rows.push_back(std::move(row));
  }
  fs::create_directories(cfg.out_dir);
  std::ofstream(cfg.out_dir / "results.csv") << rows_to_csv(result.rows);
  return 0;
}

int cmd_eval(const CommonOptions& o, const std::string& ckpt_path, const std::string& baseline) {
  if (!ckpt_path.empty()) return cmd_eval_checkpoint(o, ckpt_path);
  const ExperimentConfig cfg = resolve(o, true);
  std::cerr << "running " << cfg.scenario << " with " << cfg.learners.size() << " learner(s), "
            << cfg.seeds.size() << " seed(s), " << iteration_note(cfg) << " iterations\n";
  const ExperimentResult result = run_experiment(cfg);
  emit_reports(result, cfg.out_dir, baseline);
  for (const auto& r : result.rows) {
    std::cout << r.learner << " seed " << r.seed << "  " << r.test_point << "  BER " << r.ber << " +- " << r.std_error
              << "\n";
  }
  std::cout << "reports in " << cfg.out_dir.string() << "\n";
  return 0;
}

int cmd_metrics(const CommonOptions& o, const std::string& kind, const MetricBudget& budget, bool oracle) {
  ExperimentConfig cfg = resolve(o, false);
  const Scenario sc = scenario(cfg.scenario);
  const TaskDistributionSpec train = resolved_train_spec(cfg, sc);
  const auto points = resolved_test_points(cfg, sc);
  const std::uint64_t seed = cfg.seeds.front();
  const Rng root(seed);
  json rows = json::array();
  auto emit = [&](const std::string& label, const MetricEstimate& e) {
    json row = metric_row(label, e, seed);
    rows.push_back(row);
    std::cout << row.dump() << "\n";
  };
  if (kind == "diversity") {
    emit(cfg.scenario, diversity_score(train, budget, root.split(4)));
    if (oracle) {
      OracleBudget ob;
      ob.codewords = budget.codewords;
      ob.samples = budget.samples;
      emit(cfg.scenario, mc_mi_oracle(train, ob, root.split(6)));
    }
  } else {
    for (std::size_t t = 0; t < points.size(); ++t) {
      const auto test = TaskDistributionSpec::point(points[t]);
      const std::string label = cfg.scenario + " -> " + to_string(points[t]);
      emit(label, shift_distance(train, test, budget, ShiftMode::kSymmetric, root.split(5).split(t)));
      if (oracle) {
        OracleBudget ob;
        ob.codewords = budget.codewords;
        ob.samples = budget.samples;
        emit(label, mc_kl_oracle(train, test, ob, ShiftMode::kSymmetric, root.split(7).split(t)));
      }
    }
  }
  if (!o.out.empty()) {
    fs::create_directories(cfg.out_dir);
    std::ofstream(cfg.out_dir / ("metrics-" + kind + ".json")) << rows.dump(2) << "\n";
  }
  return 0;
}

int cmd_report(const CommonOptions& o, const std::string& results_path, const std::string& baseline) {
  const fs::path out = o.out.empty() ? fs::path(results_path).parent_path() : fs::path(o.out);
  std::ifstream in(results_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read results '" + results_path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  ExperimentResult result;
  result.rows = rows_from_csv(buf.str());
  for (const auto& r : result.rows) {
    try {
      const auto spec = scenario(r.scenario).train;
      if (spec_digest(spec) == r.train_digest) result.specs[r.train_digest] = spec;
    } catch (const std::invalid_argument&) {
    }
  }
  emit_reports(result, out.empty() ? fs::path(".") : out, baseline);
  std::cout << summary_json(result, baseline).dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metacc: meta-learned channel decoders and task-distribution metrics"};
  app.require_subcommand(1);

  CommonOptions gen_opts, train_opts, eval_opts, metrics_opts, report_opts;
  auto* gen = app.add_subcommand("gen-data", "Generate meta-train and meta-test datasets");
  add_common(gen, gen_opts);

  auto* train = app.add_subcommand("train", "Meta-train learners and write checkpoints");
  add_common(train, train_opts);
  std::string data_path;
  std::optional<std::size_t> iterations;
  train->add_option("--data", data_path, "Train on an existing dataset file");
  train->add_option("--iterations", iterations, "Override the number of meta-iterations");

  auto* eval = app.add_subcommand("eval", "Run an experiment (or evaluate one checkpoint) and write reports");
  add_common(eval, eval_opts);
  std::string ckpt_path, eval_baseline = "erm";
  eval->add_option("--checkpoint", ckpt_path, "Evaluate this checkpoint on the scenario's test points");
  eval->add_option("--baseline", eval_baseline, "Baseline learner for the win table");

  auto* metrics = app.add_subcommand("metrics", "Diversity score or shift distance of a scenario");
  add_common(metrics, metrics_opts);
  std::string kind;
  MetricBudget budget;
  bool oracle = false;
  metrics->add_option("kind", kind, "diversity | shift")->required()->check(CLI::IsMember({"diversity", "shift"}));
  metrics->add_option("--codewords", budget.codewords, "Codeword replicates");
  metrics->add_option("--samples", budget.samples, "Samples per codeword");
  metrics->add_option("--k", budget.k, "Nearest neighbors");
  metrics->add_flag("--oracle", oracle, "Also report the Monte-Carlo density oracle");

  auto* report = app.add_subcommand("report", "Rebuild summary.json and plot data from results.csv");
  add_common(report, report_opts);
  std::string results_path, report_baseline = "erm";
  report->add_option("--results", results_path, "results.csv to aggregate")->required();
  report->add_option("--baseline", report_baseline, "Baseline learner for the win table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(gen_opts);
    if (*train) return cmd_train(train_opts, data_path, iterations);
    if (*eval) return cmd_eval(eval_opts, ckpt_path, eval_baseline);
    if (*metrics) return cmd_metrics(metrics_opts, kind, budget, oracle);
    if (*report) return cmd_report(report_opts, results_path, report_baseline);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
