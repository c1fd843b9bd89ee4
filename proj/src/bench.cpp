#include "metacc/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <boost/math/distributions/students_t.hpp>

#include "metacc/json_io.hpp"
#include "metacc/parallel.hpp"

namespace metacc {

using nlohmann::json;

namespace {

constexpr std::string_view kViterbi = "viterbi";

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::runtime_error("results csv: bad number '" + std::string(s) + "'");
  }
  return v;
}

std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::runtime_error("results csv: bad integer '" + std::string(s) + "'");
  }
  return v;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string csv_line(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv_field(fields[i]);
  }
  return out + "\n";
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n') {
      record.push_back(std::move(field));
      field.clear();
      records.push_back(std::move(record));
      record.clear();
      any = false;
    } else if (c != '\r') {
      field += c;
      any = true;
    }
  }
  if (quoted) throw std::runtime_error("results csv: unterminated quoted field");
  if (any) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  return records;
}

std::string join_doubles(std::span<const double> v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += format_double(v[i]);
  }
  return out;
}

std::vector<double> split_doubles(std::string_view s) {
  std::vector<double> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = s.find(';', start);
    out.push_back(parse_double(s.substr(start, end - start)));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (const double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v, double mean) {
  double ss = 0.0;
  for (const double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

std::vector<std::string> split_names(const json& j) {
  std::vector<std::string> out;
  if (j.is_string()) {
    std::stringstream ss(j.get<std::string>());
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }
  return j.get<std::vector<std::string>>();
}

void reject_unknown(const json& j, std::initializer_list<std::string_view> known, std::string_view where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("unknown key '" + key + "' in " + std::string(where));
    }
  }
}

ChannelSpec noiseless(ChannelSpec s) {
  s.snr_db = kNoiselessSnrDb;
  if (s.family == Family::kBursty) s.snr_b_db = kNoiselessSnrDb;
  return s;
}

std::set<Family> families_of(const TaskDistributionSpec& spec) {
  std::set<Family> out;
  for (const auto& c : spec.components) {
    if (c.weight > 0.0) out.insert(c.family);
  }
  return out;
}

}  // namespace

std::vector<std::string> learner_names() {
  auto out = algorithm_names();
  out.emplace_back(kViterbi);
  return out;
}

void ExperimentConfig::validate() const {
  (void)metacc::scenario(scenario);
  if (learners.empty()) throw std::invalid_argument("experiment needs at least one learner");
  const auto valid = learner_names();
  for (const auto& l : learners) {
    if (std::find(valid.begin(), valid.end(), l) == valid.end()) {
      std::string names;
      for (const auto& v : valid) names += (names.empty() ? "" : ", ") + v;
      throw std::invalid_argument("unknown learner '" + l + "' (valid: " + names + ")");
    }
  }
  if (seeds.empty()) throw std::invalid_argument("experiment needs at least one seed");
  if (eval_episodes == 0) throw std::invalid_argument("eval_episodes must be >= 1");
  if (desk_scale && desk_iterations == 0) throw std::invalid_argument("desk_iterations must be >= 1");
  if (train_override) train_override->validate();
  if (test_points_override) {
    if (test_points_override->empty()) throw std::invalid_argument("test_points must not be empty");
    for (const auto& tp : *test_points_override) tp.validate();
  }
  meta.validate();
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("experiment config must be a JSON object");
  reject_unknown(j,
                 {"scenario", "learners", "meta", "seeds", "out_dir", "desk_scale", "desk_iterations",
                  "eval_episodes", "metrics", "noiseless", "cross_family_eval", "train", "test_points",
                  "train_counts"},
                 "experiment config");
  ExperimentConfig cfg;
  cfg.scenario = j.at("scenario").get<std::string>();
  cfg.learners = split_names(j.at("learners"));
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    cfg.seeds = s.is_array() ? s.get<std::vector<std::uint64_t>>() : std::vector<std::uint64_t>{s.get<std::uint64_t>()};
  }
  if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
  cfg.desk_scale = j.value("desk_scale", cfg.desk_scale);
  cfg.desk_iterations = j.value("desk_iterations", cfg.desk_iterations);
  cfg.eval_episodes = j.value("eval_episodes", cfg.eval_episodes);
  cfg.noiseless = j.value("noiseless", cfg.noiseless);
  cfg.cross_family_eval = j.value("cross_family_eval", cfg.cross_family_eval);
  if (j.contains("metrics")) {
    const auto& m = j.at("metrics");
    if (m.is_boolean()) {
      cfg.metrics = m.get<bool>();
    } else {
      reject_unknown(m, {"enabled", "codewords", "samples", "k"}, "metrics");
      cfg.metrics = m.value("enabled", true);
      cfg.metric_budget.codewords = m.value("codewords", cfg.metric_budget.codewords);
      cfg.metric_budget.samples = m.value("samples", cfg.metric_budget.samples);
      cfg.metric_budget.k = m.value("k", cfg.metric_budget.k);
    }
  }
  if (j.contains("meta")) {
    const auto& m = j.at("meta");
    reject_unknown(m, {"outer_lr", "inner_lr", "inner_steps", "meta_batch", "meta_iterations", "erm_batch", "episode"},
                   "meta");
    auto& mc = cfg.meta;
    mc.outer_lr = m.value("outer_lr", mc.outer_lr);
    mc.inner_lr = m.value("inner_lr", mc.inner_lr);
    mc.inner_steps = m.value("inner_steps", mc.inner_steps);
    mc.meta_batch = m.value("meta_batch", mc.meta_batch);
    mc.meta_iterations = m.value("meta_iterations", mc.meta_iterations);
    mc.erm_batch = m.value("erm_batch", mc.erm_batch);
    if (m.contains("episode")) {
      const auto& e = m.at("episode");
      reject_unknown(e, {"n_way", "k_shot", "l_query"}, "meta.episode");
      mc.episode.n_way = e.value("n_way", mc.episode.n_way);
      mc.episode.k_shot = e.value("k_shot", mc.episode.k_shot);
      mc.episode.l_query = e.value("l_query", mc.episode.l_query);
    }
  }
  if (j.contains("train")) cfg.train_override = j.at("train").get<TaskDistributionSpec>();
  if (j.contains("test_points")) cfg.test_points_override = j.at("test_points").get<std::vector<ChannelSpec>>();
  if (j.contains("train_counts")) {
    const auto& c = j.at("train_counts");
    reject_unknown(c, {"setups", "messages", "examples"}, "train_counts");
    cfg.train_counts = DatasetCounts{c.at("setups").get<std::size_t>(), c.at("messages").get<std::size_t>(),
                                     c.at("examples").get<std::size_t>()};
  }
  cfg.validate();
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  const auto& mc = cfg.meta;
  json j{{"scenario", cfg.scenario},
         {"learners", cfg.learners},
         {"seeds", cfg.seeds},
         {"out_dir", cfg.out_dir.string()},
         {"desk_scale", cfg.desk_scale},
         {"desk_iterations", cfg.desk_iterations},
         {"eval_episodes", cfg.eval_episodes},
         {"noiseless", cfg.noiseless},
         {"cross_family_eval", cfg.cross_family_eval},
         {"metrics",
          {{"enabled", cfg.metrics},
           {"codewords", cfg.metric_budget.codewords},
           {"samples", cfg.metric_budget.samples},
           {"k", cfg.metric_budget.k}}},
         {"meta",
          {{"outer_lr", mc.outer_lr},
           {"inner_lr", mc.inner_lr},
           {"inner_steps", mc.inner_steps},
           {"meta_batch", mc.meta_batch},
           {"meta_iterations", mc.meta_iterations},
           {"erm_batch", mc.erm_batch},
           {"episode", {{"n_way", mc.episode.n_way}, {"k_shot", mc.episode.k_shot}, {"l_query", mc.episode.l_query}}}}}};
  if (cfg.train_override) j["train"] = *cfg.train_override;
  if (cfg.test_points_override) j["test_points"] = *cfg.test_points_override;
  if (cfg.train_counts) {
    j["train_counts"] = {{"setups", cfg.train_counts->setups},
                         {"messages", cfg.train_counts->messages},
                         {"examples", cfg.train_counts->examples}};
  }
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::string spec_digest(const TaskDistributionSpec& spec) {
  const std::string text = json(spec).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TaskDistributionSpec resolved_train_spec(const ExperimentConfig& cfg, const Scenario& sc) {
  return cfg.train_override ? *cfg.train_override : sc.train;
}

std::vector<ChannelSpec> resolved_test_points(const ExperimentConfig& cfg, const Scenario& sc) {
  std::vector<ChannelSpec> points = cfg.test_points_override ? *cfg.test_points_override : sc.test_points;
  if (cfg.cross_family_eval) {
    const auto trained = families_of(resolved_train_spec(cfg, sc));
    for (const Family f : kAllFamilies) {
      if (trained.count(f)) continue;
      const Scenario other = metacc::scenario(std::string(family_name(f)) + "-focused");
      points.insert(points.end(), other.test_points.begin(), other.test_points.end());
    }
  }
  if (cfg.noiseless) {
    for (auto& p : points) p = noiseless(p);
  }
  return points;
}

BenchmarkDataset experiment_train_dataset(const ExperimentConfig& cfg, std::uint64_t seed) {
  const Scenario sc = metacc::scenario(cfg.scenario);
  const DatasetCounts counts = cfg.train_counts.value_or(sc.train_counts.value_or(DatasetCounts::meta_train()));
  return build_dataset(resolved_train_spec(cfg, sc), counts,
                       Role::kMetaTrain, Rng(seed).split(1).next_u64());
}

BenchmarkDataset experiment_test_dataset(const ChannelSpec& point, std::size_t index, std::uint64_t seed) {
  const DatasetCounts counts = DatasetCounts::meta_test();
  return build_dataset_from_setups(std::vector<ChannelSpec>(counts.setups, point), counts, Role::kMetaTest,
                                   Rng(seed).split(2).split(index).next_u64());
}

std::vector<Episode> experiment_episodes(const BenchmarkDataset& test_ds, const ExperimentConfig& cfg,
                                         std::size_t index, std::uint64_t seed) {
  Rng rng = Rng(seed).split(3).split(index);
  std::vector<Episode> out;
  out.reserve(cfg.eval_episodes);
  for (std::size_t e = 0; e < cfg.eval_episodes; ++e) out.push_back(sample_episode(test_ds, cfg.meta.episode, rng));
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  using clock = std::chrono::steady_clock;
  cfg.validate();
  const Scenario sc = metacc::scenario(cfg.scenario);
  const TaskDistributionSpec train_spec = resolved_train_spec(cfg, sc);
  const std::vector<ChannelSpec> points = resolved_test_points(cfg, sc);
  const std::string digest = spec_digest(train_spec);

  ExperimentResult result;
  result.specs[digest] = train_spec;
  const bool needs_training =
      std::any_of(cfg.learners.begin(), cfg.learners.end(), [](const std::string& l) { return l != kViterbi; });
  for (const std::uint64_t seed : cfg.seeds) {
    const Rng root(seed);
    const BenchmarkDataset train_ds = needs_training ? experiment_train_dataset(cfg, seed) : BenchmarkDataset{};

    std::vector<std::vector<Episode>> episodes(points.size());
    std::vector<double> shift(points.size(), 0.0);
    for (std::size_t t = 0; t < points.size(); ++t) {
      episodes[t] = experiment_episodes(experiment_test_dataset(points[t], t, seed), cfg, t, seed);
      if (cfg.metrics) {
        shift[t] = shift_distance(train_spec, TaskDistributionSpec::point(points[t]), cfg.metric_budget,
                                  ShiftMode::kSymmetric, root.split(5).split(t))
                       .value;
      }
    }
    const double diversity = cfg.metrics ? diversity_score(train_spec, cfg.metric_budget, root.split(4)).value : 0.0;

    std::vector<std::vector<ResultRow>> per_learner(cfg.learners.size());
    parallel_for(cfg.learners.size(), [&](std::size_t li) {
      const std::string& learner = cfg.learners[li];
      const auto start = clock::now();
      std::optional<MetaState> state;
      MetaConfig mc = cfg.meta;
      if (learner != kViterbi) {
        mc.algorithm = algorithm_from_name(learner);
        state = init_state(mc, seed);
        meta_train(*state, mc, train_ds, cfg.iterations(), seed);
      }
      const double train_time = std::chrono::duration<double>(clock::now() - start).count();
      for (std::size_t t = 0; t < points.size(); ++t) {
        const auto eval_start = clock::now();
        const EvalResult r = state ? evaluate(*state, mc, episodes[t], true) : evaluate_viterbi(episodes[t]);
        ResultRow row;
        row.scenario = cfg.scenario;
        row.learner = learner;
        row.seed = seed;
        row.train_digest = digest;
        row.test_point = json(points[t]).dump();
        row.ber = r.mean_ber;
        row.std_error = r.std_error;
        row.wall_time_s = train_time + std::chrono::duration<double>(clock::now() - eval_start).count();
        row.diversity = diversity;
        row.shift_distance = shift[t];
        row.episode_bers = r.per_episode;
        per_learner[li].push_back(std::move(row));
      }
    });
    for (auto& rows : per_learner) {
      for (auto& r : rows) result.rows.push_back(std::move(r));
    }
  }
  return result;
}

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("welch_t_test: each sample needs >= 2 values");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double ma = mean_of(a), mb = mean_of(b);
  const double va = sample_variance(a, ma) / na, vb = sample_variance(b, mb) / nb;
  const double se2 = va + vb;
  WelchResult r;
  if (se2 == 0.0) {
    r.df = na + nb - 2.0;
    if (ma == mb) {
      r.t = 0.0;
      r.p_value = 1.0;
    } else {
      r.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      r.p_value = 0.0;
    }
    return r;
  }
  r.t = (ma - mb) / std::sqrt(se2);
  r.df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  const boost::math::students_t dist(r.df);
  r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))));
  return r;
}

std::string_view status_name(CellStatus s) {
  switch (s) {
    case CellStatus::kWin: return "win";
    case CellStatus::kNoWin: return "no-win";
    case CellStatus::kNotApplicable: return "N/A";
  }
  return "unknown";
}

WinTable win_table(const std::vector<ResultRow>& rows, const std::string& baseline) {
  struct Pool {
    std::set<std::uint64_t> seeds;
    std::vector<double> bers;
  };
  std::map<std::string, std::map<std::string, Pool>> pools;  // scenario -> learner
  for (const auto& r : rows) {
    auto& p = pools[r.scenario][r.learner];
    p.seeds.insert(r.seed);
    p.bers.insert(p.bers.end(), r.episode_bers.begin(), r.episode_bers.end());
  }
  WinTable table;
  table.baseline = baseline;
  std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // learner -> (wins, applicable)
  for (auto& [scenario, learners] : pools) {
    for (auto& [_, p] : learners) std::sort(p.bers.begin(), p.bers.end());
    const auto base = learners.find(baseline);
    for (const auto& [learner, p] : learners) {
      WinCell cell;
      cell.scenario = scenario;
      cell.learner = learner;
      if (!p.bers.empty()) cell.mean_learner = mean_of(p.bers);
      const bool usable = learner != baseline && base != learners.end() && p.seeds.size() >= 2 &&
                          base->second.seeds.size() >= 2 && p.bers.size() >= 2 && base->second.bers.size() >= 2;
      if (base != learners.end() && !base->second.bers.empty()) cell.mean_baseline = mean_of(base->second.bers);
      if (usable) {
        const WelchResult w = welch_t_test(p.bers, base->second.bers);
        cell.p_value = w.p_value;
        cell.status = cell.mean_learner < cell.mean_baseline && w.p_value < 0.05 ? CellStatus::kWin : CellStatus::kNoWin;
        auto& t = tally[learner];
        t.first += cell.status == CellStatus::kWin;
        t.second += 1;
      }
      table.cells.push_back(cell);
    }
  }
  for (const auto& [learner, t] : tally) {
    table.win_percentage[learner] = 100.0 * static_cast<double>(t.first) / static_cast<double>(t.second);
  }
  return table;
}

std::map<std::string, RankEntry> rank_table(const std::vector<ResultRow>& rows) {
  using CellKey = std::tuple<std::string, std::uint64_t, std::string>;
  std::map<CellKey, std::map<std::string, double>> cells;
  for (const auto& r : rows) cells[{r.scenario, r.seed, r.test_point}][r.learner] = r.ber;

  std::map<std::string, std::vector<double>> ranks;
  for (const auto& [_, entries] : cells) {
    std::vector<std::pair<double, std::string>> sorted;
    for (const auto& [learner, ber] : entries) sorted.emplace_back(ber, learner);
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j < sorted.size() && sorted[j].first == sorted[i].first) ++j;
      const double shared = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
      for (std::size_t q = i; q < j; ++q) ranks[sorted[q].second].push_back(shared);
      i = j;
    }
  }
  std::map<std::string, RankEntry> out;
  for (const auto& [learner, r] : ranks) {
    RankEntry e;
    e.cells = r.size();
    e.mean_rank = mean_of(r);
    if (r.size() > 1) e.std_error = std::sqrt(sample_variance(r, e.mean_rank) / static_cast<double>(r.size()));
    out[learner] = e;
  }
  return out;
}

const std::vector<std::string>& csv_header() {
  static const std::vector<std::string> header{"scenario", "learner",     "seed",      "train_digest",
                                               "test_point", "ber",       "stderr",    "wall_time_s",
                                               "diversity",  "shift_distance", "episode_bers"};
  return header;
}

std::string rows_to_csv(const std::vector<ResultRow>& rows) {
  std::string out = csv_line(csv_header());
  for (const auto& r : rows) {
    out += csv_line({r.scenario, r.learner, std::to_string(r.seed), r.train_digest, r.test_point,
                     format_double(r.ber), format_double(r.std_error), format_double(r.wall_time_s),
                     format_double(r.diversity), format_double(r.shift_distance), join_doubles(r.episode_bers)});
  }
  return out;
}

std::vector<ResultRow> rows_from_csv(std::string_view text) {
  const auto records = parse_csv(text);
  if (records.empty() || records.front() != csv_header()) throw std::runtime_error("results csv: unexpected header");
  std::vector<ResultRow> rows;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& f = records[i];
    if (f.size() != csv_header().size()) {
      throw std::runtime_error("results csv: line " + std::to_string(i + 1) + " has " + std::to_string(f.size()) +
                               " fields");
    }
    ResultRow r;
    r.scenario = f[0];
    r.learner = f[1];
    r.seed = parse_u64(f[2]);
    r.train_digest = f[3];
    r.test_point = f[4];
    r.ber = parse_double(f[5]);
    r.std_error = parse_double(f[6]);
    r.wall_time_s = parse_double(f[7]);
    r.diversity = parse_double(f[8]);
    r.shift_distance = parse_double(f[9]);
    r.episode_bers = split_doubles(f[10]);
    rows.push_back(std::move(r));
  }
  return rows;
}

json summary_json(const ExperimentResult& result, const std::string& baseline) {
  const WinTable wins = win_table(result.rows, baseline);
  json cells = json::array();
  for (const auto& c : wins.cells) {
    cells.push_back({{"scenario", c.scenario},
                     {"learner", c.learner},
                     {"status", status_name(c.status)},
                     {"p_value", c.p_value},
                     {"mean_ber", c.mean_learner},
                     {"baseline_mean_ber", c.mean_baseline}});
  }
  json ranks = json::object();
  for (const auto& [learner, e] : rank_table(result.rows)) {
    ranks[learner] = {{"mean_rank", e.mean_rank}, {"stderr", e.std_error}, {"cells", e.cells}};
  }
  json specs = json::object();
  for (const auto& [digest, spec] : result.specs) specs[digest] = spec;
  return {{"baseline", baseline},
          {"significance", "two-sided Welch t-test on per-episode BER, win iff lower mean and p < 0.05"},
          {"gain_convention", "gain = BER(erm) - BER(learner); positive means the learner beats ERM"},
          {"win_table", {{"cells", cells}, {"win_percentage", wins.win_percentage}}},
          {"rank_table", ranks},
          {"train_specs", specs},
          {"rows", result.rows.size()}};
}

void emit_reports(const ExperimentResult& result, const std::filesystem::path& dir, const std::string& baseline) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "plotdata", ec);
  if (ec) throw std::runtime_error("cannot create report directory '" + dir.string() + "': " + ec.message());
  write_text(dir / "results.csv", rows_to_csv(result.rows));
  write_text(dir / "summary.json", summary_json(result, baseline).dump(2) + "\n");

  std::map<std::tuple<std::string, std::uint64_t, std::string>, double> erm;
  for (const auto& r : result.rows) {
    if (r.learner == "erm") erm[{r.scenario, r.seed, r.test_point}] = r.ber;
  }
  auto test_spec = [](const ResultRow& r) { return json::parse(r.test_point).get<ChannelSpec>(); };

  std::string breadth = csv_line({"scenario", "learner", "seed", "test_point", "ber", "stderr"});
  std::string within = csv_line({"scenario", "learner", "seed", "test_point", "test_snr_db", "test_snr_b_db",
                                 "shift_distance", "ber"});
  std::string across = within;
  std::string diversity_gain = csv_line({"scenario", "learner", "seed", "test_point", "diversity", "gain"});
  std::string distance_gain = csv_line({"scenario", "learner", "seed", "test_point", "shift_distance", "gain"});
  std::string domain_count = csv_line({"scenario", "domains", "learner", "seed", "test_point", "ber"});

  for (const auto& r : result.rows) {
    const ChannelSpec tp = test_spec(r);
    breadth += csv_line({r.scenario, r.learner, std::to_string(r.seed), r.test_point, format_double(r.ber),
                         format_double(r.std_error)});
    const auto spec_it = result.specs.find(r.train_digest);
    const bool same_family = spec_it == result.specs.end() || families_of(spec_it->second).count(tp.family) > 0;
    (same_family ? within : across) +=
        csv_line({r.scenario, r.learner, std::to_string(r.seed), r.test_point, format_double(tp.snr_db),
                  format_double(tp.snr_b_db), format_double(r.shift_distance), format_double(r.ber)});
    const auto base = erm.find({r.scenario, r.seed, r.test_point});
    if (r.learner != "erm" && base != erm.end()) {
      const double gain = base->second - r.ber;
      diversity_gain += csv_line({r.scenario, r.learner, std::to_string(r.seed), r.test_point,
                                  format_double(r.diversity), format_double(gain)});
      distance_gain += csv_line({r.scenario, r.learner, std::to_string(r.seed), r.test_point,
                                 format_double(r.shift_distance), format_double(gain)});
    }
    if (r.scenario.rfind("domain-count-", 0) == 0) {
      try {
        const Scenario sc = metacc::scenario(r.scenario);
        if (sc.train_counts) {
          domain_count += csv_line({r.scenario, std::to_string(sc.train_counts->setups), r.learner,
                                    std::to_string(r.seed), r.test_point, format_double(r.ber)});
        }
      } catch (const std::invalid_argument&) {
      }
    }
  }
  const auto plot = dir / "plotdata";
  write_text(plot / "breadth.csv", breadth);
  write_text(plot / "shift-within.csv", within);
  write_text(plot / "shift-across.csv", across);
  write_text(plot / "diversity-gain.csv", diversity_gain);
  write_text(plot / "distance-gain.csv", distance_gain);
  write_text(plot / "domain-count.csv", domain_count);
}

}  // namespace metacc
