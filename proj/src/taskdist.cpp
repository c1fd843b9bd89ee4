#include "metacc/taskdist.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "metacc/binary_io.hpp"
#include "metacc/json_io.hpp"
#include "metacc/parallel.hpp"

namespace metacc {

namespace {

constexpr char kDatasetMagic[4] = {'M', 'C', 'C', '1'};
constexpr int kDatasetVersion = 1;

void check_range(const ParamRange& r, const char* what) {
  if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi) {
    throw std::invalid_argument(std::string("invalid range for ") + what + ": [" + std::to_string(r.lo) + ", " +
                                std::to_string(r.hi) + "]");
  }
}

ChannelSpec spec_at_lower_corner(const TaskComponent& c) {
  return ChannelSpec{c.family, c.snr_db.lo, c.snr_b_db.lo, c.alpha.lo, c.beta.lo};
}

/// Distinct uniform K-bit messages.
std::vector<MessageBits> distinct_messages(std::size_t count, std::size_t k, Rng& rng) {
  std::vector<MessageBits> out;
  out.reserve(count);
  std::unordered_set<std::uint64_t> seen;
  const std::uint64_t mask = k >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << k) - 1;
  while (out.size() < count) {
    const std::uint64_t v = rng.next_u64() & mask;
    if (seen.insert(v).second) out.push_back(codec::bits_from_integer(v, k));
  }
  return out;
}

/// First `take` entries of a uniformly random permutation of [0, n).
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t take, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + rng.index(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(take);
  return idx;
}

TaskComponent component(Family f, ParamRange snr, ParamRange second = {}, double weight = 1.0) {
  TaskComponent c;
  c.weight = weight;
  c.family = f;
  c.snr_db = snr;
  switch (f) {
    case Family::kAwgn: break;
    case Family::kBursty:
      c.snr_b_db = second;
      c.alpha = {kScenarioBurstProbability, kScenarioBurstProbability};
      break;
    case Family::kMemory: c.alpha = second; break;
    case Family::kMultipath: c.beta = second; break;
  }
  return c;
}

// Tables of the benchmark: focused and expanded training ranges and the test
// point of each family; the second parameter is SNR_B, alpha or beta.
struct FamilyTable {
  Family family;
  ParamRange focused_snr, focused_second;
  ParamRange expanded_snr, expanded_second;
  double test_snr, test_second;
};

constexpr FamilyTable kFamilyTables[] = {
    {Family::kAwgn, {-0.5, 0.5}, {}, {-5, 5}, {}, 0.0, 0.0},
    {Family::kBursty, {5.5, 6.5}, {-15, -13}, {1, 11}, {-19, -9}, 6.0, -14.0},
    {Family::kMemory, {-0.5, 0.5}, {0.45, 0.55}, {-5, 5}, {0.1, 0.9}, 0.0, 0.5},
    {Family::kMultipath, {-0.5, 0.5}, {0.45, 0.55}, {-5, 5}, {0.1, 0.9}, 0.0, 0.5},
};

const FamilyTable& table_for(Family f) {
  for (const auto& t : kFamilyTables) {
    if (t.family == f) return t;
  }
  throw std::logic_error("missing family table");
}

ChannelSpec test_point(Family f) {
  const auto& t = table_for(f);
  return spec_at_lower_corner(component(f, {t.test_snr, t.test_snr}, {t.test_second, t.test_second}));
}

TaskDistributionSpec mixture_of_points(const std::vector<ChannelSpec>& points) {
  TaskDistributionSpec out;
  for (const auto& p : points) {
    TaskComponent c;
    c.weight = 1.0 / static_cast<double>(points.size());
    c.family = p.family;
    c.snr_db = {p.snr_db, p.snr_db};
    c.snr_b_db = {p.snr_b_db, p.snr_b_db};
    c.alpha = {p.alpha, p.alpha};
    c.beta = {p.beta, p.beta};
    out.components.push_back(c);
  }
  return out;
}

TaskDistributionSpec expanded_mixture() {
  TaskDistributionSpec out;
  for (const auto& t : kFamilyTables) {
    out.components.push_back(component(t.family, t.expanded_snr, t.expanded_second, 0.25));
  }
  return out;
}

// Shift study: Bursty training regimes, tested at the Bursty test SNR over an
// SNR_B grid from -22 to -6 dB in steps of 2.
constexpr double kShiftTestSnr = 6.0;

std::vector<ChannelSpec> shift_test_grid() {
  std::vector<ChannelSpec> grid;
  for (int snr_b = -22; snr_b <= -6; snr_b += 2) {
    grid.push_back(ChannelSpec::bursty(kShiftTestSnr, snr_b, kScenarioBurstProbability));
  }
  return grid;
}

std::vector<ChannelSpec> all_test_points() {
  std::vector<ChannelSpec> pts;
  for (const Family f : kAllFamilies) pts.push_back(test_point(f));
  return pts;
}

}  // namespace

// --- TaskDistributionSpec --------------------------------------------------

std::vector<ParamRange> TaskComponent::active_ranges() const {
  switch (family) {
    case Family::kAwgn: return {snr_db};
    case Family::kBursty: return {snr_db, snr_b_db, alpha};
    case Family::kMemory: return {snr_db, alpha};
    case Family::kMultipath: return {snr_db, beta};
  }
  return {};
}

void TaskDistributionSpec::validate() const {
  if (components.empty()) throw std::invalid_argument("task distribution has no components");
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight >= 0.0) || !std::isfinite(c.weight)) throw std::invalid_argument("mixture weights must be >= 0");
    total += c.weight;
    check_range(c.snr_db, "snr_db");
    if (c.family == Family::kBursty) check_range(c.snr_b_db, "snr_b_db");
    if (c.family == Family::kBursty || c.family == Family::kMemory) check_range(c.alpha, "alpha");
    if (c.family == Family::kMultipath) check_range(c.beta, "beta");
    // Both corners of the box must be valid channels.
    spec_at_lower_corner(c).validate();
    ChannelSpec{c.family, c.snr_db.hi, c.snr_b_db.hi, c.alpha.hi, c.beta.hi}.validate();
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("mixture weights must sum to 1, got " + std::to_string(total));
  }
}

bool TaskDistributionSpec::is_point_mass() const {
  std::optional<ChannelSpec> only;
  for (const auto& c : components) {
    if (c.weight <= 0.0) continue;
    for (const auto& r : c.active_ranges()) {
      if (!r.degenerate()) return false;
    }
    const ChannelSpec s = spec_at_lower_corner(c);
    const auto omega = s.omega();
    if (only && (only->family != s.family || only->omega() != omega)) return false;
    only = s;
  }
  return only.has_value();
}

TaskDistributionSpec TaskDistributionSpec::point(const ChannelSpec& spec) {
  return mixture_of_points({spec});
}

TaskDistributionSpec TaskDistributionSpec::single(TaskComponent c) {
  c.weight = 1.0;
  return TaskDistributionSpec{{c}};
}

ChannelSpec sample_task(const TaskDistributionSpec& spec, Rng& rng) {
  spec.validate();
  const double u = rng.uniform();
  std::size_t chosen = spec.components.size() - 1;
  double acc = 0.0;
  for (std::size_t i = 0; i < spec.components.size(); ++i) {
    acc += spec.components[i].weight;
    if (u < acc && spec.components[i].weight > 0.0) {
      chosen = i;
      break;
    }
  }
  while (spec.components[chosen].weight <= 0.0 && chosen > 0) --chosen;
  const TaskComponent& c = spec.components[chosen];
  ChannelSpec out;
  out.family = c.family;
  out.snr_db = rng.uniform(c.snr_db.lo, c.snr_db.hi);
  switch (c.family) {
    case Family::kAwgn: break;
    case Family::kBursty:
      out.snr_b_db = rng.uniform(c.snr_b_db.lo, c.snr_b_db.hi);
      out.alpha = rng.uniform(c.alpha.lo, c.alpha.hi);
      break;
    case Family::kMemory: out.alpha = rng.uniform(c.alpha.lo, c.alpha.hi); break;
    case Family::kMultipath: out.beta = rng.uniform(c.beta.lo, c.beta.hi); break;
  }
  return out;
}

// --- datasets ----------------------------------------------------------------

std::string_view role_name(Role r) { return r == Role::kMetaTrain ? "meta-train" : "meta-test"; }

Role role_from_name(std::string_view name) {
  if (name == "meta-train") return Role::kMetaTrain;
  if (name == "meta-test") return Role::kMetaTest;
  throw std::invalid_argument("unknown dataset role '" + std::string(name) + "'");
}

std::span<const float> BenchmarkDataset::signal(std::size_t setup, std::size_t msg, std::size_t example) const {
  const std::size_t len = signal_length();
  const std::size_t offset = ((setup * counts.messages + msg) * counts.examples + example) * len;
  return std::span<const float>(signals).subspan(offset, len);
}

ReceivedSignal BenchmarkDataset::received(std::size_t setup, std::size_t msg, std::size_t example) const {
  const auto s = signal(setup, msg, example);
  return ReceivedSignal{std::vector<double>(s.begin(), s.end())};
}

BenchmarkDataset build_dataset_from_setups(std::vector<ChannelSpec> setups, DatasetCounts counts, Role role,
                                           std::uint64_t seed, std::size_t k) {
  counts.setups = setups.size();
  if (counts.setups == 0 || counts.messages == 0 || counts.examples == 0) {
    throw std::invalid_argument("dataset counts must all be >= 1");
  }
  if (k == 0 || k > 63) throw std::invalid_argument("message length must lie in [1, 63]");
  if (k < 63 && counts.messages > (std::size_t{1} << k)) {
    throw std::invalid_argument("cannot draw " + std::to_string(counts.messages) + " distinct messages of " +
                                std::to_string(k) + " bits");
  }
  for (const auto& s : setups) s.validate();

  BenchmarkDataset ds;
  ds.role = role;
  ds.k = k;
  ds.counts = counts;
  ds.seed = seed;
  ds.setups = std::move(setups);
  ds.messages.resize(counts.setups * counts.messages);
  const std::size_t len = 2 * k;
  const std::size_t per_setup = counts.messages * counts.examples * len;
  ds.signals.resize(counts.setups * per_setup);

  const Rng root(seed);
  parallel_for(counts.setups, [&](std::size_t s) {
    Rng rng = root.split(1 + s);
    auto msgs = distinct_messages(counts.messages, k, rng);
    float* out = ds.signals.data() + s * per_setup;
    for (std::size_t m = 0; m < counts.messages; ++m) {
      const Codeword c = codec::conv_encode(msgs[m]);
      for (std::size_t e = 0; e < counts.examples; ++e) {
        const ReceivedSignal y = channels::transmit(c, ds.setups[s], rng);
        for (std::size_t i = 0; i < len; ++i) *out++ = static_cast<float>(y.values[i]);
      }
      ds.messages[s * counts.messages + m] = std::move(msgs[m]);
    }
  });
  return ds;
}

BenchmarkDataset build_dataset(const TaskDistributionSpec& spec, DatasetCounts counts, Role role,
                               std::uint64_t seed, std::size_t k) {
  spec.validate();
  if (counts.setups == 0) throw std::invalid_argument("dataset counts must all be >= 1");
  Rng setup_rng = Rng(seed).split(0);
  std::vector<ChannelSpec> setups;
  setups.reserve(counts.setups);
  for (std::size_t s = 0; s < counts.setups; ++s) setups.push_back(sample_task(spec, setup_rng));
  return build_dataset_from_setups(std::move(setups), counts, role, seed, k);
}

Episode sample_episode_from_setup(const BenchmarkDataset& ds, std::size_t setup, EpisodeShape shape, Rng& rng) {
  if (shape.n_way == 0 || shape.k_shot == 0 || shape.l_query == 0) {
    throw std::invalid_argument("episode shape entries must be >= 1");
  }
  if (setup >= ds.counts.setups) throw std::out_of_range("setup index out of range");
  if (ds.counts.messages < shape.n_way) {
    throw std::invalid_argument("dataset has " + std::to_string(ds.counts.messages) + " messages per setup, need " +
                                std::to_string(shape.n_way));
  }
  const std::size_t per_message = shape.k_shot + shape.l_query;
  if (ds.counts.examples < per_message) {
    throw std::invalid_argument("dataset has " + std::to_string(ds.counts.examples) +
                                " examples per message, episode needs " + std::to_string(per_message));
  }
  Episode ep;
  ep.setup_id = setup;
  ep.support.reserve(shape.n_way * shape.k_shot);
  ep.query.reserve(shape.n_way * shape.l_query);
  for (const std::size_t m : sample_without_replacement(ds.counts.messages, shape.n_way, rng)) {
    const auto examples = sample_without_replacement(ds.counts.examples, per_message, rng);
    for (std::size_t i = 0; i < per_message; ++i) {
      LabeledSignal item{ds.received(setup, m, examples[i]), ds.message(setup, m), m, examples[i]};
      (i < shape.k_shot ? ep.support : ep.query).push_back(std::move(item));
    }
  }
  return ep;
}

Episode sample_episode(const BenchmarkDataset& ds, EpisodeShape shape, Rng& rng) {
  if (ds.counts.setups == 0) throw std::invalid_argument("empty dataset");
  const std::size_t setup = rng.index(ds.counts.setups);
  return sample_episode_from_setup(ds, setup, shape, rng);
}

// --- scenarios ---------------------------------------------------------------

Scenario scenario(std::string_view name) {
  const std::string n(name);
  for (const auto& t : kFamilyTables) {
    const std::string fam(family_name(t.family));
    const ChannelSpec tp = test_point(t.family);
    if (n == fam + "-focused") {
      return {n, TaskDistributionSpec::single(component(t.family, t.focused_snr, t.focused_second)),
              TaskDistributionSpec::point(tp), {tp}, std::nullopt};
    }
    if (n == fam + "-expanded") {
      return {n, TaskDistributionSpec::single(component(t.family, t.expanded_snr, t.expanded_second)),
              TaskDistributionSpec::point(tp), {tp}, std::nullopt};
    }
    if (n == "mixed-" + fam) {
      return {n, expanded_mixture(), TaskDistributionSpec::point(tp), {tp}, std::nullopt};
    }
  }
  if (n == "mixed") {
    const auto pts = all_test_points();
    return {n, expanded_mixture(), mixture_of_points(pts), pts, std::nullopt};
  }
  if (n == "bursty-shift-low" || n == "bursty-shift-high") {
    const bool low = n == "bursty-shift-low";
    const ParamRange snr = low ? ParamRange{-2.5, 3.5} : ParamRange{8.5, 13.5};
    const ParamRange snr_b = low ? ParamRange{-23, -17} : ParamRange{-11, -5};
    const auto grid = shift_test_grid();
    return {n, TaskDistributionSpec::single(component(Family::kBursty, snr, snr_b)), mixture_of_points(grid), grid,
            std::nullopt};
  }
  for (const std::size_t domains : {100, 50, 20}) {
    if (n == "domain-count-" + std::to_string(domains)) {
      const auto& awgn = table_for(Family::kAwgn);
      const DatasetCounts base = DatasetCounts::meta_train();
      const std::size_t total_examples = base.setups * base.examples;
      const auto pts = all_test_points();
      return {n, TaskDistributionSpec::single(component(Family::kAwgn, awgn.expanded_snr)),
              mixture_of_points(pts), pts, DatasetCounts{domains, base.messages, total_examples / domains}};
    }
  }
  std::string valid;
  for (const auto& s : scenario_names()) valid += (valid.empty() ? "" : ", ") + s;
  throw std::invalid_argument("unknown scenario '" + n + "' (valid: " + valid + ")");
}

std::vector<std::string> scenario_names() {
  std::vector<std::string> out;
  for (const auto& t : kFamilyTables) {
    const std::string fam(family_name(t.family));
    out.push_back(fam + "-focused");
    out.push_back(fam + "-expanded");
    out.push_back("mixed-" + fam);
  }
  out.push_back("mixed");
  out.push_back("bursty-shift-low");
  out.push_back("bursty-shift-high");
  for (const int d : {100, 50, 20}) out.push_back("domain-count-" + std::to_string(d));
  return out;
}

// --- persistence -------------------------------------------------------------

std::vector<std::uint8_t> serialize_dataset(const BenchmarkDataset& ds) {
  const std::size_t bytes_per_message = (ds.k + 7) / 8;
  const std::size_t signal_bytes = ds.signals.size() * sizeof(float);
  const std::size_t message_bytes = ds.messages.size() * bytes_per_message;

  nlohmann::json header;
  header["magic"] = "MCC1";
  header["version"] = kDatasetVersion;
  header["role"] = role_name(ds.role);
  header["K"] = ds.k;
  header["counts"] = ds.counts;
  header["seed"] = ds.seed;
  header["setups"] = ds.setups;
  header["sections"] = {
      {"signals", {{"offset", 0}, {"bytes", signal_bytes}, {"dtype", "f32le"},
                   {"layout", "setup,message,example,symbol"}}},
      {"messages", {{"offset", signal_bytes}, {"bytes", message_bytes}, {"bytes_per_message", bytes_per_message},
                    {"layout", "setup,message"}, {"bit_order", "msb-first"}}},
  };
  const std::string text = header.dump();

  binio::Writer w;
  w.bytes(kDatasetMagic, 4);
  w.u64(text.size());
  w.bytes(text.data(), text.size());
  for (const float f : ds.signals) w.f32(f);
  for (const auto& m : ds.messages) {
    std::vector<std::uint8_t> packed(bytes_per_message, 0);
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m.bits[i]) packed[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
    }
    w.bytes(packed.data(), packed.size());
  }
  return std::move(w).take();
}

BenchmarkDataset deserialize_dataset(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes);
  const auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kDatasetMagic)) throw std::runtime_error("not a dataset file (bad magic)");
  const std::uint64_t header_len = r.u64();
  const auto header_bytes = r.bytes(header_len);
  const auto header = nlohmann::json::parse(header_bytes.begin(), header_bytes.end());
  if (header.at("magic") != "MCC1" || header.at("version").get<int>() != kDatasetVersion) {
    throw std::runtime_error("unsupported dataset header");
  }
  BenchmarkDataset ds;
  ds.role = role_from_name(header.at("role").get<std::string>());
  ds.k = header.at("K").get<std::size_t>();
  ds.counts = header.at("counts").get<DatasetCounts>();
  ds.seed = header.at("seed").get<std::uint64_t>();
  ds.setups = header.at("setups").get<std::vector<ChannelSpec>>();
  if (ds.setups.size() != ds.counts.setups) throw std::runtime_error("dataset header: setup count mismatch");

  const std::size_t payload_start = r.position();
  const auto& sec = header.at("sections");
  const std::size_t n_signals = ds.counts.setups * ds.counts.messages * ds.counts.examples * 2 * ds.k;
  const std::size_t n_messages = ds.counts.setups * ds.counts.messages;
  const std::size_t bytes_per_message = (ds.k + 7) / 8;
  if (sec.at("signals").at("bytes").get<std::size_t>() != n_signals * sizeof(float) ||
      sec.at("messages").at("bytes").get<std::size_t>() != n_messages * bytes_per_message) {
    throw std::runtime_error("dataset header: section sizes disagree with counts");
  }

  r.seek(payload_start + sec.at("signals").at("offset").get<std::size_t>());
  ds.signals.resize(n_signals);
  for (float& f : ds.signals) f = r.f32();

  r.seek(payload_start + sec.at("messages").at("offset").get<std::size_t>());
  ds.messages.resize(n_messages);
  for (auto& m : ds.messages) {
    const auto packed = r.bytes(bytes_per_message);
    m.bits.resize(ds.k);
    for (std::size_t i = 0; i < ds.k; ++i) m.bits[i] = (packed[i / 8] >> (7 - i % 8)) & 1;
  }
  return ds;
}

void save_dataset(const BenchmarkDataset& ds, const std::filesystem::path& path) {
  binio::write_file(path, serialize_dataset(ds));
}

BenchmarkDataset load_dataset(const std::filesystem::path& path) {
  return deserialize_dataset(binio::read_file(path));
}

}  // namespace metacc
