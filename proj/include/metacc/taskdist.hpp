#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "metacc/channels.hpp"
#include "metacc/codec.hpp"
#include "metacc/rng.hpp"

namespace metacc {

struct ParamRange {
  double lo = 0.0;
  double hi = 0.0;

  bool degenerate() const { return lo == hi; }
  bool operator==(const ParamRange&) const = default;
};

/// One mixture component: a family with independent uniform priors on its
/// parameters (SNRs in dB). Ranges of parameters the family does not use are ignored.
struct TaskComponent {
  double weight = 1.0;
  Family family = Family::kAwgn;
  ParamRange snr_db;
  ParamRange snr_b_db;
  ParamRange alpha;
  ParamRange beta;

  /// Ranges of the family's parameters, in ChannelSpec::omega() order.
  std::vector<ParamRange> active_ranges() const;
  bool operator==(const TaskComponent&) const = default;
};

struct TaskDistributionSpec {
  std::vector<TaskComponent> components;

  void validate() const;
  /// True when every component with positive weight is a point mass and all
  /// of them describe the same channel.
  bool is_point_mass() const;
  bool operator==(const TaskDistributionSpec&) const = default;

  static TaskDistributionSpec point(const ChannelSpec& spec);
  static TaskDistributionSpec single(TaskComponent c);
};

/// Draws: one uniform for the component, then one uniform per family parameter.
ChannelSpec sample_task(const TaskDistributionSpec& spec, Rng& rng);

enum class Role { kMetaTrain, kMetaTest };
std::string_view role_name(Role r);
Role role_from_name(std::string_view name);

struct DatasetCounts {
  std::size_t setups = 0;
  std::size_t messages = 0;
  std::size_t examples = 0;

  bool operator==(const DatasetCounts&) const = default;

  static constexpr DatasetCounts meta_train() { return {100, 1000, 20}; }
  static constexpr DatasetCounts meta_test() { return {50, 100, 50}; }
};

inline constexpr std::size_t kDefaultMessageBits = 10;

/// Received signals for a grid of (setup, message, example), stored as 32-bit
/// floats in [setup][message][example][symbol] order.
struct BenchmarkDataset {
  Role role = Role::kMetaTrain;
  std::size_t k = kDefaultMessageBits;
  DatasetCounts counts;
  std::uint64_t seed = 0;
  std::vector<ChannelSpec> setups;
  std::vector<MessageBits> messages;  // [setup][message]
  std::vector<float> signals;

  std::size_t signal_length() const { return 2 * k; }
  const MessageBits& message(std::size_t setup, std::size_t msg) const {
    return messages[setup * counts.messages + msg];
  }
  std::span<const float> signal(std::size_t setup, std::size_t msg, std::size_t example) const;
  ReceivedSignal received(std::size_t setup, std::size_t msg, std::size_t example) const;

  bool operator==(const BenchmarkDataset&) const = default;
};

/// Samples `counts.setups` channels from the prior, then generates the grid.
/// Deterministic under `seed`; setups are generated on split streams.
BenchmarkDataset build_dataset(const TaskDistributionSpec& spec, DatasetCounts counts, Role role,
                               std::uint64_t seed, std::size_t k = kDefaultMessageBits);

/// Same as build_dataset but with explicitly given setups (counts.setups is
/// taken from setups.size()).
BenchmarkDataset build_dataset_from_setups(std::vector<ChannelSpec> setups, DatasetCounts counts,
                                           Role role, std::uint64_t seed,
                                           std::size_t k = kDefaultMessageBits);

struct LabeledSignal {
  ReceivedSignal y;
  MessageBits bits;
  std::size_t message_index = 0;
  std::size_t example_index = 0;
};

struct Episode {
  std::size_t setup_id = 0;
  std::vector<LabeledSignal> support;
  std::vector<LabeledSignal> query;
};

struct EpisodeShape {
  std::size_t n_way = 5;
  std::size_t k_shot = 5;
  std::size_t l_query = 15;
};

/// One setup uniformly, n_way distinct messages, and per message k_shot + l_query
/// distinct examples (the first k_shot go to support).
Episode sample_episode(const BenchmarkDataset& ds, EpisodeShape shape, Rng& rng);

/// Same, restricted to a given setup.
Episode sample_episode_from_setup(const BenchmarkDataset& ds, std::size_t setup, EpisodeShape shape,
                                  Rng& rng);

/// A named benchmark scenario: training prior, testing prior, and the discrete
/// test points evaluation iterates over.
struct Scenario {
  std::string name;
  TaskDistributionSpec train;
  TaskDistributionSpec test;
  std::vector<ChannelSpec> test_points;
  /// Training grid override (domain-count scenarios keep the example total fixed).
  std::optional<DatasetCounts> train_counts;
};

/// Burst probability used by every Bursty scenario (the tables give only SNRs).
inline constexpr double kScenarioBurstProbability = 0.1;

Scenario scenario(std::string_view name);
std::vector<std::string> scenario_names();

// Dataset container: "MCC1" magic, u64 LE header length, JSON header, payload.
// Header "sections" give payload-relative byte offsets of the signal block
// (f32 LE) and the packed message bits (MSB first, ceil(K/8) bytes each).
void save_dataset(const BenchmarkDataset& ds, const std::filesystem::path& path);
BenchmarkDataset load_dataset(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_dataset(const BenchmarkDataset& ds);
BenchmarkDataset deserialize_dataset(std::span<const std::uint8_t> bytes);

}  // namespace metacc
