#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace metacc {

/// K message bits, each 0 or 1.
struct MessageBits {
  std::vector<std::uint8_t> bits;

  std::size_t size() const { return bits.size(); }
  bool operator==(const MessageBits&) const = default;
};

/// Antipodal (+1/-1) encoder output, two symbols per message bit.
struct Codeword {
  std::vector<double> symbols;

  std::size_t size() const { return symbols.size(); }
  bool operator==(const Codeword&) const = default;
};

/// Noisy channel output; same length as the codeword it came from.
struct ReceivedSignal {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool operator==(const ReceivedSignal&) const = default;
};

namespace codec {

inline constexpr std::size_t kNumStates = 4;
inline constexpr std::size_t kBruteForceMaxBits = 14;

/// Encoder state (b_{k-1}, b_{k-2}), packed as (b_{k-1} << 1) | b_{k-2}.
struct TrellisState {
  std::uint8_t index = 0;

  std::uint8_t last() const { return index >> 1; }
  std::uint8_t before_last() const { return index & 1; }
  TrellisState next(std::uint8_t bit) const {
    return TrellisState{static_cast<std::uint8_t>((bit << 1) | last())};
  }
};

/// The two +/-1 symbols emitted for input `bit` in `state` (generators 7,5 octal).
std::pair<double, double> branch_output(TrellisState state, std::uint8_t bit);

/// Throws std::invalid_argument on an empty message or a non-binary element.
Codeword conv_encode(const MessageBits& msg);

/// Soft-decision Viterbi decoding with squared-Euclidean branch metrics. On an
/// exact metric tie the survivor whose most recent input bit is 0 wins.
MessageBits viterbi_decode(std::span<const double> y);
inline MessageBits viterbi_decode(const ReceivedSignal& y) { return viterbi_decode(y.values); }

/// Exhaustive maximum-likelihood search over all 2^K messages. Ties resolve to
/// the lexicographically smallest message. K must not exceed kBruteForceMaxBits.
MessageBits brute_force_ml(std::span<const double> y);
inline MessageBits brute_force_ml(const ReceivedSignal& y) { return brute_force_ml(y.values); }

/// Squared distance from y to the codeword of every message, indexed by the
/// message read as a big-endian integer (bit 0 is the most significant).
std::vector<double> codeword_distances(std::span<const double> y);

/// Fraction of differing bits.
double ber(const MessageBits& pred, const MessageBits& truth);

MessageBits bits_from_integer(std::uint64_t value, std::size_t k);

}  // namespace codec
}  // namespace metacc
