#include "metacc/codec.hpp"

#include <array>
#include <limits>
#include <stdexcept>
#include <string>

namespace metacc::codec {

namespace {

void check_length(std::span<const double> y) {
  if (y.empty() || y.size() % 2 != 0) {
    throw std::invalid_argument("received signal length must be a positive multiple of 2, got " +
                                std::to_string(y.size()));
  }
}

double branch_metric(std::span<const double> y, std::size_t step, TrellisState s, std::uint8_t bit) {
  const auto [c0, c1] = branch_output(s, bit);
  const double d0 = y[2 * step] - c0;
  const double d1 = y[2 * step + 1] - c1;
  return d0 * d0 + d1 * d1;
}

}  // namespace

std::pair<double, double> branch_output(TrellisState state, std::uint8_t bit) {
  const std::uint8_t p0 = bit ^ state.last() ^ state.before_last();
  const std::uint8_t p1 = bit ^ state.before_last();
  return {2.0 * p0 - 1.0, 2.0 * p1 - 1.0};
}

Codeword conv_encode(const MessageBits& msg) {
  if (msg.bits.empty()) throw std::invalid_argument("conv_encode: empty message");
  Codeword out;
  out.symbols.reserve(2 * msg.size());
  TrellisState state;
  for (const std::uint8_t b : msg.bits) {
    if (b > 1) throw std::invalid_argument("conv_encode: message bits must be 0 or 1");
    const auto [c0, c1] = branch_output(state, b);
    out.symbols.push_back(c0);
    out.symbols.push_back(c1);
    state = state.next(b);
  }
  return out;
}

MessageBits viterbi_decode(std::span<const double> y) {
  check_length(y);
  const std::size_t k = y.size() / 2;
  constexpr double kInf = std::numeric_limits<double>::infinity();

  std::array<double, kNumStates> metric;
  metric.fill(kInf);
  metric[0] = 0.0;
  // survivor[step][state] = predecessor state index
  std::vector<std::array<std::uint8_t, kNumStates>> survivor(k);

  for (std::size_t step = 0; step < k; ++step) {
    std::array<double, kNumStates> next;
    next.fill(kInf);
    auto& surv = survivor[step];
    // Predecessors are visited in increasing index order and replaced only on a
    // strict improvement, so ties keep the predecessor with b_{k-2} = 0.
    for (std::uint8_t from = 0; from < kNumStates; ++from) {
      if (metric[from] == kInf) continue;
      for (std::uint8_t bit = 0; bit < 2; ++bit) {
        const TrellisState s{from};
        const std::uint8_t to = s.next(bit).index;
        const double m = metric[from] + branch_metric(y, step, s, bit);
        if (m < next[to]) {
          next[to] = m;
          surv[to] = from;
        }
      }
    }
    metric = next;
  }

  // States with most recent bit 0 have the lower indices.
  std::uint8_t best = 0;
  for (std::uint8_t s = 1; s < kNumStates; ++s) {
    if (metric[s] < metric[best]) best = s;
  }

  MessageBits out;
  out.bits.resize(k);
  std::uint8_t state = best;
  for (std::size_t step = k; step-- > 0;) {
    out.bits[step] = TrellisState{state}.last();
    state = survivor[step][state];
  }
  return out;
}

std::vector<double> codeword_distances(std::span<const double> y) {
  check_length(y);
  const std::size_t k = y.size() / 2;
  if (k > kBruteForceMaxBits) {
    throw std::invalid_argument("brute-force search limited to " + std::to_string(kBruteForceMaxBits) +
                                " message bits, got " + std::to_string(k));
  }
  const std::uint64_t count = std::uint64_t{1} << k;
  std::vector<double> dist(count);
  for (std::uint64_t m = 0; m < count; ++m) {
    const Codeword c = conv_encode(bits_from_integer(m, k));
    double d = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double e = y[i] - c.symbols[i];
      d += e * e;
    }
    dist[m] = d;
  }
  return dist;
}

MessageBits brute_force_ml(std::span<const double> y) {
  const std::vector<double> dist = codeword_distances(y);
  // Big-endian indexing makes integer order equal lexicographic order.
  std::uint64_t best = 0;
  for (std::uint64_t m = 1; m < dist.size(); ++m) {
    if (dist[m] < dist[best]) best = m;
  }
  return bits_from_integer(best, y.size() / 2);
}

double ber(const MessageBits& pred, const MessageBits& truth) {
  if (pred.size() != truth.size()) {
    throw std::invalid_argument("ber: length mismatch (" + std::to_string(pred.size()) + " vs " +
                                std::to_string(truth.size()) + ")");
  }
  if (truth.bits.empty()) throw std::invalid_argument("ber: empty message");
  std::size_t errors = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) errors += pred.bits[i] != truth.bits[i];
  return static_cast<double>(errors) / static_cast<double>(truth.size());
}

MessageBits bits_from_integer(std::uint64_t value, std::size_t k) {
  MessageBits out;
  out.bits.resize(k);
  for (std::size_t i = 0; i < k; ++i) out.bits[i] = (value >> (k - 1 - i)) & 1;
  return out;
}

}  // namespace metacc::codec
