#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "metacc/checkpoint.hpp"
#include "metacc/codec.hpp"
#include "metacc/tensor.hpp"

namespace metacc {

/// CNN decoder layout: `layers` 3x3 convolutions with `filters` channels and
/// ReLU; the first has stride (1,2) and folds the two parity columns into one.
/// Height padding keeps K rows throughout, so a filters->1 head applied at each
/// row gives one logit per message bit.
struct DecoderArch {
  std::size_t k = 10;
  std::size_t filters = 64;
  std::size_t kernel = 3;
  std::size_t layers = 4;

  bool operator==(const DecoderArch&) const = default;
};

struct DecoderParams {
  DecoderArch arch;
  /// conv1.weight, conv1.bias, ..., convL.weight, convL.bias, head.weight, head.bias
  std::vector<Tensor> tensors;

  std::size_t body_size() const { return 2 * arch.layers; }
  std::span<Tensor> body() { return std::span(tensors).first(body_size()); }
  std::span<Tensor> head() { return std::span(tensors).subspan(body_size()); }
  std::vector<std::string> names() const;
  std::size_t parameter_count() const;

  DecoderParams clone() const;
  void zero_grad();
  void set_requires_grad(bool on);

  Checkpoint to_checkpoint() const;
  static DecoderParams from_checkpoint(const Checkpoint& ckpt);
};

/// Fan-in scaled uniform init U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights
/// and biases. Deterministic under seed.
DecoderParams init_params(std::uint64_t seed, DecoderArch arch = {});
DecoderParams zero_params(DecoderArch arch = {});

/// Packs signals into a [N,1,K,2] input tensor (row k holds symbols 2k, 2k+1).
Tensor pack_signals(std::span<const ReceivedSignal> ys, std::size_t k);
/// Packs labels into a [N,K] target tensor.
Tensor pack_bits(std::span<const MessageBits> bits);

/// Per-position embeddings from the conv body: [N*K, filters].
Tensor embed(Tape& tape, const DecoderParams& params, const Tensor& input);

/// Bit logits [N,K].
Tensor forward(Tape& tape, const DecoderParams& params, const Tensor& input);

/// Logits for a single signal (no gradient recording).
std::vector<double> forward(const DecoderParams& params, const ReceivedSignal& y);

/// bit_k = 1 iff sigmoid(logit_k) > 0.5, i.e. logit_k > 0.
MessageBits predict_bits(std::span<const double> logits);

}  // namespace metacc
