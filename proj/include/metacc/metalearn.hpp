#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "metacc/decoder_nn.hpp"
#include "metacc/taskdist.hpp"
#include "metacc/tensor.hpp"

namespace metacc {

enum class Algorithm { kErm, kFomaml, kReptile, kAnil, kMetaSgd, kProtoNet };

std::string_view algorithm_name(Algorithm a);
Algorithm algorithm_from_name(std::string_view name);
std::vector<std::string> algorithm_names();

struct MetaConfig {
  Algorithm algorithm = Algorithm::kFomaml;
  double outer_lr = 1e-3;
  double inner_lr = 0.1;
  std::size_t inner_steps = 2;
  std::size_t meta_batch = 10;
  std::size_t meta_iterations = 80000;
  EpisodeShape episode;
  /// Examples per ERM minibatch (ERM draws raw examples, not episodes).
  std::size_t erm_batch = 100;

  void validate() const;
};

struct MetaState {
  DecoderParams phi;
  /// Per-parameter inner learning rates (MetaSGD only), shaped like phi.
  std::vector<Tensor> inner_lrs;
  AdamState adam;
  AdamState adam_lrs;
  std::uint64_t iteration = 0;

  Checkpoint to_checkpoint(const MetaConfig& cfg) const;
  static MetaState from_checkpoint(const Checkpoint& ckpt);
};

MetaState init_state(const MetaConfig& cfg, std::uint64_t seed, DecoderArch arch = {});

/// Inputs and targets for a set of labeled signals.
struct Batch {
  Tensor inputs;   // [N,1,K,2]
  Tensor targets;  // [N,K]
};
Batch make_batch(std::span<const LabeledSignal> items, std::size_t k);

/// Mean BCE loss; gradients are written into the parameters' (zeroed) grad buffers.
double loss_and_grad(DecoderParams& params, const Batch& batch);
double loss_only(const DecoderParams& params, const Batch& batch);

/// Task adaptation from the meta-parameters. ERM/FOMAML/Reptile: `steps`
/// full-batch SGD steps on all parameters; ANIL: head only; MetaSGD: per-parameter
/// rates; ProtoNet: none (prototypes are built at prediction time).
DecoderParams adapt(const MetaState& state, Algorithm algorithm, std::span<const LabeledSignal> support,
                    std::size_t steps, double inner_lr);

/// One outer update on a batch of episodes; dispatches on cfg.algorithm.
void meta_step(MetaState& state, const MetaConfig& cfg, std::span<const Episode> batch);

void meta_step_fomaml(MetaState& state, const MetaConfig& cfg, std::span<const Episode> batch);
void meta_step_anil(MetaState& state, const MetaConfig& cfg, std::span<const Episode> batch);
void meta_step_reptile(MetaState& state, const MetaConfig& cfg, std::span<const Episode> batch);
void meta_step_metasgd_fo(MetaState& state, const MetaConfig& cfg, std::span<const Episode> batch);
void meta_step_protonet(MetaState& state, const MetaConfig& cfg, std::span<const Episode> batch);

/// Query logits [Q,K] from nearest-prototype scoring on the conv-body embeddings.
Tensor protonet_multilabel(Tape& tape, const DecoderParams& params, const Episode& episode);
std::vector<std::vector<double>> protonet_multilabel(const MetaState& state, const Episode& episode);

/// One Adam step of plain supervised training on a raw minibatch.
double erm_step(MetaState& state, const MetaConfig& cfg, std::span<const LabeledSignal> batch);

/// Uniform examples over all (setup, message, example) cells of the dataset.
std::vector<LabeledSignal> sample_raw_batch(const BenchmarkDataset& ds, std::size_t size, Rng& rng);

using ProgressFn = std::function<void(std::uint64_t iteration, double loss)>;

/// Runs `iterations` outer steps (ERM: minibatch steps) drawing training data
/// from `ds`. Deterministic under `seed`.
void meta_train(MetaState& state, const MetaConfig& cfg, const BenchmarkDataset& ds, std::size_t iterations,
                std::uint64_t seed, const ProgressFn& progress = {});

/// Convenience wrapper: initialize and run plain ERM training.
DecoderParams erm_train(const BenchmarkDataset& ds, std::size_t iterations, double lr, std::uint64_t seed,
                        std::size_t batch = 100, DecoderArch arch = {});

struct EvalResult {
  double mean_ber = 0.0;
  double std_error = 0.0;
  std::vector<double> per_episode;
};

EvalResult summarize(std::vector<double> per_episode);

/// Query BER per episode. With `adapt_first`, adapts on the support set with
/// cfg.inner_steps / cfg.inner_lr before predicting (ProtoNet always scores
/// against support prototypes).
EvalResult evaluate(const MetaState& state, const MetaConfig& cfg, std::span<const Episode> episodes,
                    bool adapt_first);

/// Query BER of the Viterbi decoder (no adaptation).
EvalResult evaluate_viterbi(std::span<const Episode> episodes);

/// Mean query BER of given parameters on one episode.
double query_ber(const DecoderParams& params, const Episode& episode);

}  // namespace metacc
