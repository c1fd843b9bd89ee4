#include "metacc/metalearn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "metacc/parallel.hpp"

namespace metacc {

namespace {

using GradList = std::vector<std::vector<double>>;

GradList take_grads(DecoderParams& p) {
  GradList out;
  out.reserve(p.tensors.size());
  for (auto& t : p.tensors) {
    const auto g = t.grad();
    out.emplace_back(g.begin(), g.end());
  }
  return out;
}

GradList zeros_like(const DecoderParams& p) {
  GradList out;
  for (const auto& t : p.tensors) out.emplace_back(t.numel(), 0.0);
  return out;
}

void accumulate(GradList& acc, const GradList& g, double scale) {
  for (std::size_t i = 0; i < acc.size(); ++i) {
    for (std::size_t j = 0; j < acc[i].size(); ++j) acc[i][j] += scale * g[i][j];
  }
}

void set_grads(std::span<Tensor> params, const GradList& g, std::size_t offset = 0) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].grad();
    std::copy(g[offset + i].begin(), g[offset + i].end(), dst.begin());
  }
}

std::vector<LabeledSignal> concat(std::span<const LabeledSignal> a, std::span<const LabeledSignal> b) {
  std::vector<LabeledSignal> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

void require_batch(std::span<const Episode> batch) {
  if (batch.empty()) throw std::invalid_argument("meta step needs at least one episode");
}

double mean_query_ber(std::span<const std::vector<double>> logits, std::span<const LabeledSignal> query) {
  double total = 0.0;
  for (std::size_t i = 0; i < query.size(); ++i) total += codec::ber(predict_bits(logits[i]), query[i].bits);
  return total / static_cast<double>(query.size());
}

std::vector<std::vector<double>> rows_of(const Tensor& t) {
  const std::size_t n = t.dim(0), k = t.dim(1);
  std::vector<std::vector<double>> out(n);
  const auto v = t.values();
  for (std::size_t i = 0; i < n; ++i) out[i].assign(v.begin() + i * k, v.begin() + (i + 1) * k);
  return out;
}

DecoderParams frozen_copy(const DecoderParams& p) {
  DecoderParams out = p.clone();
  out.set_requires_grad(false);
  return out;
}

}  // namespace

std::string_view algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kErm: return "erm";
    case Algorithm::kFomaml: return "fomaml";
    case Algorithm::kReptile: return "reptile";
    case Algorithm::kAnil: return "anil";
    case Algorithm::kMetaSgd: return "metasgd";
    case Algorithm::kProtoNet: return "protonet";
  }
  return "unknown";
}

Algorithm algorithm_from_name(std::string_view name) {
  for (const Algorithm a : {Algorithm::kErm, Algorithm::kFomaml, Algorithm::kReptile, Algorithm::kAnil,
                            Algorithm::kMetaSgd, Algorithm::kProtoNet}) {
    if (algorithm_name(a) == name) return a;
  }
  throw std::invalid_argument("unknown algorithm '" + std::string(name) +
                              "' (valid: erm, fomaml, reptile, anil, metasgd, protonet)");
}

std::vector<std::string> algorithm_names() { return {"erm", "fomaml", "reptile", "anil", "metasgd", "protonet"}; }

void MetaConfig::validate() const {
  if (!(outer_lr > 0.0) || !(inner_lr > 0.0)) throw std::invalid_argument("learning rates must be positive");
  if (meta_batch == 0) throw std::invalid_argument("meta batch must be >= 1");
  if (episode.n_way == 0 || episode.k_shot == 0 || episode.l_query == 0) {
    throw std::invalid_argument("episode shape entries must be >= 1");
  }
  if (erm_batch == 0) throw std::invalid_argument("ERM batch must be >= 1");
}

Checkpoint MetaState::to_checkpoint(const MetaConfig& cfg) const {
  Checkpoint ckpt = phi.to_checkpoint();
  ckpt.meta["algorithm"] = algorithm_name(cfg.algorithm);
  ckpt.meta["iteration"] = iteration;
  const auto names = phi.names();
  for (std::size_t i = 0; i < inner_lrs.size(); ++i) ckpt.tensors.push_back({"lr." + names[i], inner_lrs[i].clone()});
  return ckpt;
}

MetaState MetaState::from_checkpoint(const Checkpoint& ckpt) {
  MetaState s;
  s.phi = DecoderParams::from_checkpoint(ckpt);
  s.iteration = ckpt.meta.value("iteration", std::uint64_t{0});
  for (const auto& name : s.phi.names()) {
    for (const auto& t : ckpt.tensors) {
      if (t.name == "lr." + name) s.inner_lrs.push_back(t.tensor.clone());
    }
  }
  return s;
}

MetaState init_state(const MetaConfig& cfg, std::uint64_t seed, DecoderArch arch) {
  cfg.validate();
  MetaState s;
  s.phi = init_params(seed, arch);
  if (cfg.algorithm == Algorithm::kMetaSgd) {
    for (const auto& t : s.phi.tensors) {
      s.inner_lrs.emplace_back(t.shape(), std::vector<double>(t.numel(), cfg.inner_lr), true);
    }
  }
  return s;
}

Batch make_batch(std::span<const LabeledSignal> items, std::size_t k) {
  if (items.empty()) throw std::invalid_argument("empty batch");
  std::vector<ReceivedSignal> ys;
  std::vector<MessageBits> bits;
  ys.reserve(items.size());
  bits.reserve(items.size());
  for (const auto& it : items) {
    ys.push_back(it.y);
    bits.push_back(it.bits);
  }
  return {pack_signals(ys, k), pack_bits(bits)};
}

double loss_and_grad(DecoderParams& params, const Batch& batch) {
  params.zero_grad();
  Tape tape;
  const Tensor logits = forward(tape, params, batch.inputs);
  Tensor loss = ops::bce_with_logits(tape, logits, batch.targets);
  tape.backward(loss);
  return loss.item();
}

double loss_only(const DecoderParams& params, const Batch& batch) {
  Tape tape;
  const DecoderParams p = frozen_copy(params);
  const Tensor logits = forward(tape, p, batch.inputs);
  return ops::bce_with_logits(tape, logits, batch.targets).item();
}

DecoderParams adapt(const MetaState& state, Algorithm algorithm, std::span<const LabeledSignal> support,
                    std::size_t steps, double inner_lr) {
  if (support.empty()) throw std::invalid_argument("adapt: empty support set");
  DecoderParams theta = state.phi.clone();
  theta.set_requires_grad(true);
  if (steps == 0 || algorithm == Algorithm::kProtoNet) return theta;
  const Batch batch = make_batch(support, theta.arch.k);

  switch (algorithm) {
    case Algorithm::kAnil: {
      for (auto& t : theta.body()) t.set_requires_grad(false);
      for (std::size_t s = 0; s < steps; ++s) {
        loss_and_grad(theta, batch);
        sgd_step(theta.head(), inner_lr);
      }
      theta.set_requires_grad(true);
      break;
    }
    case Algorithm::kMetaSgd: {
      if (state.inner_lrs.size() != theta.tensors.size()) {
        throw std::invalid_argument("adapt: MetaSGD state has no per-parameter learning rates");
      }
      for (std::size_t s = 0; s < steps; ++s) {
        loss_and_grad(theta, batch);
        for (std::size_t i = 0; i < theta.tensors.size(); ++i) {
          auto v = theta.tensors[i].values();
          const auto g = std::as_const(theta.tensors[i]).grad();
          const auto a = state.inner_lrs[i].values();
          for (std::size_t j = 0; j < v.size(); ++j) v[j] -= a[j] * g[j];
        }
      }
      break;
    }
    default:
      for (std::size_t s = 0; s < steps; ++s) {
        loss_and_grad(theta, batch);
        sgd_step(theta.tensors, inner_lr);
      }
      break;
  }
  theta.zero_grad();
  return theta;
}

namespace {

/// Shared first-order outer step: per task adapt, take the query gradient at
/// the adapted parameters and apply it to phi.
void first_order_step(MetaState& state, const MetaConfig& cfg, std::span<const Episode> batch, Algorithm inner) {
  require_batch(batch);
  std::vector<GradList> per_task(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    DecoderParams theta = adapt(state, inner, batch[i].support, cfg.inner_steps, cfg.inner_lr);
    loss_and_grad(theta, make_batch(batch[i].query, theta.arch.k));
    per_task[i] = take_grads(theta);
  });
  GradList mean = zeros_like(state.phi);
  for (const auto& g : per_task) accumulate(mean, g, 1.0 / static_cast<double>(batch.size()));
  set_grads(state.phi.tensors, mean);
  adam_step(state.phi.tensors, AdamConfig{cfg.outer_lr}, state.adam);
  ++state.iteration;
}

}  // namespace

void meta_step_fomaml(MetaState& state, const MetaConfig& cfg, std::span<const Episode> batch) {
  first_order_step(state, cfg, batch, Algorithm::kFomaml);
}

void meta_step_anil(MetaState& state, const MetaConfig& cfg, std::span<const Episode> batch) {
  first_order_step(state, cfg, batch, Algorithm::kAnil);
}

void meta_step_reptile(MetaState& state, const MetaConfig& cfg, std::span<const Episode> batch) {
  require_batch(batch);
  std::vector<GradList> per_task(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    const auto all = concat(batch[i].support, batch[i].query);
    const DecoderParams theta = adapt(state, Algorithm::kReptile, all, cfg.inner_steps, cfg.inner_lr);
    GradList delta = zeros_like(state.phi);
    for (std::size_t t = 0; t < delta.size(); ++t) {
      const auto a = theta.tensors[t].values();
      const auto b = state.phi.tensors[t].values();
      for (std::size_t j = 0; j < a.size(); ++j) delta[t][j] = b[j] - a[j];  // phi - theta
    }
    per_task[i] = std::move(delta);
  });
  // Feeding (phi - mean theta) to Adam moves phi toward the adapted weights.
  GradList mean = zeros_like(state.phi);
  for (const auto& g : per_task) accumulate(mean, g, 1.0 / static_cast<double>(batch.size()));
  set_grads(state.phi.tensors, mean);
  adam_step(state.phi.tensors, AdamConfig{cfg.outer_lr}, state.adam);
  ++state.iteration;
}

void meta_step_metasgd_fo(MetaState& state, const MetaConfig& cfg, std::span<const Episode> batch) {
  require_batch(batch);
  if (state.inner_lrs.size() != state.phi.tensors.size()) {
    throw std::invalid_argument("MetaSGD state has no per-parameter learning rates");
  }
  struct TaskGrads {
    GradList phi, lr;
  };
  std::vector<TaskGrads> per_task(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    DecoderParams theta = state.phi.clone();
    theta.set_requires_grad(true);
    const Batch support = make_batch(batch[i].support, theta.arch.k);
    GradList last = zeros_like(theta);
    for (std::size_t s = 0; s < cfg.inner_steps; ++s) {
      loss_and_grad(theta, support);
      last = take_grads(theta);
      for (std::size_t t = 0; t < theta.tensors.size(); ++t) {
        auto v = theta.tensors[t].values();
        const auto a = state.inner_lrs[t].values();
        for (std::size_t j = 0; j < v.size(); ++j) v[j] -= a[j] * last[t][j];
      }
    }
    loss_and_grad(theta, make_batch(batch[i].query, theta.arch.k));
    TaskGrads g{take_grads(theta), {}};
    // theta_final = theta_prev - lr * g_prev, so dL/dlr = -g_query * g_prev
    g.lr = g.phi;
    for (std::size_t t = 0; t < g.lr.size(); ++t) {
      for (std::size_t j = 0; j < g.lr[t].size(); ++j) g.lr[t][j] *= -last[t][j];
    }
    per_task[i] = std::move(g);
  });
  GradList mean_phi = zeros_like(state.phi), mean_lr = zeros_like(state.phi);
  for (const auto& g : per_task) {
    accumulate(mean_phi, g.phi, 1.0 / static_cast<double>(batch.size()));
    accumulate(mean_lr, g.lr, 1.0 / static_cast<double>(batch.size()));
  }
  set_grads(state.phi.tensors, mean_phi);
  adam_step(state.phi.tensors, AdamConfig{cfg.outer_lr}, state.adam);
  set_grads(state.inner_lrs, mean_lr);
  adam_step(state.inner_lrs, AdamConfig{cfg.outer_lr}, state.adam_lrs);
  for (auto& a : state.inner_lrs) {
    for (double& v : a.values()) v = std::max(v, 0.0);
  }
  ++state.iteration;
}

Tensor protonet_multilabel(Tape& tape, const DecoderParams& params, const Episode& episode) {
  if (episode.support.empty() || episode.query.empty()) throw std::invalid_argument("protonet: empty episode");
  const std::size_t k = params.arch.k;
  const Batch support = make_batch(episode.support, k);
  const Batch query = make_batch(episode.query, k);
  const Tensor se = embed(tape, params, support.inputs);
  const Tensor qe = embed(tape, params, query.inputs);
  std::vector<std::vector<std::uint8_t>> labels;
  labels.reserve(episode.support.size());
  for (const auto& s : episode.support) labels.push_back(s.bits.bits);
  return ops::prototype_logits(tape, qe, se, labels, k);
}

std::vector<std::vector<double>> protonet_multilabel(const MetaState& state, const Episode& episode) {
  Tape tape;
  const DecoderParams p = frozen_copy(state.phi);
  return rows_of(protonet_multilabel(tape, p, episode));
}

void meta_step_protonet(MetaState& state, const MetaConfig& cfg, std::span<const Episode> batch) {
  require_batch(batch);
  std::vector<GradList> per_task(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    DecoderParams theta = state.phi.clone();
    for (auto& t : theta.head()) t.set_requires_grad(false);
    Tape tape;
    const Tensor logits = protonet_multilabel(tape, theta, batch[i]);
    Tensor loss = ops::bce_with_logits(tape, logits, make_batch(batch[i].query, theta.arch.k).targets);
    tape.backward(loss);
    per_task[i] = take_grads(theta);
  });
  GradList mean = zeros_like(state.phi);
  for (const auto& g : per_task) accumulate(mean, g, 1.0 / static_cast<double>(batch.size()));
  auto body = state.phi.body();
  set_grads(body, mean);
  adam_step(body, AdamConfig{cfg.outer_lr}, state.adam);
  ++state.iteration;
}

void meta_step(MetaState& state, const MetaConfig& cfg, std::span<const Episode> batch) {
  switch (cfg.algorithm) {
    case Algorithm::kFomaml: return meta_step_fomaml(state, cfg, batch);
    case Algorithm::kAnil: return meta_step_anil(state, cfg, batch);
    case Algorithm::kReptile: return meta_step_reptile(state, cfg, batch);
    case Algorithm::kMetaSgd: return meta_step_metasgd_fo(state, cfg, batch);
    case Algorithm::kProtoNet: return meta_step_protonet(state, cfg, batch);
    case Algorithm::kErm: break;
  }
  throw std::invalid_argument("meta_step: ERM trains on raw batches, use erm_step");
}

double erm_step(MetaState& state, const MetaConfig& cfg, std::span<const LabeledSignal> batch) {
  const double loss = loss_and_grad(state.phi, make_batch(batch, state.phi.arch.k));
  adam_step(state.phi.tensors, AdamConfig{cfg.outer_lr}, state.adam);
  ++state.iteration;
  return loss;
}

std::vector<LabeledSignal> sample_raw_batch(const BenchmarkDataset& ds, std::size_t size, Rng& rng) {
  std::vector<LabeledSignal> out;
  out.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t s = rng.index(ds.counts.setups);
    const std::size_t m = rng.index(ds.counts.messages);
    const std::size_t e = rng.index(ds.counts.examples);
    out.push_back({ds.received(s, m, e), ds.message(s, m), m, e});
  }
  return out;
}

void meta_train(MetaState& state, const MetaConfig& cfg, const BenchmarkDataset& ds, std::size_t iterations,
                std::uint64_t seed, const ProgressFn& progress) {
  cfg.validate();
  const Rng base(seed);
  for (std::size_t it = 0; it < iterations; ++it) {
    Rng rng = base.split(state.iteration);
    double loss = 0.0;
    if (cfg.algorithm == Algorithm::kErm) {
      loss = erm_step(state, cfg, sample_raw_batch(ds, cfg.erm_batch, rng));
    } else {
      std::vector<Episode> batch;
      batch.reserve(cfg.meta_batch);
      for (std::size_t b = 0; b < cfg.meta_batch; ++b) batch.push_back(sample_episode(ds, cfg.episode, rng));
      meta_step(state, cfg, batch);
    }
    if (progress) progress(state.iteration, loss);
  }
}

DecoderParams erm_train(const BenchmarkDataset& ds, std::size_t iterations, double lr, std::uint64_t seed,
                        std::size_t batch, DecoderArch arch) {
  MetaConfig cfg;
  cfg.algorithm = Algorithm::kErm;
  cfg.outer_lr = lr;
  cfg.erm_batch = batch;
  MetaState state = init_state(cfg, seed, arch);
  meta_train(state, cfg, ds, iterations, seed);
  return state.phi;
}

EvalResult summarize(std::vector<double> per_episode) {
  EvalResult r;
  const auto n = static_cast<double>(per_episode.size());
  if (per_episode.empty()) throw std::invalid_argument("evaluation needs at least one episode");
  r.mean_ber = std::accumulate(per_episode.begin(), per_episode.end(), 0.0) / n;
  if (per_episode.size() > 1) {
    double ss = 0.0;
    for (const double v : per_episode) ss += (v - r.mean_ber) * (v - r.mean_ber);
    r.std_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  r.per_episode = std::move(per_episode);
  return r;
}

double query_ber(const DecoderParams& params, const Episode& episode) {
  if (episode.query.empty()) throw std::invalid_argument("episode has no query examples");
  Tape tape;
  const DecoderParams p = frozen_copy(params);
  const Tensor logits = forward(tape, p, make_batch(episode.query, p.arch.k).inputs);
  return mean_query_ber(rows_of(logits), episode.query);
}

EvalResult evaluate(const MetaState& state, const MetaConfig& cfg, std::span<const Episode> episodes,
                    bool adapt_first) {
  std::vector<double> bers(episodes.size());
  parallel_for(episodes.size(), [&](std::size_t i) {
    const Episode& ep = episodes[i];
    if (cfg.algorithm == Algorithm::kProtoNet) {
      bers[i] = mean_query_ber(protonet_multilabel(state, ep), ep.query);
      return;
    }
    if (!adapt_first || cfg.algorithm == Algorithm::kErm) {
      bers[i] = query_ber(state.phi, ep);
      return;
    }
    bers[i] = query_ber(adapt(state, cfg.algorithm, ep.support, cfg.inner_steps, cfg.inner_lr), ep);
  });
  return summarize(std::move(bers));
}

EvalResult evaluate_viterbi(std::span<const Episode> episodes) {
  std::vector<double> bers(episodes.size());
  parallel_for(episodes.size(), [&](std::size_t i) {
    double total = 0.0;
    for (const auto& q : episodes[i].query) total += codec::ber(codec::viterbi_decode(q.y), q.bits);
    bers[i] = total / static_cast<double>(episodes[i].query.size());
  });
  return summarize(std::move(bers));
}

}  // namespace metacc
