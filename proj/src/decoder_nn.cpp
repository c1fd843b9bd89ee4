#include "metacc/decoder_nn.hpp"

#include <cmath>
#include <stdexcept>

#include "metacc/rng.hpp"

namespace metacc {

namespace {

Conv2dOptions conv_options(const DecoderArch& arch, std::size_t layer) {
  Conv2dOptions opt;
  opt.stride_h = 1;
  opt.stride_w = layer == 0 ? 2 : 1;
  opt.pad_h = arch.kernel / 2;
  opt.pad_w = arch.kernel / 2;
  return opt;
}

std::vector<Shape> param_shapes(const DecoderArch& arch) {
  std::vector<Shape> shapes;
  for (std::size_t l = 0; l < arch.layers; ++l) {
    const std::size_t in = l == 0 ? 1 : arch.filters;
    shapes.push_back({arch.filters, in, arch.kernel, arch.kernel});
    shapes.push_back({arch.filters});
  }
  shapes.push_back({arch.filters, 1});
  shapes.push_back({1});
  return shapes;
}

void validate_arch(const DecoderArch& arch) {
  if (arch.k == 0 || arch.filters == 0 || arch.layers == 0 || arch.kernel % 2 == 0) {
    throw std::invalid_argument("decoder architecture needs K, filters, layers >= 1 and an odd kernel");
  }
}

}  // namespace

std::vector<std::string> DecoderParams::names() const {
  std::vector<std::string> out;
  for (std::size_t l = 0; l < arch.layers; ++l) {
    out.push_back("conv" + std::to_string(l + 1) + ".weight");
    out.push_back("conv" + std::to_string(l + 1) + ".bias");
  }
  out.push_back("head.weight");
  out.push_back("head.bias");
  return out;
}

std::size_t DecoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.numel();
  return n;
}

DecoderParams DecoderParams::clone() const {
  DecoderParams out{arch, {}};
  out.tensors.reserve(tensors.size());
  for (const auto& t : tensors) out.tensors.push_back(t.clone());
  return out;
}

void DecoderParams::zero_grad() {
  for (auto& t : tensors) t.zero_grad();
}

void DecoderParams::set_requires_grad(bool on) {
  for (auto& t : tensors) t.set_requires_grad(on);
}

Checkpoint DecoderParams::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.meta["arch"] = {{"k", arch.k}, {"filters", arch.filters}, {"kernel", arch.kernel}, {"layers", arch.layers}};
  const auto n = names();
  for (std::size_t i = 0; i < tensors.size(); ++i) ckpt.tensors.push_back({n[i], tensors[i].clone()});
  return ckpt;
}

DecoderParams DecoderParams::from_checkpoint(const Checkpoint& ckpt) {
  const auto& a = ckpt.meta.at("arch");
  DecoderParams p;
  p.arch = DecoderArch{a.at("k").get<std::size_t>(), a.at("filters").get<std::size_t>(),
                       a.at("kernel").get<std::size_t>(), a.at("layers").get<std::size_t>()};
  validate_arch(p.arch);
  const auto shapes = param_shapes(p.arch);
  const auto n = p.names();
  for (std::size_t i = 0; i < n.size(); ++i) {
    Tensor t = ckpt.at(n[i]).clone();
    if (t.shape() != shapes[i]) throw std::runtime_error("checkpoint tensor '" + n[i] + "' has the wrong shape");
    t.set_requires_grad(true);
    p.tensors.push_back(std::move(t));
  }
  return p;
}

DecoderParams zero_params(DecoderArch arch) {
  validate_arch(arch);
  DecoderParams p{arch, {}};
  for (auto& s : param_shapes(arch)) p.tensors.emplace_back(std::move(s), true);
  return p;
}

DecoderParams init_params(std::uint64_t seed, DecoderArch arch) {
  DecoderParams p = zero_params(arch);
  Rng rng(seed);
  for (std::size_t i = 0; i < p.tensors.size(); i += 2) {
    Tensor& w = p.tensors[i];
    const auto& s = w.shape();
    // conv weight [O,C,kh,kw] -> fan_in C*kh*kw; head weight [in,1] -> fan_in in
    const std::size_t fan_in = s.size() == 4 ? s[1] * s[2] * s[3] : s[0];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w.values()) v = rng.uniform(-bound, bound);
    for (double& v : p.tensors[i + 1].values()) v = rng.uniform(-bound, bound);
  }
  return p;
}

Tensor pack_signals(std::span<const ReceivedSignal> ys, std::size_t k) {
  std::vector<double> data;
  data.reserve(ys.size() * 2 * k);
  for (const auto& y : ys) {
    if (y.size() != 2 * k) {
      throw std::invalid_argument("decoder input must have length 2K = " + std::to_string(2 * k) + ", got " +
                                  std::to_string(y.size()));
    }
    data.insert(data.end(), y.values.begin(), y.values.end());
  }
  return Tensor({ys.size(), 1, k, 2}, std::move(data));
}

Tensor pack_bits(std::span<const MessageBits> bits) {
  const std::size_t k = bits.empty() ? 0 : bits.front().size();
  std::vector<double> data;
  data.reserve(bits.size() * k);
  for (const auto& b : bits) {
    if (b.size() != k) throw std::invalid_argument("pack_bits: inconsistent message lengths");
    for (const auto v : b.bits) data.push_back(static_cast<double>(v));
  }
  return Tensor({bits.size(), k}, std::move(data));
}

Tensor embed(Tape& tape, const DecoderParams& params, const Tensor& input) {
  const auto& arch = params.arch;
  if (input.shape().size() != 4 || input.dim(1) != 1 || input.dim(2) != arch.k || input.dim(3) != 2) {
    throw std::invalid_argument("decoder input must be [N,1," + std::to_string(arch.k) + ",2], got " +
                                shape_string(input.shape()));
  }
  Tensor h = input;
  for (std::size_t l = 0; l < arch.layers; ++l) {
    h = ops::conv2d(tape, h, params.tensors[2 * l], params.tensors[2 * l + 1], conv_options(arch, l));
    h = ops::relu(tape, h);
  }
  return ops::channels_last(tape, h);  // [N*K*1, filters]
}

Tensor forward(Tape& tape, const DecoderParams& params, const Tensor& input) {
  const std::size_t n = input.shape().empty() ? 0 : input.dim(0);
  const Tensor e = embed(tape, params, input);
  const std::size_t b = params.body_size();
  const Tensor logits = ops::linear(tape, e, params.tensors[b], params.tensors[b + 1]);  // [N*K, 1]
  return ops::reshape(tape, logits, {n, params.arch.k});
}

std::vector<double> forward(const DecoderParams& params, const ReceivedSignal& y) {
  Tape tape;
  DecoderParams frozen = params.clone();
  frozen.set_requires_grad(false);
  const Tensor out = forward(tape, frozen, pack_signals(std::span(&y, 1), params.arch.k));
  return {out.values().begin(), out.values().end()};
}

MessageBits predict_bits(std::span<const double> logits) {
  MessageBits out;
  out.bits.reserve(logits.size());
  for (const double l : logits) out.bits.push_back(l > 0.0 ? 1 : 0);
  return out;
}

}  // namespace metacc
