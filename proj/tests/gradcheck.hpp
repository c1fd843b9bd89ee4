#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "metacc/rng.hpp"
#include "metacc/tensor.hpp"

namespace gradcheck {

using metacc::Rng;
using metacc::Shape;
using metacc::Tape;
using metacc::Tensor;
namespace ops = metacc::ops;

using OpFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

struct CaseResult {
  std::string op;
  double rel_error = 0.0;
};

inline Tensor random_tensor(const Shape& shape, Rng& rng, bool requires_grad, double scale = 1.0,
                            double min_abs = 0.0) {
  std::vector<double> v(metacc::shape_numel(shape));
  for (double& x : v) {
    do {
      x = scale * rng.uniform(-1.0, 1.0);
    } while (std::abs(x) < min_abs);
  }
  return Tensor(shape, std::move(v), requires_grad);
}

/// ||g_tape - g_fd|| / (||g_tape|| + ||g_fd||) for L = sum(f(inputs) * w) with
/// random w, central differences of step h on every input element.
inline double relative_error(const OpFn& f, std::vector<Tensor> inputs, Rng& rng, double h = 1e-6) {
  Tensor weights;
  {
    Tape probe;
    const Tensor out = f(probe, inputs);
    weights = random_tensor(out.shape(), rng, false);
  }
  auto loss_value = [&] {
    Tape tape;
    return ops::sum(tape, ops::mul(tape, f(tape, inputs), weights)).item();
  };

  for (auto& t : inputs) t.zero_grad();
  Tape tape;
  Tensor loss = ops::sum(tape, ops::mul(tape, f(tape, inputs), weights));
  tape.backward(loss);

  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto v = t.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double orig = v[i];
      v[i] = orig + h;
      const double up = loss_value();
      v[i] = orig - h;
      const double down = loss_value();
      v[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
  }
  const double denom = std::sqrt(a2) + std::sqrt(n2);
  return denom < 1e-12 ? std::sqrt(diff2) : std::sqrt(diff2) / denom;
}

/// One randomized case of the named primitive.
inline CaseResult run_case(const std::string& op, Rng& rng) {
  auto dim = [&](std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); };
  CaseResult r{op, 0.0};
  if (op == "conv2d") {
    metacc::Conv2dOptions opt;
    opt.stride_h = dim(1, 2);
    opt.stride_w = dim(1, 2);
    opt.pad_h = dim(0, 1);
    opt.pad_w = dim(0, 1);
    const std::size_t n = dim(1, 2), c = dim(1, 3), o = dim(1, 3), kh = dim(1, 3), kw = dim(1, 3);
    const std::size_t h = std::max<std::size_t>(kh, dim(2, 5)), w = std::max<std::size_t>(kw, dim(2, 4));
    r.rel_error = relative_error(
        [opt](Tape& t, const std::vector<Tensor>& in) { return ops::conv2d(t, in[0], in[1], in[2], opt); },
        {random_tensor({n, c, h, w}, rng, true), random_tensor({o, c, kh, kw}, rng, true),
         random_tensor({o}, rng, true)},
        rng);
  } else if (op == "linear") {
    const std::size_t n = dim(1, 5), in = dim(1, 6), out = dim(1, 4);
    r.rel_error = relative_error(
        [](Tape& t, const std::vector<Tensor>& x) { return ops::linear(t, x[0], x[1], x[2]); },
        {random_tensor({n, in}, rng, true), random_tensor({in, out}, rng, true), random_tensor({out}, rng, true)}, rng);
  } else if (op == "relu") {
    r.rel_error = relative_error([](Tape& t, const std::vector<Tensor>& x) { return ops::relu(t, x[0]); },
                                 {random_tensor({dim(1, 4), dim(1, 6)}, rng, true, 1.0, 1e-3)}, rng);
  } else if (op == "sigmoid") {
    r.rel_error = relative_error([](Tape& t, const std::vector<Tensor>& x) { return ops::sigmoid(t, x[0]); },
                                 {random_tensor({dim(1, 4), dim(1, 6)}, rng, true, 4.0)}, rng);
  } else if (op == "mul") {
    const Shape s{dim(1, 4), dim(1, 5)};
    r.rel_error = relative_error([](Tape& t, const std::vector<Tensor>& x) { return ops::mul(t, x[0], x[1]); },
                                 {random_tensor(s, rng, true), random_tensor(s, rng, true)}, rng);
  } else if (op == "sum") {
    r.rel_error = relative_error([](Tape& t, const std::vector<Tensor>& x) { return ops::sum(t, x[0]); },
                                 {random_tensor({dim(1, 5), dim(1, 5)}, rng, true)}, rng);
  } else if (op == "reshape") {
    const std::size_t a = dim(1, 4), b = dim(1, 4);
    r.rel_error = relative_error(
        [a, b](Tape& t, const std::vector<Tensor>& x) { return ops::reshape(t, x[0], {b, a}); },
        {random_tensor({a, b}, rng, true)}, rng);
  } else if (op == "channels_last") {
    r.rel_error = relative_error(
        [](Tape& t, const std::vector<Tensor>& x) { return ops::channels_last(t, x[0]); },
        {random_tensor({dim(1, 2), dim(1, 3), dim(1, 4), dim(1, 3)}, rng, true)}, rng);
  } else if (op == "bce_with_logits") {
    const Shape s{dim(1, 4), dim(1, 6)};
    Tensor targets(s);
    for (double& v : targets.values()) v = static_cast<double>(rng.index(2));
    r.rel_error = relative_error(
        [targets](Tape& t, const std::vector<Tensor>& x) { return ops::bce_with_logits(t, x[0], targets); },
        {random_tensor(s, rng, true, 5.0)}, rng);
  } else if (op == "prototype_logits") {
    const std::size_t k = dim(1, 4), c = dim(1, 5), q = dim(1, 3), s = dim(1, 5);
    std::vector<std::vector<std::uint8_t>> labels(s, std::vector<std::uint8_t>(k));
    for (auto& l : labels) {
      for (auto& b : l) b = static_cast<std::uint8_t>(rng.index(2));
    }
    r.rel_error = relative_error(
        [labels, k](Tape& t, const std::vector<Tensor>& x) { return ops::prototype_logits(t, x[0], x[1], labels, k); },
        {random_tensor({q * k, c}, rng, true), random_tensor({s * k, c}, rng, true)}, rng);
  } else {
    throw std::invalid_argument("unknown primitive " + op);
  }
  return r;
}

inline const std::vector<std::string>& primitives() {
  static const std::vector<std::string> names{"conv2d",  "linear",  "relu",          "sigmoid",         "mul",
                                              "sum",     "reshape", "channels_last", "bce_with_logits", "prototype_logits"};
  return names;
}

/// `count` cases cycling through every primitive.
inline std::vector<CaseResult> run_suite(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CaseResult> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(run_case(primitives()[i % primitives().size()], rng));
  return out;
}

}  // namespace gradcheck
