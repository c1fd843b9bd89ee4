#include "metacc/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace metacc {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

// --- Tensor ------------------------------------------------------------------

Tensor::Tensor(Shape shape, bool requires_grad) : impl_(std::make_shared<Impl>()) {
  impl_->values.assign(shape_numel(shape), 0.0);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) : impl_(std::make_shared<Impl>()) {
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("tensor shape " + shape_string(shape) + " does not match " +
                                std::to_string(values.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  impl_->requires_grad = requires_grad;
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::numel() const { return impl_->values.size(); }
std::span<double> Tensor::values() { return impl_->values; }
std::span<const double> Tensor::values() const { return impl_->values; }

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_string(shape()));
  return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool on) { impl_->requires_grad = on; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }

std::span<double> Tensor::grad() {
  if (impl_->grad.empty()) impl_->grad.assign(numel(), 0.0);
  return impl_->grad;
}

std::span<const double> Tensor::grad() const { return impl_->grad; }

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const { return Tensor(impl_->shape, impl_->values, impl_->requires_grad); }

// --- Tape --------------------------------------------------------------------

void Tape::backward(Tensor& loss) {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward() requires a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) throw std::invalid_argument("backward() on a loss that does not require grad");
  loss.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

namespace ops {

namespace {

void require_finite(const Tensor& t, const char* op) {
  for (const double v : t.values()) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(op) + ": non-finite input");
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.shape().size() != rank) {
    throw std::invalid_argument(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                                ", got " + shape_string(t.shape()));
  }
}

/// Output tensor that requires grad iff any input does.
template <typename... Ts>
Tensor make_output(Shape shape, const Ts&... inputs) {
  return Tensor(std::move(shape), (inputs.requires_grad() || ...));
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias, Conv2dOptions opt) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  require_rank(bias, 1, "conv2d", "bias");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t o = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != c) {
    throw std::invalid_argument("conv2d: weight " + shape_string(weight.shape()) + " incompatible with input " +
                                shape_string(input.shape()));
  }
  if (bias.dim(0) != o) throw std::invalid_argument("conv2d: bias size must equal output channels");
  if (opt.stride_h == 0 || opt.stride_w == 0) throw std::invalid_argument("conv2d: zero stride");
  if (h + 2 * opt.pad_h < kh || w + 2 * opt.pad_w < kw) throw std::invalid_argument("conv2d: kernel larger than input");
  const std::size_t ho = (h + 2 * opt.pad_h - kh) / opt.stride_h + 1;
  const std::size_t wo = (w + 2 * opt.pad_w - kw) / opt.stride_w + 1;
  const std::size_t positions = ho * wo;
  const std::size_t cols_n = n * positions;

  // Kernel taps that read a real (non-padding) input element for at least one
  // output position; the others only ever multiply zeros and are skipped.
  struct Tap {
    std::size_t ch, i, j;
  };
  std::vector<Tap> taps;
  auto row_hits = [&](std::size_t i) {
    for (std::size_t oh = 0; oh < ho; ++oh) {
      const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(oh * opt.stride_h + i) - static_cast<std::ptrdiff_t>(opt.pad_h);
      if (r >= 0 && r < static_cast<std::ptrdiff_t>(h)) return true;
    }
    return false;
  };
  auto col_hits = [&](std::size_t j) {
    for (std::size_t ow = 0; ow < wo; ++ow) {
      const std::ptrdiff_t q = static_cast<std::ptrdiff_t>(ow * opt.stride_w + j) - static_cast<std::ptrdiff_t>(opt.pad_w);
      if (q >= 0 && q < static_cast<std::ptrdiff_t>(w)) return true;
    }
    return false;
  };
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < kh; ++i) {
      if (!row_hits(i)) continue;
      for (std::size_t j = 0; j < kw; ++j) {
        if (col_hits(j)) taps.push_back({ch, i, j});
      }
    }
  }
  const std::size_t t_count = taps.size();

  // cols[t, img*positions + p]
  auto cols = std::make_shared<RowMat>(RowMat::Zero(static_cast<Eigen::Index>(t_count), static_cast<Eigen::Index>(cols_n)));
  const auto x = input.values();
  for (std::size_t t = 0; t < t_count; ++t) {
    const Tap& tap = taps[t];
    double* row = cols->row(static_cast<Eigen::Index>(t)).data();
    for (std::size_t img = 0; img < n; ++img) {
      const double* plane = x.data() + (img * c + tap.ch) * h * w;
      for (std::size_t oh = 0; oh < ho; ++oh) {
        const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(oh * opt.stride_h + tap.i) - static_cast<std::ptrdiff_t>(opt.pad_h);
        if (r < 0 || r >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t ow = 0; ow < wo; ++ow) {
          const std::ptrdiff_t q = static_cast<std::ptrdiff_t>(ow * opt.stride_w + tap.j) - static_cast<std::ptrdiff_t>(opt.pad_w);
          if (q < 0 || q >= static_cast<std::ptrdiff_t>(w)) continue;
          row[img * positions + oh * wo + ow] = plane[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(q)];
        }
      }
    }
  }

  auto tap_index = [kh, kw](const Tap& tap) { return ((tap.ch * kh) + tap.i) * kw + tap.j; };
  RowMat wa(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(t_count));
  const auto wv = weight.values();
  for (std::size_t oc = 0; oc < o; ++oc) {
    for (std::size_t t = 0; t < t_count; ++t) wa(static_cast<Eigen::Index>(oc), static_cast<Eigen::Index>(t)) = wv[oc * c * kh * kw + tap_index(taps[t])];
  }

  RowMat out_mat = wa * (*cols);
  Tensor out = make_output({n, o, ho, wo}, input, weight, bias);
  auto ov = out.values();
  const auto bv = bias.values();
  for (std::size_t img = 0; img < n; ++img) {
    for (std::size_t oc = 0; oc < o; ++oc) {
      const double* src = out_mat.row(static_cast<Eigen::Index>(oc)).data() + img * positions;
      double* dst = ov.data() + (img * o + oc) * positions;
      for (std::size_t p = 0; p < positions; ++p) dst[p] = src[p] + bv[oc];
    }
  }

  if (out.requires_grad()) {
    tape.record([=, taps = std::move(taps), wa = std::move(wa)]() mutable {
      Tensor res = out;
      if (!res.has_grad()) return;
      const auto g = std::as_const(res).grad();
      RowMat g_mat(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(cols_n));
      for (std::size_t img = 0; img < n; ++img) {
        for (std::size_t oc = 0; oc < o; ++oc) {
          const double* src = g.data() + (img * o + oc) * positions;
          double* dst = g_mat.row(static_cast<Eigen::Index>(oc)).data() + img * positions;
          std::copy(src, src + positions, dst);
        }
      }
      Tensor b_t = bias, w_t = weight, x_t = input;
      if (b_t.requires_grad()) {
        auto gb = b_t.grad();
        for (std::size_t oc = 0; oc < o; ++oc) gb[oc] += g_mat.row(static_cast<Eigen::Index>(oc)).sum();
      }
      if (w_t.requires_grad()) {
        const RowMat gw = g_mat * cols->transpose();
        auto gwv = w_t.grad();
        for (std::size_t oc = 0; oc < o; ++oc) {
          for (std::size_t t = 0; t < taps.size(); ++t) {
            gwv[oc * c * kh * kw + tap_index(taps[t])] += gw(static_cast<Eigen::Index>(oc), static_cast<Eigen::Index>(t));
          }
        }
      }
      if (x_t.requires_grad()) {
        const RowMat gcols = wa.transpose() * g_mat;
        auto gx = x_t.grad();
        for (std::size_t t = 0; t < taps.size(); ++t) {
          const Tap& tap = taps[t];
          const double* row = gcols.row(static_cast<Eigen::Index>(t)).data();
          for (std::size_t img = 0; img < n; ++img) {
            double* plane = gx.data() + (img * c + tap.ch) * h * w;
            for (std::size_t oh = 0; oh < ho; ++oh) {
              const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(oh * opt.stride_h + tap.i) - static_cast<std::ptrdiff_t>(opt.pad_h);
              if (r < 0 || r >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t ow = 0; ow < wo; ++ow) {
                const std::ptrdiff_t q = static_cast<std::ptrdiff_t>(ow * opt.stride_w + tap.j) - static_cast<std::ptrdiff_t>(opt.pad_w);
                if (q < 0 || q >= static_cast<std::ptrdiff_t>(w)) continue;
                plane[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(q)] += row[img * positions + oh * wo + ow];
              }
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor linear(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 2, "linear", "input");
  require_rank(weight, 2, "linear", "weight");
  require_rank(bias, 1, "linear", "bias");
  const std::size_t n = input.dim(0), in = input.dim(1), outf = weight.dim(1);
  if (weight.dim(0) != in || bias.dim(0) != outf) {
    throw std::invalid_argument("linear: shapes " + shape_string(input.shape()) + " x " +
                                shape_string(weight.shape()) + " + " + shape_string(bias.shape()) + " disagree");
  }
  require_finite(input, "linear");
  const auto ei = static_cast<Eigen::Index>(in), en = static_cast<Eigen::Index>(n), eo = static_cast<Eigen::Index>(outf);
  Tensor out = make_output({n, outf}, input, weight, bias);
  {
    ConstMatMap x(input.values().data(), en, ei);
    ConstMatMap wm(weight.values().data(), ei, eo);
    MatMap y(out.values().data(), en, eo);
    y.noalias() = x * wm;
    const Eigen::Map<const Eigen::RowVectorXd> b(bias.values().data(), eo);
    y.rowwise() += b;
  }
  if (out.requires_grad()) {
    tape.record([=]() mutable {
      if (!out.has_grad()) return;
      ConstMatMap g(std::as_const(out).grad().data(), en, eo);
      Tensor x_t = input, w_t = weight, b_t = bias;
      if (b_t.requires_grad()) {
        Eigen::Map<Eigen::RowVectorXd> gb(b_t.grad().data(), eo);
        gb += g.colwise().sum();
      }
      if (w_t.requires_grad()) {
        ConstMatMap x(std::as_const(x_t).values().data(), en, ei);
        MatMap gw(w_t.grad().data(), ei, eo);
        gw.noalias() += x.transpose() * g;
      }
      if (x_t.requires_grad()) {
        ConstMatMap wm(std::as_const(w_t).values().data(), ei, eo);
        MatMap gx(x_t.grad().data(), en, ei);
        gx.noalias() += g * wm.transpose();
      }
    });
  }
  return out;
}

Tensor relu(Tape& tape, const Tensor& x) {
  Tensor out = make_output(x.shape(), x);
  const auto xv = x.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  if (out.requires_grad()) {
    tape.record([=]() mutable {
      if (!out.has_grad()) return;
      Tensor in = x;
      const auto g = std::as_const(out).grad();
      const auto v = std::as_const(in).values();
      auto gx = in.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (v[i] > 0.0) gx[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  require_finite(x, "sigmoid");
  Tensor out = make_output(x.shape(), x);
  const auto xv = x.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    // split by sign so exp never overflows
    ov[i] = xv[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-xv[i])) : std::exp(xv[i]) / (1.0 + std::exp(xv[i]));
  }
  if (out.requires_grad()) {
    tape.record([=]() mutable {
      if (!out.has_grad()) return;
      Tensor in = x;
      const auto g = std::as_const(out).grad();
      const auto s = std::as_const(out).values();
      auto gx = in.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * s[i] * (1.0 - s[i]);
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("mul: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  Tensor out = make_output(a.shape(), a, b);
  const auto av = a.values(), bv = b.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] * bv[i];
  if (out.requires_grad()) {
    tape.record([=]() mutable {
      if (!out.has_grad()) return;
      Tensor ta = a, tb = b;
      const auto g = std::as_const(out).grad();
      // read values before touching grads: a and b may be the same tensor
      const auto va = std::as_const(ta).values(), vb = std::as_const(tb).values();
      if (ta.requires_grad()) {
        auto ga = ta.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
      }
      if (tb.requires_grad()) {
        auto gb = tb.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
      }
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
  Tensor out = make_output({}, x);
  const auto xv = x.values();
  out.values()[0] = std::accumulate(xv.begin(), xv.end(), 0.0);
  if (out.requires_grad()) {
    tape.record([=]() mutable {
      if (!out.has_grad()) return;
      Tensor in = x;
      const double g = std::as_const(out).grad()[0];
      for (double& v : in.grad()) v += g;
    });
  }
  return out;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  const auto xv = x.values();
  Tensor out(std::move(shape), std::vector<double>(xv.begin(), xv.end()), x.requires_grad());
  if (out.requires_grad()) {
    tape.record([=]() mutable {
      if (!out.has_grad()) return;
      Tensor in = x;
      const auto g = std::as_const(out).grad();
      auto gx = in.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

Tensor channels_last(Tape& tape, const Tensor& x) {
  require_rank(x, 4, "channels_last", "input");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out = make_output({n * hw, c}, x);
  const auto xv = x.values();
  auto ov = out.values();
  for (std::size_t img = 0; img < n; ++img) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t p = 0; p < hw; ++p) ov[(img * hw + p) * c + ch] = xv[(img * c + ch) * hw + p];
    }
  }
  if (out.requires_grad()) {
    tape.record([=]() mutable {
      if (!out.has_grad()) return;
      Tensor in = x;
      const auto g = std::as_const(out).grad();
      auto gx = in.grad();
      for (std::size_t img = 0; img < n; ++img) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t p = 0; p < hw; ++p) gx[(img * c + ch) * hw + p] += g[(img * hw + p) * c + ch];
        }
      }
    });
  }
  return out;
}

Tensor bce_with_logits(Tape& tape, const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape()) {
    throw std::invalid_argument("bce_with_logits: shape mismatch " + shape_string(logits.shape()) + " vs " +
                                shape_string(targets.shape()));
  }
  if (logits.numel() == 0) throw std::invalid_argument("bce_with_logits: empty input");
  require_finite(logits, "bce_with_logits");
  for (const double t : targets.values()) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("bce_with_logits: targets must lie in [0,1]");
  }
  const auto x = logits.values(), t = targets.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += std::max(x[i], 0.0) - x[i] * t[i] + std::log1p(std::exp(-std::abs(x[i])));
  }
  const double count = static_cast<double>(x.size());
  Tensor out = make_output({}, logits);
  out.values()[0] = acc / count;
  if (out.requires_grad()) {
    tape.record([=]() mutable {
      if (!out.has_grad()) return;
      Tensor in = logits;
      const double g = std::as_const(out).grad()[0] / count;
      const auto xv = std::as_const(in).values();
      const auto tv = targets.values();
      auto gx = in.grad();
      for (std::size_t i = 0; i < xv.size(); ++i) {
        const double s = xv[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-xv[i])) : std::exp(xv[i]) / (1.0 + std::exp(xv[i]));
        gx[i] += g * (s - tv[i]);
      }
    });
  }
  return out;
}

Tensor prototype_logits(Tape& tape, const Tensor& query_emb, const Tensor& support_emb,
                        const std::vector<std::vector<std::uint8_t>>& support_labels, std::size_t k) {
  require_rank(query_emb, 2, "prototype_logits", "query embeddings");
  require_rank(support_emb, 2, "prototype_logits", "support embeddings");
  const std::size_t c = query_emb.dim(1);
  if (k == 0 || support_emb.dim(1) != c || query_emb.dim(0) % k != 0 || support_emb.dim(0) % k != 0) {
    throw std::invalid_argument("prototype_logits: embedding shapes disagree");
  }
  const std::size_t q_rows = query_emb.dim(0) / k, s_rows = support_emb.dim(0) / k;
  if (s_rows == 0 || support_labels.size() != s_rows) {
    throw std::invalid_argument("prototype_logits: need one label vector per support row");
  }
  for (const auto& l : support_labels) {
    if (l.size() != k) throw std::invalid_argument("prototype_logits: label length must equal K");
  }

  // members[pos][v] = support rows contributing to prototype (pos, v)
  std::vector<std::array<std::vector<std::size_t>, 2>> members(k);
  for (std::size_t pos = 0; pos < k; ++pos) {
    for (std::size_t s = 0; s < s_rows; ++s) members[pos][support_labels[s][pos] ? 1 : 0].push_back(s);
    for (auto& m : members[pos]) {
      if (m.empty()) {
        m.resize(s_rows);
        std::iota(m.begin(), m.end(), 0);
      }
    }
  }

  const auto sv = support_emb.values();
  std::vector<double> protos(k * 2 * c, 0.0);  // [pos][v][c]
  for (std::size_t pos = 0; pos < k; ++pos) {
    for (int v = 0; v < 2; ++v) {
      double* p = protos.data() + (pos * 2 + v) * c;
      for (const std::size_t s : members[pos][v]) {
        const double* e = sv.data() + (s * k + pos) * c;
        for (std::size_t ch = 0; ch < c; ++ch) p[ch] += e[ch];
      }
      const double inv = 1.0 / static_cast<double>(members[pos][v].size());
      for (std::size_t ch = 0; ch < c; ++ch) p[ch] *= inv;
    }
  }

  Tensor out = make_output({q_rows, k}, query_emb, support_emb);
  const auto qv = query_emb.values();
  auto ov = out.values();
  for (std::size_t q = 0; q < q_rows; ++q) {
    for (std::size_t pos = 0; pos < k; ++pos) {
      const double* e = qv.data() + (q * k + pos) * c;
      const double* p0 = protos.data() + (pos * 2) * c;
      const double* p1 = p0 + c;
      double d0 = 0.0, d1 = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        d0 += (e[ch] - p0[ch]) * (e[ch] - p0[ch]);
        d1 += (e[ch] - p1[ch]) * (e[ch] - p1[ch]);
      }
      ov[q * k + pos] = 0.5 * (d0 - d1);
    }
  }

  if (out.requires_grad()) {
    tape.record([=, members = std::move(members), protos = std::move(protos)]() mutable {
      if (!out.has_grad()) return;
      const auto g = std::as_const(out).grad();
      Tensor qt = query_emb, st = support_emb;
      const auto qvals = std::as_const(qt).values();
      std::vector<double> gproto(k * 2 * c, 0.0);
      std::span<double> gq;
      if (qt.requires_grad()) gq = qt.grad();
      for (std::size_t q = 0; q < q_rows; ++q) {
        for (std::size_t pos = 0; pos < k; ++pos) {
          const double gl = g[q * k + pos];
          if (gl == 0.0) continue;
          const double* e = qvals.data() + (q * k + pos) * c;
          const double* p0 = protos.data() + (pos * 2) * c;
          const double* p1 = p0 + c;
          double* gp0 = gproto.data() + (pos * 2) * c;
          double* gp1 = gp0 + c;
          for (std::size_t ch = 0; ch < c; ++ch) {
            if (!gq.empty()) gq[(q * k + pos) * c + ch] += gl * (p1[ch] - p0[ch]);
            gp0[ch] += gl * (p0[ch] - e[ch]);
            gp1[ch] += gl * (e[ch] - p1[ch]);
          }
        }
      }
      if (st.requires_grad()) {
        auto gs = st.grad();
        for (std::size_t pos = 0; pos < k; ++pos) {
          for (int v = 0; v < 2; ++v) {
            const double* gp = gproto.data() + (pos * 2 + v) * c;
            const double inv = 1.0 / static_cast<double>(members[pos][v].size());
            for (const std::size_t s : members[pos][v]) {
              double* dst = gs.data() + (s * k + pos) * c;
              for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += gp[ch] * inv;
            }
          }
        }
      }
    });
  }
  return out;
}

}  // namespace ops

// --- optimizers --------------------------------------------------------------

void sgd_step(std::span<Tensor> params, double lr) {
  for (Tensor& p : params) {
    if (!p.has_grad()) continue;
    auto v = p.values();
    const auto g = std::as_const(p).grad();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
  }
}

void adam_step(std::span<Tensor> params, const AdamConfig& cfg, AdamState& state) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].numel(), 0.0);
      state.v[i].assign(params[i].numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: parameter list changed");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    if (state.m[pi].size() != p.numel()) throw std::invalid_argument("adam_step: parameter shape changed");
    if (!p.has_grad()) continue;
    auto v = p.values();
    const auto g = std::as_const(p).grad();
    auto& m1 = state.m[pi];
    auto& m2 = state.v[pi];
    for (std::size_t i = 0; i < v.size(); ++i) {
      m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * g[i];
      m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m1[i] / bc1;
      const double vhat = m2[i] / bc2;
      v[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace metacc
