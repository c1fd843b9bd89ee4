#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace metacc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor of doubles with an optional gradient accumulator.
/// Copies share storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double v, bool requires_grad = false) { return Tensor({}, {v}, requires_grad); }

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  std::size_t numel() const;

  std::span<double> values();
  std::span<const double> values() const;
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  /// Gradient buffer, allocated (zeroed) on first access.
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();

  /// Deep copy of shape, values and requires_grad; the gradient is not copied.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until needed
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

/// Ordered record of backward closures. Nodes are appended in forward order,
/// so walking them in reverse visits each exactly once in topological order.
/// First-order only: backward closures do not record onto a tape.
class Tape {
 public:
  void record(std::function<void()> backward) { nodes_.push_back(std::move(backward)); }
  /// Seeds d(loss)/d(loss) = 1 and runs every node in reverse. Throws if the
  /// loss is not a scalar or does not require grad.
  void backward(Tensor& loss);
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<std::function<void()>> nodes_;
};

struct Conv2dOptions {
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
};

namespace ops {

/// Cross-correlation: input [N,C,H,W], weight [O,C,kH,kW], bias [O] -> [N,O,Ho,Wo]
/// with Ho = (H + 2 pad_h - kH) / stride_h + 1 (likewise for width).
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias, Conv2dOptions opt);

/// input [N,in], weight [in,out], bias [out] -> [N,out].
Tensor linear(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor relu(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sum(Tape& tape, const Tensor& x);

/// Same values, new shape (element count must match).
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);

/// [N,C,H,W] -> [N*H*W, C]: one row per spatial position.
Tensor channels_last(Tape& tape, const Tensor& x);

/// Mean binary cross-entropy between logits and targets in [0,1], in the
/// stable form max(x,0) - x t + log(1 + exp(-|x|)). Targets are constants.
Tensor bce_with_logits(Tape& tape, const Tensor& logits, const Tensor& targets);

/// Multi-label nearest-prototype scoring. Embeddings are [rows*K, C] with the
/// K positions of a row contiguous. For each position k and value v the
/// prototype is the mean support embedding over rows whose label at k is v
/// (the mean over all support rows if none). Returns [Q, K] logits
///   (|e - p0|^2 - |e - p1|^2) / 2.
Tensor prototype_logits(Tape& tape, const Tensor& query_emb, const Tensor& support_emb,
                        const std::vector<std::vector<std::uint8_t>>& support_labels, std::size_t k);

}  // namespace ops

void sgd_step(std::span<Tensor> params, double lr);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

/// Bias-corrected Adam update using each parameter's gradient buffer.
void adam_step(std::span<Tensor> params, const AdamConfig& cfg, AdamState& state);

}  // namespace metacc
