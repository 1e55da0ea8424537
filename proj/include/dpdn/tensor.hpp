#pragma once

// Dense tensors with a small reverse-mode automatic differentiation engine.
//
// Every op that consumes a tensor requiring gradients records a node holding
// its inputs and a backward closure. The graph is implicit in those parent
// links; Tensor::backward() orders the reachable nodes topologically and runs
// the closures in reverse. Recording is skipped inside a NoGradGuard scope.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dpdn/error.hpp"

namespace dpdn {

#ifdef DPDN_FLOAT32
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl;
}

class Tensor;

// Receives the output gradient and writes into the gradients of the inputs.
// input_grads[i] is empty when input i does not require a gradient.
using BackwardFn =
    std::function<void(std::span<const Real> out_grad, std::span<std::span<Real>> input_grads)>;

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<Real> data, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int dim(int i) const;
  int rank() const { return static_cast<int>(shape().size()); }
  std::size_t numel() const;

  std::span<const Real> data() const;
  // Mutable access is meant for leaves (parameters, inputs) before they are
  // consumed by a recorded op, and for optimizers after backward.
  std::span<Real> mutable_data();
  Real item() const;
  Real operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const Real> grad() const;
  std::span<Real> mutable_grad();
  void zero_grad();

  // Copy of the values with no graph attached.
  Tensor detach() const;
  // Same storage semantics as the input, new shape with equal element count.
  Tensor reshape(Shape shape) const;

  // Accumulates d(this)/d(leaf) into every reachable leaf that requires grad.
  // Intermediate gradients are reset on every call, leaf gradients add up.
  void backward() const;

  // Builds a result tensor and, when grad mode is on and any input requires a
  // gradient, records the backward closure.
  static Tensor make_op(Shape shape, std::vector<Real> values, std::vector<Tensor> inputs,
                        BackwardFn backward);

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  detail::TensorImpl& impl() const;

  std::shared_ptr<detail::TensorImpl> impl_;
};

bool grad_mode_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Elementwise. Binary ops accept equal shapes or a single-element operand.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, Real factor);
Tensor add_scalar(const Tensor& x, Real value);
Tensor clamp(const Tensor& x, Real lo, Real hi);
Tensor huber(const Tensor& x, Real eps);
Tensor relu(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor exp(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(Real factor, const Tensor& x) { return scale(x, factor); }

// Reductions to a scalar (rank-0) tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sse(const Tensor& x, const Tensor& y);

// Channels [begin, begin + count) of a C×H×W tensor.
Tensor channel_slice(const Tensor& x, int begin, int count);

// Same-padding 3×3 cross-correlation: input C×H×W, kernels O×C×3×3, bias O.
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias);

// Scalar Huber penalty, x²/(2ε) for |x| ≤ ε and |x| − ε/2 otherwise.
inline Real huber_value(Real x, Real eps) {
  const Real a = x < 0 ? -x : x;
  return a <= eps ? (eps > 0 ? x * x / (2 * eps) : Real(0)) : a - eps / 2;
}

// SGD with a momentum term: v ← m·v + g, θ ← θ − lr·v, then gradients are zeroed.
// With clip_norm > 0 the gradients are first rescaled so their joint L2 norm is at most clip_norm.
class MomentumSgd {
 public:
  MomentumSgd(std::vector<Tensor> params, double lr, double momentum, double clip_norm = 0);

  void step();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<Real>> velocity_;
  double lr_;
  double momentum_;
  double clip_norm_;
};

}  // namespace dpdn
