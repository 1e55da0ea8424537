#include "dpdn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace dpdn {

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  BackwardFn backward;

  bool leaf() const { return !backward; }
};

}  // namespace detail

namespace {

thread_local bool g_grad_mode = true;

std::shared_ptr<detail::TensorImpl> new_impl(Shape shape, std::vector<Real> data) {
  if (data.size() != shape_numel(shape)) {
    throw Error(ErrorCode::kShape, "data length " + std::to_string(data.size()) +
                                       " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return impl;
}

bool is_single(const Tensor& t) { return t.numel() == 1; }

// Output shape for the scalar-with-tensor broadcasting rule.
Shape broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (is_single(b)) return a.shape();
  if (is_single(a)) return b.shape();
  throw Error(ErrorCode::kShape, std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                                     " and " + shape_str(b.shape()));
}

// Applies a binary op with per-element derivatives da = ∂op/∂a, db = ∂op/∂b.
template <class Fwd, class Da, class Db>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Da da, Db db) {
  Shape shape = broadcast_shape(a, b, name);
  const std::size_t n = shape_numel(shape);
  const bool a1 = a.numel() != n;
  const bool b1 = b.numel() != n;
  auto ad = a.data();
  auto bd = b.data();
  std::vector<Real> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ad[a1 ? 0 : i], bd[b1 ? 0 : i]);
  return Tensor::make_op(
      std::move(shape), std::move(out), {a, b},
      [a, b, a1, b1, da, db](std::span<const Real> g, std::span<std::span<Real>> grads) {
        auto ad = a.data();
        auto bd = b.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const Real x = ad[a1 ? 0 : i];
          const Real y = bd[b1 ? 0 : i];
          if (!grads[0].empty()) grads[0][a1 ? 0 : i] += g[i] * da(x, y);
          if (!grads[1].empty()) grads[1][b1 ? 0 : i] += g[i] * db(x, y);
        }
      });
}

// Applies a unary op whose derivative is a function of the input value.
template <class Fwd, class D>
Tensor unary(const Tensor& x, Fwd fwd, D deriv) {
  auto xd = x.data();
  std::vector<Real> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = fwd(xd[i]);
  return Tensor::make_op(x.shape(), std::move(out), {x},
                         [x, deriv](std::span<const Real> g, std::span<std::span<Real>> grads) {
                           auto xd = x.data();
                           for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += g[i] * deriv(xd[i]);
                         });
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw Error(ErrorCode::kShape, "negative dimension in " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "×" : "") << shape[i];
  os << ')';
  return os.str();
}

bool grad_mode_enabled() { return g_grad_mode; }

NoGradGuard::NoGradGuard() : previous_(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = previous_; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0, requires_grad); }

Tensor Tensor::full(Shape shape, Real value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<Real>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<Real> data, bool requires_grad) {
  Tensor t(new_impl(std::move(shape), std::move(data)));
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(Real value, bool requires_grad) { return from_data({}, {value}, requires_grad); }

detail::TensorImpl& Tensor::impl() const {
  if (!impl_) throw Error(ErrorCode::kState, "use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

int Tensor::dim(int i) const {
  const auto& s = shape();
  if (i < 0 || i >= static_cast<int>(s.size())) {
    throw Error(ErrorCode::kShape, "dimension index " + std::to_string(i) + " out of range for " + shape_str(s));
  }
  return s[i];
}

std::size_t Tensor::numel() const { return impl().data.size(); }
std::span<const Real> Tensor::data() const { return impl().data; }
std::span<Real> Tensor::mutable_data() { return impl().data; }

Real Tensor::item() const {
  if (numel() != 1) throw Error(ErrorCode::kShape, "item() on tensor of shape " + shape_str(shape()));
  return impl().data[0];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }

void Tensor::set_requires_grad(bool value) {
  if (!impl().leaf()) throw Error(ErrorCode::kState, "requires_grad can only be set on leaf tensors");
  impl().requires_grad = value;
}

bool Tensor::is_leaf() const { return impl().leaf(); }
bool Tensor::has_grad() const { return !impl().grad.empty(); }
std::span<const Real> Tensor::grad() const { return impl().grad; }
std::span<Real> Tensor::mutable_grad() { return impl().grad; }

void Tensor::zero_grad() {
  auto& g = impl().grad;
  std::fill(g.begin(), g.end(), Real(0));
}

Tensor Tensor::detach() const { return from_data(shape(), impl().data, false); }

Tensor Tensor::reshape(Shape new_shape) const {
  if (shape_numel(new_shape) != numel()) {
    throw Error(ErrorCode::kShape, "cannot reshape " + shape_str(shape()) + " to " + shape_str(new_shape));
  }
  return make_op(std::move(new_shape), impl().data, {*this},
                 [](std::span<const Real> g, std::span<std::span<Real>> grads) {
                   for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += g[i];
                 });
}

Tensor Tensor::make_op(Shape shape, std::vector<Real> values, std::vector<Tensor> inputs, BackwardFn backward) {
  auto impl = new_impl(std::move(shape), std::move(values));
  if (g_grad_mode) {
    const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      impl->requires_grad = true;
      impl->backward = std::move(backward);
      impl->parents.reserve(inputs.size());
      for (auto& t : inputs) impl->parents.push_back(t.impl_);
    }
  }
  return Tensor(std::move(impl));
}

void Tensor::backward() const {
  auto& root = impl();
  if (root.data.size() != 1) {
    throw Error(ErrorCode::kShape, "backward() needs a scalar loss, got shape " + shape_str(root.shape));
  }
  if (!root.requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> visited;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack{{impl_.get(), 0}};
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::TensorImpl* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* node : order) {
    if (!node->leaf()) {
      node->grad.assign(node->data.size(), Real(0));
    } else if (node->grad.size() != node->data.size()) {
      node->grad.assign(node->data.size(), Real(0));
    }
  }
  root.grad[0] += 1;

  std::vector<std::span<Real>> spans;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* node = *it;
    if (node->leaf()) continue;
    spans.clear();
    for (auto& parent : node->parents) {
      spans.push_back(parent->requires_grad ? std::span<Real>(parent->grad) : std::span<Real>());
    }
    node->backward(node->grad, spans);
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](Real x, Real y) { return x + y; }, [](Real, Real) { return Real(1); },
      [](Real, Real) { return Real(1); });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](Real x, Real y) { return x - y; }, [](Real, Real) { return Real(1); },
      [](Real, Real) { return Real(-1); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](Real x, Real y) { return x * y; }, [](Real, Real y) { return y; },
      [](Real x, Real) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (Real v : b.data()) {
    if (std::abs(v) < Real(1e-30)) throw Error(ErrorCode::kNumeric, "division by a value with magnitude < 1e-30");
  }
  return binary(
      a, b, "div", [](Real x, Real y) { return x / y; }, [](Real, Real y) { return 1 / y; },
      [](Real x, Real y) { return -x / (y * y); });
}

Tensor scale(const Tensor& x, Real factor) {
  return unary(x, [factor](Real v) { return factor * v; }, [factor](Real) { return factor; });
}

Tensor add_scalar(const Tensor& x, Real value) {
  return unary(x, [value](Real v) { return v + value; }, [](Real) { return Real(1); });
}

Tensor clamp(const Tensor& x, Real lo, Real hi) {
  if (lo > hi) throw Error(ErrorCode::kDomain, "clamp with lo > hi");
  return unary(
      x, [lo, hi](Real v) { return std::clamp(v, lo, hi); },
      [lo, hi](Real v) { return (v > lo && v < hi) ? Real(1) : Real(0); });
}

Tensor huber(const Tensor& x, Real eps) {
  if (eps < 0) throw Error(ErrorCode::kDomain, "huber threshold must be non-negative");
  return unary(
      x, [eps](Real v) { return huber_value(v, eps); },
      [eps](Real v) {
        if (std::abs(v) <= eps) return eps > 0 ? v / eps : Real(0);
        return v > 0 ? Real(1) : Real(-1);
      });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](Real v) { return v > 0 ? v : Real(0); }, [](Real v) { return v > 0 ? Real(1) : Real(0); });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, [](Real v) { return std::abs(v); },
      [](Real v) { return v > 0 ? Real(1) : (v < 0 ? Real(-1) : Real(0)); });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](Real v) { return std::exp(v); }, [](Real v) { return std::exp(v); });
}

Tensor sum(const Tensor& x) {
  Real s = 0;
  for (Real v : x.data()) s += v;
  return Tensor::make_op({}, {s}, {x}, [](std::span<const Real> g, std::span<std::span<Real>> grads) {
    for (Real& v : grads[0]) v += g[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw Error(ErrorCode::kShape, "mean of an empty tensor");
  const Real n = static_cast<Real>(x.numel());
  Real s = 0;
  for (Real v : x.data()) s += v;
  return Tensor::make_op({}, {s / n}, {x}, [n](std::span<const Real> g, std::span<std::span<Real>> grads) {
    for (Real& v : grads[0]) v += g[0] / n;
  });
}

Tensor sse(const Tensor& x, const Tensor& y) {
  if (x.shape() != y.shape()) {
    throw Error(ErrorCode::kShape, "sse: shapes " + shape_str(x.shape()) + " and " + shape_str(y.shape()));
  }
  auto xd = x.data();
  auto yd = y.data();
  Real s = 0;
  for (std::size_t i = 0; i < xd.size(); ++i) s += (xd[i] - yd[i]) * (xd[i] - yd[i]);
  return Tensor::make_op({}, {s}, {x, y}, [x, y](std::span<const Real> g, std::span<std::span<Real>> grads) {
    auto xd = x.data();
    auto yd = y.data();
    for (std::size_t i = 0; i < xd.size(); ++i) {
      const Real d = 2 * (xd[i] - yd[i]) * g[0];
      if (!grads[0].empty()) grads[0][i] += d;
      if (!grads[1].empty()) grads[1][i] -= d;
    }
  });
}

Tensor channel_slice(const Tensor& x, int begin, int count) {
  if (x.rank() != 3 || begin < 0 || count < 0 || begin + count > x.dim(0)) {
    throw Error(ErrorCode::kShape, "channel_slice [" + std::to_string(begin) + ", +" + std::to_string(count) +
                                       ") of " + shape_str(x.shape()));
  }
  const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  auto xd = x.data();
  std::vector<Real> out(xd.begin() + begin * plane, xd.begin() + (begin + count) * plane);
  return Tensor::make_op({count, x.dim(1), x.dim(2)}, std::move(out), {x},
                         [begin, plane](std::span<const Real> g, std::span<std::span<Real>> grads) {
                           Real* dst = grads[0].data() + begin * plane;
                           for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
                         });
}

MomentumSgd::MomentumSgd(std::vector<Tensor> params, double lr, double momentum, double clip_norm)
    : params_(std::move(params)), velocity_(params_.size()), lr_(lr), momentum_(momentum), clip_norm_(clip_norm) {
  for (std::size_t i = 0; i < params_.size(); ++i) velocity_[i].assign(params_[i].numel(), Real(0));
}

void MomentumSgd::step() {
  for (auto& p : params_) {
    if (!p.has_grad()) throw Error(ErrorCode::kState, "parameter of shape " + shape_str(p.shape()) + " has no gradient");
  }
  Real g_scale = 1;
  if (clip_norm_ > 0) {
    double sq = 0;
    for (auto& p : params_) {
      for (Real g : p.mutable_grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sq);
    if (norm > clip_norm_) g_scale = static_cast<Real>(clip_norm_ / norm);
  }
  const Real lr = static_cast<Real>(lr_);
  const Real m = static_cast<Real>(momentum_);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto data = params_[k].mutable_data();
    auto grad = params_[k].mutable_grad();
    auto& v = velocity_[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      v[i] = m * v[i] + g_scale * grad[i];
      data[i] -= lr * v[i];
    }
    params_[k].zero_grad();
  }
}

}  // namespace dpdn
