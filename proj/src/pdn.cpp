#include "dpdn/pdn.hpp"

#include <algorithm>
#include <cmath>

namespace dpdn {

PdnParams PdnParams::init(int iters, const Neighborhood& nbh, Real lambda0, Real eps0, Real sigma_d, Real sigma_v) {
  if (iters < 0) throw Error(ErrorCode::kConfig, "PDN iteration count must be non-negative");
  if (!(lambda0 >= 0) || !(eps0 > 0) || !(sigma_d > 0) || !(sigma_v > 0)) {
    throw Error(ErrorCode::kConfig, "PDN initial values need λ ≥ 0 and ε, σd, σv > 0");
  }
  const Real step = 1 / std::sqrt(operator_norm_bound(nbh));
  PdnParams p;
  p.iters = iters;
  for (int n = 0; n < iters; ++n) {
    p.log_tau.push_back(Tensor::scalar(std::log(step), true));
    p.log_sigma.push_back(Tensor::scalar(std::log(step), true));
    p.lambda.push_back(Tensor::scalar(lambda0, true));
    p.log_eps.push_back(Tensor::scalar(std::log(eps0), true));
  }
  p.log_sigma_d = Tensor::scalar(std::log(sigma_d), true);
  p.log_sigma_v = Tensor::scalar(std::log(sigma_v), true);
  return p;
}

Real PdnParams::tau(int n) const { return std::exp(log_tau[n].item()); }
Real PdnParams::sigma(int n) const { return std::exp(log_sigma[n].item()); }
Real PdnParams::eps(int n) const { return std::exp(log_eps[n].item()); }
Real PdnParams::sigma_d() const { return std::exp(log_sigma_d.item()); }
Real PdnParams::sigma_v() const { return std::exp(log_sigma_v.item()); }

std::vector<Tensor> PdnParams::parameters() const {
  std::vector<Tensor> out;
  for (int n = 0; n < iters; ++n) {
    out.push_back(log_tau[n]);
    out.push_back(log_sigma[n]);
    out.push_back(lambda[n]);
    out.push_back(log_eps[n]);
  }
  out.push_back(log_sigma_d);
  out.push_back(log_sigma_v);
  return out;
}

PdnParams PdnParams::clone() const {
  auto copy = [](const Tensor& t) {
    Tensor c = t.detach();
    c.set_requires_grad(true);
    return c;
  };
  PdnParams p;
  p.iters = iters;
  for (int n = 0; n < iters; ++n) {
    p.log_tau.push_back(copy(log_tau[n]));
    p.log_sigma.push_back(copy(log_sigma[n]));
    p.lambda.push_back(copy(lambda[n]));
    p.log_eps.push_back(copy(log_eps[n]));
  }
  p.log_sigma_d = copy(log_sigma_d);
  p.log_sigma_v = copy(log_sigma_v);
  return p;
}

void PdnParams::enforce_bounds() {
  const Real lo = std::log(kMinPositive);
  auto floor_at = [](Tensor& t, Real bound) {
    Real& v = t.mutable_data()[0];
    v = std::max(v, bound);
  };
  for (int n = 0; n < iters; ++n) {
    floor_at(log_tau[n], lo);
    floor_at(log_sigma[n], lo);
    floor_at(log_eps[n], lo);
    floor_at(lambda[n], Real(0));
  }
  floor_at(log_sigma_d, lo);
  floor_at(log_sigma_v, lo);
}

void PdnParams::validate() const {
  const auto n = static_cast<std::size_t>(iters);
  if (iters < 0 || log_tau.size() != n || log_sigma.size() != n || lambda.size() != n || log_eps.size() != n ||
      !log_sigma_d.defined() || !log_sigma_v.defined()) {
    throw Error(ErrorCode::kConfig, "PDN parameters are incomplete");
  }
}

namespace {

void check_dual_shapes(const Tensor& p, const Tensor& u, const Tensor& w, const Neighborhood& nbh) {
  if (u.rank() != 2 || p.shape() != Shape{nbh.size(), u.dim(0), u.dim(1)} || w.shape() != p.shape()) {
    throw Error(ErrorCode::kShape, "dual " + shape_str(p.shape()) + ", weights " + shape_str(w.shape()) +
                                       ", image " + shape_str(u.shape()) + " disagree");
  }
}

}  // namespace

Tensor dual_step(const Tensor& p, const Tensor& u_bar, const Tensor& w, const Tensor& sigma, const Tensor& eps,
                 const Neighborhood& nbh) {
  check_dual_shapes(p, u_bar, w, nbh);
  const int n = nbh.size();
  const int h = u_bar.dim(0);
  const int wd = u_bar.dim(1);
  const std::size_t hw = static_cast<std::size_t>(h) * wd;
  const Real sg = sigma.item();
  const Real ep = eps.item();
  const Real denom = 1 + sg * ep;
  auto pd = p.data();
  auto ub = u_bar.data();
  auto wt = w.data();

  // Pre-clamp value s; needed again by the backward pass.
  auto pre = std::make_shared<std::vector<Real>>(pd.size(), Real(0));
  std::vector<Real> out(pd.size(), Real(0));
  for (int c = 0; c < n; ++c) {
    const Offset o = nbh[c];
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < wd; ++x) {
        if (!nbh.inside(c, y, x, h, wd)) continue;
        const std::size_t i = c * hw + static_cast<std::size_t>(y) * wd + x;
        const Real s = (pd[i] + sg * (ub[y * wd + x] - ub[(y + o.dy) * wd + x + o.dx])) / denom;
        (*pre)[i] = s;
        out[i] = std::clamp(s, -wt[i], wt[i]);
      }
    }
  }

  return Tensor::make_op(
      p.shape(), std::move(out), {p, u_bar, w, sigma, eps},
      [u_bar, w, pre, nbh, n, h, wd, hw, sg, ep, denom](std::span<const Real> g, std::span<std::span<Real>> grads) {
        auto ub = u_bar.data();
        auto wt = w.data();
        const auto& s = *pre;
        Real g_sigma = 0;
        Real g_eps = 0;
        for (int c = 0; c < n; ++c) {
          const Offset o = nbh[c];
          for (int y = 0; y < h; ++y) {
            for (int x = 0; x < wd; ++x) {
              if (!nbh.inside(c, y, x, h, wd)) continue;
              const std::size_t i = c * hw + static_cast<std::size_t>(y) * wd + x;
              const Real gi = g[i];
              if (gi == 0) continue;
              if (s[i] >= wt[i]) {
                if (!grads[2].empty()) grads[2][i] += gi;
                continue;
              }
              if (s[i] <= -wt[i]) {
                if (!grads[2].empty()) grads[2][i] -= gi;
                continue;
              }
              const std::size_t a = static_cast<std::size_t>(y) * wd + x;
              const std::size_t b = static_cast<std::size_t>(y + o.dy) * wd + x + o.dx;
              if (!grads[0].empty()) grads[0][i] += gi / denom;
              if (!grads[1].empty()) {
                const Real gu = gi * sg / denom;
                grads[1][a] += gu;
                grads[1][b] -= gu;
              }
              const Real diff = ub[a] - ub[b];
              g_sigma += gi * (diff - s[i] * ep) / denom;
              g_eps -= gi * s[i] * sg / denom;
            }
          }
        }
        if (!grads[3].empty()) grads[3][0] += g_sigma;
        if (!grads[4].empty()) grads[4][0] += g_eps;
      });
}

Tensor primal_step(const Tensor& u, const Tensor& p, const Tensor& f, const Tensor& tau, const Tensor& lambda,
                   const Neighborhood& nbh) {
  if (u.rank() != 2 || f.shape() != u.shape() || p.shape() != Shape{nbh.size(), u.dim(0), u.dim(1)}) {
    throw Error(ErrorCode::kShape, "primal step: u " + shape_str(u.shape()) + ", f " + shape_str(f.shape()) +
                                       ", p " + shape_str(p.shape()));
  }
  const int n = nbh.size();
  const int h = u.dim(0);
  const int wd = u.dim(1);
  const std::size_t hw = static_cast<std::size_t>(h) * wd;
  const Real t = tau.item();
  const Real l = lambda.item();
  const Real tl = t * l;
  auto pd = p.data();
  auto ud = u.data();
  auto fd = f.data();

  auto div = std::make_shared<std::vector<Real>>(hw, Real(0));
  for (int c = 0; c < n; ++c) {
    const Offset o = nbh[c];
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < wd; ++x) {
        if (!nbh.inside(c, y, x, h, wd)) continue;
        const Real v = pd[c * hw + static_cast<std::size_t>(y) * wd + x];
        (*div)[static_cast<std::size_t>(y) * wd + x] += v;
        (*div)[static_cast<std::size_t>(y + o.dy) * wd + x + o.dx] -= v;
      }
    }
  }
  auto out = std::make_shared<std::vector<Real>>(hw);
  for (std::size_t i = 0; i < hw; ++i) {
    const Real v = ud[i] - t * (*div)[i];
    (*out)[i] = v + tl * (fd[i] - v) / (1 + tl);
  }

  return Tensor::make_op(
      u.shape(), *out, {u, p, f, tau, lambda},
      [f, div, out, nbh, n, h, wd, hw, t, l, tl](std::span<const Real> g, std::span<std::span<Real>> grads) {
        auto fd = f.data();
        const auto& D = *div;
        const auto& un = *out;
        const Real a = 1 / (1 + tl);
        Real g_tau = 0;
        Real g_lambda = 0;
        std::vector<Real> g_div(hw);
        for (std::size_t i = 0; i < hw; ++i) {
          const Real gi = g[i];
          if (!grads[0].empty()) grads[0][i] += gi * a;
          if (!grads[2].empty()) grads[2][i] += gi * tl * a;
          g_div[i] = -gi * t * a;
          g_tau += gi * (-D[i] + l * fd[i] - l * un[i]) * a;
          g_lambda += gi * t * (fd[i] - un[i]) * a;
        }
        if (!grads[1].empty()) {
          for (int c = 0; c < n; ++c) {
            const Offset o = nbh[c];
            for (int y = 0; y < h; ++y) {
              for (int x = 0; x < wd; ++x) {
                if (!nbh.inside(c, y, x, h, wd)) continue;
                grads[1][c * hw + static_cast<std::size_t>(y) * wd + x] +=
                    g_div[static_cast<std::size_t>(y) * wd + x] -
                    g_div[static_cast<std::size_t>(y + o.dy) * wd + x + o.dx];
              }
            }
          }
        }
        if (!grads[3].empty()) grads[3][0] += g_tau;
        if (!grads[4].empty()) grads[4][0] += g_lambda;
      });
}

Tensor pdn_forward(const Tensor& f, const Tensor& delta_a, const Neighborhood& nbh, const PdnParams& params,
                   const PdnObserver& observer) {
  params.validate();
  if (f.rank() != 2 || delta_a.shape() != Shape{nbh.size(), f.dim(0), f.dim(1)}) {
    throw Error(ErrorCode::kShape, "PDN input " + shape_str(f.shape()) + " and affinity " +
                                       shape_str(delta_a.shape()) + " disagree");
  }
  const Tensor w = support_weights(delta_a, nbh, exp(params.log_sigma_d), exp(params.log_sigma_v));
  Tensor u = f;
  Tensor u_bar = f;
  Tensor p = Tensor::zeros(delta_a.shape());
  for (int n = 0; n < params.iters; ++n) {
    p = dual_step(p, u_bar, w, exp(params.log_sigma[n]), exp(params.log_eps[n]), nbh);
    Tensor u_next = primal_step(u, p, f, exp(params.log_tau[n]), params.lambda[n], nbh);
    u_bar = sub(scale(u_next, 2), u);
    u = u_next;
    if (observer) observer(n, p, w);
  }
  return u;
}

Tensor joint_forward(const ModelInput& input, const FcnParams& fcn, const PdnParams& pdn, const Neighborhood& nbh) {
  const FcnOutput out = fcn_forward(input, fcn);
  return pdn_forward(fcn_depth(input, out), abs(out.affinity), nbh, pdn);
}

double pdn_equivalence_check(const Tensor& f, const Tensor& delta_a, const Neighborhood& nbh, const PdnParams& params) {
  params.validate();
  for (int n = 1; n < params.iters; ++n) {
    if (params.log_tau[n].item() != params.log_tau[0].item() || params.log_sigma[n].item() != params.log_sigma[0].item() ||
        params.lambda[n].item() != params.lambda[0].item() || params.log_eps[n].item() != params.log_eps[0].item()) {
      throw Error(ErrorCode::kConfig, "equivalence check needs the same parameters in every iteration");
    }
  }
  NoGradGuard no_grad;
  const Tensor unrolled = pdn_forward(f, delta_a, nbh, params);
  if (params.iters == 0) {
    double worst = 0;
    for (std::size_t i = 0; i < f.numel(); ++i) worst = std::max(worst, std::abs(double(unrolled[i]) - f[i]));
    return worst;
  }
  SolverParams sp;
  sp.lambda = params.lambda_at(0);
  sp.eps = params.eps(0);
  sp.tau = params.tau(0);
  sp.sigma = params.sigma(0);
  sp.iters = params.iters;
  sp.variant = Variant::kNlhL2;
  const WeightField W = support_weights(delta_a, nbh, params.sigma_d(), params.sigma_v());
  const Tensor classic = solve(f, W, sp);
  double worst = 0;
  for (std::size_t i = 0; i < f.numel(); ++i) worst = std::max(worst, std::abs(double(unrolled[i]) - classic[i]));
  return worst;
}

}  // namespace dpdn
