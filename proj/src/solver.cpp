#include "dpdn/solver.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace dpdn {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kNlhL2: return "nlh-l2";
    case Variant::kNltvL2: return "nltv-l2";
    case Variant::kNlhL1: return "nlh-l1";
    case Variant::kAtvL2: return "atv-l2";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::kNlhL2, Variant::kNltvL2, Variant::kNlhL1, Variant::kAtvL2}) {
    if (name == variant_name(v)) return v;
  }
  throw Error(ErrorCode::kConfig, "unknown solver variant '" + name + "'");
}

Real SolverParams::effective_eps() const {
  return (variant == Variant::kNltvL2 || variant == Variant::kAtvL2) ? Real(0) : eps;
}

Real operator_norm_bound(const Neighborhood& nbh) { return Real(4) * nbh.size(); }

SolverParams SolverParams::defaults(const Neighborhood& nbh, Real lambda, Real eps, int iters) {
  SolverParams p;
  p.lambda = lambda;
  p.eps = eps;
  p.iters = iters;
  p.tau = p.sigma = 1 / std::sqrt(operator_norm_bound(nbh));
  return p;
}

bool steps_feasible(const SolverParams& params, const Neighborhood& nbh) {
  return params.tau * params.sigma * operator_norm_bound(nbh) <= Real(1) + Real(1e-12);
}

namespace {

void check_problem(const Tensor& f, const WeightField& W) {
  if (f.rank() != 2 || W.weights.rank() != 3 || W.weights.dim(0) != W.nbh.size() || W.weights.dim(1) != f.dim(0) ||
      W.weights.dim(2) != f.dim(1)) {
    throw Error(ErrorCode::kShape, "image " + shape_str(f.shape()) + " and weights " +
                                       shape_str(W.weights.shape()) + " disagree");
  }
}

void check_params(const SolverParams& p) {
  if (!(p.lambda >= 0) || !(p.eps >= 0) || !(p.tau > 0) || !(p.sigma > 0) || p.iters < 0) {
    throw Error(ErrorCode::kConfig, "solver parameters must satisfy λ ≥ 0, ε ≥ 0, τ > 0, σ > 0, iters ≥ 0");
  }
}

// w·|d|_{ε·w}: the conjugate of the constraint |p| ≤ w with the −ε/2·p² term.
double pair_penalty(double d, double w, double eps) {
  if (w <= 0) return 0;
  const double a = std::abs(d);
  if (eps <= 0) return w * a;
  return a <= eps * w ? d * d / (2 * eps) : w * a - eps * w * w / 2;
}

}  // namespace

PDState initial_state(const Tensor& f, const WeightField& W) {
  check_problem(f, W);
  PDState s;
  s.u = f.detach();
  s.u_bar = f.detach();
  s.p = Tensor::zeros(W.weights.shape());
  return s;
}

double energy(const Tensor& u, const Tensor& f, const WeightField& W, const SolverParams& params) {
  check_problem(f, W);
  if (u.shape() != f.shape()) throw Error(ErrorCode::kShape, "energy: u " + shape_str(u.shape()) + " vs f " + shape_str(f.shape()));
  const int h = f.dim(0);
  const int wd = f.dim(1);
  auto ud = u.data();
  auto fd = f.data();
  auto wt = W.weights.data();
  double data = 0;
  for (std::size_t i = 0; i < ud.size(); ++i) {
    const double d = static_cast<double>(ud[i]) - fd[i];
    data += params.variant == Variant::kNlhL1 ? std::abs(d) : 0.5 * d * d;
  }
  const double eps = params.effective_eps();
  double reg = 0;
  for (int c = 0; c < W.nbh.size(); ++c) {
    const Offset o = W.nbh[c];
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < wd; ++x) {
        if (!W.nbh.inside(c, y, x, h, wd)) continue;
        const double d = static_cast<double>(ud[y * wd + x]) - ud[(y + o.dy) * wd + x + o.dx];
        reg += pair_penalty(d, wt[(static_cast<std::size_t>(c) * h + y) * wd + x], eps);
      }
    }
  }
  return params.lambda * data + reg;
}

PDState pd_iterate(const PDState& state, const Tensor& f, const WeightField& W, const SolverParams& params) {
  check_problem(f, W);
  check_params(params);
  const int h = f.dim(0);
  const int wd = f.dim(1);
  const int n = W.nbh.size();
  const std::size_t hw = static_cast<std::size_t>(h) * wd;
  const Real sigma = params.sigma;
  const Real tau = params.tau;
  const Real lambda = params.lambda;
  const Real eps = params.effective_eps();
  auto ub = state.u_bar.data();
  auto p = state.p.data();
  auto u = state.u.data();
  auto fd = f.data();
  auto wt = W.weights.data();

  // Dual ascent with the resolvent of the −ε/2·p² term, then projection onto |p| ≤ w.
  std::vector<Real> p_new(p.size(), Real(0));
  const Real denom = 1 + sigma * eps;
  for (int c = 0; c < n; ++c) {
    const Offset o = W.nbh[c];
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < wd; ++x) {
        if (!W.nbh.inside(c, y, x, h, wd)) continue;
        const std::size_t i = c * hw + static_cast<std::size_t>(y) * wd + x;
        const Real q = (p[i] + sigma * (ub[y * wd + x] - ub[(y + o.dy) * wd + x + o.dx])) / denom;
        p_new[i] = std::clamp(q, -wt[i], wt[i]);
      }
    }
  }

  // Adjoint: D(x) = Σ_c p(x, x+o_c) − p(x−o_c, x).
  std::vector<Real> div(hw, Real(0));
  for (int c = 0; c < n; ++c) {
    const Offset o = W.nbh[c];
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < wd; ++x) {
        if (!W.nbh.inside(c, y, x, h, wd)) continue;
        const Real v = p_new[c * hw + static_cast<std::size_t>(y) * wd + x];
        div[y * wd + x] += v;
        div[(y + o.dy) * wd + x + o.dx] -= v;
      }
    }
  }

  std::vector<Real> u_new(hw), ub_new(hw);
  const Real tl = tau * lambda;
  for (std::size_t i = 0; i < hw; ++i) {
    const Real v = u[i] - tau * div[i];
    if (params.variant == Variant::kNlhL1) {
      const Real r = v - fd[i];
      u_new[i] = fd[i] + (r > tl ? r - tl : (r < -tl ? r + tl : Real(0)));
    } else {
      // (v + τλf)/(1 + τλ), written so that v = f maps to f exactly.
      u_new[i] = v + tl * (fd[i] - v) / (1 + tl);
    }
    ub_new[i] = 2 * u_new[i] - u[i];
  }

  PDState next;
  next.u = Tensor::from_data(f.shape(), std::move(u_new));
  next.u_bar = Tensor::from_data(f.shape(), std::move(ub_new));
  next.p = Tensor::from_data(W.weights.shape(), std::move(p_new));
  return next;
}

Tensor solve(const Tensor& f, const WeightField& W, const SolverParams& params, const IterationObserver& observer) {
  check_params(params);
  if (!steps_feasible(params, W.nbh)) {
    std::clog << "warning: " << error_code_name(ErrorCode::kConfig) << ": τσ‖K‖² = "
              << params.tau * params.sigma * operator_norm_bound(W.nbh) << " > 1, the iteration may not converge\n";
  }
  PDState state = initial_state(f, W);
  for (int it = 0; it < params.iters; ++it) {
    state = pd_iterate(state, f, W, params);
    if (observer) observer(it, state);
  }
  return state.u;
}

double dual_infeasibility(const Tensor& p, const Tensor& w) {
  if (p.shape() != w.shape()) throw Error(ErrorCode::kShape, "dual and weight shapes differ");
  double worst = -std::numeric_limits<double>::infinity();
  auto pd = p.data();
  auto wd = w.data();
  for (std::size_t i = 0; i < pd.size(); ++i) worst = std::max(worst, double(std::abs(pd[i])) - wd[i]);
  return worst;
}

}  // namespace dpdn
