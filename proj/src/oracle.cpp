// Reference minimizer for small problems. Deliberately shares no code with
// the primal-dual iteration: it evaluates the smoothed primal energy and its
// gradient directly and runs gradient descent with backtracking.

#include <cmath>
#include <vector>

#include "dpdn/solver.hpp"

namespace dpdn {

namespace {

constexpr double kSmoothing = 1e-6;

struct SmoothEnergy {
  int h = 0;
  int w = 0;
  std::vector<double> f;
  std::vector<double> weights;
  std::vector<Offset> offsets;
  double lambda = 0;
  double eps = 0;
  bool l1_data = false;

  // Energy and gradient at u.
  double eval(const std::vector<double>& u, std::vector<double>* grad) const {
    const std::size_t hw = u.size();
    if (grad) grad->assign(hw, 0.0);
    double e = 0;
    for (std::size_t i = 0; i < hw; ++i) {
      const double d = u[i] - f[i];
      if (l1_data) {
        const double a = std::abs(d);
        e += lambda * (a <= kSmoothing ? d * d / (2 * kSmoothing) : a - kSmoothing / 2);
        if (grad) (*grad)[i] += lambda * (a <= kSmoothing ? d / kSmoothing : (d > 0 ? 1.0 : -1.0));
      } else {
        e += 0.5 * lambda * d * d;
        if (grad) (*grad)[i] += lambda * d;
      }
    }
    for (std::size_t c = 0; c < offsets.size(); ++c) {
      const int dy = offsets[c].dy;
      const int dx = offsets[c].dx;
      for (int y = 0; y < h; ++y) {
        const int ny = y + dy;
        if (ny < 0 || ny >= h) continue;
        for (int x = 0; x < w; ++x) {
          const int nx = x + dx;
          if (nx < 0 || nx >= w) continue;
          const double wt = weights[(c * h + y) * w + x];
          if (wt <= 0) continue;
          const std::size_t a = static_cast<std::size_t>(y) * w + x;
          const std::size_t b = static_cast<std::size_t>(ny) * w + nx;
          const double d = u[a] - u[b];
          const double t = eps * wt;  // quadratic zone of w·|d|_{ε·w}
          double g;
          if (std::abs(d) <= t) {
            e += d * d / (2 * eps);
            g = d / eps;
          } else {
            e += wt * std::abs(d) - eps * wt * wt / 2;
            g = d > 0 ? wt : -wt;
          }
          if (grad) {
            (*grad)[a] += g;
            (*grad)[b] -= g;
          }
        }
      }
    }
    return e;
  }

  // Global Lipschitz bound of the gradient.
  double lipschitz() const {
    const double data = l1_data ? lambda / kSmoothing : lambda;
    return data + 4.0 * static_cast<double>(offsets.size()) / eps;
  }
};

}  // namespace

Tensor solve_oracle(const Tensor& f, const WeightField& W, const SolverParams& params, OracleReport* report,
                    long max_iters, double grad_tol) {
  if (f.rank() != 2 || f.dim(0) > 16 || f.dim(1) > 16) {
    throw Error(ErrorCode::kConfig, "the oracle only handles images up to 16×16, got " + shape_str(f.shape()));
  }
  if (W.weights.rank() != 3 || W.weights.dim(0) != static_cast<int>(W.nbh.offsets().size()) ||
      W.weights.dim(1) != f.dim(0) || W.weights.dim(2) != f.dim(1)) {
    throw Error(ErrorCode::kShape, "oracle: weights " + shape_str(W.weights.shape()) + " vs image " + shape_str(f.shape()));
  }
  SmoothEnergy E;
  E.h = f.dim(0);
  E.w = f.dim(1);
  E.f.assign(f.data().begin(), f.data().end());
  E.weights.assign(W.weights.data().begin(), W.weights.data().end());
  E.offsets = W.nbh.offsets();
  E.lambda = params.lambda;
  E.l1_data = params.variant == Variant::kNlhL1;
  const bool tv = params.variant == Variant::kNltvL2 || params.variant == Variant::kAtvL2;
  E.eps = (tv || params.eps <= 0) ? kSmoothing : static_cast<double>(params.eps);

  std::vector<double> u = E.f;
  std::vector<double> g, trial(u.size());
  double e = E.eval(u, &g);
  const double safe_step = 1.0 / E.lipschitz();
  double step = 1.0;
  long it = 0;
  double gn = 0;
  for (; it < max_iters; ++it) {
    double gg = 0;
    for (double v : g) gg += v * v;
    gn = std::sqrt(gg);
    if (gn < grad_tol) break;
    step *= 2;
    double e_trial = 0;
    while (true) {
      for (std::size_t i = 0; i < u.size(); ++i) trial[i] = u[i] - step * g[i];
      e_trial = E.eval(trial, nullptr);
      // Armijo condition; below the 1/L step the decrease is guaranteed, so
      // accept there even when rounding hides it.
      if (e_trial <= e - 0.5 * step * gg || step <= safe_step) break;
      step *= 0.5;
    }
    u.swap(trial);
    e = E.eval(u, &g);
  }
  if (report) {
    report->iterations = it;
    report->grad_norm = gn;
    report->energy = e;
  }
  std::vector<Real> out(u.begin(), u.end());
  return Tensor::from_data(f.shape(), std::move(out));
}

}  // namespace dpdn
