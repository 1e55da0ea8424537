#pragma once

#include <functional>

#include "dpdn/nonlocal.hpp"
#include "dpdn/tensor.hpp"

namespace dpdn {

enum class Variant {
  kNlhL2,   // non-local Huber regularizer, quadratic data term
  kNltvL2,  // non-local TV (ε = 0), quadratic data term
  kNlhL1,   // non-local Huber regularizer, ℓ1 data term
  kAtvL2,   // TV on the 4-neighborhood (ε = 0), quadratic data term
};

const char* variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct SolverParams {
  Real lambda = 1;
  Real eps = Real(0.01);
  Real tau = Real(0.1);
  Real sigma = Real(0.1);
  int iters = 100;
  Variant variant = Variant::kNlhL2;

  // ε actually used by the variant (0 for the TV variants).
  Real effective_eps() const;
  // Conservative fixed steps for `nbh`: τ = σ = 1/√(operator_norm_bound).
  static SolverParams defaults(const Neighborhood& nbh, Real lambda = 1, Real eps = Real(0.01), int iters = 100);
};

// Upper bound on ‖K‖² for the non-local difference operator (Ku)(x, y) = u(x) − u(y).
Real operator_norm_bound(const Neighborhood& nbh);
bool steps_feasible(const SolverParams& params, const Neighborhood& nbh);

struct PDState {
  Tensor u;      // H×W
  Tensor u_bar;  // H×W
  Tensor p;      // |N|×H×W
};

PDState initial_state(const Tensor& f, const WeightField& W);

// λ·½‖u − f‖² (or λ‖u − f‖₁) plus Σ_x Σ_y w·|u(x) − u(y)|_{ε·w}, the primal
// objective of the saddle-point problem solved by pd_iterate.
double energy(const Tensor& u, const Tensor& f, const WeightField& W, const SolverParams& params);

// One dual step, one primal step, one extrapolation.
PDState pd_iterate(const PDState& state, const Tensor& f, const WeightField& W, const SolverParams& params);

using IterationObserver = std::function<void(int iteration, const PDState& state)>;

// Runs params.iters iterations from u = ū = f, p = 0.
Tensor solve(const Tensor& f, const WeightField& W, const SolverParams& params, const IterationObserver& observer = {});

// max(|p| − w) over all dual entries.
double dual_infeasibility(const Tensor& p, const Tensor& w);

struct OracleReport {
  long iterations = 0;
  double grad_norm = 0;
  double energy = 0;
};

// Gradient descent with backtracking line search on the smoothed energy.
// Only for images up to 16×16.
Tensor solve_oracle(const Tensor& f, const WeightField& W, const SolverParams& params, OracleReport* report = nullptr,
                    long max_iters = 5'000'000, double grad_tol = 1e-10);

}  // namespace dpdn
