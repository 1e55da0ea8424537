#pragma once

#include <functional>
#include <vector>

#include "dpdn/fcn.hpp"
#include "dpdn/nonlocal.hpp"
#include "dpdn/solver.hpp"
#include "dpdn/tensor.hpp"

namespace dpdn {

// Trainable hyper-parameters of the unrolled primal-dual iterations. Positive
// quantities are stored as logarithms; λ is stored directly.
struct PdnParams {
  int iters = 20;
  std::vector<Tensor> log_tau;
  std::vector<Tensor> log_sigma;
  std::vector<Tensor> lambda;
  std::vector<Tensor> log_eps;
  Tensor log_sigma_d;
  Tensor log_sigma_v;

  static constexpr Real kMinPositive = Real(1e-6);

  // τ = σ = 1/√(operator_norm_bound(nbh)) in every iteration.
  static PdnParams init(int iters, const Neighborhood& nbh, Real lambda0 = 1, Real eps0 = Real(0.01),
                        Real sigma_d = 1, Real sigma_v = 1);

  Real tau(int n) const;
  Real sigma(int n) const;
  Real lambda_at(int n) const { return lambda[n].item(); }
  Real eps(int n) const;
  Real sigma_d() const;
  Real sigma_v() const;

  std::vector<Tensor> parameters() const;
  PdnParams clone() const;
  // τ, σ, ε, σd, σv ≥ 1e-6 and λ ≥ 0.
  void enforce_bounds();
  void validate() const;
};

// p ← clamp((p + σ(ū(x) − ū(x+o)))/(1 + σε), −w, w); zero for neighbors
// outside the image.
Tensor dual_step(const Tensor& p, const Tensor& u_bar, const Tensor& w, const Tensor& sigma, const Tensor& eps,
                 const Neighborhood& nbh);
// u ← (u − τ·D(p) + τλf)/(1 + τλ) with D(x) = Σ_c p(x, x+o_c) − p(x−o_c, x).
Tensor primal_step(const Tensor& u, const Tensor& p, const Tensor& f, const Tensor& tau, const Tensor& lambda,
                   const Neighborhood& nbh);

// Called after each unrolled iteration with the dual variable and weights.
using PdnObserver = std::function<void(int iteration, const Tensor& p, const Tensor& w)>;

Tensor pdn_forward(const Tensor& f, const Tensor& delta_a, const Neighborhood& nbh, const PdnParams& params,
                   const PdnObserver& observer = {});

Tensor joint_forward(const ModelInput& input, const FcnParams& fcn, const PdnParams& pdn, const Neighborhood& nbh);

// max |pdn_forward − solve| for parameters that are constant across iterations.
double pdn_equivalence_check(const Tensor& f, const Tensor& delta_a, const Neighborhood& nbh, const PdnParams& params);

}  // namespace dpdn
