#include <gtest/gtest.h>

#include <limits>
#include <random>

#include "dpdn/pdn.hpp"
#include "test_util.hpp"

using namespace dpdn;
using dpdn::testing::gradient_error;
using dpdn::testing::random_tensor;

namespace {

constexpr Real kInf = std::numeric_limits<Real>::infinity();

// Distinct per-iteration values so that gradients of every scalar differ.
PdnParams varied_params(int iters, const Neighborhood& nbh, std::mt19937_64& rng) {
  PdnParams p = PdnParams::init(iters, nbh, 1, Real(0.05), Real(1.2), Real(0.8));
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (int n = 0; n < iters; ++n) {
    p.log_tau[n].mutable_data()[0] += u(rng);
    p.log_sigma[n].mutable_data()[0] += u(rng);
    p.lambda[n].mutable_data()[0] += u(rng);
    p.log_eps[n].mutable_data()[0] += u(rng);
  }
  return p;
}

}  // namespace

TEST(PdnParams, InitAndBounds) {
  const Neighborhood nbh = Neighborhood::square(7);
  PdnParams p = PdnParams::init(20, nbh);
  EXPECT_EQ(p.parameters().size(), 4u * 20 + 2);
  EXPECT_NEAR(p.tau(7) * p.sigma(7) * operator_norm_bound(nbh), 1, 1e-12);
  EXPECT_NEAR(p.eps(3), 0.01, 1e-15);
  EXPECT_EQ(p.lambda_at(19), 1);
  p.lambda[2].mutable_data()[0] = -3;
  p.log_tau[1].mutable_data()[0] = -100;
  p.log_sigma_v.mutable_data()[0] = -50;
  p.enforce_bounds();
  EXPECT_EQ(p.lambda_at(2), 0);
  EXPECT_GE(p.tau(1), PdnParams::kMinPositive * (1 - 1e-12));
  EXPECT_GE(p.sigma_v(), PdnParams::kMinPositive * (1 - 1e-12));
  EXPECT_THROW(PdnParams::init(-1, nbh), Error);
}

TEST(PdnForward, ZeroIterationsReturnsInput) {
  const Neighborhood nbh = Neighborhood::square(3);
  std::mt19937_64 rng(1);
  const Tensor f = random_tensor({5, 6}, rng);
  const Tensor da = random_tensor({nbh.size(), 5, 6}, rng, 0, 1);
  const Tensor u = pdn_forward(f, da, nbh, PdnParams::init(0, nbh));
  for (std::size_t i = 0; i < f.numel(); ++i) EXPECT_EQ(u[i], f[i]);
}

TEST(PdnForward, NoDataTermAndNoWeightsIsIdentity) {
  const Neighborhood nbh = Neighborhood::square(3);
  std::mt19937_64 rng(2);
  const Tensor f = random_tensor({4, 4}, rng);
  const Tensor da = Tensor::full({nbh.size(), 4, 4}, kInf);
  const Tensor u = pdn_forward(f, da, nbh, PdnParams::init(10, nbh, 0));
  for (std::size_t i = 0; i < f.numel(); ++i) EXPECT_EQ(u[i], f[i]);
}

TEST(PdnForward, DualFeasibleInsideGraph) {
  const Neighborhood nbh = Neighborhood::square(5);
  std::mt19937_64 rng(3);
  const Tensor f = random_tensor({7, 7}, rng, 0, 10);
  const Tensor da = random_tensor({nbh.size(), 7, 7}, rng, 0, 1);
  double worst = -1;
  pdn_forward(f, da, nbh, varied_params(15, nbh, rng),
              [&](int, const Tensor& p, const Tensor& w) { worst = std::max(worst, dual_infeasibility(p, w)); });
  EXPECT_LE(worst, 1e-12);
}

TEST(PdnEquivalence, MatchesClassicalSolver) {
  const Neighborhood nbh = Neighborhood::square(5);
  std::mt19937_64 rng(4);
  for (int k = 0; k < 3; ++k) {
    const Tensor f = random_tensor({9, 8}, rng);
    const Tensor da = random_tensor({nbh.size(), 9, 8}, rng, 0, 2);
    EXPECT_LT(pdn_equivalence_check(f, da, nbh, PdnParams::init(20, nbh, 0.7, 0.05, 1.5, 0.5)), 1e-10);
  }
  const Tensor f = random_tensor({4, 4}, rng);
  EXPECT_EQ(pdn_equivalence_check(f, Tensor::full({nbh.size(), 4, 4}, kInf), nbh, PdnParams::init(20, nbh)), 0);
  EXPECT_LT(pdn_equivalence_check(f, random_tensor({nbh.size(), 4, 4}, rng, 0, 1), nbh, PdnParams::init(1, nbh)),
            1e-14);
  PdnParams varied = varied_params(3, nbh, rng);
  EXPECT_THROW(pdn_equivalence_check(f, random_tensor({nbh.size(), 4, 4}, rng, 0, 1), nbh, varied), Error);
}

TEST(PdnForward, ShapeMismatch) {
  const Neighborhood nbh = Neighborhood::square(3);
  try {
    pdn_forward(Tensor::zeros({4, 4}), Tensor::zeros({8, 4, 5}), nbh, PdnParams::init(2, nbh));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShape);
  }
}

TEST(PdnForward, GradientsMatchFiniteDifferences) {
  const Neighborhood nbh = Neighborhood::square(3);
  std::mt19937_64 rng(5);
  Tensor f = random_tensor({5, 5}, rng, 0, 2, true);
  Tensor da = random_tensor({nbh.size(), 5, 5}, rng, 0.2, 1.5, true);
  const Tensor target = random_tensor({5, 5}, rng, 0, 2);
  const PdnParams p = varied_params(3, nbh, rng);
  std::vector<Tensor> leaves{f, da};
  for (const Tensor& t : p.parameters()) leaves.push_back(t);
  EXPECT_LT(gradient_error([&] { return sse(pdn_forward(f, da, nbh, p), target); }, leaves), 1e-4);
}

TEST(PdnForward, LongUnrollGradientOnSelectedScalars) {
  const Neighborhood nbh = Neighborhood::square(3);
  std::mt19937_64 rng(6);
  Tensor f = random_tensor({4, 4}, rng, 0, 2, true);
  Tensor da = random_tensor({nbh.size(), 4, 4}, rng, 0.2, 1.5, true);
  const Tensor target = random_tensor({4, 4}, rng, 0, 2);
  const PdnParams p = varied_params(10, nbh, rng);
  EXPECT_LT(gradient_error([&] { return sse(pdn_forward(f, da, nbh, p), target); },
                           {f, da, p.log_tau[3], p.lambda[7]}),
            1e-4);
}

TEST(PdnForward, SaturatedDualsCarryNoWeightGradientBeyondClamp) {
  // Huge steps saturate every dual; finite differences agree with the analytic zero slopes.
  const Neighborhood nbh = Neighborhood::square(3);
  std::mt19937_64 rng(7);
  Tensor f = random_tensor({4, 4}, rng, 0, 5, true);
  Tensor da = random_tensor({nbh.size(), 4, 4}, rng, 0.2, 1.5, true);
  PdnParams p = PdnParams::init(2, nbh, 1, Real(0.05));
  for (auto& s : p.log_sigma) s.mutable_data()[0] = 5;
  const Tensor target = random_tensor({4, 4}, rng, 0, 5);
  EXPECT_LT(gradient_error([&] { return sse(pdn_forward(f, da, nbh, p), target); }, {f, da, p.log_sigma[0]}), 1e-4);
}

TEST(JointForward, IdentityComposition) {
  const Neighborhood nbh = Neighborhood::square(3);
  std::mt19937_64 rng(8);
  ModelInput in;
  in.d_mr = random_tensor({6, 5}, rng, 10, 20);
  in.guidance = random_tensor({6, 5}, rng, 0, 1);
  // Zero affinities give weights exp(−Δd/σd) > 0; λ = 0 and tiny σd push them to zero.
  const FcnParams fcn = FcnParams::zeros(2, 4, nbh.size(), 50);
  const Tensor u = joint_forward(in, fcn, PdnParams::init(5, nbh, 1, 0.01, 1e-6, 1), nbh);
  for (std::size_t i = 0; i < u.numel(); ++i) EXPECT_EQ(u[i], in.d_mr[i]);
  EXPECT_EQ(u.shape(), (Shape{6, 5}));
}

TEST(JointForward, EndToEndGradient) {
  const Neighborhood nbh = Neighborhood::square(3);
  std::mt19937_64 rng(9);
  ModelInput in;
  in.d_mr = random_tensor({6, 6}, rng, 10, 20);
  in.guidance = random_tensor({6, 6}, rng, 0, 1);
  const Tensor target = random_tensor({6, 6}, rng, 10, 20);
  FcnParams fcn = FcnParams::init(2, 4, nbh.size(), 10, 10);
  for (auto& l : fcn.layers) {
    for (Real& b : l.bias.mutable_data()) b = Real(0.5);
  }
  const PdnParams pdn = varied_params(3, nbh, rng);
  std::vector<Tensor> leaves = fcn.parameters();
  for (const Tensor& t : pdn.parameters()) leaves.push_back(t);
  EXPECT_LT(gradient_error([&] { return sse(joint_forward(in, fcn, pdn, nbh), target); }, leaves), 1e-4);
}
