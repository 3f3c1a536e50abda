// Copyright 2026 The fairguide Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Closed-form theory oracles. The transported potential and conditional
// moments are verified against direct 1-D quadrature (independent of the
// posterior-moment algebra), gradients against finite differences, and the
// guided endpoint law against its analytic sigmoid special case.

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include <gtest/gtest.h>

#include "fairguide/diffusion.hpp"
#include "fairguide/theory.hpp"
#include "fairguide/world.hpp"
#include "testutil.hpp"

namespace fairguide {
namespace {

using testing::fd_gradient;

NoiseSchedule default_schedule() { return NoiseSchedule{}; }

Mat random_spd(int d, Rng& rng) {
  Mat a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  return a * a.transpose() + 0.3 * Mat::Identity(d, d);
}

// Midpoint quadrature of g(x0)·N(x0; mu, var)·N(xt; x0, s2) over x0.
double quad_integral(double xt, double mu, double var, double s2, double w,
                     double beta, double c) {
  const int n = 20001;
  const double lo = mu - 14.0 * std::sqrt(var) - 2.0;
  const double hi = mu + 14.0 * std::sqrt(var) + 2.0;
  const double h = (hi - lo) / n;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x0 = lo + (i + 0.5) * h;
    const double lp = -0.5 * std::log(2.0 * kPi * var) -
                      0.5 * (x0 - mu) * (x0 - mu) / var -
                      0.5 * std::log(2.0 * kPi * s2) -
                      0.5 * (xt - x0) * (xt - x0) / s2 +
                      w * (c + beta * x0);
    acc += std::exp(lp) * h;
  }
  return acc;
}

// --------------------------------------------------------------------------
// Posterior moments and the transported potential
// --------------------------------------------------------------------------

TEST(PosteriorMoments, MatchesDirectLinearAlgebra) {
  Rng rng(14);
  for (int trial = 0; trial < 6; ++trial) {
    const int d = 2 + trial % 3;
    GaussianParams p;
    p.mean = rng.normal_vec(d);
    p.cov = random_spd(d, rng);
    const Vec x = 3.0 * rng.normal_vec(d);
    const double sigma = 0.05 + 2.0 * rng.uniform();
    const auto pm = posterior_moments_at_sigma(x, sigma, p);
    const Mat gain =
        p.cov * (p.cov + sigma * sigma * Mat::Identity(d, d)).inverse();
    const Vec m_direct = p.mean + gain * (x - p.mean);
    const Mat v_direct = p.cov - gain * p.cov;
    EXPECT_LT((pm.m - m_direct).norm(), 1e-10 * (1.0 + m_direct.norm()));
    EXPECT_LT((pm.V - v_direct).norm(), 1e-10 * (1.0 + v_direct.norm()));
    // V is symmetric PSD with eigenvalues below both cov and σ² scales.
    EXPECT_LT((pm.V - pm.V.transpose()).norm(), 1e-12);
  }
}

TEST(PosteriorMoments, StableInExtremeNoiseLimits) {
  GaussianParams p;
  p.mean = (Vec(2) << 1.0, -1.0).finished();
  p.cov = (Mat(2, 2) << 0.8, 0.2, 0.2, 0.6).finished();
  const Vec x = (Vec(2) << 10.0, 5.0).finished();
  // Tiny noise: posterior concentrates at x.
  const auto low = posterior_moments_at_sigma(x, 1e-8, p);
  EXPECT_LT((low.m - x).norm(), 1e-10);
  EXPECT_LT(low.V.norm(), 1e-14);
  // Huge noise: posterior reverts to the prior.
  const auto high = posterior_moments_at_sigma(x, 1e8, p);
  EXPECT_LT((high.m - p.mean).norm(), 1e-10);
  EXPECT_LT((high.V - p.cov).norm(), 1e-10);
  EXPECT_THROW(posterior_moments_at_sigma(x, 0.0, p), PreconditionError);
}

TEST(TransportedPotential, MatchesQuadratureIn1D) {
  // f_t(x) = E[exp(c + βX0) | X_t = x], evaluated by direct quadrature of
  // numerator and marginal — no posterior algebra involved.
  const NoiseSchedule sched = default_schedule();
  GaussianParams p;
  p.mean = Vec::Constant(1, 0.4);
  p.cov = Mat::Constant(1, 1, 1.3);
  LogAffinePotential pot;
  pot.beta = Vec::Constant(1, 0.9);
  pot.c = 0.2;
  for (double t : {0.05, 0.4, 0.8}) {
    const double s2 = sched.sigma(t) * sched.sigma(t);
    for (double xt : {-1.0, 0.5, 2.0}) {
      const double numer =
          quad_integral(xt, 0.4, 1.3, s2, 1.0, 0.9, 0.2);
      const double denom =
          quad_integral(xt, 0.4, 1.3, s2, 0.0, 0.0, 0.0);
      const double expect = numer / denom;
      const Vec x = Vec::Constant(1, xt);
      EXPECT_NEAR(f_t(x, t, pot, p, sched), expect, 1e-6 * expect)
          << "t=" << t << " xt=" << xt;
    }
  }
}

TEST(TransportedPotential, GradientMatchesFiniteDifferenceAndIsConstant) {
  const NoiseSchedule sched = default_schedule();
  Rng rng(15);
  GaussianParams p;
  p.mean = rng.normal_vec(3);
  p.cov = random_spd(3, rng);
  LogAffinePotential pot;
  pot.beta = rng.normal_vec(3);
  pot.c = -0.1;
  for (double t : {0.01, 0.5, 1.0}) {
    const Vec g = grad_log_f_t(t, pot, p, sched);
    const Vec x1 = rng.normal_vec(3);
    const Vec x2 = rng.normal_vec(3);
    const Vec fd1 = fd_gradient(
        [&](const Vec& y) { return log_f_t(y, t, pot, p, sched); }, x1);
    const Vec fd2 = fd_gradient(
        [&](const Vec& y) { return log_f_t(y, t, pot, p, sched); }, x2);
    EXPECT_LT((g - fd1).norm(), 1e-6 * (1.0 + g.norm())) << "t=" << t;
    // log f_t is affine, so the gradient is the same at every x.
    EXPECT_LT((fd1 - fd2).norm(), 1e-6 * (1.0 + g.norm()));
    // ∇log h^(w) = w·∇log f.
    EXPECT_LT((grad_log_h_w(t, 2.5, pot, p, sched) - 2.5 * g).norm(), 1e-12);
  }
}

TEST(ConditionalMomentConstant, TiesHwToTransportedPotential) {
  // h^(w) = C_t(w)·f_t^w for a single Gaussian group; C_t(0) = C_t(1) = 1.
  const NoiseSchedule sched = default_schedule();
  GaussianParams p;
  p.mean = (Vec(2) << 0.3, -0.6).finished();
  p.cov = (Mat(2, 2) << 1.1, 0.3, 0.3, 0.7).finished();
  LogAffinePotential pot;
  pot.beta = (Vec(2) << 0.8, -0.4).finished();
  pot.c = 0.1;
  EXPECT_DOUBLE_EQ(c_t_w(0.5, 0.0, pot, p, sched), 1.0);
  EXPECT_DOUBLE_EQ(c_t_w(0.5, 1.0, pot, p, sched), 1.0);

  // Against quadrature in 1-D: h^(w)(x) = E[exp(w(c+βX0)) | X_t = x].
  GaussianParams q;
  q.mean = Vec::Constant(1, -0.2);
  q.cov = Mat::Constant(1, 1, 0.9);
  LogAffinePotential pot1;
  pot1.beta = Vec::Constant(1, 0.7);
  pot1.c = 0.15;
  const double t = 0.3;
  const double s2 = sched.sigma(t) * sched.sigma(t);
  for (double w : {0.5, 2.0, 3.0}) {
    for (double xt : {-0.5, 1.0}) {
      const double numer = quad_integral(xt, -0.2, 0.9, s2, w, 0.7, 0.15);
      const double denom = quad_integral(xt, -0.2, 0.9, s2, 0.0, 0.0, 0.0);
      const Vec x = Vec::Constant(1, xt);
      EXPECT_NEAR(h_w(x, t, w, pot1, q, sched), numer / denom,
                  1e-6 * numer / denom)
          << "w=" << w << " xt=" << xt;
    }
  }
}

// --------------------------------------------------------------------------
// Endpoint moments and the guided group law
// --------------------------------------------------------------------------

TEST(EndpointMoment, ClosedFormAndSigmoidLaw) {
  const TheoryConstruction tc = make_non_sdp_construction();
  // M_0(w) = exp(w²/2), M_1(w) = exp(w + w²/2).
  for (double w : {0.0, 1.0, 2.0, 3.5}) {
    EXPECT_NEAR(endpoint_moment(tc.model.groups[0].params, tc.pot, w),
                std::exp(0.5 * w * w), 1e-12 * std::exp(0.5 * w * w));
    EXPECT_NEAR(endpoint_moment(tc.model.groups[1].params, tc.pot, w),
                std::exp(w + 0.5 * w * w), 1e-10 * std::exp(w + 0.5 * w * w));
    const Vec q = group_reweighting(tc.model, tc.pot, w);
    EXPECT_NEAR(q[1], sigmoid(w), 1e-12);
    EXPECT_NEAR(q.sum(), 1.0, 1e-12);
  }
  // The worked values: Q^1(1) = 0.7311, Q^2(1) = 0.8808.
  EXPECT_NEAR(group_reweighting(tc.model, tc.pot, 1.0)[1], 0.73105857863,
              1e-9);
  EXPECT_NEAR(group_reweighting(tc.model, tc.pot, 2.0)[1], 0.88079707798,
              1e-9);
  EXPECT_THROW(group_reweighting(tc.model, tc.pot, -1.0), PreconditionError);
}

TEST(GroupReweighting, SdpModelKeepsPriorsAtEveryScale) {
  const TheoryConstruction tc = make_sdp_construction();
  for (double w : {0.0, 1.0, 5.0, 13.0}) {
    const Vec q = group_reweighting(tc.model, tc.pot, w);
    // The shared log-tilt K(w) ≈ 109 at w = 13 costs ~1e-14 absolute in
    // log space, so priors are recovered to ~1e-13, not to the last ulp.
    EXPECT_NEAR(q[0], 0.3, 1e-12) << "w=" << w;
    EXPECT_NEAR(q[1], 0.7, 1e-12) << "w=" << w;
  }
}

TEST(GroupReweighting, LogSpaceSurvivesExtremeScales) {
  const TheoryConstruction tc = make_non_sdp_construction();
  const Vec q = group_reweighting(tc.model, tc.pot, 200.0);
  EXPECT_TRUE(q.allFinite());
  EXPECT_NEAR(q[1], 1.0, 1e-12);
  EXPECT_NEAR(q.sum(), 1.0, 1e-12);
}

TEST(IsSdp, ClassifiesConstructions) {
  const TheoryConstruction sdp = make_sdp_construction();
  const TheoryConstruction non = make_non_sdp_construction();
  EXPECT_TRUE(is_sdp(sdp.model, sdp.pot));
  EXPECT_FALSE(is_sdp(non.model, non.pot));
  // Perturbing the potential-visible mean coordinate breaks parity.
  TheoryConstruction broken = make_sdp_construction();
  broken.model.groups[1].params.mean[0] += 0.01;
  broken.model.finalize();
  EXPECT_FALSE(is_sdp(broken.model, broken.pot));
  // A β rotated into the group-separating coordinate breaks it too.
  TheoryConstruction rotated = make_sdp_construction();
  rotated.pot.beta = (Vec(2) << 1.2, 0.5).finished();
  EXPECT_FALSE(is_sdp(rotated.model, rotated.pot));
}

// --------------------------------------------------------------------------
// Ratio-invariance check
// --------------------------------------------------------------------------

TEST(RatioInvarianceCheck, SdpDeviationIsExactlyZero) {
  const TheoryConstruction tc = make_sdp_construction();
  const NoiseSchedule sched = default_schedule();
  const std::vector<double> w_grid = {0, 1, 3, 5, 7, 9, 11, 13};
  std::vector<double> t_grid;
  for (int i = 0; i < 10; ++i)
    t_grid.push_back(1e-3 + (1.0 - 1e-3) * i / 9.0);
  const RatioInvarianceReport rep =
      check_ratio_invariance(tc.model, tc.pot, w_grid, t_grid, sched);
  EXPECT_TRUE(rep.sdp);
  // The group terms cancel identically: β reads a coordinate whose mean and
  // variance are shared, so the deviation is floating-point zero, not just
  // small.
  EXPECT_EQ(rep.max_deviation, 0.0);
  EXPECT_EQ(rep.cells.size(), w_grid.size() * t_grid.size());
  EXPECT_TRUE(rep.monotone_in_w);
}

TEST(RatioInvarianceCheck, NonSdpDeviatesAndGrowsWithScale) {
  const TheoryConstruction tc = make_non_sdp_construction();
  const NoiseSchedule sched = default_schedule();
  const std::vector<double> w_grid = {0, 1, 3, 5, 7, 9, 11, 13};
  const std::vector<double> t_grid = {0.001, 0.25, 0.5, 0.75, 1.0};
  const RatioInvarianceReport rep =
      check_ratio_invariance(tc.model, tc.pot, w_grid, t_grid, sched);
  EXPECT_FALSE(rep.sdp);
  EXPECT_GT(rep.max_deviation, 1e-3);
  EXPECT_TRUE(rep.monotone_in_w);
  // w = 0 rows are exact zeros; deviation grows with w at fixed t.
  for (std::size_t i = 0; i < rep.cells.size(); ++i) {
    if (rep.cells[i].w == 0.0) {
      EXPECT_EQ(rep.cells[i].deviation, 0.0);
    }
  }
  EXPECT_THROW(check_ratio_invariance(tc.model, tc.pot, {}, t_grid, sched),
               PreconditionError);
}

// --------------------------------------------------------------------------
// Exact guided fields
// --------------------------------------------------------------------------

TEST(HTransform, LogHMatchesQuadratureOnTwoGroups) {
  // Two-group 1-D model: h(x) = Σ_a π_a·numer_a(x) / Σ_a π_a·denom_a(x).
  auto model = std::make_shared<GaussianGroupModel>();
  model->groups.resize(2);
  model->groups[0].prior = 0.4;
  model->groups[0].params.mean = Vec::Constant(1, -0.5);
  model->groups[0].params.cov = Mat::Constant(1, 1, 0.8);
  model->groups[1].prior = 0.6;
  model->groups[1].params.mean = Vec::Constant(1, 1.0);
  model->groups[1].params.cov = Mat::Constant(1, 1, 1.4);
  model->finalize();
  LogAffinePotential pot;
  pot.beta = Vec::Constant(1, 0.8);
  pot.c = 0.1;
  const NoiseSchedule sched = default_schedule();
  const double w = 2.0;
  HTransformEval eval(
      std::shared_ptr<const GaussianGroupModel>(model), pot, w);
  for (double t : {0.1, 0.6}) {
    const double s2 = sched.sigma(t) * sched.sigma(t);
    for (double xt : {-1.0, 0.3, 1.8}) {
      double numer = 0.0, denom = 0.0;
      numer += 0.4 * quad_integral(xt, -0.5, 0.8, s2, w, 0.8, 0.1);
      numer += 0.6 * quad_integral(xt, 1.0, 1.4, s2, w, 0.8, 0.1);
      denom += 0.4 * quad_integral(xt, -0.5, 0.8, s2, 0.0, 0.0, 0.0);
      denom += 0.6 * quad_integral(xt, 1.0, 1.4, s2, 0.0, 0.0, 0.0);
      const Vec x = Vec::Constant(1, xt);
      EXPECT_NEAR(eval.log_h(x, t, sched), std::log(numer / denom), 1e-6)
          << "t=" << t << " xt=" << xt;
    }
  }
}

TEST(HTransform, GradAndTotalConsistency) {
  const TheoryConstruction tc = make_sdp_construction();
  auto model = std::make_shared<const GaussianGroupModel>(tc.model);
  const NoiseSchedule sched = default_schedule();
  const double w = 3.0;
  HTransformEval eval(model, tc.pot, w);
  HTransformEval eval_fd(model, tc.pot, w);
  auto world = std::make_shared<const MixtureWorld>(model->to_mixture_world());
  const ScoreFn world_score = make_mixture_score_fn(world, sched);
  Rng rng(16);
  for (int trial = 0; trial < 6; ++trial) {
    const Vec x = 2.0 * rng.normal_vec(2);
    const double t = 0.05 + 0.9 * rng.uniform();
    Vec grad, base, total;
    eval.grad_log_h(x, t, sched, grad);
    eval.base_score(x, t, sched, base);
    eval.total_score(x, t, sched, total);
    // total = base + ∇log h.
    EXPECT_LT((total - base - grad).norm(), 1e-10 * (1.0 + total.norm()));
    // base equals the mixture-world score of the same mixture.
    EXPECT_LT((base - eval_score(world_score, x, t)).norm(),
              1e-10 * (1.0 + base.norm()));
    // ∇log h equals the finite difference of log h.
    const Vec fd = fd_gradient(
        [&](const Vec& y) { return eval_fd.log_h(y, t, sched); }, x);
    EXPECT_LT((grad - fd).norm(), 2e-5 * (1.0 + grad.norm()))
        << "t=" << t << " trial=" << trial;
  }
}

TEST(HTransform, SingleGroupReducesToClosedForm) {
  // One group: log h = log C_t(w) + w·log f_t, pointwise.
  auto model = std::make_shared<GaussianGroupModel>();
  model->groups.resize(1);
  model->groups[0].prior = 1.0;
  model->groups[0].params.mean = (Vec(2) << 0.2, -0.8).finished();
  model->groups[0].params.cov =
      (Mat(2, 2) << 0.9, 0.2, 0.2, 1.1).finished();
  model->finalize();
  LogAffinePotential pot;
  pot.beta = (Vec(2) << 0.5, 0.3).finished();
  pot.c = -0.2;
  const NoiseSchedule sched = default_schedule();
  const double w = 2.5;
  HTransformEval eval(
      std::shared_ptr<const GaussianGroupModel>(model), pot, w);
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    const Vec x = rng.normal_vec(2);
    const double t = 0.05 + 0.9 * rng.uniform();
    const double expect =
        std::log(c_t_w(t, w, pot, model->groups[0].params, sched)) +
        w * log_f_t(x, t, pot, model->groups[0].params, sched);
    EXPECT_NEAR(eval.log_h(x, t, sched), expect, 1e-9 * (1.0 + std::abs(expect)));
  }
}

TEST(GuidedFields, PotentialFormsAgreeWithExactField) {
  const NoiseSchedule sched = default_schedule();
  Rng rng(18);
  for (const bool sdp_case : {true, false}) {
    const TheoryConstruction tc =
        sdp_case ? make_sdp_construction() : make_non_sdp_construction();
    auto model = std::make_shared<const GaussianGroupModel>(tc.model);
    const double w = 3.0;
    const ScoreFn exact = make_exact_guided_score_fn(model, tc.pot, w, sched);
    const ScoreFn base = make_model_score_fn(model, sched);
    const ScoreFn via_h = guided_score(
        base, h_transform_potential(model, tc.pot, w, sched), w);
    const ScoreFn via_f =
        guided_score(base, mixture_f_potential(model, tc.pot, sched), w);
    const int d = model->dim();
    double max_f_gap = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      const Vec x = 2.0 * rng.normal_vec(d);
      const double t = 0.05 + 0.9 * rng.uniform();
      const Vec e = eval_score(exact, x, t);
      // w·(1/w)·∇log h recovers the exact drift.
      EXPECT_LT((eval_score(via_h, x, t) - e).norm(), 1e-10 * (1.0 + e.norm()));
      max_f_gap = std::max(
          max_f_gap, (eval_score(via_f, x, t) - e).norm() / (1.0 + e.norm()));
    }
    if (sdp_case) {
      // Gradient compatibility: for an SDP construction the per-group tilts
      // coincide, so w·∇log f_t is the exact h-transform drift.
      EXPECT_LT(max_f_gap, 1e-10);
    } else {
      // Without parity the two fields genuinely differ.
      EXPECT_GT(max_f_gap, 1e-4);
    }
  }
}

TEST(GuidedEndpointLaw, SdeSmokeMatchesSigmoid) {
  // Miniature version of the sampler-transfer check: w = 1 on the minimal
  // parity-violating construction must land near Q^1(A=1) = sigmoid(1).
  const TheoryConstruction tc = make_non_sdp_construction();
  auto model = std::make_shared<const GaussianGroupModel>(tc.model);
  const NoiseSchedule sched = default_schedule();
  const MixtureWorld world = model->to_mixture_world();
  SdeOptions opt;
  opt.steps = 256;
  const auto [mean, var] = data_moments(world);
  const int n = 400;
  const Mat endpoints = sample_endpoints(
      [&]() { return make_exact_guided_score_fn(model, tc.pot, 1.0, sched); },
      sched, mean, var, opt, n, 515, 0);
  double soft = 0.0;
  for (int i = 0; i < n; ++i) {
    soft += group_posterior(world, endpoints.row(i).transpose())[1];
  }
  soft /= n;
  EXPECT_NEAR(soft, sigmoid(1.0), 0.08);
}

TEST(GaussianGroupModel, ValidatesAndConverts) {
  GaussianGroupModel m;
  EXPECT_THROW(m.finalize(), PreconditionError);
  m.groups.resize(2);
  m.groups[0].prior = 0.5;
  m.groups[0].params.mean = Vec::Zero(1);
  m.groups[0].params.cov = Mat::Identity(1, 1);
  m.groups[1].prior = 0.4;  // priors do not sum to 1
  m.groups[1].params.mean = Vec::Ones(1);
  m.groups[1].params.cov = Mat::Identity(1, 1);
  EXPECT_THROW(m.finalize(), PreconditionError);
  m.groups[1].prior = 0.5;
  m.finalize();
  const MixtureWorld w = m.to_mixture_world();
  ASSERT_EQ(w.components.size(), 2u);
  EXPECT_EQ(w.components[0].weight, 0.5);
  EXPECT_EQ(w.components[1].group, 1);
  EXPECT_EQ(w.n_conditions, 1);
}

}  // namespace
}  // namespace fairguide
