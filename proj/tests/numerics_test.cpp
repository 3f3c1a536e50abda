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
// Oracle tests for the numerics kernel. Every nontrivial routine is checked
// against an independent implementation: assignment OT against brute-force
// permutation enumeration, sort-based W1 against the LP solution, the ridge
// LOO shortcut against explicit refits, and the Gaussian log-density against
// direct formula evaluation and 2-D quadrature.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "fairguide/numerics.hpp"
#include "fairguide/rng.hpp"

namespace fairguide {
namespace {

// --------------------------------------------------------------------------
// gaussian_logpdf
// --------------------------------------------------------------------------

TEST(GaussianLogpdf, MatchesDirectFormulaIn1D) {
  GaussianParams p;
  p.mean = Vec::Constant(1, 0.7);
  p.cov = Mat::Constant(1, 1, 2.3);
  const double x = -0.4;
  const double expect = -0.5 * (std::log(2.0 * kPi * 2.3) +
                                (x - 0.7) * (x - 0.7) / 2.3);
  Vec xv = Vec::Constant(1, x);
  EXPECT_NEAR(gaussian_logpdf(xv, p), expect, 1e-14);
}

TEST(GaussianLogpdf, MatchesDirectFormulaIn3D) {
  GaussianParams p;
  p.mean = (Vec(3) << 1.0, -2.0, 0.5).finished();
  Mat a(3, 3);
  a << 1.0, 0.2, 0.0, 0.1, 1.0, 0.3, 0.0, -0.2, 1.0;
  p.cov = a * a.transpose() + 0.5 * Mat::Identity(3, 3);
  const Vec x = (Vec(3) << 0.3, 0.1, -1.0).finished();
  // Direct evaluation through the explicit inverse and determinant.
  const double quad = (x - p.mean).dot(p.cov.inverse() * (x - p.mean));
  const double expect =
      -0.5 * (3.0 * std::log(2.0 * kPi) + std::log(p.cov.determinant()) + quad);
  EXPECT_NEAR(gaussian_logpdf(x, p), expect, 1e-12);
}

TEST(GaussianLogpdf, NormalizesToOneUnderQuadrature) {
  // Midpoint quadrature of the 2-D density over a wide box. The density is
  // concentrated well inside [-8, 8]^2, so truncation error is negligible.
  GaussianParams p;
  p.mean = (Vec(2) << 0.4, -0.3).finished();
  p.cov = (Mat(2, 2) << 1.1, 0.4, 0.4, 0.8).finished();
  const int n = 400;
  const double lo = -8.0, hi = 8.0;
  const double h = (hi - lo) / n;
  double integral = 0.0;
  Vec x(2);
  for (int i = 0; i < n; ++i) {
    x[0] = lo + (i + 0.5) * h;
    for (int j = 0; j < n; ++j) {
      x[1] = lo + (j + 0.5) * h;
      integral += std::exp(gaussian_logpdf(x, p)) * h * h;
    }
  }
  EXPECT_NEAR(integral, 1.0, 1e-6);
}

TEST(GaussianLogpdf, RejectsNonSpdCovariance) {
  GaussianParams p;
  p.mean = Vec::Zero(2);
  p.cov = (Mat(2, 2) << 1.0, 2.0, 2.0, 1.0).finished();  // eigenvalues 3, -1
  EXPECT_THROW(gaussian_logpdf(Vec::Zero(2), p), NumericalError);
}

TEST(GaussianLogpdf, RejectsDimensionMismatch) {
  GaussianParams p;
  p.mean = Vec::Zero(2);
  p.cov = Mat::Identity(2, 2);
  EXPECT_THROW(gaussian_logpdf(Vec::Zero(3), p), PreconditionError);
}

// --------------------------------------------------------------------------
// solve_balanced_ot
// --------------------------------------------------------------------------

// Independent oracle: minimum over all n! assignments.
double brute_force_ot_cost(const Mat& cost) {
  const int n = static_cast<int>(cost.rows());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (int i = 0; i < n; ++i) c += cost(i, perm[i]);
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / n;
}

void expect_valid_plan(const Mat& plan, int n) {
  const double mass = 1.0 / n;
  for (int i = 0; i < n; ++i) {
    EXPECT_NEAR(plan.row(i).sum(), mass, 1e-12) << "row " << i;
    EXPECT_NEAR(plan.col(i).sum(), mass, 1e-12) << "col " << i;
    for (int j = 0; j < n; ++j) {
      // Permutation support: entries are exactly 0 or 1/n.
      EXPECT_TRUE(plan(i, j) == 0.0 || plan(i, j) == mass)
          << "plan(" << i << "," << j << ") = " << plan(i, j);
    }
  }
}

TEST(BalancedOt, MatchesBruteForceOnRandomInstances) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + rng.uniform_int(5);  // n in [2, 6]
    Mat cost(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) cost(i, j) = rng.uniform() * 10.0;
    const TransportPlan tp = solve_balanced_ot(cost);
    const double expect = brute_force_ot_cost(cost);
    // The solver performs only additions/subtractions/comparisons on the
    // costs, but dual updates can accumulate rounding; compare tightly.
    EXPECT_NEAR(tp.cost_total, expect, 1e-9 * (1.0 + std::abs(expect)))
        << "trial " << trial << " n=" << n;
    expect_valid_plan(tp.plan, n);
    // cost_total is consistent with the plan it reports.
    double recompute = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) recompute += tp.plan(i, j) * cost(i, j);
    EXPECT_NEAR(tp.cost_total, recompute, 1e-12);
  }
}

TEST(BalancedOt, HandlesDegenerateTies) {
  // All-equal costs: every permutation is optimal; the plan must still be a
  // valid permutation and the cost the common value.
  Mat cost = Mat::Constant(4, 4, 3.25);
  const TransportPlan tp = solve_balanced_ot(cost);
  expect_valid_plan(tp.plan, 4);
  EXPECT_NEAR(tp.cost_total, 3.25, 1e-12);
}

TEST(BalancedOt, SolvesIdentityStructure) {
  // Diagonal is free, everything else expensive: identity assignment.
  const int n = 5;
  Mat cost = Mat::Constant(n, n, 100.0);
  for (int i = 0; i < n; ++i) cost(i, i) = 0.0;
  const TransportPlan tp = solve_balanced_ot(cost);
  EXPECT_NEAR(tp.cost_total, 0.0, 1e-12);
  for (int i = 0; i < n; ++i) EXPECT_EQ(tp.plan(i, i), 1.0 / n);
}

TEST(BalancedOt, SinglePoint) {
  Mat cost = Mat::Constant(1, 1, 0.7);
  const TransportPlan tp = solve_balanced_ot(cost);
  EXPECT_EQ(tp.plan(0, 0), 1.0);
  EXPECT_NEAR(tp.cost_total, 0.7, 1e-15);
}

TEST(BalancedOt, RejectsBadInput) {
  EXPECT_THROW(solve_balanced_ot(Mat::Zero(2, 3)), PreconditionError);
  Mat bad = Mat::Zero(2, 2);
  bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(solve_balanced_ot(bad), PreconditionError);
}

TEST(BalancedOt, LargerInstanceAgainstSortOracle) {
  // For 1-D absolute-difference costs the optimum is the sorted matching;
  // this exercises n far beyond the brute-force range.
  Rng rng(99);
  const int n = 64;
  std::vector<double> u(n), v(n);
  for (int i = 0; i < n; ++i) {
    u[i] = rng.normal();
    v[i] = rng.normal() + 0.3;
  }
  Mat cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) cost(i, j) = std::abs(u[i] - v[j]);
  const TransportPlan tp = solve_balanced_ot(cost);
  EXPECT_NEAR(tp.cost_total, wasserstein1_1d(u, v), 1e-10);
}

// --------------------------------------------------------------------------
// wasserstein1_1d
// --------------------------------------------------------------------------

TEST(Wasserstein1, MatchesAssignmentSolverOnRandomInstances) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + rng.uniform_int(8);  // n in [1, 8]
    std::vector<double> u(n), v(n);
    for (int i = 0; i < n; ++i) {
      u[i] = 4.0 * rng.uniform() - 2.0;
      v[i] = 4.0 * rng.uniform() - 2.0;
    }
    Mat cost(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) cost(i, j) = std::abs(u[i] - v[j]);
    const double lp = solve_balanced_ot(cost).cost_total;
    EXPECT_NEAR(wasserstein1_1d(u, v), lp, 1e-10) << "trial " << trial;
  }
}

TEST(Wasserstein1, KnownValues) {
  EXPECT_DOUBLE_EQ(wasserstein1_1d({0.0, 1.0}, {0.0, 1.0}), 0.0);
  EXPECT_DOUBLE_EQ(wasserstein1_1d({0.0}, {3.0}), 3.0);
  // Shift by a constant c moves W1 by exactly c.
  EXPECT_NEAR(wasserstein1_1d({0.0, 1.0, 2.0}, {0.5, 1.5, 2.5}), 0.5, 1e-15);
  // Order of inputs is irrelevant.
  EXPECT_DOUBLE_EQ(wasserstein1_1d({2.0, 0.0, 1.0}, {1.5, 2.5, 0.5}),
                   wasserstein1_1d({0.0, 1.0, 2.0}, {0.5, 1.5, 2.5}));
}

TEST(Wasserstein1, RejectsMismatchedOrEmpty) {
  EXPECT_THROW(wasserstein1_1d({}, {}), PreconditionError);
  EXPECT_THROW(wasserstein1_1d({1.0}, {1.0, 2.0}), PreconditionError);
}

// --------------------------------------------------------------------------
// ridge_fit_loo
// --------------------------------------------------------------------------

// Independent oracle: drop row i, refit on the rest, predict the held-out
// target. The production path uses the hat-matrix shortcut.
double explicit_loo_mse(const Mat& features, const Vec& targets,
                        double lambda) {
  const int n = static_cast<int>(features.rows());
  const int p = static_cast<int>(features.cols());
  double mse = 0.0;
  for (int i = 0; i < n; ++i) {
    Mat design(n - 1, p + 1);
    Vec y(n - 1);
    int r = 0;
    for (int k = 0; k < n; ++k) {
      if (k == i) continue;
      design.row(r).head(p) = features.row(k);
      design(r, p) = 1.0;
      y[r] = targets[k];
      ++r;
    }
    Mat gram = design.transpose() * design;
    for (int j = 0; j < p; ++j) gram(j, j) += lambda;
    const Vec theta = gram.ldlt().solve(design.transpose() * y);
    Vec zi(p + 1);
    zi.head(p) = features.row(i);
    zi[p] = 1.0;
    const double e = targets[i] - zi.dot(theta);
    mse += e * e;
  }
  return mse / n;
}

TEST(RidgeLoo, ShortcutMatchesExplicitRefits) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 6 + rng.uniform_int(10);
    const int p = 1 + rng.uniform_int(3);
    Mat x(n, p);
    Vec y(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < p; ++j) x(i, j) = rng.normal();
      y[i] = rng.normal();
    }
    for (const double lambda : {0.01, 0.5, 10.0}) {
      const RidgeFit fit = ridge_fit_loo(x, y, {lambda});
      const double oracle = explicit_loo_mse(x, y, lambda);
      EXPECT_NEAR(fit.loo_mse, oracle, 1e-9 * (1.0 + oracle))
          << "trial " << trial << " lambda=" << lambda;
    }
  }
}

TEST(RidgeLoo, RecoversExactLinearRelation) {
  // y = 2x1 - 3x2 + 0.5 exactly; with a tiny lambda the fit is near-exact
  // and LOO selects it over heavy shrinkage.
  Rng rng(5);
  const int n = 30;
  Mat x(n, 2);
  Vec y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    y[i] = 2.0 * x(i, 0) - 3.0 * x(i, 1) + 0.5;
  }
  const RidgeFit fit = ridge_fit_loo(x, y, {1e-8, 1.0, 100.0});
  EXPECT_EQ(fit.chosen_lambda, 1e-8);
  EXPECT_NEAR(fit.weights[0], 2.0, 1e-5);
  EXPECT_NEAR(fit.weights[1], -3.0, 1e-5);
  EXPECT_NEAR(fit.bias, 0.5, 1e-5);
  EXPECT_EQ(fit.loo_mse_grid.size(), 3u);
}

TEST(RidgeLoo, LargeLambdaCollapsesToTargetMean) {
  Rng rng(21);
  const int n = 12;
  Mat x(n, 1);
  Vec y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    y[i] = 3.0 + rng.normal();
  }
  const RidgeFit fit = ridge_fit_loo(x, y, {1e12});
  // The intercept is unpenalized: weights vanish, bias approaches mean(y).
  EXPECT_NEAR(fit.weights[0], 0.0, 1e-6);
  EXPECT_NEAR(fit.bias, y.mean(), 1e-6);
}

TEST(RidgeLoo, RejectsDegenerateInputs) {
  Mat x = Mat::Ones(5, 2);  // all rows identical
  Vec y = Vec::LinSpaced(5, 0.0, 1.0);
  EXPECT_THROW(ridge_fit_loo(x, y, {1.0}), PreconditionError);

  Mat x2(2, 1);
  x2 << 0.0, 1.0;
  EXPECT_THROW(ridge_fit_loo(x2, Vec::Zero(2), {1.0}), PreconditionError);

  Mat x3(5, 1);
  x3 << 0, 1, 2, 3, 4;
  EXPECT_THROW(ridge_fit_loo(x3, Vec::Zero(5), {}), PreconditionError);
  EXPECT_THROW(ridge_fit_loo(x3, Vec::Zero(5), {-1.0}), PreconditionError);
}

// --------------------------------------------------------------------------
// logit_regression
// --------------------------------------------------------------------------

TEST(LogitRegression, RecoversExactLogitLinearLaw) {
  // y = sigmoid(1.5·logit(x) + 0.3), evaluated without noise.
  std::vector<double> x = {0.2, 0.35, 0.5, 0.65, 0.8};
  std::vector<double> y;
  for (double xi : x) y.push_back(sigmoid(1.5 * logit(xi) + 0.3));
  const LogitFit fit = logit_regression(x, y);
  EXPECT_NEAR(fit.slope, 1.5, 1e-12);
  EXPECT_NEAR(fit.intercept, 0.3, 1e-12);
  EXPECT_NEAR(fit.r_squared, 1.0, 1e-12);
  EXPECT_FALSE(fit.clamped);
  ASSERT_TRUE(fit.fixed_point.has_value());
  // Fixed point: logit* = 0.3/(1-1.5) = -0.6.
  EXPECT_NEAR(*fit.fixed_point, sigmoid(0.3 / (1.0 - 1.5)), 1e-12);
}

TEST(LogitRegression, SlopeOneHasNoFixedPoint) {
  std::vector<double> x = {0.3, 0.5, 0.7};
  std::vector<double> y;
  for (double xi : x) y.push_back(sigmoid(logit(xi) + 0.4));
  const LogitFit fit = logit_regression(x, y);
  EXPECT_NEAR(fit.slope, 1.0, 1e-12);
  EXPECT_FALSE(fit.fixed_point.has_value());
}

TEST(LogitRegression, ClampsBoundaryRatiosAndFlags) {
  std::vector<double> x = {0.0, 0.5, 0.9};  // exact 0 must clamp, not -inf
  std::vector<double> y = {0.1, 0.6, 1.0};  // exact 1 must clamp, not +inf
  const LogitFit fit = logit_regression(x, y);
  EXPECT_TRUE(fit.clamped);
  EXPECT_TRUE(std::isfinite(fit.slope));
  EXPECT_TRUE(std::isfinite(fit.intercept));
}

TEST(LogitRegression, RejectsInvalidInput) {
  EXPECT_THROW(logit_regression({0.2, 0.4}, {0.3, 0.5}), PreconditionError);
  EXPECT_THROW(logit_regression({0.2, 0.4, 1.2}, {0.3, 0.5, 0.6}),
               PreconditionError);
  EXPECT_THROW(logit_regression({0.2, 0.4, -0.1}, {0.3, 0.5, 0.6}),
               PreconditionError);
  // Zero variance in x is a numerical failure, not a precondition one: the
  // inputs are individually valid but jointly unusable.
  EXPECT_THROW(logit_regression({0.4, 0.4, 0.4}, {0.3, 0.5, 0.6}),
               NumericalError);
}

TEST(LogitRegression, RSquaredReflectsNoise) {
  Rng rng(3);
  std::vector<double> x, y;
  for (int i = 0; i < 40; ++i) {
    const double xi = 0.1 + 0.8 * rng.uniform();
    x.push_back(xi);
    y.push_back(sigmoid(1.2 * logit(xi) + 0.1 + 0.05 * rng.normal()));
  }
  const LogitFit fit = logit_regression(x, y);
  EXPECT_GT(fit.r_squared, 0.9);
  EXPECT_LT(fit.r_squared, 1.0);
  EXPECT_NEAR(fit.slope, 1.2, 0.1);
}

// --------------------------------------------------------------------------
// wilson_interval
// --------------------------------------------------------------------------

TEST(WilsonInterval, MatchesReferenceValue) {
  // Reference: Wilson 95% interval for 50/100 is (0.40383, 0.59617).
  const auto [lo, hi] = wilson_interval(50, 100);
  EXPECT_NEAR(lo, 0.4038315, 1e-6);
  EXPECT_NEAR(hi, 0.5961685, 1e-6);
  // Symmetric about 1/2 when phat = 1/2.
  EXPECT_NEAR(lo + hi, 1.0, 1e-12);
}

TEST(WilsonInterval, EdgeCountsStayInUnitInterval) {
  const auto [lo0, hi0] = wilson_interval(0, 20);
  EXPECT_EQ(lo0, 0.0);
  EXPECT_GT(hi0, 0.0);
  const auto [lo1, hi1] = wilson_interval(20, 20);
  EXPECT_LT(lo1, 1.0);
  EXPECT_EQ(hi1, 1.0);
}

TEST(WilsonInterval, ShrinksWithN) {
  const auto [alo, ahi] = wilson_interval(30, 100);
  const auto [blo, bhi] = wilson_interval(300, 1000);
  EXPECT_LT(bhi - blo, ahi - alo);
}

TEST(WilsonInterval, ContainsPhat) {
  for (int s : {1, 7, 13, 19}) {
    const auto [lo, hi] = wilson_interval(s, 20);
    const double phat = s / 20.0;
    EXPECT_LT(lo, phat);
    EXPECT_GT(hi, phat);
  }
}

TEST(WilsonInterval, RejectsInvalidCounts) {
  EXPECT_THROW(wilson_interval(5, 0), PreconditionError);
  EXPECT_THROW(wilson_interval(-1, 10), PreconditionError);
  EXPECT_THROW(wilson_interval(11, 10), PreconditionError);
}

}  // namespace
}  // namespace fairguide
