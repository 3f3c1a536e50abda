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
// Shared numerical substrate: Gaussian density algebra, exact balanced
// optimal transport on small cost matrices, the 1-D Wasserstein distance,
// and the two regressions (ridge with closed-form leave-one-out CV, logit
// regression) used by the estimator and analysis layers.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "fairguide/common.hpp"

namespace fairguide {

struct GaussianParams {
  Vec mean;
  Mat cov;  // symmetric positive definite
};

/*!
 * log N(x; mean, cov) via Cholesky. A covariance whose Cholesky
 * factorization fails (non-SPD) raises NumericalError rather than
 * propagating NaN.
 */
inline double gaussian_logpdf(const Vec& x, const GaussianParams& p) {
  const auto d = x.size();
  require(p.mean.size() == d && p.cov.rows() == d && p.cov.cols() == d,
          "gaussian_logpdf: dimension mismatch");
  Eigen::LLT<Mat> llt(p.cov);
  ensure(llt.info() == Eigen::Success,
         "gaussian_logpdf: covariance is not positive definite");
  const Mat L = llt.matrixL();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) log_det += 2.0 * std::log(L(i, i));
  const Vec z = llt.matrixL().solve(x - p.mean);
  return -0.5 * (static_cast<double>(d) * std::log(2.0 * M_PI) + log_det +
                 z.squaredNorm());
}

struct TransportPlan {
  Mat plan;           // n×n, rows and columns each sum to 1/n
  double cost_total;  // Σ_ij plan_ij · cost_ij for the cost it was solved on
};

/*!
 * Exact balanced optimal transport between two uniform n-point measures.
 *
 * Balanced uniform marginals admit an optimum supported on a permutation
 * (Birkhoff), so this solves the n×n assignment problem with the
 * shortest-augmenting-path method (O(n³), exact on real costs — only
 * additions and comparisons) and returns the permutation scaled by 1/n.
 */
inline TransportPlan solve_balanced_ot(const Mat& cost) {
  const int n = static_cast<int>(cost.rows());
  require(n >= 1 && cost.cols() == n, "solve_balanced_ot: cost must be square");
  require(cost.allFinite(), "solve_balanced_ot: non-finite cost entry");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // Dual potentials u (rows), v (columns); p[j] = row matched to column j;
  // index 0 is the virtual unmatched slot (1-based algorithm).
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  TransportPlan out;
  out.plan = Mat::Zero(n, n);
  out.cost_total = 0.0;
  const double mass = 1.0 / n;
  for (int j = 1; j <= n; ++j) {
    out.plan(p[j] - 1, j - 1) = mass;
    out.cost_total += mass * cost(p[j] - 1, j - 1);
  }
  return out;
}

/*!
 * Exact 1-Wasserstein distance between equal-size empirical measures:
 * (1/n)·Σ_k |sort(u)_k − sort(v)_k|. The sorting formula is the production
 * path; its equality with the assignment-problem solution is a test oracle.
 */
inline double wasserstein1_1d(std::vector<double> u, std::vector<double> v) {
  require(!u.empty() && u.size() == v.size(),
          "wasserstein1_1d: inputs must be nonempty and of equal size");
  std::sort(u.begin(), u.end());
  std::sort(v.begin(), v.end());
  double acc = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) acc += std::abs(u[k] - v[k]);
  return acc / static_cast<double>(u.size());
}

struct RidgeFit {
  Vec weights;           // coefficients on the feature columns
  double bias = 0.0;     // unpenalized intercept
  double chosen_lambda = 0.0;
  double loo_mse = 0.0;  // leave-one-out MSE at chosen_lambda
  std::vector<double> loo_mse_grid;  // one entry per lambda in input order
};

namespace detail {

/*! Solves the ridge normal equations (intercept unpenalized) for one λ. */
inline Vec ridge_solve(const Mat& design, const Vec& targets, double lambda) {
  const auto q = design.cols();
  Mat gram = design.transpose() * design;
  for (Eigen::Index j = 0; j + 1 < q; ++j) gram(j, j) += lambda;
  return gram.ldlt().solve(design.transpose() * targets);
}

}  // namespace detail

/*!
 * Ridge regression with exact leave-one-out cross-validation.
 *
 * The intercept is appended as an unpenalized column, so in the large-λ
 * limit predictions collapse to the target mean. LOO errors use the
 * hat-matrix shortcut e_i / (1 − h_ii), which is algebraically exact for
 * ridge; the explicit refit path is kept in tests as the oracle.
 */
inline RidgeFit ridge_fit_loo(const Mat& features, const Vec& targets,
                              const std::vector<double>& lambda_grid) {
  const auto n = features.rows();
  const auto p = features.cols();
  require(n >= 3, "ridge_fit_loo: need at least 3 rows");
  require(targets.size() == n, "ridge_fit_loo: target size mismatch");
  require(!lambda_grid.empty(), "ridge_fit_loo: empty lambda grid");
  bool degenerate = true;
  for (Eigen::Index i = 1; i < n && degenerate; ++i) {
    if ((features.row(i) - features.row(0)).cwiseAbs().maxCoeff() > 0.0) {
      degenerate = false;
    }
  }
  require(!degenerate, "ridge_fit_loo: degenerate design (all rows identical)");

  Mat design(n, p + 1);
  design.leftCols(p) = features;
  design.col(p).setOnes();

  RidgeFit best;
  best.loo_mse = std::numeric_limits<double>::infinity();
  for (const double lambda : lambda_grid) {
    require(lambda >= 0.0, "ridge_fit_loo: negative lambda");
    Mat gram = design.transpose() * design;
    for (Eigen::Index j = 0; j < p; ++j) gram(j, j) += lambda;
    const Eigen::LDLT<Mat> solver(gram);
    const Vec theta = solver.solve(design.transpose() * targets);
    // Leverages h_ii = z_iᵀ (ZᵀZ + Λ)⁻¹ z_i.
    const Mat kernel = solver.solve(design.transpose());  // (p+1)×n
    const Vec residual = targets - design * theta;
    double mse = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double h = design.row(i).dot(kernel.col(i));
      const double denom = 1.0 - h;
      ensure(denom > 1e-12,
             "ridge_fit_loo: leverage at 1, LOO undefined for this lambda");
      const double e = residual[i] / denom;
      mse += e * e;
    }
    mse /= static_cast<double>(n);
    best.loo_mse_grid.push_back(mse);
    if (mse < best.loo_mse) {
      best.loo_mse = mse;
      best.chosen_lambda = lambda;
      best.weights = theta.head(p);
      best.bias = theta[p];
    }
  }
  return best;
}

struct LogitFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::optional<double> fixed_point;  // absent when slope = 1 within 1e-9
  bool clamped = false;               // some input ratio hit 0/1 and was clamped
};

/*!
 * OLS in logit space between paired ratios. Ratios exactly at 0 or 1 are
 * clamped to [ε, 1−ε] (ε = 1e-4) and flagged; ratios outside [0,1] are a
 * precondition violation. The fixed point is where the fitted line crosses
 * y = x in logit space, mapped back through the sigmoid.
 */
inline LogitFit logit_regression(const std::vector<double>& x_ratios,
                                 const std::vector<double>& y_ratios) {
  const std::size_t n = x_ratios.size();
  require(n >= 3 && y_ratios.size() == n,
          "logit_regression: need >= 3 paired ratios");
  static constexpr double kEps = 1e-4;
  LogitFit fit;
  auto to_logit = [&fit](double r) {
    require(r >= 0.0 && r <= 1.0, "logit_regression: ratio outside [0,1]");
    if (r < kEps || r > 1.0 - kEps) {
      fit.clamped = true;
      r = std::clamp(r, kEps, 1.0 - kEps);
    }
    return logit(r);
  };
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    lx[i] = to_logit(x_ratios[i]);
    ly[i] = to_logit(y_ratios[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  // Relative threshold: identical ratios leave sxx at rounding noise
  // (~ulp² of the mean), not an exact zero.
  ensure(sxx > 1e-12 * static_cast<double>(n) * (1.0 + mx * mx),
         "logit_regression: degenerate x ratios (zero variance)");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = ly[i] - (fit.slope * lx[i] + fit.intercept);
    ss_res += r * r;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : (ss_res < 1e-24 ? 1.0 : 0.0);
  if (std::abs(fit.slope - 1.0) >= 1e-9) {
    fit.fixed_point = sigmoid(fit.intercept / (1.0 - fit.slope));
  }
  return fit;
}

/*! Wilson score interval for a binomial proportion (z = 1.96 for 95%). */
inline std::pair<double, double> wilson_interval(double successes, double n,
                                                 double z = 1.959963984540054) {
  require(n > 0.0 && successes >= 0.0 && successes <= n,
          "wilson_interval: invalid counts");
  const double phat = successes / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = phat + z2 / (2.0 * n);
  const double margin =
      z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n));
  return {std::max(0.0, (center - margin) / denom),
          std::min(1.0, (center + margin) / denom)};
}

}  // namespace fairguide
