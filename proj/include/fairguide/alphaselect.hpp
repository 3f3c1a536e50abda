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
// Prompt-adaptive null-shift selection: per-prompt search for the α that
// zeroes the guidance-bias proxy (ratio at a high scale minus ratio at a
// low scale), and a cheap ridge estimator mapping prompt-embedding features
// to α* so new prompts skip the search entirely.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fairguide/common.hpp"
#include "fairguide/numerics.hpp"
#include "fairguide/world.hpp"

namespace fairguide {

/*! Uniform α grid lo, lo+step, …, hi (hi must be reachable exactly up to
 *  rounding; the last point is clamped to hi). */
struct AlphaGrid {
  double lo = -15.0;
  double hi = 15.0;
  double step = 2.5;

  void validate() const {
    require(step > 0.0, "AlphaGrid: step must be > 0");
    require(hi > lo, "AlphaGrid: hi must exceed lo");
    const double n = (hi - lo) / step;
    require(std::abs(n - std::round(n)) < 1e-9,
            "AlphaGrid: (hi - lo) must be an integer multiple of step");
  }

  std::vector<double> values() const {
    validate();
    const int m = static_cast<int>(std::round((hi - lo) / step)) + 1;
    std::vector<double> v(m);
    for (int i = 0; i < m; ++i) v[i] = lo + step * i;
    v.back() = hi;
    return v;
  }
};

/*!
 * Snaps v to the nearest grid point; exact midpoints resolve to the
 * candidate with smaller |α| (e.g. step 2.5: 1.26 → 2.5 but 1.25 → 0).
 * Values outside the grid clamp to its ends.
 */
inline double snap_to_grid(double v, const AlphaGrid& grid) {
  grid.validate();
  if (v <= grid.lo) return grid.lo;
  if (v >= grid.hi) return grid.hi;
  const double k = (v - grid.lo) / grid.step;
  const double fl = std::floor(k);
  const double a = grid.lo + fl * grid.step;
  const double b = std::min(grid.hi, a + grid.step);
  const double da = v - a;
  const double db = b - v;
  if (da < db) return a;
  if (db < da) return b;
  // Exact midpoint: prefer the smaller-magnitude α (then the smaller value).
  if (std::abs(a) < std::abs(b)) return a;
  if (std::abs(b) < std::abs(a)) return b;
  return a;
}

struct AlphaCurvePoint {
  double alpha = 0.0;
  double bias = 0.0;     // guidance-bias proxy: ratio(w_high) − ratio(w_low)
  double ci_half = 0.0;  // half-width of the proxy's confidence interval
};

struct AlphaRecord {
  std::string prompt_label;
  double alpha_star = 0.0;
  bool saturated = false;      // no sign change on the grid
  bool non_monotone = false;   // adjacent estimates contradict the trend
                               // beyond twice the pooled CI half-width
  double flatness = 0.0;       // |bias| at the selected α
  double feature_score = 0.0;  // ⟨e, g⟩
  double feature_level = 0.0;  // |⟨e, g⟩|
  double w_low = 0.0, w_high = 0.0;
  std::vector<AlphaCurvePoint> curve;  // evaluated points, ascending in α
};

/*!
 * Grid search for the α* where the guidance-bias proxy changes sign.
 *
 * The proxy is assumed monotone in α, so the search brackets the zero by
 * bisection on grid indices (~log₂|grid| evaluations). Fallbacks:
 *  - no sign change between the grid ends → full scan, α* = the evaluated
 *    point of minimum |bias| (ties to smaller |α|), `saturated` set;
 *  - an adjacent evaluated pair moving against the overall trend by more
 *    than twice the pooled CI half-width → full scan, `non_monotone` set,
 *    and α* re-picked from the scan (innermost sign change; saturation rule
 *    if the scan has none).
 * Among a bracketing pair, α* is the member with smaller |α|. `flatness`
 * records the residual |bias| at α*, so callers can tell a sharp zero from
 * a plateau.
 *
 * `bias_eval` maps α to (proxy, CI half-width). Callers make evaluations
 * comparable across α by reusing base seeds per scale slot inside the
 * closure (common random numbers).
 */
inline AlphaRecord search_alpha_star(
    const std::function<std::pair<double, double>(double)>& bias_eval,
    const std::string& prompt_label, double feature_score,
    const AlphaGrid& grid, double w_low, double w_high) {
  require(static_cast<bool>(bias_eval), "search_alpha_star: missing bias_eval");
  require(w_high > w_low, "search_alpha_star: need w_high > w_low");
  const std::vector<double> vals = grid.values();
  const int m = static_cast<int>(vals.size());
  require(m >= 2, "search_alpha_star: grid needs at least 2 points");

  std::map<int, std::pair<double, double>> cache;  // index → (bias, ci_half)
  auto eval = [&](int i) -> const std::pair<double, double>& {
    auto it = cache.find(i);
    if (it == cache.end())
      it = cache.emplace(i, bias_eval(vals[i])).first;
    return it->second;
  };
  auto sign_of = [](double b) { return b >= 0.0 ? 1 : -1; };

  AlphaRecord rec;
  rec.prompt_label = prompt_label;
  rec.feature_score = feature_score;
  rec.feature_level = std::abs(feature_score);
  rec.w_low = w_low;
  rec.w_high = w_high;

  const double b_lo = eval(0).first;
  const double b_hi = eval(m - 1).first;
  bool full_scan = false;

  if (sign_of(b_lo) == sign_of(b_hi)) {
    rec.saturated = true;
    full_scan = true;
  } else {
    int l = 0, r = m - 1;
    while (r - l > 1) {
      const int mid = (l + r) / 2;
      if (sign_of(eval(mid).first) == sign_of(eval(l).first))
        l = mid;
      else
        r = mid;
    }
    rec.alpha_star =
        std::abs(vals[l]) <= std::abs(vals[r]) ? vals[l] : vals[r];
  }

  // Monotonicity audit on everything evaluated so far (ascending in α):
  // flag only movements against the end-to-end trend that exceed noise.
  auto find_violation = [&]() {
    const int dir = sign_of(b_hi - b_lo);
    int prev = -1;
    for (const auto& [i, be] : cache) {
      if (prev >= 0) {
        const auto& pe = cache.at(prev);
        const double move = (be.first - pe.first) * dir;
        const double pooled = std::hypot(pe.second, be.second);
        if (move < -2.0 * pooled) return true;
      }
      prev = i;
    }
    return false;
  };
  if (!full_scan && find_violation()) {
    rec.non_monotone = true;
    full_scan = true;
  }

  if (full_scan) {
    for (int i = 0; i < m; ++i) eval(i);
    if (rec.non_monotone || rec.saturated) {
      // Re-audit on the complete curve (the sparse audit may have fired on
      // points that the full scan contextualizes, and vice versa).
      rec.non_monotone = find_violation();
    }
    // Innermost sign change wins; otherwise saturation rule: min |bias|,
    // ties to smaller |α|.
    int best_idx = -1;
    double best_abs_alpha = 0.0;
    for (int i = 0; i + 1 < m; ++i) {
      if (sign_of(cache.at(i).first) != sign_of(cache.at(i + 1).first)) {
        const double cand = std::min(std::abs(vals[i]), std::abs(vals[i + 1]));
        if (best_idx < 0 || cand < best_abs_alpha) {
          best_idx = i;
          best_abs_alpha = cand;
        }
      }
    }
    if (best_idx >= 0) {
      rec.saturated = false;
      const double a = vals[best_idx];
      const double b = vals[best_idx + 1];
      rec.alpha_star = std::abs(a) <= std::abs(b) ? a : b;
    } else {
      rec.saturated = true;
      int arg = 0;
      for (int i = 1; i < m; ++i) {
        const double cur = std::abs(cache.at(i).first);
        const double best = std::abs(cache.at(arg).first);
        if (cur < best ||
            (cur == best && std::abs(vals[i]) < std::abs(vals[arg])))
          arg = i;
      }
      rec.alpha_star = vals[arg];
    }
  }

  for (const auto& [i, be] : cache)
    rec.curve.push_back({vals[i], be.first, be.second});
  for (const auto& p : rec.curve)
    if (p.alpha == rec.alpha_star) rec.flatness = std::abs(p.bias);
  return rec;
}

// ---------------------------------------------------------------------------
// Estimator: features (⟨e,g⟩, |⟨e,g⟩|) → α*, ridge with LOO-selected λ.
// ---------------------------------------------------------------------------

/*! Normalized mean difference of (female-analog, male-analog) embedding
 *  pairs; the direction along which null shifts act. */
inline Vec group_direction(const std::vector<std::pair<Vec, Vec>>& pairs) {
  require(!pairs.empty(), "group_direction: need at least one pair");
  Vec mean = Vec::Zero(pairs.front().first.size());
  for (const auto& [female, male] : pairs) {
    require(female.size() == mean.size() && male.size() == mean.size(),
            "group_direction: inconsistent embedding dimensions");
    mean += female - male;
  }
  mean /= static_cast<double>(pairs.size());
  const double nrm = mean.norm();
  require(nrm > 1e-12, "group_direction: pairs average to the zero vector");
  return mean / nrm;
}

/*! Deterministic holdout split: a label is held out iff its FNV-1a hash
 *  lands in the first `frac` of the hash range (≈ frac of labels). */
inline bool is_holdout_label(const std::string& label, double frac = 0.15) {
  require(frac >= 0.0 && frac <= 1.0, "is_holdout_label: frac must be in [0,1]");
  return (fnv1a64(label) % 10000) <
         static_cast<std::uint64_t>(std::llround(frac * 10000));
}

struct AlphaEstimator {
  Vec g;  // direction used to compute features at prediction time
  double w_score = 0.0;
  double w_level = 0.0;
  double bias = 0.0;
  double lambda = 0.0;
  AlphaGrid grid;
  // Fit diagnostics.
  int n_train = 0;
  int n_holdout = 0;
  double holdout_mae_raw = 0.0;    // mean |raw prediction − α*| on holdout
  double holdout_exact_rate = 0.0; // fraction of holdout where snap hits α*
  double loo_mse = 0.0;
};

inline double predict_alpha_raw(const AlphaEstimator& est, const Vec& e) {
  require(e.size() == est.g.size(), "predict_alpha_raw: dimension mismatch");
  const double s = e.dot(est.g);
  return est.w_score * s + est.w_level * std::abs(s) + est.bias;
}

/*! Raw ridge prediction snapped to the working grid. */
inline double predict_alpha(const AlphaEstimator& est, const Vec& e) {
  return snap_to_grid(predict_alpha_raw(est, e), est.grid);
}

/*!
 * Fits α* ~ (⟨e,g⟩, |⟨e,g⟩|) by ridge regression with leave-one-out λ
 * selection over `lambda_grid`. Prompts whose label hashes into the first
 * `holdout_frac` of the hash range are excluded from the fit and used for
 * the generalization diagnostics. Records flagged saturated are skipped
 * (their α* is a grid endpoint, not a root).
 */
inline AlphaEstimator fit_alpha_estimator(
    const std::vector<AlphaRecord>& records,
    const std::vector<std::pair<std::string, Vec>>& embeddings, const Vec& g,
    const AlphaGrid& grid, const std::vector<double>& lambda_grid,
    double holdout_frac = 0.15) {
  require(records.size() == embeddings.size(),
          "fit_alpha_estimator: records/embeddings must align");
  AlphaEstimator est;
  est.g = g;
  est.grid = grid;

  std::vector<int> train_idx, hold_idx;
  for (std::size_t i = 0; i < records.size(); ++i) {
    require(records[i].prompt_label == embeddings[i].first,
            "fit_alpha_estimator: record/embedding label mismatch at index " +
                std::to_string(i));
    if (records[i].saturated) continue;
    if (is_holdout_label(records[i].prompt_label, holdout_frac))
      hold_idx.push_back(static_cast<int>(i));
    else
      train_idx.push_back(static_cast<int>(i));
  }
  require(train_idx.size() >= 3,
          "fit_alpha_estimator: need at least 3 usable training prompts");

  Mat X(train_idx.size(), 2);
  Vec y(train_idx.size());
  for (std::size_t r = 0; r < train_idx.size(); ++r) {
    const int i = train_idx[r];
    const double s = embeddings[i].second.dot(g);
    X(r, 0) = s;
    X(r, 1) = std::abs(s);
    y[r] = records[i].alpha_star;
  }
  const RidgeFit fit = ridge_fit_loo(X, y, lambda_grid);
  est.w_score = fit.weights[0];
  est.w_level = fit.weights[1];
  est.bias = fit.bias;
  est.lambda = fit.chosen_lambda;
  est.loo_mse = fit.loo_mse;
  est.n_train = static_cast<int>(train_idx.size());
  est.n_holdout = static_cast<int>(hold_idx.size());

  if (!hold_idx.empty()) {
    double mae = 0.0;
    int exact = 0;
    for (int i : hold_idx) {
      const double raw = predict_alpha_raw(est, embeddings[i].second);
      mae += std::abs(raw - records[i].alpha_star);
      if (snap_to_grid(raw, grid) == records[i].alpha_star) ++exact;
    }
    est.holdout_mae_raw = mae / hold_idx.size();
    est.holdout_exact_rate = static_cast<double>(exact) / hold_idx.size();
  }
  return est;
}

/*! The λ grid used throughout for the estimator fit. */
inline std::vector<double> default_lambda_grid() {
  return {0.01, 0.1, 1.0, 10.0, 100.0, 1000.0};
}

}  // namespace fairguide
