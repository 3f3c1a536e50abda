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
// Measurement layer: group-ratio sweeps over guidance scales, the exact
// decomposition of total bias into a guidance part and a model part around
// a reference scale, summary statistics, and amplification analysis of
// before/after ratio pairs.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "fairguide/common.hpp"
#include "fairguide/diffusion.hpp"
#include "fairguide/guidance.hpp"
#include "fairguide/numerics.hpp"
#include "fairguide/parallel.hpp"
#include "fairguide/rng.hpp"

namespace fairguide {

/*! Shortest round-trip-exact decimal rendering of a double ("%.17g"), used
 *  everywhere a floating-point value enters a text output so reruns are
 *  byte-identical. */
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

struct SweepRow {
  double w = 0.0;
  Vec ratio;       // soft group ratio: mean posterior mass per group
  Vec hard_ratio;  // argmax frequency per group (basis of the CIs)
  Vec ci_low, ci_high;
  int n = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // one per grid point, in grid order
  int n_groups = 2;
  int designated_group = 1;
  std::uint64_t seed = 0;
};

/*!
 * Runs the reverse SDE at every scale in `w_grid` and reports group ratios
 * of the endpoints. The soft ratio averages the world posterior p(a|x_0)
 * (invariant under condition-only tilts, so it estimates the guided group
 * law without classifier bias); Wilson intervals are computed from hard
 * argmax assignments. Chain (wi, i) draws from substream(wi).substream(i)
 * of the base seed, so two sweeps sharing a seed use common random numbers
 * per grid slot regardless of what the assemblies do — and the result is
 * independent of the thread count.
 */
inline SweepResult measure_sweep(const SweepAssembly& assembly,
                                 const std::vector<double>& w_grid,
                                 int n_per_w, std::uint64_t seed,
                                 int threads = 0) {
  require(!w_grid.empty(), "measure_sweep: empty w grid");
  require(n_per_w >= 1, "measure_sweep: n_per_w must be >= 1");
  require(static_cast<bool>(assembly.guided_score_for),
          "measure_sweep: assembly has no guided-score factory");
  require(static_cast<bool>(assembly.classify),
          "measure_sweep: assembly has no classifier");
  const int nt = resolve_threads(threads);

  SweepResult out;
  out.n_groups = assembly.n_groups;
  out.designated_group = assembly.designated_group;
  out.seed = seed;
  out.rows.resize(w_grid.size());

  Rng base(seed);
  for (std::size_t wi = 0; wi < w_grid.size(); ++wi) {
    const double w = w_grid[wi];
    Rng slot = base.substream(static_cast<std::uint64_t>(wi));
    const int d = static_cast<int>(assembly.init_mean.size());
    Mat endpoints(n_per_w, d);
    parallel_for(n_per_w, nt, [&](int i) {
      ScoreFn score = assembly.guided_score_for(w);
      Rng chain = slot.substream(static_cast<std::uint64_t>(i));
      const Vec x_T = sample_high_noise_init(assembly.init_mean,
                                             assembly.init_var,
                                             assembly.schedule, chain);
      const Trajectory traj =
          sample_reverse_sde(score, GuidancePotential{}, 0.0,
                             assembly.schedule, x_T, assembly.sde, chain,
                             /*record=*/false);
      endpoints.row(i) = traj.endpoint.transpose();
    });

    SweepRow row;
    row.w = w;
    row.n = n_per_w;
    Vec soft = Vec::Zero(assembly.n_groups);
    std::vector<long long> hard(assembly.n_groups, 0);
    Vec x0(d);
    for (int i = 0; i < n_per_w; ++i) {
      x0 = endpoints.row(i).transpose();
      const Vec post = assembly.classify(x0);
      ensure(static_cast<int>(post.size()) == assembly.n_groups,
             "measure_sweep: classifier returned wrong group count");
      soft += post;
      int arg = 0;
      post.maxCoeff(&arg);
      hard[arg] += 1;
    }
    row.ratio = soft / n_per_w;
    row.hard_ratio.resize(assembly.n_groups);
    row.ci_low.resize(assembly.n_groups);
    row.ci_high.resize(assembly.n_groups);
    for (int a = 0; a < assembly.n_groups; ++a) {
      row.hard_ratio[a] = static_cast<double>(hard[a]) / n_per_w;
      const auto ci = wilson_interval(hard[a], n_per_w);
      row.ci_low[a] = ci.first;
      row.ci_high[a] = ci.second;
    }
    out.rows[wi] = std::move(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bias decomposition.
// ---------------------------------------------------------------------------

struct BiasEntry {
  double w = 0.0;
  Vec total;     // Q^w − T        (≡ guidance + model, exactly)
  Vec guidance;  // Q^w − Q^{w_ref}
  Vec model;     // Q^{w_ref} − T  (w-independent)
};

struct BiasReport {
  double w_ref = 0.0;
  Vec target;
  Vec ref_ratio;              // Q^{w_ref}
  bool interpolated_ref = false;
  std::vector<BiasEntry> entries;
  std::vector<double> w_grid;
  std::vector<Vec> ratios;    // Q^w per grid point (kept for summaries)
  int designated_group = 1;
};

/*!
 * Splits measured deviation from the target into a guidance part (movement
 * away from the reference scale) and a model part (the reference scale's
 * own deviation). The identity total = guidance + model holds exactly in
 * floating point because total is *defined* as that sum; the ratios
 * themselves satisfy Q^w − T = (Q^w − Q^{ref}) + (Q^{ref} − T) up to one
 * rounding each. If w_ref is not a grid point it is linearly interpolated
 * from the bracketing rows and the report is flagged.
 */
inline BiasReport decompose_bias(const SweepResult& sweep, const Vec& target,
                                 double w_ref) {
  require(!sweep.rows.empty(), "decompose_bias: empty sweep");
  require(static_cast<int>(target.size()) == sweep.n_groups,
          "decompose_bias: target size must match group count");

  BiasReport rep;
  rep.w_ref = w_ref;
  rep.target = target;
  rep.designated_group = sweep.designated_group;

  // Locate Q^{w_ref}: exact grid hit, else interpolate between brackets.
  int exact = -1;
  for (std::size_t i = 0; i < sweep.rows.size(); ++i)
    if (sweep.rows[i].w == w_ref) {
      exact = static_cast<int>(i);
      break;
    }
  if (exact >= 0) {
    rep.ref_ratio = sweep.rows[exact].ratio;
  } else {
    int lo = -1;
    for (std::size_t i = 0; i + 1 < sweep.rows.size(); ++i)
      if (sweep.rows[i].w < w_ref && w_ref < sweep.rows[i + 1].w) {
        lo = static_cast<int>(i);
        break;
      }
    require(lo >= 0,
            "decompose_bias: w_ref must lie on the grid or strictly inside "
            "its range");
    const SweepRow& a = sweep.rows[lo];
    const SweepRow& b = sweep.rows[lo + 1];
    const double frac = (w_ref - a.w) / (b.w - a.w);
    rep.ref_ratio = (1.0 - frac) * a.ratio + frac * b.ratio;
    rep.interpolated_ref = true;
  }

  const Vec model_bias = rep.ref_ratio - target;
  for (const SweepRow& row : sweep.rows) {
    BiasEntry e;
    e.w = row.w;
    e.guidance = row.ratio - rep.ref_ratio;
    e.model = model_bias;
    e.total = e.guidance + e.model;  // the identity, by construction
    rep.entries.push_back(std::move(e));
    rep.w_grid.push_back(row.w);
    rep.ratios.push_back(row.ratio);
  }
  return rep;
}

struct SweepSummary {
  double avg_bias = 0.0;    // mean over w of |Q^w(a*) − T(a*)|
  double worst_bias = 0.0;  // max over w of |Q^w(a*) − T(a*)|
  double range = 0.0;       // max_w Q^w(a*) − min_w Q^w(a*)
};

/*! Summary statistics for the designated group of a bias report. */
inline SweepSummary sweep_summary(const BiasReport& rep) {
  require(!rep.entries.empty(), "sweep_summary: empty report");
  const int g = rep.designated_group;
  SweepSummary s;
  double lo = rep.ratios.front()[g];
  double hi = lo;
  for (std::size_t i = 0; i < rep.entries.size(); ++i) {
    const double dev = std::abs(rep.entries[i].total[g]);
    s.avg_bias += dev;
    s.worst_bias = std::max(s.worst_bias, dev);
    lo = std::min(lo, rep.ratios[i][g]);
    hi = std::max(hi, rep.ratios[i][g]);
  }
  s.avg_bias /= rep.entries.size();
  s.range = hi - lo;
  return s;
}

// ---------------------------------------------------------------------------
// Amplification analysis.
// ---------------------------------------------------------------------------

struct AmplificationPair {
  double low = 0.0;   // ratio at the lower scale (x)
  double high = 0.0;  // ratio at the higher scale (y)
  int direction = 0;  // +1 ratio moved up, −1 moved down, 0 unchanged
  bool amplified = false;  // |high − target| > |low − target|
  bool mitigated = false;  // |high − target| < |low − target|
};

struct AmplificationReport {
  double target = 0.5;
  std::vector<AmplificationPair> pairs;
  int n_amplified = 0;
  int n_mitigated = 0;
  LogitFit fit;  // logit(high) ~ logit(low)
};

/*!
 * Classifies (low-scale, high-scale) ratio pairs and fits the logit-linear
 * law logit(high) = slope·logit(low) + intercept across the collection.
 * Pairs exactly on y = x are neither amplified nor mitigated and count in
 * neither tally. The fit's fixed point sigmoid(intercept/(1 − slope)) is
 * carried through from the regression when the slope is not 1.
 */
inline AmplificationReport amplification_analysis(
    const std::vector<double>& low, const std::vector<double>& high,
    double target = 0.5) {
  require(low.size() == high.size(),
          "amplification_analysis: pair lists must match");
  require(low.size() >= 3, "amplification_analysis: need at least 3 pairs");
  AmplificationReport rep;
  rep.target = target;
  for (std::size_t i = 0; i < low.size(); ++i) {
    AmplificationPair p;
    p.low = low[i];
    p.high = high[i];
    if (high[i] > low[i])
      p.direction = 1;
    else if (high[i] < low[i])
      p.direction = -1;
    const double dev_low = std::abs(low[i] - target);
    const double dev_high = std::abs(high[i] - target);
    p.amplified = dev_high > dev_low;
    p.mitigated = dev_high < dev_low;
    rep.n_amplified += p.amplified ? 1 : 0;
    rep.n_mitigated += p.mitigated ? 1 : 0;
    rep.pairs.push_back(p);
  }
  rep.fit = logit_regression(low, high);
  return rep;
}

// ---------------------------------------------------------------------------
// CSV export.
// ---------------------------------------------------------------------------

/*!
 * One row per (grid point, group):
 * w,group,ratio,ci_low,ci_high,total_bias,guidance_bias,model_bias.
 * All doubles use round-trip formatting, so a rerun with the same seed
 * produces a byte-identical file.
 */
inline void write_sweep_csv(std::ostream& os, const SweepResult& sweep,
                            const BiasReport& rep) {
  require(sweep.rows.size() == rep.entries.size(),
          "write_sweep_csv: sweep and report must align");
  os << "w,group,ratio,ci_low,ci_high,total_bias,guidance_bias,model_bias\n";
  for (std::size_t i = 0; i < sweep.rows.size(); ++i) {
    const SweepRow& row = sweep.rows[i];
    const BiasEntry& e = rep.entries[i];
    for (int a = 0; a < sweep.n_groups; ++a) {
      os << format_double(row.w) << ',' << a << ','
         << format_double(row.ratio[a]) << ',' << format_double(row.ci_low[a])
         << ',' << format_double(row.ci_high[a]) << ','
         << format_double(e.total[a]) << ',' << format_double(e.guidance[a])
         << ',' << format_double(e.model[a]) << '\n';
    }
  }
}

}  // namespace fairguide
