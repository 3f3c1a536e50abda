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
// Forward corruption, guided-score composition, and the two samplers:
// probability-flow ODE (Heun) and guided reverse-time SDE (Euler–Maruyama).

#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fairguide/common.hpp"
#include "fairguide/parallel.hpp"
#include "fairguide/rng.hpp"
#include "fairguide/schedule.hpp"

namespace fairguide {

/*!
 * A score field ∇_x log p_t(x), written into `out` (resized by the callee).
 * The write-into convention keeps per-step evaluation allocation-free on
 * the samplers' hot loops.
 */
using ScoreFn = std::function<void(const Vec& x, double t, Vec& out)>;

/*! Convenience wrapper for tests and one-off evaluations. */
inline Vec eval_score(const ScoreFn& score, const Vec& x, double t) {
  Vec out;
  score(x, t, out);
  return out;
}

/*!
 * A guidance potential f(x_t, t) exposed through its log-gradient.
 * The descriptor names the regime that built it.
 */
struct GuidancePotential {
  std::function<void(const Vec& x, double t, Vec& out)> grad_log_f;
  std::string descriptor;  // one of {cg, cfg, adaptive_null, ag, theory}
};

/*!
 * Composes the sampling score  x,t ↦ base(x,t) + w·∇log f(x,t).
 * At w = 0 the returned function forwards to base unchanged, so outputs
 * are bitwise equal to the unguided score.
 */
inline ScoreFn guided_score(ScoreFn base_score, GuidancePotential potential,
                            double w) {
  if (w == 0.0) return base_score;
  return [base = std::move(base_score), pot = std::move(potential),
          w](const Vec& x, double t, Vec& out) {
    thread_local Vec grad;
    base(x, t, out);
    pot.grad_log_f(x, t, grad);
    out.noalias() += w * grad;
  };
}

struct Trajectory {
  std::vector<double> times;  // strictly decreasing, T down to t_min
  std::vector<Vec> states;    // states[k] is the state at times[k]
  std::uint64_t seed = 0;     // noise-stream seed (0 for the deterministic ODE)
  Vec endpoint;               // posterior-mean denoised final sample
};

struct SdeOptions {
  int steps = 256;
  double t_min_frac = 1e-3;  // integrate down to t_min = t_min_frac·T
};

struct OdeOptions {
  int steps = 100;
  double t_min_frac = 1e-3;
};

namespace detail {

inline void check_finite_state(const Vec& x, int step, double t,
                               const char* sampler) {
  if (!x.allFinite()) {
    throw NumericalError(std::string(sampler) + ": non-finite state at step " +
                         std::to_string(step) + " (t=" + std::to_string(t) +
                         ")");
  }
}

}  // namespace detail

/*! X_t = x0 + σ(t)·ε with ε drawn from the stream. */
inline Vec forward_corrupt(const Vec& x0, double t, const NoiseSchedule& sched,
                           Rng& rng) {
  const double s = sched.sigma(t);
  Vec out = x0;
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += s * rng.normal();
  return out;
}

/*!
 * Heun (second-order) integration of the probability-flow ODE
 * dX/dt = −σ̇σ·∇log p_t(X) from t = T down to t_min, followed by one
 * posterior-mean denoise x + σ²·score of the final state. Deterministic
 * given x_T. `record` keeps the per-step states (endpoint always filled).
 */
inline Trajectory sample_pf_ode(const ScoreFn& score,
                                const NoiseSchedule& sched, const Vec& x_T,
                                const OdeOptions& opt, bool record = true) {
  require(opt.steps >= 2, "sample_pf_ode: need at least 2 steps");
  sched.validate();
  const double t_min = opt.t_min_frac * sched.T;
  const double h = (t_min - sched.T) / opt.steps;  // negative
  Trajectory traj;
  Vec x = x_T, k1, k2, x_mid;
  if (record) {
    traj.times.reserve(opt.steps + 1);
    traj.states.reserve(opt.steps + 1);
    traj.times.push_back(sched.T);
    traj.states.push_back(x);
  }
  // Drift f(x,t) = −σ̇σ·score = −(g²/2)·score.
  for (int k = 0; k < opt.steps; ++k) {
    const double t0 = sched.T + h * k;
    const double t1 = (k + 1 == opt.steps) ? t_min : sched.T + h * (k + 1);
    score(x, t0, k1);
    k1 *= -0.5 * sched.g2(t0);
    x_mid = x + (t1 - t0) * k1;
    score(x_mid, t1, k2);
    k2 *= -0.5 * sched.g2(t1);
    x += (t1 - t0) * 0.5 * (k1 + k2);
    detail::check_finite_state(x, k, t1, "sample_pf_ode");
    if (record) {
      traj.times.push_back(t1);
      traj.states.push_back(x);
    }
  }
  score(x, t_min, k1);
  const double s_min = sched.sigma(t_min);
  traj.endpoint = x + (s_min * s_min) * k1;
  return traj;
}

/*!
 * Euler–Maruyama integration of the guided reverse-time VE-SDE
 *   dZ_s = g(τ)²·(score(Z) + w·∇log f(Z)) ds + g(τ) dB_s,  τ = T − s,
 * from t = T down to t_min starting at the supplied high-noise state x_T,
 * then one posterior-mean denoise with the same guided field. The potential
 * may be empty (w treated as 0).
 */
inline Trajectory sample_reverse_sde(const ScoreFn& score,
                                     const GuidancePotential& potential,
                                     double w, const NoiseSchedule& sched,
                                     const Vec& x_T, const SdeOptions& opt,
                                     Rng& rng, bool record = false) {
  require(opt.steps >= 2, "sample_reverse_sde: need at least 2 steps");
  sched.validate();
  ScoreFn total = (w != 0.0 && potential.grad_log_f)
                      ? guided_score(score, potential, w)
                      : score;
  const double t_min = opt.t_min_frac * sched.T;
  const double ds = (sched.T - t_min) / opt.steps;
  const double sqrt_ds = std::sqrt(ds);
  Trajectory traj;
  traj.seed = rng.seed();
  Vec x = x_T, drift;
  if (record) {
    traj.times.reserve(opt.steps + 1);
    traj.states.reserve(opt.steps + 1);
    traj.times.push_back(sched.T);
    traj.states.push_back(x);
  }
  for (int k = 0; k < opt.steps; ++k) {
    const double t = sched.T - ds * k;  // current noise time τ
    const double g2 = sched.g2(t);
    const double g = std::sqrt(g2);
    total(x, t, drift);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      x[i] += g2 * drift[i] * ds + g * sqrt_ds * rng.normal();
    }
    detail::check_finite_state(x, k, t, "sample_reverse_sde");
    if (record) {
      const double t_next = (k + 1 == opt.steps) ? t_min : sched.T - ds * (k + 1);
      traj.times.push_back(t_next);
      traj.states.push_back(x);
    }
  }
  total(x, t_min, drift);
  const double s_min = sched.sigma(t_min);
  traj.endpoint = x + (s_min * s_min) * drift;
  return traj;
}

/*!
 * High-noise initialization Z_0 ~ N(init_mean, (σ_max² + init_var)·I):
 * the state-independent Gaussian approximation of p_T, with init_var the
 * average data variance tr(Σ_data)/d.
 */
inline Vec sample_high_noise_init(const Vec& init_mean, double init_var,
                                  const NoiseSchedule& sched, Rng& rng) {
  const double std_total =
      std::sqrt(sched.sigma_max * sched.sigma_max + init_var);
  Vec x = init_mean;
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += std_total * rng.normal();
  return x;
}

/*!
 * Samples n guided-SDE endpoints into the rows of the returned matrix.
 *
 * Chain i derives its noise stream as Rng(seed).substream(i) and writes only
 * row i, so results are identical for every thread count. `make_score`
 * is invoked once per chain, letting evaluator closures own scratch without
 * cross-thread sharing.
 */
inline Mat sample_endpoints(
    const std::function<ScoreFn()>& make_score, const NoiseSchedule& sched,
    const Vec& init_mean, double init_var, const SdeOptions& opt, int n,
    std::uint64_t seed, int threads = 0) {
  require(n >= 1, "sample_endpoints: need n >= 1");
  Mat out(n, init_mean.size());
  const Rng root(seed);
  const GuidancePotential none{};
  parallel_for(n, resolve_threads(threads), [&](int i) {
    Rng rng = root.substream(static_cast<std::uint64_t>(i));
    const ScoreFn score = make_score();
    const Vec x_T = sample_high_noise_init(init_mean, init_var, sched, rng);
    const Trajectory traj =
        sample_reverse_sde(score, none, 0.0, sched, x_T, opt, rng, false);
    out.row(i) = traj.endpoint.transpose();
  });
  return out;
}

}  // namespace fairguide
