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
// Guidance-regime assembly: classifier-free guidance, the adaptive-null
// variant (shifted unconditional embedding), autoguidance against a
// degraded model, and composition with a debiased model around a reference
// scale. Each factory packages base score + potential + measurement hooks
// into a SweepAssembly consumed by the metrics layer.

#pragma once

#include <functional>
#include <memory>
#include <utility>

#include "fairguide/diffusion.hpp"
#include "fairguide/schedule.hpp"
#include "fairguide/theory.hpp"
#include "fairguide/world.hpp"

namespace fairguide {

/*!
 * Null-embedding shift E(∅_y) = E(∅) + α·ĝ. Shifts along a fixed direction
 * form an additive group on α, so composition accumulates alpha exactly
 * (compose(α).compose(−α) leaves the null bitwise unchanged).
 */
struct NullShiftConfig {
  double alpha = 0.0;
  Vec direction;            // unit vector (= ĝ)
  PromptEmbedding base_null;

  void validate() const {
    require(std::abs(direction.norm() - 1.0) < 1e-9,
            "NullShiftConfig: direction must be a unit vector");
  }

  NullShiftConfig compose(double extra_alpha) const {
    NullShiftConfig out = *this;
    out.alpha += extra_alpha;
    return out;
  }
};

/*! Applies the shift: base_null.e + α·direction; α = 0 returns base_null
 *  unchanged (bitwise), which keeps the adaptive-null regime exactly equal
 *  to plain CFG at α = 0. */
inline PromptEmbedding stayfair_null(const NullShiftConfig& cfg) {
  cfg.validate();
  if (cfg.alpha == 0.0) return cfg.base_null;
  PromptEmbedding out = cfg.base_null;
  out.e += cfg.alpha * cfg.direction;
  return out;
}

/*!
 * Generic two-branch potential ∇log f = cond-branch score − null-branch
 * score, each branch evaluated on its own (map, embedding). The returned
 * closure owns fresh evaluators; one instance per thread.
 */
inline GuidancePotential branch_potential(const EmbeddingWorldMap& cond_map,
                                          const Vec& cond_e,
                                          const EmbeddingWorldMap& null_map,
                                          const Vec& null_e,
                                          const NoiseSchedule& sched,
                                          std::string descriptor) {
  auto cond_world =
      std::make_shared<const MixtureWorld>(conditional_world_at(cond_map, cond_e));
  auto null_world =
      std::make_shared<const MixtureWorld>(conditional_world_at(null_map, null_e));
  GuidancePotential pot;
  pot.descriptor = std::move(descriptor);
  ScoreFn cond_fn = make_mixture_score_fn(cond_world, sched);
  ScoreFn null_fn = make_mixture_score_fn(null_world, sched);
  pot.grad_log_f = [cond_fn, null_fn](const Vec& x, double t, Vec& out) {
    thread_local Vec null_part;
    cond_fn(x, t, out);
    null_fn(x, t, null_part);
    out -= null_part;
  };
  return pot;
}

/*! CFG potential: conditional minus null branch on the same world map. */
inline GuidancePotential cfg_potential(const EmbeddingWorldMap& map,
                                       const NoiseSchedule& sched,
                                       const PromptEmbedding& prompt,
                                       const PromptEmbedding& null_embedding) {
  return branch_potential(map, prompt.e, map, null_embedding.e, sched, "cfg");
}

/*! Adaptive-null potential: CFG with the shifted null E(∅) + α·ĝ. */
inline GuidancePotential adaptive_null_potential(const EmbeddingWorldMap& map,
                                                 const NoiseSchedule& sched,
                                                 const PromptEmbedding& prompt,
                                                 const NullShiftConfig& shift) {
  GuidancePotential pot = branch_potential(
      map, prompt.e, map, stayfair_null(shift).e, sched, "adaptive_null");
  return pot;
}

/*!
 * Autoguidance potential: strong conditional score minus the degraded
 * model's conditional score at the same prompt. The weak branch is the
 * world-level degradation (covariances inflated 1.5×, group weights pulled
 * 30% toward uniform).
 */
inline GuidancePotential ag_potential(const MixtureWorld& strong,
                                      const MixtureWorld& weak,
                                      const NoiseSchedule& sched) {
  auto strong_w = std::make_shared<const MixtureWorld>(strong);
  auto weak_w = std::make_shared<const MixtureWorld>(weak);
  GuidancePotential pot;
  pot.descriptor = "ag";
  ScoreFn strong_fn = make_mixture_score_fn(strong_w, sched);
  ScoreFn weak_fn = make_mixture_score_fn(weak_w, sched);
  pot.grad_log_f = [strong_fn, weak_fn](const Vec& x, double t, Vec& out) {
    thread_local Vec weak_part;
    strong_fn(x, t, out);
    weak_fn(x, t, weak_part);
    out -= weak_part;
  };
  return pot;
}

inline GuidancePotential ag_potential(const EmbeddingWorldMap& map,
                                      const NoiseSchedule& sched,
                                      const PromptEmbedding& prompt,
                                      double cov_inflate = 1.5,
                                      double uniform_pull = 0.3) {
  const MixtureWorld strong = conditional_world_at(map, prompt.e);
  const MixtureWorld weak = make_weak_world(strong, cov_inflate, uniform_pull);
  return ag_potential(strong, weak, sched);
}

/*!
 * Composition around a debiased model: output = fair + (w −
 * w_ref)·(vanilla_cond − adaptive_null). At w = w_ref the fair score is
 * returned unwrapped, so outputs are bitwise those of the fair model.
 */
inline ScoreFn compose_with_fair_model(ScoreFn fair_score,
                                       ScoreFn vanilla_cond_score,
                                       ScoreFn adaptive_null_score, double w,
                                       double w_ref) {
  require(w_ref >= 0.0, "compose_with_fair_model: w_ref must be >= 0");
  if (w == w_ref) return fair_score;
  const double dw = w - w_ref;
  return [fair = std::move(fair_score), cond = std::move(vanilla_cond_score),
          nul = std::move(adaptive_null_score),
          dw](const Vec& x, double t, Vec& out) {
    thread_local Vec cond_part, null_part;
    fair(x, t, out);
    cond(x, t, cond_part);
    nul(x, t, null_part);
    cond_part -= null_part;
    out.noalias() += dw * cond_part;
  };
}

// ---------------------------------------------------------------------------
// Sweep assemblies: everything a measurement run needs.
// ---------------------------------------------------------------------------

/*!
 * A measurement-ready bundle: a guided-score factory per scale w (each call
 * returns a fresh closure owning its own scratch, so sampling chains never
 * share state), the schedule and sampler options, the high-noise
 * initialization moments, and the endpoint group classifier (pure,
 * thread-safe).
 */
struct SweepAssembly {
  std::function<ScoreFn(double w)> guided_score_for;
  NoiseSchedule schedule;
  SdeOptions sde;
  Vec init_mean;
  double init_var = 0.0;
  std::function<Vec(const Vec&)> classify;
  int n_groups = 2;
  int designated_group = 1;  // female-analog by convention
};

/*!
 * CFG / adaptive-null assembly on an embedding world. The base score is the
 * (shifted-)null branch, so w = 0 samples the null model and w = 1 the
 * conditional model; alpha = 0 reproduces plain CFG on the exact same code
 * path. Initialization and classification use the conditional world at the
 * prompt (α-independent, preserving common random numbers across α).
 */
inline SweepAssembly make_cfg_assembly(const EmbeddingWorldMap& map,
                                       const NoiseSchedule& sched,
                                       const SdeOptions& sde,
                                       const PromptEmbedding& prompt,
                                       double alpha = 0.0) {
  map.validate();
  NullShiftConfig shift;
  shift.alpha = alpha;
  shift.direction = map.g_hat;
  shift.base_null.label = "null";
  shift.base_null.e = Vec::Zero(map.embed_dim());
  const PromptEmbedding null_embedding = stayfair_null(shift);

  auto cond_world = std::make_shared<const MixtureWorld>(
      conditional_world_at(map, prompt.e));
  auto null_world = std::make_shared<const MixtureWorld>(
      conditional_world_at(map, null_embedding.e));

  SweepAssembly out;
  out.schedule = sched;
  out.sde = sde;
  std::tie(out.init_mean, out.init_var) = data_moments(*cond_world);
  out.classify = [cond_world](const Vec& x0) {
    return group_posterior(*cond_world, x0);
  };
  out.n_groups = 2;
  out.guided_score_for = [cond_world, null_world, sched](double w) -> ScoreFn {
    ScoreFn base = make_mixture_score_fn(null_world, sched);
    if (w == 0.0) return base;
    GuidancePotential pot;
    pot.descriptor = "cfg";
    ScoreFn cond_fn = make_mixture_score_fn(cond_world, sched);
    ScoreFn null_fn = make_mixture_score_fn(null_world, sched);
    pot.grad_log_f = [cond_fn, null_fn](const Vec& x, double t, Vec& out_v) {
      thread_local Vec null_part;
      cond_fn(x, t, out_v);
      null_fn(x, t, null_part);
      out_v -= null_part;
    };
    return guided_score(std::move(base), std::move(pot), w);
  };
  return out;
}

/*!
 * Classifier-guidance assembly: base = the world's marginal score, potential
 * = ∇log p_φ(y|x_t, t) from the trained classifier (built per chain by the
 * caller-supplied potential factory), classification under condition y.
 */
inline SweepAssembly make_cg_assembly(
    std::shared_ptr<const MixtureWorld> world, const NoiseSchedule& sched,
    const SdeOptions& sde, const std::function<GuidancePotential()>& make_pot,
    int condition) {
  SweepAssembly out;
  out.schedule = sched;
  out.sde = sde;
  std::tie(out.init_mean, out.init_var) = data_moments(*world);
  out.classify = [world, condition](const Vec& x0) {
    return group_posterior(*world, x0, condition);
  };
  out.n_groups = world->n_groups;
  out.guided_score_for = [world, sched, make_pot](double w) -> ScoreFn {
    ScoreFn base = make_mixture_score_fn(world, sched);
    if (w == 0.0) return base;
    return guided_score(std::move(base), make_pot(), w);
  };
  return out;
}

/*! Autoguidance assembly: base = weak conditional model, potential = strong −
 *  weak, classification under the strong conditional world. */
inline SweepAssembly make_ag_assembly(const EmbeddingWorldMap& map,
                                      const NoiseSchedule& sched,
                                      const SdeOptions& sde,
                                      const PromptEmbedding& prompt,
                                      double cov_inflate = 1.5,
                                      double uniform_pull = 0.3) {
  auto strong = std::make_shared<const MixtureWorld>(
      conditional_world_at(map, prompt.e));
  auto weak = std::make_shared<const MixtureWorld>(
      make_weak_world(*strong, cov_inflate, uniform_pull));
  SweepAssembly out;
  out.schedule = sched;
  out.sde = sde;
  std::tie(out.init_mean, out.init_var) = data_moments(*strong);
  out.classify = [strong](const Vec& x0) { return group_posterior(*strong, x0); };
  out.n_groups = 2;
  out.guided_score_for = [strong, weak, sched](double w) -> ScoreFn {
    ScoreFn base = make_mixture_score_fn(weak, sched);
    if (w == 0.0) return base;
    GuidancePotential pot;
    pot.descriptor = "ag";
    ScoreFn strong_fn = make_mixture_score_fn(strong, sched);
    ScoreFn weak_fn = make_mixture_score_fn(weak, sched);
    pot.grad_log_f = [strong_fn, weak_fn](const Vec& x, double t, Vec& out_v) {
      thread_local Vec weak_part;
      strong_fn(x, t, out_v);
      weak_fn(x, t, weak_part);
      out_v -= weak_part;
    };
    return guided_score(std::move(base), std::move(pot), w);
  };
  return out;
}

/*!
 * Composition assembly: the debiased stub (conditional mixture with group
 * weights replaced by the parity target) plus adaptive-null deviations away
 * from w_ref. At w = w_ref the factory returns the fair score itself.
 */
inline SweepAssembly make_composed_assembly(const EmbeddingWorldMap& map,
                                            const NoiseSchedule& sched,
                                            const SdeOptions& sde,
                                            const PromptEmbedding& prompt,
                                            double alpha, double w_ref) {
  auto cond_world = std::make_shared<const MixtureWorld>(
      conditional_world_at(map, prompt.e));
  auto fair_world = std::make_shared<const MixtureWorld>(
      make_fair_world(*cond_world));
  NullShiftConfig shift;
  shift.alpha = alpha;
  shift.direction = map.g_hat;
  shift.base_null.label = "null";
  shift.base_null.e = Vec::Zero(map.embed_dim());
  auto null_world = std::make_shared<const MixtureWorld>(
      conditional_world_at(map, stayfair_null(shift).e));

  SweepAssembly out;
  out.schedule = sched;
  out.sde = sde;
  std::tie(out.init_mean, out.init_var) = data_moments(*cond_world);
  out.classify = [cond_world](const Vec& x0) {
    return group_posterior(*cond_world, x0);
  };
  out.n_groups = 2;
  out.guided_score_for = [cond_world, fair_world, null_world, sched,
                          w_ref](double w) -> ScoreFn {
    ScoreFn fair = make_mixture_score_fn(fair_world, sched);
    if (w == w_ref) return fair;
    return compose_with_fair_model(std::move(fair),
                                   make_mixture_score_fn(cond_world, sched),
                                   make_mixture_score_fn(null_world, sched), w,
                                   w_ref);
  };
  return out;
}

/*!
 * Theory-model assembly for the sampler-transfer checks. With
 * `exact_h_transform` the drift is the exact conditional-moment field (the
 * endpoint law is the closed-form reweighting for any model); without it
 * the sampler uses the standard w·∇log f_t pathway with the transported
 * mixture potential (exact for SDP constructions).
 */
inline SweepAssembly make_theory_assembly(
    std::shared_ptr<const GaussianGroupModel> model,
    const LogAffinePotential& pot, const NoiseSchedule& sched,
    const SdeOptions& sde, bool exact_h_transform) {
  auto world = std::make_shared<const MixtureWorld>(model->to_mixture_world());
  SweepAssembly out;
  out.schedule = sched;
  out.sde = sde;
  std::tie(out.init_mean, out.init_var) = data_moments(*world);
  out.classify = [world](const Vec& x0) { return group_posterior(*world, x0); };
  out.n_groups = model->n_groups();
  out.guided_score_for = [model, pot, sched,
                          exact_h_transform](double w) -> ScoreFn {
    if (w == 0.0) return make_model_score_fn(model, sched);
    if (exact_h_transform) {
      return make_exact_guided_score_fn(model, pot, w, sched);
    }
    return guided_score(make_model_score_fn(model, sched),
                        mixture_f_potential(model, pot, sched), w);
  };
  return out;
}

}  // namespace fairguide
