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
// Synthetic data worlds: Gaussian mixtures with group and condition labels,
// exact noisy scores, Bayes group posteriors, sampling, and the
// embedding-parameterized conditional score oracle standing in for a
// text-conditioned diffusion model.

#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fairguide/diffusion.hpp"
#include "fairguide/numerics.hpp"
#include "fairguide/rng.hpp"
#include "fairguide/schedule.hpp"

namespace fairguide {

struct MixtureComponent {
  int group = 0;      // sensitive attribute a
  int condition = 0;  // swept condition y
  double weight = 1.0;
  Vec mean;
  Mat cov;
};

/*!
 * A labeled Gaussian-mixture data distribution. Immutable once finalize()
 * has run; all evaluators read the caches built there.
 */
struct MixtureWorld {
  int dim = 0;
  int n_groups = 2;
  int n_conditions = 2;
  std::vector<MixtureComponent> components;
  Mat target;  // n_conditions × n_groups target T(a|y), rows sum to 1

  // Caches (finalize): spectral factors for σ-dependent inverses, Cholesky
  // factors for sampling, log-weights, per-condition component index lists.
  std::vector<Mat> eigvec;
  std::vector<Vec> eigval;
  std::vector<Mat> chol;
  std::vector<double> log_weight;
  std::vector<std::vector<int>> by_condition;
  std::vector<double> condition_marginal;

  void finalize() {
    require(!components.empty(), "MixtureWorld: no components");
    dim = static_cast<int>(components.front().mean.size());
    double total = 0.0;
    int max_group = 0, max_cond = 0;
    for (const auto& c : components) {
      require(c.weight > 0.0, "MixtureWorld: component weights must be > 0");
      require(c.mean.size() == dim && c.cov.rows() == dim && c.cov.cols() == dim,
              "MixtureWorld: component dimension mismatch");
      require(c.group >= 0 && c.condition >= 0,
              "MixtureWorld: negative label");
      total += c.weight;
      max_group = std::max(max_group, c.group);
      max_cond = std::max(max_cond, c.condition);
    }
    require(std::abs(total - 1.0) < 1e-9,
            "MixtureWorld: component weights must sum to 1");
    n_groups = std::max(n_groups, max_group + 1);
    n_conditions = std::max(n_conditions, max_cond + 1);
    if (target.size() == 0) {
      target = Mat::Constant(n_conditions, n_groups, 1.0 / n_groups);
    }
    require(target.rows() == n_conditions && target.cols() == n_groups,
            "MixtureWorld: target shape mismatch");
    for (Eigen::Index y = 0; y < target.rows(); ++y) {
      require(std::abs(target.row(y).sum() - 1.0) < 1e-9,
              "MixtureWorld: target rows must sum to 1");
    }
    const int k = static_cast<int>(components.size());
    eigvec.resize(k);
    eigval.resize(k);
    chol.resize(k);
    log_weight.resize(k);
    by_condition.assign(n_conditions, {});
    condition_marginal.assign(n_conditions, 0.0);
    for (int i = 0; i < k; ++i) {
      const auto& c = components[i];
      Eigen::SelfAdjointEigenSolver<Mat> es(c.cov);
      ensure(es.info() == Eigen::Success,
             "MixtureWorld: eigendecomposition failed");
      ensure(es.eigenvalues().minCoeff() > 0.0,
             "MixtureWorld: component covariance is not positive definite");
      eigvec[i] = es.eigenvectors();
      eigval[i] = es.eigenvalues();
      Eigen::LLT<Mat> llt(c.cov);
      ensure(llt.info() == Eigen::Success,
             "MixtureWorld: Cholesky failed on component covariance");
      chol[i] = llt.matrixL();
      log_weight[i] = std::log(c.weight);
      by_condition[c.condition].push_back(i);
      condition_marginal[c.condition] += c.weight;
    }
  }
};

/*!
 * Score/log-density evaluator over a component subset with given
 * (normalized) weights, at noise level σ_t: every component covariance is
 * inflated by σ_t²·I. One instance owns its scratch and must not be shared
 * across threads; construction is cheap, so factories hand a fresh instance
 * to every sampling chain.
 */
class MixtureEval {
 public:
  MixtureEval(std::shared_ptr<const MixtureWorld> world, std::vector<int> idx,
              Vec log_w)
      : world_(std::move(world)), idx_(std::move(idx)), log_w_(std::move(log_w)) {
    require(!idx_.empty(), "MixtureEval: empty component subset");
    require(static_cast<int>(idx_.size()) == log_w_.size(),
            "MixtureEval: weight/index size mismatch");
    const int k = static_cast<int>(idx_.size());
    const int d = world_->dim;
    ycache_.resize(d, k);
    lp_.resize(k);
    scratch_.resize(d);
    out_acc_.resize(d);
  }

  int dim() const { return world_->dim; }

  /*! ∇_x log p_t(x) of the σ_t-convolved sub-mixture. */
  void score(const Vec& x, double t, const NoiseSchedule& sched, Vec& out) {
    const double s = sched.sigma(t);
    score_at_sigma(x, s * s, out);
  }

  /*! Same field parameterized directly by σ² (σ² = 0 gives the clean score). */
  void score_at_sigma(const Vec& x, double sigma2, Vec& out) {
    const int k = static_cast<int>(idx_.size());
    const int d = world_->dim;
    double lp_max = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const int i = idx_[c];
      // y = Qᵀ(x − μ); responsibilities and scores share this rotation.
      scratch_ = x - world_->components[i].mean;
      ycache_.col(c).noalias() =
          world_->eigvec[i].transpose() * scratch_;
      double quad = 0.0, log_det = 0.0;
      for (int j = 0; j < d; ++j) {
        const double denom = world_->eigval[i][j] + sigma2;
        const double yj = ycache_(j, c);
        quad += yj * yj / denom;
        log_det += std::log(denom);
      }
      lp_[c] = log_w_[c] -
               0.5 * (d * std::log(2.0 * M_PI) + log_det + quad);
      lp_max = std::max(lp_max, lp_[c]);
    }
    double norm = 0.0;
    for (int c = 0; c < k; ++c) {
      lp_[c] = std::exp(lp_[c] - lp_max);
      norm += lp_[c];
    }
    out.resize(d);
    out.setZero();
    for (int c = 0; c < k; ++c) {
      const int i = idx_[c];
      const double r = lp_[c] / norm;
      if (r == 0.0) continue;
      for (int j = 0; j < d; ++j) {
        scratch_[j] = ycache_(j, c) / (world_->eigval[i][j] + sigma2);
      }
      out_acc_.noalias() = world_->eigvec[i] * scratch_;
      out.noalias() -= r * out_acc_;
    }
  }

  /*! log p_t(x) of the σ_t-convolved sub-mixture. */
  double log_density(const Vec& x, double t, const NoiseSchedule& sched) {
    return log_density_at_sigma(x, sched.sigma(t) * sched.sigma(t));
  }

  double log_density_at_sigma(const Vec& x, double sigma2) {
    const int k = static_cast<int>(idx_.size());
    const int d = world_->dim;
    double lp_max = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const int i = idx_[c];
      scratch_ = x - world_->components[i].mean;
      ycache_.col(c).noalias() = world_->eigvec[i].transpose() * scratch_;
      double quad = 0.0, log_det = 0.0;
      for (int j = 0; j < d; ++j) {
        const double denom = world_->eigval[i][j] + sigma2;
        quad += ycache_(j, c) * ycache_(j, c) / denom;
        log_det += std::log(denom);
      }
      lp_[c] = log_w_[c] - 0.5 * (d * std::log(2.0 * M_PI) + log_det + quad);
      lp_max = std::max(lp_max, lp_[c]);
    }
    double norm = 0.0;
    for (int c = 0; c < k; ++c) norm += std::exp(lp_[c] - lp_max);
    return lp_max + std::log(norm);
  }

 private:
  std::shared_ptr<const MixtureWorld> world_;
  std::vector<int> idx_;
  Vec log_w_;
  Mat ycache_;
  Vec lp_, scratch_, out_acc_;
};

namespace detail {

/*! Component subset + normalized log-weights for (condition, group) slices. */
inline std::pair<std::vector<int>, Vec> select_components(
    const MixtureWorld& world, int condition, int group) {
  std::vector<int> idx;
  std::vector<double> w;
  for (int i = 0; i < static_cast<int>(world.components.size()); ++i) {
    const auto& c = world.components[i];
    if (condition >= 0 && c.condition != condition) continue;
    if (group >= 0 && c.group != group) continue;
    idx.push_back(i);
    w.push_back(c.weight);
  }
  require(!idx.empty(), "world: empty (condition, group) slice");
  double total = 0.0;
  for (double x : w) total += x;
  Vec log_w(static_cast<Eigen::Index>(w.size()));
  for (std::size_t i = 0; i < w.size(); ++i) log_w[i] = std::log(w[i] / total);
  return {std::move(idx), std::move(log_w)};
}

}  // namespace detail

/*!
 * ScoreFn factory over a world slice: condition = −1 gives the marginal
 * score, group = −1 aggregates groups. Each returned closure owns a fresh
 * evaluator (single-thread use per instance).
 */
inline ScoreFn make_mixture_score_fn(std::shared_ptr<const MixtureWorld> world,
                                     const NoiseSchedule& sched,
                                     int condition = -1, int group = -1) {
  auto [idx, log_w] = detail::select_components(*world, condition, group);
  auto eval = std::make_shared<MixtureEval>(world, std::move(idx),
                                            std::move(log_w));
  return [eval, sched](const Vec& x, double t, Vec& out) {
    eval->score(x, t, sched, out);
  };
}

/*! One-off marginal/conditional score evaluations (test convenience). */
inline Vec marginal_score(const MixtureWorld& world, const NoiseSchedule& sched,
                          const Vec& x, double t) {
  auto w = std::make_shared<MixtureWorld>(world);
  Vec out;
  make_mixture_score_fn(w, sched, -1, -1)(x, t, out);
  return out;
}

inline Vec conditional_score(const MixtureWorld& world,
                             const NoiseSchedule& sched, const Vec& x, double t,
                             int condition) {
  auto w = std::make_shared<MixtureWorld>(world);
  Vec out;
  make_mixture_score_fn(w, sched, condition, -1)(x, t, out);
  return out;
}

inline Vec group_conditional_score(const MixtureWorld& world,
                                   const NoiseSchedule& sched, const Vec& x,
                                   double t, int condition, int group) {
  auto w = std::make_shared<MixtureWorld>(world);
  Vec out;
  make_mixture_score_fn(w, sched, condition, group)(x, t, out);
  return out;
}

/*!
 * Exact Bayes posterior p(a | x0, y) over groups of the clean world;
 * condition = −1 marginalizes conditions. The prior over groups is the
 * world's own (condition-sliced) weight structure, so the mean posterior
 * over a world sample reproduces the prior weights (law of total
 * probability).
 */
inline Vec group_posterior(const MixtureWorld& world, const Vec& x0,
                           int condition = -1) {
  require(x0.allFinite(), "group_posterior: non-finite input");
  auto [idx, log_w] = detail::select_components(world, condition, -1);
  std::vector<double> lp(idx.size());
  double lp_max = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < idx.size(); ++c) {
    const auto& comp = world.components[idx[c]];
    lp[c] = log_w[static_cast<Eigen::Index>(c)] +
            gaussian_logpdf(x0, {comp.mean, comp.cov});
    lp_max = std::max(lp_max, lp[c]);
  }
  Vec post = Vec::Zero(world.n_groups);
  double norm = 0.0;
  for (std::size_t c = 0; c < idx.size(); ++c) {
    const double p = std::exp(lp[c] - lp_max);
    post[world.components[idx[c]].group] += p;
    norm += p;
  }
  return post / norm;
}

struct Dataset {
  Mat x;  // n × d
  std::vector<int> group;
  std::vector<int> condition;
  int n() const { return static_cast<int>(x.rows()); }
};

/*! i.i.d. draws of (x0, group, condition); condition = −1 uses the full
 *  mixture, otherwise the conditional slice. */
inline Dataset sample_world(const MixtureWorld& world, int n, Rng& rng,
                            int condition = -1) {
  require(n >= 1, "sample_world: n must be >= 1");
  auto [idx, log_w] = detail::select_components(world, condition, -1);
  std::vector<double> cdf(idx.size());
  double acc = 0.0;
  for (std::size_t c = 0; c < idx.size(); ++c) {
    acc += std::exp(log_w[static_cast<Eigen::Index>(c)]);
    cdf[c] = acc;
  }
  cdf.back() = 1.0;  // guard rounding at the top of the scan
  Dataset data;
  data.x.resize(n, world.dim);
  data.group.resize(n);
  data.condition.resize(n);
  Vec z(world.dim);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    std::size_t c = 0;
    while (c + 1 < cdf.size() && u >= cdf[c]) ++c;
    const int comp_id = idx[c];
    const auto& comp = world.components[comp_id];
    rng.fill_normal(z);
    data.x.row(i) =
        (comp.mean + world.chol[comp_id] * z).transpose();
    data.group[i] = comp.group;
    data.condition[i] = comp.condition;
  }
  return data;
}

/*! Marginal data moments used by the high-noise SDE initialization:
 *  mean of the mixture and tr(Cov)/d of the full mixture covariance. */
inline std::pair<Vec, double> data_moments(const MixtureWorld& world) {
  Vec mean = Vec::Zero(world.dim);
  for (const auto& c : world.components) mean += c.weight * c.mean;
  double tr = 0.0;
  for (const auto& c : world.components) {
    tr += c.weight * (c.cov.trace() + (c.mean - mean).squaredNorm());
  }
  return {mean, tr / world.dim};
}

// ---------------------------------------------------------------------------
// Embedding-parameterized conditional worlds (the text-to-image analog).
// ---------------------------------------------------------------------------

struct PromptEmbedding {
  std::string label;
  Vec e;
};

/*!
 * Maps a prompt embedding e ∈ R^k to a two-group conditional mixture:
 * female-analog (group 1) weight sigmoid(κ·⟨e, ĝ⟩ + b0), component means
 * base_mean[a] + mean_matrix·e, fixed per-group covariances. The null
 * embedding E(∅) is the zero vector by convention, so the unconditional
 * model is this same map at e = 0.
 */
struct EmbeddingWorldMap {
  Vec g_hat;               // unit attribute direction in embedding space
  double kappa = 1.0;      // group-weight logit sensitivity
  double base_logit = 0.0; // b0
  std::vector<Vec> base_mean;  // per group (size 2); group 1 = female-analog
  Mat mean_matrix;             // d × k; default worlds satisfy M·ĝ = 0
  std::vector<Mat> group_cov;  // per group, d × d

  int embed_dim() const { return static_cast<int>(g_hat.size()); }
  int data_dim() const {
    return base_mean.empty() ? 0 : static_cast<int>(base_mean[0].size());
  }

  void validate() const {
    require(std::abs(g_hat.norm() - 1.0) < 1e-9,
            "EmbeddingWorldMap: group direction must be a unit vector");
    require(base_mean.size() == 2 && group_cov.size() == 2,
            "EmbeddingWorldMap: exactly two groups");
    require(mean_matrix.rows() == data_dim() &&
                mean_matrix.cols() == embed_dim(),
            "EmbeddingWorldMap: mean_matrix shape mismatch");
  }

  /*! Female-analog (group 1) weight at embedding e. */
  double female_weight(const Vec& e) const {
    return sigmoid(kappa * g_hat.dot(e) + base_logit);
  }
};

/*! Materializes the conditional mixture seen at embedding e (condition 0). */
inline MixtureWorld conditional_world_at(const EmbeddingWorldMap& map,
                                         const Vec& e) {
  map.validate();
  require(e.size() == map.embed_dim(),
          "conditional_world_at: embedding dimension mismatch");
  const double p1 = map.female_weight(e);
  MixtureWorld world;
  world.n_groups = 2;
  world.n_conditions = 1;
  for (int a = 0; a < 2; ++a) {
    MixtureComponent c;
    c.group = a;
    c.condition = 0;
    c.weight = (a == 1) ? p1 : 1.0 - p1;
    c.mean = map.base_mean[a] + map.mean_matrix * e;
    c.cov = map.group_cov[a];
    world.components.push_back(std::move(c));
  }
  world.target = Mat::Constant(1, 2, 0.5);
  world.finalize();
  return world;
}

/*! Score of the σ_t-convolved conditional mixture at embedding e. */
inline Vec embedded_conditional_score(const EmbeddingWorldMap& map,
                                      const NoiseSchedule& sched, const Vec& x,
                                      double t, const Vec& e) {
  const auto world =
      std::make_shared<const MixtureWorld>(conditional_world_at(map, e));
  Vec out;
  make_mixture_score_fn(world, sched)(x, t, out);
  return out;
}

// ---------------------------------------------------------------------------
// World transforms and default constructions.
// ---------------------------------------------------------------------------

/*!
 * Debiased ("fair") variant: within each condition, group masses are
 * rescaled to the target T(a|y); condition marginals and component shapes
 * are untouched. This is the stub standing in for a debiased model that is
 * exactly on-target at the reference scale.
 */
inline MixtureWorld make_fair_world(const MixtureWorld& world) {
  MixtureWorld fair = world;
  for (int y = 0; y < world.n_conditions; ++y) {
    std::vector<double> group_mass(world.n_groups, 0.0);
    for (int i : world.by_condition[y]) {
      group_mass[world.components[i].group] += world.components[i].weight;
    }
    for (int i : world.by_condition[y]) {
      auto& c = fair.components[i];
      const double mass = group_mass[c.group];
      require(mass > 0.0, "make_fair_world: group absent under condition");
      c.weight = world.components[i].weight / mass *
                 world.target(y, c.group) * world.condition_marginal[y];
    }
  }
  fair.finalize();
  return fair;
}

/*!
 * Weak-model variant for autoguidance: component covariances inflated by
 * `cov_inflate` and, within each condition, group masses interpolated
 * `uniform_pull` of the way toward the uniform group distribution.
 */
inline MixtureWorld make_weak_world(const MixtureWorld& world,
                                    double cov_inflate = 1.5,
                                    double uniform_pull = 0.3) {
  require(cov_inflate > 0.0 && uniform_pull >= 0.0 && uniform_pull <= 1.0,
          "make_weak_world: invalid degradation parameters");
  MixtureWorld weak = world;
  for (int y = 0; y < world.n_conditions; ++y) {
    std::vector<double> group_mass(world.n_groups, 0.0);
    for (int i : world.by_condition[y]) {
      group_mass[world.components[i].group] += world.components[i].weight;
    }
    const double uniform_mass =
        world.condition_marginal[y] / world.n_groups;
    for (int i : world.by_condition[y]) {
      auto& c = weak.components[i];
      const double mass = group_mass[c.group];
      const double pulled =
          (1.0 - uniform_pull) * mass + uniform_pull * uniform_mass;
      c.weight = world.components[i].weight / mass * pulled;
    }
  }
  for (auto& c : weak.components) c.cov *= cov_inflate;
  weak.finalize();
  return weak;
}

/*!
 * Default two-condition, two-group world: conditions separate along axis 0,
 * groups along axis 1 (orthogonal), correlation enters only through the
 * joint weights p(a|y). p(y) is uniform; the target is parity.
 */
inline MixtureWorld make_imbalance_world(double p_a1_given_y1,
                                         double p_a1_given_y0,
                                         double condition_gap = 1.6,
                                         double group_gap = 1.2,
                                         double var = 0.4) {
  MixtureWorld world;
  for (int y = 0; y < 2; ++y) {
    const double p1 = (y == 1) ? p_a1_given_y1 : p_a1_given_y0;
    for (int a = 0; a < 2; ++a) {
      MixtureComponent c;
      c.group = a;
      c.condition = y;
      c.weight = 0.5 * (a == 1 ? p1 : 1.0 - p1);
      c.mean = Vec(2);
      c.mean << condition_gap * (2 * y - 1), group_gap * (2 * a - 1);
      c.cov = var * Mat::Identity(2, 2);
      world.components.push_back(std::move(c));
    }
  }
  world.target = Mat::Constant(2, 2, 0.5);
  world.finalize();
  return world;
}

/*! Weak imbalance (smiling analog): p(a=1|y=1)=0.6, p(a=1|y=0)=0.4. */
inline MixtureWorld make_weak_imbalance_world() {
  return make_imbalance_world(0.6, 0.4);
}

/*! Strong imbalance (blond-hair analog): p(a=1|y=1)=0.85, p(a=1|y=0)=0.15. */
inline MixtureWorld make_strong_imbalance_world() {
  return make_imbalance_world(0.85, 0.15);
}

/*!
 * Fixed random orthonormal frame in R^k (seeded Gram–Schmidt on Gaussian
 * columns). Column 0 hosts ĝ in the default embedding world.
 */
inline Mat make_orthonormal_frame(int k, std::uint64_t seed) {
  require(k >= 2, "make_orthonormal_frame: need k >= 2");
  Rng rng(seed);
  Mat a(k, k);
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < k; ++i) a(i, j) = rng.normal();
  }
  // Gram–Schmidt with re-orthogonalization (frames are tiny; exactness wins).
  for (int j = 0; j < k; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (int i = 0; i < j; ++i) {
        a.col(j) -= a.col(i).dot(a.col(j)) * a.col(i);
      }
    }
    const double nrm = a.col(j).norm();
    ensure(nrm > 1e-8, "make_orthonormal_frame: rank deficiency");
    a.col(j) /= nrm;
  }
  return a;
}

/*!
 * Default embedding world (k = 8): ĝ = frame column 0, the condition
 * direction is frame column 1 (mapped to a data-space shift along axis 0,
 * so M·ĝ = 0 and null shifts change only the group weights). Group means
 * split along data axis 1.
 */
inline EmbeddingWorldMap make_embedding_world(double kappa = 0.3,
                                              double base_logit = 0.4,
                                              int k = 8,
                                              std::uint64_t frame_seed = 71) {
  const Mat frame = make_orthonormal_frame(k, frame_seed);
  EmbeddingWorldMap map;
  map.g_hat = frame.col(0);
  map.kappa = kappa;
  map.base_logit = base_logit;
  map.base_mean = {Vec(2), Vec(2)};
  map.base_mean[0] << 0.0, -1.2;
  map.base_mean[1] << 0.0, 1.2;
  map.mean_matrix = Mat::Zero(2, k);
  map.mean_matrix.row(0) = 1.5 * frame.col(1).transpose();
  map.group_cov = {0.4 * Mat::Identity(2, 2), 0.4 * Mat::Identity(2, 2)};
  map.validate();
  return map;
}

/*! The condition direction of the default embedding world (frame column 1). */
inline Vec embedding_condition_direction(const EmbeddingWorldMap& map) {
  const Vec row = map.mean_matrix.row(0).transpose();
  const double nrm = row.norm();
  require(nrm > 0.0, "embedding_condition_direction: degenerate mean map");
  return row / nrm;
}

}  // namespace fairguide
