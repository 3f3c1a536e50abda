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
// Noise-conditional condition classifier p_φ(y | x_t, t): a small tanh MLP
// trained on corrupted samples, with four training methods — plain
// cross-entropy, group-reweighted sampling, group-DRO, and the
// Wasserstein-regularized objective that penalizes output-distribution
// gaps across groups within a condition (matched across noise levels by
// optimal transport). Backpropagation is written out explicitly so the
// gradient path is auditable and deterministic.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fairguide/common.hpp"
#include "fairguide/diffusion.hpp"
#include "fairguide/numerics.hpp"
#include "fairguide/rng.hpp"
#include "fairguide/schedule.hpp"
#include "fairguide/world.hpp"

namespace fairguide {

enum class TrainMethod { kCe, kRw, kGdro, kWdp };

inline const char* train_method_name(TrainMethod m) {
  switch (m) {
    case TrainMethod::kCe:
      return "ce";
    case TrainMethod::kRw:
      return "rw";
    case TrainMethod::kGdro:
      return "gdro";
    case TrainMethod::kWdp:
      return "wdp";
  }
  return "ce";
}

inline TrainMethod train_method_from_name(const std::string& s) {
  if (s == "ce") return TrainMethod::kCe;
  if (s == "rw") return TrainMethod::kRw;
  if (s == "gdro") return TrainMethod::kGdro;
  if (s == "wdp") return TrainMethod::kWdp;
  throw PreconditionError("unknown training method: " + s);
}

/*!
 * Two-hidden-layer tanh MLP on [x / sqrt(1 + σ_t²); logSNR(t)/4; sin(2πt);
 * cos(2πt)]. The input scaling keeps activations in the responsive range of
 * tanh across the full noise range (x ~ N(x0, σ²) has coordinates of size
 * ~σ_max at high noise); the 1/4 on logSNR plays the same role for the time
 * feature. Gradients with respect to x undo the scaling by the chain rule.
 */
struct NoisyClassifier {
  int data_dim = 0;
  int hidden = 64;
  Mat w1;  // hidden × input_dim
  Vec b1;  // hidden
  Mat w2;  // hidden × hidden
  Vec b2;  // hidden
  Vec w3;  // hidden
  double b3 = 0.0;

  int input_dim() const { return data_dim + 3; }

  void validate() const {
    require(data_dim >= 1, "NoisyClassifier: data_dim must be >= 1");
    require(hidden >= 1, "NoisyClassifier: hidden must be >= 1");
    require(w1.rows() == hidden && w1.cols() == input_dim(),
            "NoisyClassifier: w1 shape mismatch");
    require(b1.size() == hidden, "NoisyClassifier: b1 shape mismatch");
    require(w2.rows() == hidden && w2.cols() == hidden,
            "NoisyClassifier: w2 shape mismatch");
    require(b2.size() == hidden, "NoisyClassifier: b2 shape mismatch");
    require(w3.size() == hidden, "NoisyClassifier: w3 shape mismatch");
  }
};

/*! Fresh classifier with N(0, 1/fan_in) weights and zero biases; each layer
 *  draws from its own substream so layer sizes can change independently. */
inline NoisyClassifier make_classifier(int data_dim, int hidden,
                                       std::uint64_t seed) {
  require(data_dim >= 1, "make_classifier: data_dim must be >= 1");
  require(hidden >= 1, "make_classifier: hidden must be >= 1");
  NoisyClassifier clf;
  clf.data_dim = data_dim;
  clf.hidden = hidden;
  Rng root(seed);
  const int f = clf.input_dim();
  {
    Rng r = root.substream(1);
    const double s = 1.0 / std::sqrt(static_cast<double>(f));
    clf.w1.resize(hidden, f);
    for (int i = 0; i < hidden; ++i)
      for (int j = 0; j < f; ++j) clf.w1(i, j) = s * r.normal();
  }
  clf.b1 = Vec::Zero(hidden);
  {
    Rng r = root.substream(2);
    const double s = 1.0 / std::sqrt(static_cast<double>(hidden));
    clf.w2.resize(hidden, hidden);
    for (int i = 0; i < hidden; ++i)
      for (int j = 0; j < hidden; ++j) clf.w2(i, j) = s * r.normal();
  }
  clf.b2 = Vec::Zero(hidden);
  {
    Rng r = root.substream(3);
    const double s = 1.0 / std::sqrt(static_cast<double>(hidden));
    clf.w3.resize(hidden);
    for (int i = 0; i < hidden; ++i) clf.w3(i) = s * r.normal();
  }
  clf.b3 = 0.0;
  return clf;
}

/*! Writes the feature vector for (x, t) into dst[0 .. input_dim). */
inline void fill_classifier_features(const Vec& x, double t,
                                     const NoiseSchedule& sched, double* dst) {
  const double sigma = sched.sigma(t);
  const double inv_scale = 1.0 / std::sqrt(1.0 + sigma * sigma);
  const int d = static_cast<int>(x.size());
  for (int j = 0; j < d; ++j) dst[j] = x[j] * inv_scale;
  dst[d] = 0.25 * sched.log_snr(t);
  dst[d + 1] = std::sin(2.0 * kPi * t);
  dst[d + 2] = std::cos(2.0 * kPi * t);
}

/*!
 * Per-thread forward/backward evaluator. Owns all scratch buffers, so one
 * instance serves one sampling chain with zero allocation per call.
 */
class ClassifierEval {
 public:
  ClassifierEval(std::shared_ptr<const NoisyClassifier> clf,
                 NoiseSchedule sched)
      : clf_(std::move(clf)), sched_(sched) {
    clf_->validate();
    const int f = clf_->input_dim();
    const int h = clf_->hidden;
    feat_.resize(f);
    h1_.resize(h);
    h2_.resize(h);
    d1_.resize(h);
    d2_.resize(h);
    gfeat_.resize(f);
  }

  /*! Logit of p(y = 1 | x_t, t). */
  double logit(const Vec& x, double t) {
    forward(x, t);
    return clf_->w3.dot(h2_) + clf_->b3;
  }

  double prob(const Vec& x, double t) { return sigmoid(logit(x, t)); }

  /*! ∇_x logit, written into `out`. */
  void grad_x_logit(const Vec& x, double t, Vec& out) {
    forward(x, t);
    d2_ = clf_->w3.cwiseProduct(Vec::Ones(h2_.size()) - h2_.cwiseProduct(h2_));
    d1_.noalias() = clf_->w2.transpose() * d2_;
    d1_ = d1_.cwiseProduct(Vec::Ones(h1_.size()) - h1_.cwiseProduct(h1_));
    gfeat_.noalias() = clf_->w1.transpose() * d1_;
    const double sigma = sched_.sigma(t);
    const double inv_scale = 1.0 / std::sqrt(1.0 + sigma * sigma);
    out = gfeat_.head(clf_->data_dim) * inv_scale;
  }

  /*! ∇_x log p(y | x_t, t) = (y − p)·∇_x logit, written into `out`. */
  void grad_x_log_prob(const Vec& x, double t, int y, Vec& out) {
    require(y == 0 || y == 1, "ClassifierEval: y must be 0 or 1");
    const double z = logit(x, t);
    // d log σ(z)/dz = 1 − σ(z); d log(1−σ(z))/dz = −σ(z).
    const double factor = (y == 1) ? sigmoid(-z) : -sigmoid(z);
    grad_x_logit(x, t, out);
    out *= factor;
  }

 private:
  void forward(const Vec& x, double t) {
    require(x.size() == clf_->data_dim, "ClassifierEval: dimension mismatch");
    fill_classifier_features(x, t, sched_, feat_.data());
    h1_.noalias() = clf_->w1 * feat_;
    h1_ += clf_->b1;
    h1_ = h1_.array().tanh().matrix();
    h2_.noalias() = clf_->w2 * h1_;
    h2_ += clf_->b2;
    h2_ = h2_.array().tanh().matrix();
  }

  std::shared_ptr<const NoisyClassifier> clf_;
  NoiseSchedule sched_;
  Vec feat_, h1_, h2_, d1_, d2_, gfeat_;
};

/*! Classifier-guidance potential ∇log p_φ(y | x_t, t). The closure owns a
 *  fresh evaluator; build one instance per sampling chain. */
inline GuidancePotential cg_potential(std::shared_ptr<const NoisyClassifier> clf,
                                      const NoiseSchedule& sched, int y) {
  require(y == 0 || y == 1, "cg_potential: y must be 0 or 1");
  GuidancePotential pot;
  pot.descriptor = "cg";
  auto eval = std::make_shared<ClassifierEval>(std::move(clf), sched);
  pot.grad_log_f = [eval, y](const Vec& x, double t, Vec& out) {
    eval->grad_x_log_prob(x, t, y, out);
  };
  return pot;
}

// ---------------------------------------------------------------------------
// Wasserstein output-distribution penalty.
// ---------------------------------------------------------------------------

struct WdpMinibatchLoss {
  double loss = 0.0;   // Σ_ij plan_ij · |u_i − v_j|  (output part only)
  Mat plan;            // balanced transport plan (rows: a-side, cols: b-side)
};

/*!
 * Minibatch penalty between classifier outputs of two groups. The matching
 * plan is computed on the composite cost |u_i − v_j| + γ·|logSNR_i −
 * logSNR_j| (so examples are matched at comparable noise levels), but the
 * reported loss — and the gradient taken from it — uses only the
 * output-difference part under that plan. Counts must match (balanced
 * transport).
 */
inline WdpMinibatchLoss wdp_minibatch_loss(const Vec& outputs_a,
                                           const Vec& outputs_b,
                                           const Vec& logsnr_a,
                                           const Vec& logsnr_b, double gamma) {
  const int n = static_cast<int>(outputs_a.size());
  require(n >= 1, "wdp_minibatch_loss: empty minibatch");
  require(static_cast<int>(outputs_b.size()) == n,
          "wdp_minibatch_loss: group output counts must match");
  require(logsnr_a.size() == n && logsnr_b.size() == n,
          "wdp_minibatch_loss: logSNR vectors must match output counts");
  require(gamma >= 0.0, "wdp_minibatch_loss: gamma must be >= 0");
  Mat cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      cost(i, j) = std::abs(outputs_a[i] - outputs_b[j]) +
                   gamma * std::abs(logsnr_a[i] - logsnr_b[j]);
  TransportPlan tp = solve_balanced_ot(cost);
  WdpMinibatchLoss out;
  out.plan = std::move(tp.plan);
  double loss = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (out.plan(i, j) > 0.0)
        loss += out.plan(i, j) * std::abs(outputs_a[i] - outputs_b[j]);
  out.loss = loss;
  return out;
}

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

struct WdpConfig {
  double lambda = 3.0;  // penalty weight; 0 disables the penalty entirely
  double gamma = 0.2;   // logSNR mismatch weight in the matching cost
  int condition = 1;    // condition whose group slices are matched
};

struct TrainConfig {
  TrainMethod method = TrainMethod::kCe;
  int steps = 2000;
  int batch = 128;  // must be divisible by 4 for the WDP sub-batch split
  double lr = 0.05;
  double momentum = 0.9;
  int hidden = 64;
  std::uint64_t seed = 1;
  double warmup_frac = 0.05;   // WDP penalty activates after this fraction
  double window_frac = 0.05;   // noise-window width as a fraction of t-range
  double center_sigma = 2.0;   // truncated-normal std of window centers (logSNR)
  double t_min_frac = 1e-3;    // training t range is [t_min_frac·T, T]
  int log_every = 50;

  void validate() const {
    require(steps >= 1, "TrainConfig: steps must be >= 1");
    require(batch >= 4 && batch % 4 == 0,
            "TrainConfig: batch must be positive and divisible by 4");
    require(lr > 0.0, "TrainConfig: lr must be > 0");
    require(momentum >= 0.0 && momentum < 1.0,
            "TrainConfig: momentum must be in [0, 1)");
    require(warmup_frac >= 0.0 && warmup_frac <= 1.0,
            "TrainConfig: warmup_frac must be in [0, 1]");
    require(window_frac > 0.0 && window_frac <= 1.0,
            "TrainConfig: window_frac must be in (0, 1]");
    require(center_sigma > 0.0, "TrainConfig: center_sigma must be > 0");
    require(log_every >= 1, "TrainConfig: log_every must be >= 1");
  }
};

struct LearningCurveRow {
  int step = 0;
  double ce_loss = 0.0;
  double wdp_loss = 0.0;           // 0 while the penalty is inactive
  std::vector<double> group_losses;  // per-group mean CE on the step's batch
};

struct TrainResult {
  NoisyClassifier clf;
  std::vector<LearningCurveRow> curve;
};

namespace detail {

/*! Batched forward/backward state, preallocated once per training run. */
struct MlpBatchWork {
  Mat z;       // B × F features
  Mat h1, h2;  // B × H activations
  Vec logits;  // B
  Mat d1, d2;  // B × H backprop deltas
  Vec dlogit;  // B

  void resize(int b, int f, int h) {
    z.resize(b, f);
    h1.resize(b, h);
    h2.resize(b, h);
    logits.resize(b);
    d1.resize(b, h);
    d2.resize(b, h);
    dlogit.resize(b);
  }
};

struct MlpGrads {
  Mat w1, w2;
  Vec b1, b2, w3;
  double b3 = 0.0;

  void setZero(const NoisyClassifier& clf) {
    w1 = Mat::Zero(clf.w1.rows(), clf.w1.cols());
    b1 = Vec::Zero(clf.b1.size());
    w2 = Mat::Zero(clf.w2.rows(), clf.w2.cols());
    b2 = Vec::Zero(clf.b2.size());
    w3 = Vec::Zero(clf.w3.size());
    b3 = 0.0;
  }
};

inline void mlp_forward(const NoisyClassifier& clf, MlpBatchWork& wk, int rows) {
  auto z = wk.z.topRows(rows);
  wk.h1.topRows(rows).noalias() = z * clf.w1.transpose();
  wk.h1.topRows(rows).rowwise() += clf.b1.transpose();
  wk.h1.topRows(rows) = wk.h1.topRows(rows).array().tanh().matrix();
  wk.h2.topRows(rows).noalias() = wk.h1.topRows(rows) * clf.w2.transpose();
  wk.h2.topRows(rows).rowwise() += clf.b2.transpose();
  wk.h2.topRows(rows) = wk.h2.topRows(rows).array().tanh().matrix();
  wk.logits.head(rows).noalias() = wk.h2.topRows(rows) * clf.w3;
  wk.logits.head(rows).array() += clf.b3;
}

/*! Accumulates parameter gradients for dloss/dlogit already in wk.dlogit. */
inline void mlp_backward(const NoisyClassifier& clf, MlpBatchWork& wk, int rows,
                         MlpGrads& g) {
  auto h1 = wk.h1.topRows(rows);
  auto h2 = wk.h2.topRows(rows);
  auto dl = wk.dlogit.head(rows);
  g.w3.noalias() += h2.transpose() * dl;
  g.b3 += dl.sum();
  wk.d2.topRows(rows) =
      ((dl * clf.w3.transpose()).array() * (1.0 - h2.array().square()))
          .matrix();
  g.w2.noalias() += wk.d2.topRows(rows).transpose() * h1;
  g.b2.noalias() += wk.d2.topRows(rows).colwise().sum().transpose();
  wk.d1.topRows(rows) = ((wk.d2.topRows(rows) * clf.w2).array() *
                         (1.0 - h1.array().square()))
                            .matrix();
  g.w1.noalias() += wk.d1.topRows(rows).transpose() * wk.z.topRows(rows);
  g.b1.noalias() += wk.d1.topRows(rows).colwise().sum().transpose();
}

/*! Stable binary cross-entropy with logits. */
inline double bce_with_logit(double logit_v, int y) {
  const double m = std::max(logit_v, 0.0);
  return m - y * logit_v + std::log1p(std::exp(-std::abs(logit_v)));
}

}  // namespace detail

/*!
 * Trains a noise-conditional classifier on a fixed dataset of clean points.
 * Every method shares the same noise-level curriculum per step: a window
 * center is drawn as a truncated normal in logSNR (mean 0, std
 * `center_sigma`, rejected outside the schedule's range), mapped back to t,
 * and each batch element gets an independent t uniform in a window of width
 * `window_frac` of the t-range around the center (clamped to the range).
 *
 * Methods:
 *  - ce:   uniform index sampling, mean cross-entropy.
 *  - rw:   group-balanced index sampling (uniform group, then uniform within
 *          the group's pool), mean cross-entropy.
 *  - gdro: uniform sampling; multiplicative group weights q_a ←
 *          q_a·exp(0.01·L̄_a) (normalized), loss Σ_a q_a·L̄_a.
 *  - wdp:  cross-entropy plus λ·(transport-matched output gap) between the
 *          two group slices of `wdp.condition`, computed on a separate
 *          balanced sub-batch of batch/4 per group drawn from those slices;
 *          active only after `warmup_frac` of steps. With λ = 0 the penalty
 *          branch never runs and never consumes randomness, so training is
 *          bit-identical to ce.
 *
 * Throws NumericalError (with the step and learning rate) if the loss goes
 * non-finite.
 */
inline TrainResult train_classifier(const Dataset& data,
                                    const NoiseSchedule& sched,
                                    const TrainConfig& cfg,
                                    const WdpConfig& wdp = WdpConfig()) {
  cfg.validate();
  sched.validate();
  const int n = data.n();
  require(n >= 2, "train_classifier: need at least two examples");
  const int d = static_cast<int>(data.x.cols());

  int n_groups = 0;
  for (int i = 0; i < n; ++i) {
    require(data.group[i] >= 0, "train_classifier: negative group label");
    require(data.condition[i] == 0 || data.condition[i] == 1,
            "train_classifier: conditions must be binary (0/1)");
    n_groups = std::max(n_groups, data.group[i] + 1);
  }
  require(n_groups >= 1, "train_classifier: no group labels");

  std::vector<std::vector<int>> group_pool(n_groups);
  for (int i = 0; i < n; ++i) group_pool[data.group[i]].push_back(i);
  if (cfg.method == TrainMethod::kRw || cfg.method == TrainMethod::kGdro) {
    for (int a = 0; a < n_groups; ++a)
      require(!group_pool[a].empty(),
              "train_classifier: group " + std::to_string(a) +
                  " has no examples");
  }

  const bool wdp_on = cfg.method == TrainMethod::kWdp && wdp.lambda > 0.0;
  std::vector<std::vector<int>> wdp_pool;
  if (wdp_on) {
    require(wdp.lambda >= 0.0 && wdp.gamma >= 0.0,
            "train_classifier: WDP weights must be >= 0");
    require(n_groups == 2,
            "train_classifier: the WDP penalty requires exactly two groups");
    wdp_pool.assign(2, {});
    for (int i = 0; i < n; ++i)
      if (data.condition[i] == wdp.condition) wdp_pool[data.group[i]].push_back(i);
    for (int a = 0; a < 2; ++a)
      require(!wdp_pool[a].empty(),
              "train_classifier: group " + std::to_string(a) +
                  " absent under the WDP condition");
  }

  NoisyClassifier clf = make_classifier(d, cfg.hidden, cfg.seed);
  Rng rng = Rng(cfg.seed).substream(1000);  // data order, separate from init

  detail::MlpGrads grads, vel;
  grads.setZero(clf);
  vel.setZero(clf);
  detail::MlpBatchWork main_wk, sub_wk;
  const int b = cfg.batch;
  const int m = b / 4;  // WDP sub-batch size per group
  main_wk.resize(b, clf.input_dim(), clf.hidden);
  sub_wk.resize(2 * m, clf.input_dim(), clf.hidden);

  const double t_lo = cfg.t_min_frac * sched.T;
  const double ls_min = sched.log_snr(sched.T);
  const double ls_max = sched.log_snr(t_lo);
  const int warmup_steps = static_cast<int>(cfg.warmup_frac * cfg.steps);

  Vec q;  // group-DRO weights
  if (cfg.method == TrainMethod::kGdro)
    q = Vec::Constant(n_groups, 1.0 / n_groups);

  std::vector<int> batch_idx(b);
  std::vector<double> batch_t(b);
  Vec x_t(d);
  Vec feat_buf(clf.input_dim());
  Vec sub_t(2 * m), sub_logsnr(2 * m);
  std::vector<double> group_sum(n_groups);
  std::vector<int> group_count(n_groups);

  TrainResult result;

  for (int step = 0; step < cfg.steps; ++step) {
    // Shared noise-level window for this step.
    double center_ls;
    do {
      center_ls = cfg.center_sigma * rng.normal();
    } while (center_ls < ls_min || center_ls > ls_max);
    const double t_c = sched.t_of_log_snr(center_ls);
    const double half = 0.5 * cfg.window_frac * (sched.T - t_lo);
    const double w_lo = std::max(t_lo, t_c - half);
    const double w_hi = std::min(sched.T, t_c + half);

    // Main batch: per element draw (index, t, noise) and build features.
    for (int i = 0; i < b; ++i) {
      int idx;
      if (cfg.method == TrainMethod::kRw) {
        const int a = static_cast<int>(rng.uniform_int(n_groups));
        idx = group_pool[a][rng.uniform_int(group_pool[a].size())];
      } else {
        idx = static_cast<int>(rng.uniform_int(n));
      }
      batch_idx[i] = idx;
      const double t = w_lo + rng.uniform() * (w_hi - w_lo);
      batch_t[i] = t;
      const double sigma = sched.sigma(t);
      for (int j = 0; j < d; ++j) x_t[j] = data.x(idx, j) + sigma * rng.normal();
      fill_classifier_features(x_t, t, sched, feat_buf.data());
      main_wk.z.row(i) = feat_buf.transpose();
    }
    detail::mlp_forward(clf, main_wk, b);

    // Cross-entropy part and per-group diagnostics.
    double ce_loss = 0.0;
    std::fill(group_sum.begin(), group_sum.end(), 0.0);
    std::fill(group_count.begin(), group_count.end(), 0);
    for (int i = 0; i < b; ++i) {
      const int y = data.condition[batch_idx[i]];
      const double li = detail::bce_with_logit(main_wk.logits[i], y);
      ce_loss += li;
      const int a = data.group[batch_idx[i]];
      group_sum[a] += li;
      group_count[a] += 1;
    }
    ce_loss /= b;

    if (cfg.method == TrainMethod::kGdro) {
      // Multiplicative-weights ascent on the group simplex, then weight.
      for (int a = 0; a < n_groups; ++a) {
        const double mean_a =
            group_count[a] > 0 ? group_sum[a] / group_count[a] : 0.0;
        q[a] *= std::exp(0.01 * mean_a);
      }
      q /= q.sum();
      for (int i = 0; i < b; ++i) {
        const int y = data.condition[batch_idx[i]];
        const int a = data.group[batch_idx[i]];
        const double p = sigmoid(main_wk.logits[i]);
        main_wk.dlogit[i] = (p - y) * q[a] / std::max(group_count[a], 1);
      }
    } else {
      for (int i = 0; i < b; ++i) {
        const int y = data.condition[batch_idx[i]];
        const double p = sigmoid(main_wk.logits[i]);
        main_wk.dlogit[i] = (p - y) / b;
      }
    }

    grads.setZero(clf);
    detail::mlp_backward(clf, main_wk, b, grads);

    // WDP penalty on a separate balanced sub-batch of the matched condition.
    double wdp_loss = 0.0;
    if (wdp_on && step >= warmup_steps) {
      for (int a = 0; a < 2; ++a) {
        for (int jj = 0; jj < m; ++jj) {
          const int row = a * m + jj;
          const int idx = wdp_pool[a][rng.uniform_int(wdp_pool[a].size())];
          const double t = w_lo + rng.uniform() * (w_hi - w_lo);
          sub_t[row] = t;
          sub_logsnr[row] = sched.log_snr(t);
          const double sigma = sched.sigma(t);
          for (int j = 0; j < d; ++j)
            x_t[j] = data.x(idx, j) + sigma * rng.normal();
          fill_classifier_features(x_t, t, sched, feat_buf.data());
          sub_wk.z.row(row) = feat_buf.transpose();
        }
      }
      detail::mlp_forward(clf, sub_wk, 2 * m);
      Vec u(m), v(m);
      for (int jj = 0; jj < m; ++jj) {
        u[jj] = sigmoid(sub_wk.logits[jj]);
        v[jj] = sigmoid(sub_wk.logits[m + jj]);
      }
      const WdpMinibatchLoss pen = wdp_minibatch_loss(
          u, v, sub_logsnr.head(m), sub_logsnr.tail(m), wdp.gamma);
      wdp_loss = pen.loss;
      // Fixed-plan envelope subgradient: d loss/d u_i = Σ_j π_ij·sign(u_i−v_j).
      for (int i = 0; i < m; ++i) {
        double du = 0.0;
        for (int j = 0; j < m; ++j)
          if (pen.plan(i, j) > 0.0) {
            const double diff = u[i] - v[j];
            du += pen.plan(i, j) * (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0));
          }
        sub_wk.dlogit[i] = wdp.lambda * du * u[i] * (1.0 - u[i]);
      }
      for (int j = 0; j < m; ++j) {
        double dv = 0.0;
        for (int i = 0; i < m; ++i)
          if (pen.plan(i, j) > 0.0) {
            const double diff = u[i] - v[j];
            dv -= pen.plan(i, j) * (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0));
          }
        sub_wk.dlogit[m + j] = wdp.lambda * dv * v[j] * (1.0 - v[j]);
      }
      detail::mlp_backward(clf, sub_wk, 2 * m, grads);
    }

    const double total_loss = ce_loss + wdp.lambda * wdp_loss;
    if (!std::isfinite(total_loss)) {
      throw NumericalError("train_classifier: non-finite loss at step " +
                           std::to_string(step) + " (lr=" +
                           std::to_string(cfg.lr) + ")");
    }

    // SGD with momentum.
    const double mu = cfg.momentum;
    const double lr = cfg.lr;
    vel.w1 = mu * vel.w1 - lr * grads.w1;
    vel.b1 = mu * vel.b1 - lr * grads.b1;
    vel.w2 = mu * vel.w2 - lr * grads.w2;
    vel.b2 = mu * vel.b2 - lr * grads.b2;
    vel.w3 = mu * vel.w3 - lr * grads.w3;
    vel.b3 = mu * vel.b3 - lr * grads.b3;
    clf.w1 += vel.w1;
    clf.b1 += vel.b1;
    clf.w2 += vel.w2;
    clf.b2 += vel.b2;
    clf.w3 += vel.w3;
    clf.b3 += vel.b3;

    if (step % cfg.log_every == 0 || step == cfg.steps - 1) {
      LearningCurveRow row;
      row.step = step;
      row.ce_loss = ce_loss;
      row.wdp_loss = wdp_loss;
      row.group_losses.resize(n_groups);
      for (int a = 0; a < n_groups; ++a)
        row.group_losses[a] =
            group_count[a] > 0 ? group_sum[a] / group_count[a] : 0.0;
      result.curve.push_back(std::move(row));
    }
  }

  result.clf = std::move(clf);
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation helpers.
// ---------------------------------------------------------------------------

/*! Hard accuracy of sign(logit) against the condition labels, with every
 *  example corrupted at noise level t using the provided generator. */
inline double classifier_accuracy(const NoisyClassifier& clf,
                                  const NoiseSchedule& sched,
                                  const Dataset& data, double t, Rng& rng) {
  auto shared = std::make_shared<const NoisyClassifier>(clf);
  ClassifierEval eval(shared, sched);
  const double sigma = sched.sigma(t);
  const int d = static_cast<int>(data.x.cols());
  Vec x(d);
  int correct = 0;
  for (int i = 0; i < data.n(); ++i) {
    for (int j = 0; j < d; ++j) x[j] = data.x(i, j) + sigma * rng.normal();
    const int pred = eval.logit(x, t) > 0.0 ? 1 : 0;
    if (pred == data.condition[i]) ++correct;
  }
  return static_cast<double>(correct) / data.n();
}

struct WdpDistanceReport {
  std::vector<double> t_bins;
  std::vector<double> per_bin;  // mean pairwise 1-D W1 of output distributions
  double mean = 0.0;
};

/*!
 * Measured output-distribution gap of a classifier across groups within a
 * condition: at each noise bin, samples fresh clean points from every (y,
 * group) slice of the world, corrupts them at that t, and computes the
 * pairwise one-dimensional Wasserstein-1 distance between the groups'
 * output distributions (mean over unordered pairs). A group missing under
 * the condition is a precondition violation.
 */
inline WdpDistanceReport wdp_distance(const NoisyClassifier& clf,
                                      const MixtureWorld& world,
                                      const NoiseSchedule& sched, int condition,
                                      const std::vector<double>& t_bins,
                                      int n_eval, Rng& rng) {
  require(n_eval >= 2, "wdp_distance: need n_eval >= 2");
  require(!t_bins.empty(), "wdp_distance: empty t_bins");
  auto shared = std::make_shared<const NoisyClassifier>(clf);
  ClassifierEval eval(shared, sched);
  auto wptr = std::make_shared<const MixtureWorld>(world);

  WdpDistanceReport rep;
  rep.t_bins = t_bins;
  const int d = world.dim;
  Vec x(d);
  std::vector<std::vector<double>> outs(world.n_groups);
  for (double t : t_bins) {
    const double sigma = sched.sigma(t);
    for (int a = 0; a < world.n_groups; ++a) {
      outs[a].clear();
      outs[a].reserve(n_eval);
      // A group absent under the condition is a precondition violation.
      MixtureWorld slice;
      slice.dim = world.dim;
      slice.n_groups = world.n_groups;
      slice.n_conditions = world.n_conditions;
      double tot = 0.0;
      for (const auto& comp : world.components)
        if (comp.condition == condition && comp.group == a) {
          slice.components.push_back(comp);
          tot += comp.weight;
        }
      require(!slice.components.empty(),
              "wdp_distance: group " + std::to_string(a) +
                  " absent under condition " + std::to_string(condition));
      for (auto& comp : slice.components) comp.weight /= tot;
      slice.finalize();
      Dataset ds = sample_world(slice, n_eval, rng);
      for (int i = 0; i < n_eval; ++i) {
        for (int j = 0; j < d; ++j) x[j] = ds.x(i, j) + sigma * rng.normal();
        outs[a].push_back(eval.prob(x, t));
      }
    }
    double acc = 0.0;
    int pairs = 0;
    for (int a = 0; a < world.n_groups; ++a)
      for (int b2 = a + 1; b2 < world.n_groups; ++b2) {
        acc += wasserstein1_1d(outs[a], outs[b2]);
        ++pairs;
      }
    rep.per_bin.push_back(acc / std::max(pairs, 1));
  }
  double s = 0.0;
  for (double v : rep.per_bin) s += v;
  rep.mean = s / rep.per_bin.size();
  return rep;
}

}  // namespace fairguide
