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
// Micro-benchmarks for the numerical kernels. Budgets are documented in
// docs/benchmarks.md and advisory: this tool reports, it does not gate.

#include <chrono>
#include <cstdio>
#include <vector>

#include "fairguide/classifier.hpp"
#include "fairguide/diffusion.hpp"
#include "fairguide/numerics.hpp"
#include "fairguide/rng.hpp"
#include "fairguide/theory.hpp"
#include "fairguide/world.hpp"

namespace fg = fairguide;

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

void bench_ot(int n) {
  fg::Rng rng(7);
  fg::Mat cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) cost(i, j) = rng.uniform();
  const auto t0 = std::chrono::steady_clock::now();
  const fg::TransportPlan plan = fg::solve_balanced_ot(cost);
  const double ms = ms_since(t0);
  std::printf("ot_solve            n=%-5d            %10.3f ms (cost %.6f)\n",
              n, ms, plan.cost_total);
}

void bench_sde_steps() {
  const fg::NoiseSchedule sched;
  const fg::TheoryConstruction tc = fg::make_sdp_construction();
  auto model = std::make_shared<const fg::GaussianGroupModel>(tc.model);
  fg::ScoreFn score = fg::make_exact_guided_score_fn(model, tc.pot, 3.0, sched);
  fg::Rng rng(11);
  fg::Vec x = fg::Vec::Zero(model->dim());
  fg::Vec out;
  const int evals = 200000;
  const auto t0 = std::chrono::steady_clock::now();
  double acc = 0.0;
  for (int i = 0; i < evals; ++i) {
    const double t = 0.001 + 0.999 * rng.uniform();
    x[0] = rng.normal();
    x[1] = rng.normal();
    score(x, t, out);
    acc += out[0];
  }
  const double ms = ms_since(t0);
  std::printf(
      "guided_score_eval   n=%-8d         %10.3f ms (%6.1f ns/eval, sink "
      "%.3g)\n",
      evals, ms, ms * 1e6 / evals, acc);
}

void bench_sde_chain() {
  const fg::NoiseSchedule sched;
  const fg::TheoryConstruction tc = fg::make_non_sdp_construction();
  auto model = std::make_shared<const fg::GaussianGroupModel>(tc.model);
  const fg::SdeOptions opt;
  const int chains = 200;
  const auto t0 = std::chrono::steady_clock::now();
  const fg::Mat ends = fg::sample_endpoints(
      [&] { return fg::make_exact_guided_score_fn(model, tc.pot, 1.0, sched); },
      sched, fg::Vec::Zero(1), 1.25, opt, chains, 99, 1);
  const double ms = ms_since(t0);
  std::printf(
      "reverse_sde_chain   steps=%-4d x %-5d %10.3f ms (%7.3f ms/chain, mean "
      "%.3f)\n",
      opt.steps, chains, ms, ms / chains, ends.col(0).mean());
}

void bench_classifier_eval() {
  const fg::NoiseSchedule sched;
  auto clf = std::make_shared<const fg::NoisyClassifier>(
      fg::make_classifier(2, 64, 5));
  fg::ClassifierEval eval(clf, sched);
  fg::Rng rng(3);
  fg::Vec x(2), g;
  const int evals = 100000;
  const auto t0 = std::chrono::steady_clock::now();
  double acc = 0.0;
  for (int i = 0; i < evals; ++i) {
    x[0] = rng.normal();
    x[1] = rng.normal();
    eval.grad_x_log_prob(x, 0.5, 1, g);
    acc += g[0];
  }
  const double ms = ms_since(t0);
  std::printf(
      "classifier_grad     n=%-8d         %10.3f ms (%6.1f ns/eval, sink "
      "%.3g)\n",
      evals, ms, ms * 1e6 / evals, acc);
}

}  // namespace

int main() {
  std::printf("fairguide micro-benchmarks (advisory; see docs/benchmarks.md)\n");
  bench_ot(64);
  bench_ot(256);
  bench_sde_steps();
  bench_classifier_eval();
  bench_sde_chain();
  return 0;
}
