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

#pragma once

#include <cmath>
#include <vector>

#include "fairguide/common.hpp"

namespace fairguide {

/*!
 * Variance-exploding noise schedule, geometric in t on (0, T]:
 * σ(t) = sigma_min · (sigma_max/sigma_min)^(t/T), with T fixed to 1.
 *
 * logSNR uses the unit-variance data convention (worlds are built with
 * order-1 component covariances): logSNR(t) = −2·ln σ(t).
 */
struct NoiseSchedule {
  double sigma_min = 0.01;
  double sigma_max = 20.0;
  double T = 1.0;

  void validate() const {
    require(sigma_min > 0.0 && sigma_max > sigma_min && T > 0.0,
            "NoiseSchedule: need 0 < sigma_min < sigma_max and T > 0");
  }

  double log_ratio() const { return std::log(sigma_max / sigma_min); }

  double sigma(double t) const {
    require(t > 0.0 && t <= T, "NoiseSchedule::sigma: t outside (0, T]");
    if (t == T) return sigma_max;  // exact endpoint, no exp/log rounding
    return sigma_min * std::exp((t / T) * log_ratio());
  }

  double log_snr(double t) const { return -2.0 * std::log(sigma(t)); }

  /*! g²(t) = dσ²/dt = σ(t)² · (2/T) · ln(sigma_max/sigma_min). */
  double g2(double t) const {
    const double s = sigma(t);
    return s * s * (2.0 / T) * log_ratio();
  }

  /*! Inverse of log_snr: the t at which logSNR(t) equals the argument. */
  double t_of_log_snr(double ls) const {
    const double s = std::exp(-0.5 * ls);
    require(s >= sigma_min && s <= sigma_max,
            "NoiseSchedule::t_of_log_snr: level outside schedule range");
    return T * std::log(s / sigma_min) / log_ratio();
  }
};

struct GuidanceConfig {
  double scale_w = 1.0;            // w ≥ 0
  std::vector<double> scale_grid;  // nonempty, ascending
  double w_ref = 0.0;

  void validate() const {
    require(scale_w >= 0.0 && w_ref >= 0.0,
            "GuidanceConfig: scales must be nonnegative");
    require(!scale_grid.empty(), "GuidanceConfig: empty scale grid");
    for (std::size_t i = 1; i < scale_grid.size(); ++i) {
      require(scale_grid[i] > scale_grid[i - 1],
              "GuidanceConfig: scale grid must be strictly ascending");
    }
  }
};

}  // namespace fairguide
