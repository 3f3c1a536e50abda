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
// Shared test helpers: finite-difference gradients and small statistical
// utilities used by the oracle suites.

#pragma once

#include <cmath>
#include <functional>

#include "fairguide/common.hpp"

namespace fairguide::testing {

/*! Central-difference gradient of a scalar field, one column per coordinate. */
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x,
                       double h = 1e-5) {
  Vec g(x.size());
  Vec xp = x, xm = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return g;
}

/*! Relative error with an absolute floor, for comparing gradients. */
inline double rel_err(double got, double want, double floor_ = 1e-8) {
  return std::abs(got - want) / std::max(std::abs(want), floor_);
}

inline double max_rel_err(const Vec& got, const Vec& want,
                          double floor_ = 1e-8) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < got.size(); ++i)
    m = std::max(m, rel_err(got[i], want[i], floor_));
  return m;
}

}  // namespace fairguide::testing
