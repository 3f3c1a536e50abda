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

#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "fairguide/common.hpp"

namespace fairguide {

/*!
 * Resolves the worker-thread count: an explicit positive request wins, then
 * the FAIRGUIDE_THREADS environment variable, then hardware concurrency.
 */
inline int resolve_threads(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("FAIRGUIDE_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

/*!
 * Runs fn(i) for every i in [0, n) across `threads` workers.
 *
 * The index set is block-partitioned, so which indices run on which worker
 * is a pure function of (n, threads) — never of timing. Callers keep results
 * deterministic regardless of thread count by (a) writing only to
 * per-index slots and (b) deriving any randomness from the index, not the
 * worker. The first exception thrown by any worker is rethrown here.
 */
inline void parallel_for(int n, int threads,
                         const std::function<void(int)>& fn) {
  require(n >= 0, "parallel_for: negative range");
  if (n == 0) return;
  const int workers = std::min(std::max(threads, 1), n);
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex error_mu;
  for (int k = 0; k < workers; ++k) {
    const int lo = static_cast<int>(static_cast<long long>(n) * k / workers);
    const int hi =
        static_cast<int>(static_cast<long long>(n) * (k + 1) / workers);
    pool.emplace_back([&, lo, hi] {
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace fairguide
