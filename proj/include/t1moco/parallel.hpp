// Copyright (c) 2026 t1moco contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace t1moco {

inline int default_jobs() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

/// Splits [begin, end) into at most `jobs` fixed contiguous chunks and runs
/// `body(chunk_begin, chunk_end)` on each. Chunk boundaries depend only on the
/// range and job count, so disjoint writes stay deterministic for any job
/// count. jobs <= 1 runs inline.
template <typename Body>
void parallel_chunks(int begin, int end, int jobs, Body &&body) {
  const int n = end - begin;
  if (n <= 0) return;
  jobs = std::clamp(jobs, 1, n);
  if (jobs == 1) {
    body(begin, end);
    return;
  }
  const int chunk = (n + jobs - 1) / jobs;
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (int j = 0; j < jobs; ++j) {
    const int lo = begin + j * chunk;
    const int hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (std::thread &t : pool) t.join();
}

}  // namespace t1moco
