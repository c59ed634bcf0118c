// Copyright (c) 2026 t1moco contributors
// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the test suite: scratch directories and small
// random-input builders used across several test files.
#pragma once

#include <t1moco/grid.hpp>
#include <t1moco/types.hpp>

#include <filesystem>
#include <random>
#include <string>

namespace t1test {

// Self-deleting scratch directory under the system temp path.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    auto base = std::filesystem::temp_directory_path();
    for (int i = 0; i < 1000; ++i) {
      auto cand = base / ("t1moco_" + tag + "_" + std::to_string(i));
      std::error_code ec;
      if (std::filesystem::create_directories(cand, ec)) {
        path = cand;
        return;
      }
    }
    throw std::runtime_error("could not create temp dir for " + tag);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str(const std::string& rel = "") const {
    return rel.empty() ? path.string() : (path / rel).string();
  }
};

inline t1moco::Grid random_grid(int w, int h, std::mt19937_64& rng,
                                double lo = 0.0, double hi = 1.0) {
  t1moco::Grid g(w, h);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : g.data) v = dist(rng);
  return g;
}

inline t1moco::VecField random_field(int w, int h, std::mt19937_64& rng,
                                     double amp) {
  t1moco::VecField f(w, h);
  std::uniform_real_distribution<double> dist(-amp, amp);
  for (auto& v : f.dx.data) v = dist(rng);
  for (auto& v : f.dy.data) v = dist(rng);
  return f;
}

inline t1moco::ImageSeries random_series(int w, int h, int n,
                                         std::mt19937_64& rng,
                                         double lo = 0.0, double hi = 1.0) {
  t1moco::ImageSeries s;
  s.width = w;
  s.height = h;
  for (int i = 0; i < n; ++i) {
    s.images.push_back(random_grid(w, h, rng, lo, hi));
    s.inversion_times_ms.push_back(100.0 + 300.0 * i);
  }
  return s;
}

inline double masked_mean(const t1moco::Grid& g, const t1moco::Mask& mask) {
  double sum = 0.0;
  long n = 0;
  for (long p = 0; p < static_cast<long>(g.width) * g.height; ++p)
    if (mask.grid.data[p]) {
      sum += g.data[p];
      ++n;
    }
  return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace t1test
