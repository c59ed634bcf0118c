// Copyright (c) 2026 t1moco contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "t1moco/parallel.hpp"
#include "t1moco/types.hpp"

// Three-parameter MOLLI recovery model S(t) = |C (1 - k exp(-t / T1*))| with
// T1 = (k - 1) T1*. Magnitude acquisition destroys the sign of the early
// samples; fitting restores it by exhaustively trying how many leading
// samples to negate and keeping the lowest-residual candidate.

namespace t1moco {

struct MolliParams {
  double c = 0;          // signal scale, scanner units, >= 0
  double k = 0;          // dimensionless
  double t1star_ms = 0;  // apparent relaxation time, > 0
};

/// Signed recovery curve C (1 - k exp(-t / T1*)).
inline double molli_signal_signed(const MolliParams &p, double t_ms) {
  return p.c * (1.0 - p.k * std::exp(-t_ms / p.t1star_ms));
}

/// Magnitude signal per the MOLLI model.
inline double molli_signal(const MolliParams &p, double t_ms) {
  return std::abs(molli_signal_signed(p, t_ms));
}

/// Gradient of the magnitude signal w.r.t. (C, k, T1*). Undefined exactly at
/// the null point; callers evaluate away from it.
inline std::array<double, 3> molli_signal_gradient(const MolliParams &p, double t_ms) {
  const double e = std::exp(-t_ms / p.t1star_ms);
  const double signed_val = p.c * (1.0 - p.k * e);
  const double sgn = signed_val < 0 ? -1.0 : 1.0;
  return {sgn * (1.0 - p.k * e),
          sgn * (-p.c * e),
          sgn * (-p.c * p.k * e * t_ms / (p.t1star_ms * p.t1star_ms))};
}

/// Look-Locker correction T1 = (k - 1) T1*.
inline double derive_t1(const MolliParams &p) { return (p.k - 1.0) * p.t1star_ms; }

/// Number of leading samples the signed model predicts negative, i.e. the
/// count of times before the null point T1* ln(k).
inline int polarity_from_params(const MolliParams &p, std::span<const double> times_ms) {
  if (!(p.k > 1.0) || !(p.t1star_ms > 0.0)) return 0;
  const double null_point = p.t1star_ms * std::log(p.k);
  int m = 0;
  for (double t : times_ms)
    if (t < null_point) ++m;
  return m;
}

struct FitConfig {
  int max_iter = 400;          // Nelder-Mead iteration cap per polarity candidate
  double simplex_tol = 1e-6;   // diameter threshold in normalized coordinates
  int m_max = -1;              // cap on negated leading samples; -1 means N
  double t1star_min_ms = 100;  // barrier bounds for T1*
  double t1star_max_ms = 3000;
};

struct FitResult {
  MolliParams params;
  double residual_norm = 0;  // sqrt of the best SSE, scanner units
  int polarity = 0;          // leading samples restored to negative sign
  bool converged = false;
  int iterations = 0;
};

namespace detail {

// Nelder-Mead on a fixed-dimension objective. Standard reflection /
// expansion / contraction / shrink coefficients; stops when the max-norm
// spread of the simplex around the best vertex falls below `tol`.
template <int Dim>
struct SimplexResult {
  std::array<double, Dim> x;
  double f = 0;
  bool converged = false;
  int iterations = 0;
};

template <int Dim, typename F>
SimplexResult<Dim> nelder_mead(F &&objective, const std::array<double, Dim> &start,
                               const std::array<double, Dim> &steps, double tol, int max_iter) {
  constexpr int V = Dim + 1;
  std::array<std::array<double, Dim>, V> xs;
  std::array<double, V> fs;
  xs[0] = start;
  for (int j = 0; j < Dim; ++j) {
    xs[j + 1] = start;
    xs[j + 1][j] += steps[j];
  }
  for (int v = 0; v < V; ++v) fs[v] = objective(xs[v]);

  auto order = [&] {
    for (int i = 1; i < V; ++i)
      for (int j = i; j > 0 && fs[j] < fs[j - 1]; --j) {
        std::swap(fs[j], fs[j - 1]);
        std::swap(xs[j], xs[j - 1]);
      }
  };
  auto diameter = [&] {
    double d = 0;
    for (int v = 1; v < V; ++v)
      for (int j = 0; j < Dim; ++j) d = std::max(d, std::abs(xs[v][j] - xs[0][j]));
    return d;
  };

  order();
  SimplexResult<Dim> res;
  int iter = 0;
  while (iter < max_iter && diameter() >= tol) {
    ++iter;
    std::array<double, Dim> centroid{};
    for (int v = 0; v < V - 1; ++v)
      for (int j = 0; j < Dim; ++j) centroid[j] += xs[v][j] / (V - 1);

    auto blend = [&](double coeff) {
      std::array<double, Dim> p;
      for (int j = 0; j < Dim; ++j) p[j] = centroid[j] + coeff * (centroid[j] - xs[V - 1][j]);
      return p;
    };

    const auto reflected = blend(1.0);
    const double f_r = objective(reflected);
    if (f_r < fs[0]) {
      const auto expanded = blend(2.0);
      const double f_e = objective(expanded);
      if (f_e < f_r) {
        xs[V - 1] = expanded;
        fs[V - 1] = f_e;
      } else {
        xs[V - 1] = reflected;
        fs[V - 1] = f_r;
      }
    } else if (f_r < fs[V - 2]) {
      xs[V - 1] = reflected;
      fs[V - 1] = f_r;
    } else {
      const bool outside = f_r < fs[V - 1];
      const auto contracted = blend(outside ? 0.5 : -0.5);
      const double f_c = objective(contracted);
      if (f_c < (outside ? f_r : fs[V - 1])) {
        xs[V - 1] = contracted;
        fs[V - 1] = f_c;
      } else {
        for (int v = 1; v < V; ++v) {
          for (int j = 0; j < Dim; ++j) xs[v][j] = xs[0][j] + 0.5 * (xs[v][j] - xs[0][j]);
          fs[v] = objective(xs[v]);
        }
      }
    }
    order();
  }

  res.x = xs[0];
  res.f = fs[0];
  res.iterations = iter;
  res.converged = diameter() < tol;
  return res;
}

}  // namespace detail

inline FitResult sentinel_fit() {
  FitResult r;
  r.params = {0.0, 0.0, kSentinelMs};
  r.residual_norm = 0;
  r.converged = false;
  return r;
}

/// Fits (C, k, T1*) to one pixel's magnitude samples. Tries every polarity
/// restoration m in [0, min(N, m_max)], negating the first m samples and
/// minimizing the SSE against the signed model with Nelder-Mead; keeps the
/// lowest residual. The simplex runs in scale-normalized coordinates
/// (C / C0, k, T1* / 1000 ms), which makes the trajectory invariant to global
/// intensity scaling.
inline FitResult fit_pixel(std::span<const double> signal, std::span<const double> times_ms,
                           const FitConfig &cfg = {}) {
  const int n = static_cast<int>(signal.size());
  if (n < 3 || static_cast<int>(times_ms.size()) != n)
    throw std::invalid_argument("fit_pixel: need N >= 3 samples with matching times");
  double lo = signal[0], hi = signal[0];
  for (double s : signal) {
    if (std::isnan(s)) throw std::invalid_argument("fit_pixel: NaN in signal");
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  if (hi == 0.0 || (hi - lo) < 1e-9 * hi) return sentinel_fit();  // flat or all-zero

  const double c0 = hi;
  int arg_min = 0;
  for (int i = 1; i < n; ++i)
    if (std::abs(signal[i]) < std::abs(signal[arg_min])) arg_min = i;
  const double t1star0 =
      std::clamp(times_ms[arg_min] / std::numbers::ln2, cfg.t1star_min_ms, cfg.t1star_max_ms);

  constexpr double kT1Scale = 1000.0;  // ms per unit of the normalized T1* coordinate
  const int m_cap = cfg.m_max < 0 ? n : std::min(cfg.m_max, n);

  std::vector<double> restored(signal.begin(), signal.end());
  FitResult best = sentinel_fit();
  double best_sse = std::numeric_limits<double>::infinity();

  for (int m = 0; m <= m_cap; ++m) {
    if (m > 0) restored[m - 1] = -signal[m - 1];

    auto objective = [&](const std::array<double, 3> &u) {
      const double c = u[0] * c0;
      const double k = u[1];
      const double t1s = u[2] * kT1Scale;
      if (c < 0.0 || t1s < cfg.t1star_min_ms || t1s > cfg.t1star_max_ms)
        return std::numeric_limits<double>::infinity();
      double sse = 0;
      for (int i = 0; i < n; ++i) {
        const double r = restored[i] - c * (1.0 - k * std::exp(-times_ms[i] / t1s));
        sse += r * r;
      }
      return sse;
    };

    const std::array<double, 3> start{1.0, 2.0, t1star0 / kT1Scale};
    const std::array<double, 3> steps{0.1, 0.1, 0.1};
    const auto run = detail::nelder_mead<3>(objective, start, steps, cfg.simplex_tol, cfg.max_iter);
    if (run.f < best_sse) {
      best_sse = run.f;
      best.params = {run.x[0] * c0, run.x[1], run.x[2] * kT1Scale};
      best.polarity = m;
      best.converged = run.converged;
      best.iterations = run.iterations;
    }
  }

  if (!std::isfinite(best_sse)) return sentinel_fit();
  best.residual_norm = std::sqrt(best_sse);
  return best;
}

namespace detail {

/// Delta-method SD of T1 for one fitted pixel: sigma^2 = RSS / (N - 3),
/// Cov = sigma^2 (J^T J)^-1 with J the Jacobian of the signed model at the
/// fit, and sd_T1 = sqrt(g^T Cov g) for g = dT1/d(C,k,T1*) = (0, T1*, k-1).
/// Returns a negative value when J^T J is numerically singular.
inline double sd_t1_pixel(std::span<const double> signal, std::span<const double> times_ms,
                          const MolliParams &p, int polarity) {
  const int n = static_cast<int>(signal.size());
  double jtj[3][3] = {};
  double rss = 0;
  for (int i = 0; i < n; ++i) {
    const double e = std::exp(-times_ms[i] / p.t1star_ms);
    const double model = p.c * (1.0 - p.k * e);
    const double restored = (i < polarity ? -signal[i] : signal[i]);
    const double r = restored - model;
    rss += r * r;
    const double j[3] = {1.0 - p.k * e, -p.c * e,
                         -p.c * p.k * e * times_ms[i] / (p.t1star_ms * p.t1star_ms)};
    for (int a = 0; a < 3; ++a)
      for (int b = a; b < 3; ++b) jtj[a][b] += j[a] * j[b];
  }
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < a; ++b) jtj[a][b] = jtj[b][a];

  // inverse via adjugate, with a relative singularity guard
  const double det = jtj[0][0] * (jtj[1][1] * jtj[2][2] - jtj[1][2] * jtj[2][1]) -
                     jtj[0][1] * (jtj[1][0] * jtj[2][2] - jtj[1][2] * jtj[2][0]) +
                     jtj[0][2] * (jtj[1][0] * jtj[2][1] - jtj[1][1] * jtj[2][0]);
  const double diag_scale = std::abs(jtj[0][0] * jtj[1][1] * jtj[2][2]);
  if (!(std::abs(det) > 1e-14 * std::max(diag_scale, 1e-300))) return -1.0;

  auto cof = [&](int r0, int r1, int c0_, int c1) {
    return jtj[r0][c0_] * jtj[r1][c1] - jtj[r0][c1] * jtj[r1][c0_];
  };
  // (J^T J)^-1 entries needed for g = (0, g1, g2)
  const double inv11 = cof(0, 2, 0, 2) / det;
  const double inv12 = -cof(0, 2, 0, 1) / det;  // note transpose symmetry
  const double inv22 = cof(0, 1, 0, 1) / det;

  const int dof = n - 3;
  const double sigma2 = dof > 0 ? rss / dof : 0.0;
  const double g1 = p.t1star_ms, g2 = p.k - 1.0;
  const double var = sigma2 * (g1 * g1 * inv11 + 2.0 * g1 * g2 * inv12 + g2 * g2 * inv22);
  return var >= 0 ? std::sqrt(var) : -1.0;
}

}  // namespace detail

/// Per-pixel fitting SD of T1 by first-order error propagation. The sign
/// pattern is reconstructed from each pixel's fitted null point. Pixels whose
/// normal matrix is singular are demoted to non-converged sentinels in-place.
inline Grid sd_map(const ImageSeries &series, ParameterMaps &maps, int jobs = 1) {
  if (maps.width() != series.width || maps.height() != series.height)
    throw std::invalid_argument("sd_map: maps/series shape mismatch");
  const int n = series.count();
  Grid sd(series.width, series.height, kSentinelMs);
  parallel_chunks(0, series.height, jobs, [&](int y_lo, int y_hi) {
    std::vector<double> sig(n);
    for (int y = y_lo; y < y_hi; ++y) {
      for (int x = 0; x < series.width; ++x) {
        if (!maps.converged.at(x, y)) continue;
        for (int i = 0; i < n; ++i) sig[i] = series.images[i].at(x, y);
        const MolliParams p{maps.c.at(x, y), maps.k.at(x, y), maps.t1star_ms.at(x, y)};
        const int m = polarity_from_params(p, series.inversion_times_ms);
        const double v = detail::sd_t1_pixel(sig, series.inversion_times_ms, p, m);
        if (v < 0) {
          maps.converged.at(x, y) = 0;
          maps.t1_ms.at(x, y) = kSentinelMs;
        } else {
          sd.at(x, y) = v;
        }
      }
    }
  });
  maps.sd_t1_ms = sd;
  return sd;
}

/// Fits every pixel (or masked pixels) of a series and fills the parameter
/// maps, including the SD map. Per-pixel failures become sentinels.
inline ParameterMaps fit_series(const ImageSeries &series, const Mask *mask = nullptr,
                                const FitConfig &cfg = {}, int jobs = 1) {
  if (mask && !mask->grid.same_shape(ByteGrid(series.width, series.height)))
    throw std::invalid_argument("fit_series: mask shape mismatch");
  const int n = series.count();
  ParameterMaps maps(series.width, series.height);
  for (auto &v : maps.t1_ms.data) v = kSentinelMs;
  for (auto &v : maps.sd_t1_ms.data) v = kSentinelMs;
  for (auto &v : maps.t1star_ms.data) v = kSentinelMs;

  parallel_chunks(0, series.height, jobs, [&](int y_lo, int y_hi) {
    std::vector<double> sig(n);
    for (int y = y_lo; y < y_hi; ++y) {
      for (int x = 0; x < series.width; ++x) {
        if (mask && !mask->grid.at(x, y)) continue;
        for (int i = 0; i < n; ++i) sig[i] = series.images[i].at(x, y);
        const FitResult r = fit_pixel(sig, series.inversion_times_ms, cfg);
        maps.c.at(x, y) = r.params.c;
        maps.k.at(x, y) = r.params.k;
        maps.t1star_ms.at(x, y) = r.params.t1star_ms;
        maps.converged.at(x, y) = r.converged ? 1 : 0;
        maps.t1_ms.at(x, y) = r.converged ? derive_t1(r.params) : kSentinelMs;
      }
    }
  });
  sd_map(series, maps, jobs);
  return maps;
}

}  // namespace t1moco
