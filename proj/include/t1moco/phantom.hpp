// Copyright (c) 2026 t1moco contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "t1moco/relaxometry.hpp"
#include "t1moco/types.hpp"
#include "t1moco/warp.hpp"

// Synthetic MOLLI phantom: a concentric-ring heart (blood pool disk inside a
// myocardial annulus) with per-tissue (T1, C, k), Gaussian-softened tissue
// boundaries, a smooth proton-density texture shared by all inversion times,
// seeded smooth random per-image motion, and optional noise. The corrupted
// series is exactly the clean series pull-warped by the emitted truth motion,
// so registration quality can be scored directly.
//
// The texture matters: piecewise-constant tissue gives intensity gradients
// only at region boundaries, so a registration loss can reshape regions
// almost for free (the aperture problem). The shared modulation of C anchors
// gradients everywhere, the way receive-coil profiles and trabeculation do in
// acquired MOLLI images, and makes misalignment strictly more expensive than
// any region-reshaping shortcut.

namespace t1moco::phantom {

struct TissueParams {
  double t1_ms = 0;
  double c = 0;  // proton-density scale
  double k = 0;  // recovery factor, > 1
};

struct PhantomSpec {
  int width = 128;
  int height = 128;
  std::vector<double> inversion_times_ms = default_inversion_times();
  TissueParams blood{1800.0, 1.0, 2.0};
  TissueParams myocardium{1200.0, 0.85, 2.0};
  TissueParams background{300.0, 0.25, 2.0};
  double blood_radius_frac = 0.15;  // of min(W, H)
  double myo_radius_frac = 0.28;
  double tissue_smooth_px = 1.5;    // boundary softening
  double texture_amp = 0.25;        // proton-density modulation, fraction of C
  double texture_smooth_px = 3.0;   // texture correlation length
  double motion_amplitude_px = 0;   // peak |phi| per moving image
  double motion_smooth_px = 8.0;
  double noise_sigma = 0;           // Gaussian sigma as a fraction of max tissue C
  std::uint64_t seed = 0;

  /// MOLLI 5(3)3-like spread: three inversion groups over [100, 3500] ms.
  static std::vector<double> default_inversion_times() {
    return {100, 180, 260, 950, 1030, 1110, 1800, 1880, 1960, 2650, 3500};
  }
};

struct PhantomTruth {
  ParameterMaps maps;        // ground-truth parameters, converged everywhere
  DeformationSet motion;     // corrupting motion, image 0 static
  Mask myocardium;           // hard annulus mask
  ImageSeries clean;         // aligned, noiseless
  ImageSeries corrupted;     // warp(clean, motion) + noise; registration input
};

namespace detail {

/// Separable Gaussian blur, replicate boundary. sigma <= 0 is the identity.
inline Grid gaussian_smooth(const Grid &src, double sigma) {
  if (sigma <= 0) return src;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double &k : kernel) k /= sum;

  const int w = src.width, h = src.height;
  Grid tmp(w, h), out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * src.at(std::clamp(x + i, 0, w - 1), y);
      tmp.at(x, y) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * tmp.at(x, std::clamp(y + i, 0, h - 1));
      out.at(x, y) = acc;
    }
  return out;
}

/// Smooth taper from 0 at the image border to 1 in the interior; keeps the
/// truth motion from dragging undefined content across the frame edge.
inline double border_taper(int x, int y, int w, int h, double margin) {
  const double d = std::min(std::min<double>(x, w - 1 - x), std::min<double>(y, h - 1 - y));
  if (d >= margin) return 1.0;
  const double t = d / margin;
  return t * t * (3.0 - 2.0 * t);
}

}  // namespace detail

/// Per-pixel smoothness-energy budget implied by the motion construction: a
/// field with peak amplitude A after Gaussian smoothing at scale sigma has
/// forward-difference energy well below 4 A^2 / sigma^2 (the white-noise
/// derivative-to-value variance ratio 1/(2 sigma^2), times four difference
/// terms, with the peak-vs-rms margin as safety).
inline double motion_energy_budget(double amplitude_px, double smooth_px) {
  if (amplitude_px <= 0) return 0;
  const double s = std::max(smooth_px, 1.0);
  return 4.0 * amplitude_px * amplitude_px / (s * s);
}

inline PhantomTruth generate(const PhantomSpec &spec) {
  const int w = spec.width, h = spec.height;
  const int n = static_cast<int>(spec.inversion_times_ms.size());
  if (w < 8 || h < 8) throw std::invalid_argument("phantom: image too small");
  if (n < 3) throw std::invalid_argument("phantom: need at least 3 inversion times");
  if (spec.motion_amplitude_px < 0 || spec.noise_sigma < 0)
    throw std::invalid_argument("phantom: negative amplitude or noise");
  if (spec.texture_amp < 0 || spec.texture_amp >= 1.0)
    throw std::invalid_argument("phantom: texture_amp must be in [0, 1)");
  for (const TissueParams *t : {&spec.blood, &spec.myocardium, &spec.background}) {
    if (!(t->t1_ms > 0) || !(t->c > 0) || !(t->k > 1))
      throw std::invalid_argument("phantom: tissue needs T1 > 0, C > 0, k > 1");
  }
  const double rmin = std::min(w, h);
  const double r_blood = spec.blood_radius_frac * rmin;
  const double r_myo = spec.myo_radius_frac * rmin;
  if (!(r_myo > r_blood) || !(r_blood > 0) || r_myo > rmin / 2.0)
    throw std::invalid_argument("phantom: degenerate ring geometry");

  PhantomTruth out;
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;

  // hard tissue maps, then soften boundaries
  Grid t1(w, h), cmap(w, h), kmap(w, h);
  out.myocardium.grid = ByteGrid(w, h, 0);
  out.myocardium.role = "myocardium";
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double r = std::hypot(x - cx, y - cy);
      const TissueParams &t =
          r <= r_blood ? spec.blood : (r <= r_myo ? spec.myocardium : spec.background);
      t1.at(x, y) = t.t1_ms;
      cmap.at(x, y) = t.c;
      kmap.at(x, y) = t.k;
      if (r > r_blood && r <= r_myo) out.myocardium.grid.at(x, y) = 1;
    }
  if (out.myocardium.count_true() == 0)
    throw std::invalid_argument("phantom: zero-area myocardium");
  t1 = detail::gaussian_smooth(t1, spec.tissue_smooth_px);
  cmap = detail::gaussian_smooth(cmap, spec.tissue_smooth_px);
  kmap = detail::gaussian_smooth(kmap, spec.tissue_smooth_px);

  // shared proton-density texture, peak-normalized like the motion fields
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  if (spec.texture_amp > 0) {
    Grid tex(w, h);
    for (double &v : tex.data) v = gauss(rng);
    tex = detail::gaussian_smooth(tex, spec.texture_smooth_px);
    double peak = 0;
    for (double v : tex.data) peak = std::max(peak, std::abs(v));
    const double scale = peak > 0 ? spec.texture_amp / peak : 0.0;
    for (long p = 0; p < static_cast<long>(w) * h; ++p)
      cmap.data[p] *= 1.0 + scale * tex.data[p];
  }

  out.maps = ParameterMaps(w, h);
  out.maps.c = cmap;
  out.maps.k = kmap;
  out.maps.t1_ms = t1;
  for (long p = 0; p < static_cast<long>(w) * h; ++p) {
    out.maps.t1star_ms.data[p] = t1.data[p] / (kmap.data[p] - 1.0);
    out.maps.sd_t1_ms.data[p] = 0.0;
    out.maps.converged.data[p] = 1;
  }

  // aligned clean series
  out.clean.width = w;
  out.clean.height = h;
  out.clean.inversion_times_ms = spec.inversion_times_ms;
  for (int i = 0; i < n; ++i) {
    Grid img(w, h);
    const double t = spec.inversion_times_ms[i];
    for (long p = 0; p < static_cast<long>(w) * h; ++p) {
      const double e = std::exp(-t / out.maps.t1star_ms.data[p]);
      img.data[p] = std::abs(cmap.data[p] * (1.0 - kmap.data[p] * e));
    }
    out.clean.images.push_back(std::move(img));
  }
  finalize_series(out.clean);

  // seeded smooth motion; image 0 is the static anchor
  out.motion = DeformationSet(n, w, h);
  const double margin = std::max(2.0 * spec.motion_smooth_px, 4.0);
  for (int i = 1; i < n && spec.motion_amplitude_px > 0; ++i) {
    Grid nx(w, h), ny(w, h);
    for (double &v : nx.data) v = gauss(rng);
    for (double &v : ny.data) v = gauss(rng);
    nx = detail::gaussian_smooth(nx, spec.motion_smooth_px);
    ny = detail::gaussian_smooth(ny, spec.motion_smooth_px);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double taper = detail::border_taper(x, y, w, h, margin);
        nx.at(x, y) *= taper;
        ny.at(x, y) *= taper;
      }
    double peak = 0;
    for (long p = 0; p < static_cast<long>(w) * h; ++p)
      peak = std::max(peak, std::hypot(nx.data[p], ny.data[p]));
    const double scale = peak > 0 ? spec.motion_amplitude_px / peak : 0.0;
    for (long p = 0; p < static_cast<long>(w) * h; ++p) {
      out.motion.fields[i].dx.data[p] = nx.data[p] * scale;
      out.motion.fields[i].dy.data[p] = ny.data[p] * scale;
    }
  }

  // corrupted = warp(clean, motion), then noise
  out.corrupted.width = w;
  out.corrupted.height = h;
  out.corrupted.inversion_times_ms = spec.inversion_times_ms;
  for (int i = 0; i < n; ++i)
    out.corrupted.images.push_back(warp_image(out.clean.images[i], out.motion.fields[i]));
  if (spec.noise_sigma > 0) {
    const double c_ref =
        std::max({spec.blood.c, spec.myocardium.c, spec.background.c});
    const double sigma = spec.noise_sigma * c_ref;
    for (int i = 0; i < n; ++i)
      for (double &v : out.corrupted.images[i].data)
        v = std::abs(v + sigma * gauss(rng));  // magnitude detection folds the noise
  }
  finalize_series(out.corrupted);
  return out;
}

/// Pointwise inverse of a pull-warp displacement field by fixed-point
/// iteration: psi(x) = -phi(x + psi(x)). Converges for smooth fields with
/// Lipschitz constant < 1.
inline VecField invert_field(const VecField &field, int max_iter = 60, double tol = 1e-9) {
  const int w = field.width(), h = field.height();
  VecField psi(w, h);
  for (long p = 0; p < static_cast<long>(w) * h; ++p) {
    psi.dx.data[p] = -field.dx.data[p];
    psi.dy.data[p] = -field.dy.data[p];
  }
  for (int it = 0; it < max_iter; ++it) {
    double delta = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double sx = x + psi.dx.at(x, y);
        const double sy = y + psi.dy.at(x, y);
        const double nx = -sample_bilinear(field.dx, sx, sy);
        const double ny = -sample_bilinear(field.dy, sx, sy);
        delta = std::max({delta, std::abs(nx - psi.dx.at(x, y)), std::abs(ny - psi.dy.at(x, y))});
        psi.dx.at(x, y) = nx;
        psi.dy.at(x, y) = ny;
      }
    if (delta < tol) break;
  }
  return psi;
}

struct DisplacementError {
  double mean_px = 0;
  double max_px = 0;
};

/// Endpoint error of the estimated correction against the corrupting truth
/// motion: |phi_hat(x) + phi_truth(x + phi_hat(x))| per pixel, the deviation
/// of the corruption-after-correction round trip from the identity. Zero
/// exactly when the estimate undoes the truth; the identity estimate scores
/// the truth magnitude itself. Restricted to `mask` if given.
inline DisplacementError displacement_error(const DeformationSet &estimated,
                                            const DeformationSet &truth,
                                            const Mask *mask = nullptr) {
  if (estimated.count() != truth.count() || estimated.width() != truth.width() ||
      estimated.height() != truth.height())
    throw std::invalid_argument("displacement_error: shape mismatch");
  const int n = truth.count(), w = truth.width(), h = truth.height();
  if (mask && (mask->grid.width != w || mask->grid.height != h))
    throw std::invalid_argument("displacement_error: mask shape mismatch");

  DisplacementError err;
  long count = 0;
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (mask && !mask->grid.at(x, y)) continue;
        const double ex = estimated.fields[i].dx.at(x, y);
        const double ey = estimated.fields[i].dy.at(x, y);
        const double rx = ex + sample_bilinear(truth.fields[i].dx, x + ex, y + ey);
        const double ry = ey + sample_bilinear(truth.fields[i].dy, x + ex, y + ey);
        const double e = std::hypot(rx, ry);
        sum += e;
        err.max_px = std::max(err.max_px, e);
        ++count;
      }
  }
  if (count == 0) throw std::invalid_argument("displacement_error: empty mask");
  err.mean_px = sum / static_cast<double>(count);
  return err;
}

}  // namespace t1moco::phantom
