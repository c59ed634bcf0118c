// Copyright (c) 2026 t1moco contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "t1moco/grid.hpp"

namespace t1moco {

/// Sentinel stored in T1/sd maps for pixels whose fit did not converge.
inline constexpr double kSentinelMs = -1.0;

/// A MOLLI baseline image series: N images on a shared W x H grid, each
/// acquired at a distinct inversion time. Construction sorts by inversion
/// time; everything downstream assumes ascending times.
struct ImageSeries {
  int width = 0;
  int height = 0;
  double spacing_mm = 1.0;  // stored for provenance; no equation consumes it
  std::vector<double> inversion_times_ms;  // ascending, size N
  std::vector<Grid> images;                // size N

  int count() const { return static_cast<int>(images.size()); }
};

/// Validates invariants and sorts images by inversion time. Returns the
/// applied permutation (sorted index -> original index).
inline std::vector<int> finalize_series(ImageSeries &s) {
  const int n = s.count();
  if (n < 3) throw std::invalid_argument("series: need at least 3 images, got " + std::to_string(n));
  if (static_cast<int>(s.inversion_times_ms.size()) != n)
    throw std::invalid_argument("series: inversion time count does not match image count");
  if (s.width == 0 && s.height == 0) {  // adopt the shape of the data
    s.width = s.images[0].width;
    s.height = s.images[0].height;
  }
  if (s.width < 1 || s.height < 1) throw std::invalid_argument("series: empty image grid");
  for (const Grid &img : s.images) {
    if (img.width != s.width || img.height != s.height)
      throw std::invalid_argument("series: images disagree on width/height");
    if (!all_finite(img)) throw std::invalid_argument("series: non-finite intensity");
  }
  for (double t : s.inversion_times_ms)
    if (!(t > 0.0) || !std::isfinite(t))
      throw std::invalid_argument("series: inversion times must be finite and positive");

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(),
                   [&](int a, int b) { return s.inversion_times_ms[a] < s.inversion_times_ms[b]; });

  std::vector<double> t_sorted(n);
  std::vector<Grid> img_sorted(n);
  for (int i = 0; i < n; ++i) {
    t_sorted[i] = s.inversion_times_ms[perm[i]];
    img_sorted[i] = std::move(s.images[perm[i]]);
  }
  for (int i = 0; i + 1 < n; ++i)
    if (t_sorted[i] == t_sorted[i + 1])
      throw std::invalid_argument("series: duplicate inversion time " + std::to_string(t_sorted[i]));
  s.inversion_times_ms = std::move(t_sorted);
  s.images = std::move(img_sorted);
  return perm;
}

/// N dense displacement fields, one per image of a series.
struct DeformationSet {
  std::vector<VecField> fields;

  DeformationSet() = default;
  DeformationSet(int n, int w, int h) : fields(n, VecField(w, h)) {}

  int count() const { return static_cast<int>(fields.size()); }
  int width() const { return fields.empty() ? 0 : fields[0].width(); }
  int height() const { return fields.empty() ? 0 : fields[0].height(); }

  bool matches(const ImageSeries &s) const {
    return count() == s.count() && width() == s.width && height() == s.height;
  }
};

inline double max_displacement(const DeformationSet &defs) {
  double m = 0;
  for (const VecField &f : defs.fields) m = std::max(m, max_magnitude(f));
  return m;
}

/// Boolean pixel mask with a role label ("myocardium", ...).
struct Mask {
  ByteGrid grid;
  std::string role;

  int count_true() const {
    int c = 0;
    for (auto v : grid.data) c += (v != 0);
    return c;
  }
};

/// Per-pixel MOLLI fit output. T1 and sd carry kSentinelMs wherever the fit
/// did not converge; `converged` is authoritative.
struct ParameterMaps {
  Grid c;          // signal scale, scanner units
  Grid k;          // dimensionless recovery factor
  Grid t1star_ms;  // apparent relaxation time
  Grid t1_ms;      // (k - 1) * T1*
  Grid sd_t1_ms;   // fitting SD of T1
  ByteGrid converged;

  ParameterMaps() = default;
  ParameterMaps(int w, int h)
      : c(w, h), k(w, h), t1star_ms(w, h), t1_ms(w, h), sd_t1_ms(w, h), converged(w, h) {}

  int width() const { return c.width; }
  int height() const { return c.height; }

  double converged_fraction() const {
    if (converged.data.empty()) return 0.0;
    double s = 0;
    for (auto v : converged.data) s += (v != 0);
    return s / static_cast<double>(converged.data.size());
  }
};

/// Warped series I o phi plus non-owning provenance links.
struct WarpedSeries {
  std::vector<Grid> images;
  const ImageSeries *source = nullptr;
  const DeformationSet *defs = nullptr;

  int count() const { return static_cast<int>(images.size()); }
  int width() const { return images.empty() ? 0 : images[0].width; }
  int height() const { return images.empty() ? 0 : images[0].height; }
};

/// Weights of the composite registration objective.
struct LossWeights {
  double pca = 0;
  double reg = 0;
  double cyclic = 0;
  double relax = 0;
  double nmi = 0;

  void validate() const {
    for (double w : {pca, reg, cyclic, relax, nmi})
      if (!std::isfinite(w) || w < 0) throw std::invalid_argument("loss weights must be finite and >= 0");
  }
};

}  // namespace t1moco
