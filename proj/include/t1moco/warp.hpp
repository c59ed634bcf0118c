// Copyright (c) 2026 t1moco contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <stdexcept>

#include "t1moco/parallel.hpp"
#include "t1moco/types.hpp"

// Pull/backward warping: output(x, y) samples the input at (x + dx, y + dy).
// Bilinear interpolation with clamp-to-edge; samples pushed outside the grid
// stick to the border pixel and contribute zero gradient to the field there.

namespace t1moco {

namespace detail {

struct BilinearTap {
  int x0, x1, y0, y1;
  double fx, fy;     // fractional weights toward x1/y1
  bool in_x, in_y;   // sample coordinate strictly inside [0, W-1] / [0, H-1]
};

inline BilinearTap make_tap(double sx, double sy, int w, int h) {
  BilinearTap t;
  t.in_x = sx > 0.0 && sx < w - 1;
  t.in_y = sy > 0.0 && sy < h - 1;
  sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
  sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
  t.x0 = static_cast<int>(std::floor(sx));
  t.y0 = static_cast<int>(std::floor(sy));
  if (t.x0 > w - 2) t.x0 = w - 2;  // keep x1 in range; exact right edge gets fx = 1
  if (t.y0 > h - 2) t.y0 = h - 2;
  if (w == 1) t.x0 = 0;
  if (h == 1) t.y0 = 0;
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.y1 = std::min(t.y0 + 1, h - 1);
  t.fx = sx - t.x0;
  t.fy = sy - t.y0;
  return t;
}

}  // namespace detail

/// Bilinear sample of `img` at (x, y) with clamp-to-edge boundary. The blend
/// uses the two-product form, which is exact at both endpoints: sampling at
/// integer coordinates reproduces the stored value bit for bit.
inline double sample_bilinear(const Grid &img, double sx, double sy) {
  const auto t = detail::make_tap(sx, sy, img.width, img.height);
  const double v00 = img.at(t.x0, t.y0), v10 = img.at(t.x1, t.y0);
  const double v01 = img.at(t.x0, t.y1), v11 = img.at(t.x1, t.y1);
  const double top = (1.0 - t.fx) * v00 + t.fx * v10;
  const double bot = (1.0 - t.fx) * v01 + t.fx * v11;
  return (1.0 - t.fy) * top + t.fy * bot;
}

inline Grid warp_image(const Grid &img, const VecField &field) {
  if (!field.dx.same_shape(img)) throw std::invalid_argument("warp_image: shape mismatch");
  Grid out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out.at(x, y) = sample_bilinear(img, x + field.dx.at(x, y), y + field.dy.at(x, y));
  return out;
}

inline WarpedSeries warp_series(const ImageSeries &series, const DeformationSet &defs, int jobs = 1) {
  if (!defs.matches(series)) throw std::invalid_argument("warp_series: shape mismatch");
  WarpedSeries w;
  w.images.resize(series.count());
  w.source = &series;
  w.defs = &defs;
  parallel_chunks(0, series.count(), jobs, [&](int lo, int hi) {
    for (int i = lo; i < hi; ++i) w.images[i] = warp_image(series.images[i], defs.fields[i]);
  });
  return w;
}

/// dL/dfield for L with dL/doutput = `upstream`. Each output pixel depends
/// only on its own displacement vector, so this is a per-pixel product of the
/// upstream value with the spatial derivative of the bilinear sample.
inline VecField warp_backward(const Grid &img, const VecField &field, const Grid &upstream) {
  if (!field.dx.same_shape(img) || !upstream.same_shape(img))
    throw std::invalid_argument("warp_backward: shape mismatch");
  VecField grad(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double u = upstream.at(x, y);
      if (u == 0.0) continue;
      const auto t = detail::make_tap(x + field.dx.at(x, y), y + field.dy.at(x, y), img.width, img.height);
      const double v00 = img.at(t.x0, t.y0), v10 = img.at(t.x1, t.y0);
      const double v01 = img.at(t.x0, t.y1), v11 = img.at(t.x1, t.y1);
      if (t.in_x) {
        const double dx_deriv = (1.0 - t.fy) * (v10 - v00) + t.fy * (v11 - v01);
        grad.dx.at(x, y) = u * dx_deriv;
      }
      if (t.in_y) {
        const double dy_deriv = (1.0 - t.fx) * (v01 - v00) + t.fx * (v11 - v10);
        grad.dy.at(x, y) = u * dy_deriv;
      }
    }
  }
  return grad;
}

}  // namespace t1moco
