// Copyright (c) 2026 t1moco contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace t1moco {

/// Dense row-major H x W scalar field.
template <typename T>
struct GridT {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  GridT() = default;
  GridT(int w, int h, T fill = T{})
      : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  T &at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  const T &at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const GridT &o) const { return width == o.width && height == o.height; }

  void fill(T v) { data.assign(data.size(), v); }
};

using Grid = GridT<double>;
using ByteGrid = GridT<std::uint8_t>;

/// One dense displacement field; dx/dy are stored as separate planes, in pixels.
struct VecField {
  Grid dx, dy;

  VecField() = default;
  VecField(int w, int h) : dx(w, h), dy(w, h) {}

  int width() const { return dx.width; }
  int height() const { return dx.height; }
  bool same_shape(const VecField &o) const { return dx.same_shape(o.dx); }

  void fill(double v) {
    dx.fill(v);
    dy.fill(v);
  }
};

inline bool all_finite(const Grid &g) {
  for (double v : g.data)
    if (!std::isfinite(v)) return false;
  return true;
}

inline double max_abs(const Grid &g) {
  double m = 0;
  for (double v : g.data) m = std::max(m, std::abs(v));
  return m;
}

inline double max_magnitude(const VecField &f) {
  double m = 0;
  for (std::size_t i = 0; i < f.dx.data.size(); ++i)
    m = std::max(m, std::hypot(f.dx.data[i], f.dy.data[i]));
  return m;
}

}  // namespace t1moco
