// Copyright (c) 2026 t1moco contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace t1moco {

/// Eigendecomposition of a small symmetric matrix. Eigenvalues descending;
/// eigenvectors stored column-wise: vector(i, k) is component i of the
/// eigenvector for eigenvalue k.
struct SymmetricEigen {
  int n = 0;
  std::vector<double> values;
  std::vector<double> vectors;  // row-major n x n

  double vector(int i, int k) const { return vectors[static_cast<std::size_t>(i) * n + k]; }
};

/// Cyclic Jacobi on a row-major symmetric n x n matrix. Terminates when the
/// off-diagonal Frobenius norm drops below 1e-12 or after 100 sweeps, which
/// is plenty at the matrix sizes used here (N <= a few dozen).
inline SymmetricEigen jacobi_eigen(const std::vector<double> &matrix, int n) {
  if (n <= 0 || static_cast<int>(matrix.size()) != n * n)
    throw std::invalid_argument("jacobi_eigen: bad matrix size");

  std::vector<double> a = matrix;
  std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;

  auto A = [&](int i, int j) -> double & { return a[static_cast<std::size_t>(i) * n + j]; };
  auto V = [&](int i, int j) -> double & { return v[static_cast<std::size_t>(i) * n + j]; };

  auto off_norm = [&] {
    double s = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) s += 2.0 * A(i, j) * A(i, j);
    return std::sqrt(s);
  };

  constexpr double kOffTol = 1e-12;
  constexpr int kMaxSweeps = 100;
  int sweep = 0;
  while (off_norm() > kOffTol) {
    if (++sweep > kMaxSweeps) throw std::runtime_error("jacobi_eigen: no convergence in 100 sweeps");
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = A(p, q);
        if (apq == 0.0) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);

        const double app = A(p, p), aqq = A(q, q);
        A(p, p) = app - t * apq;
        A(q, q) = aqq + t * apq;
        A(p, q) = A(q, p) = 0.0;
        for (int i = 0; i < n; ++i) {
          if (i == p || i == q) continue;
          const double aip = A(i, p), aiq = A(i, q);
          A(i, p) = A(p, i) = aip - s * (aiq + tau * aip);
          A(i, q) = A(q, i) = aiq + s * (aip - tau * aiq);
        }
        for (int i = 0; i < n; ++i) {
          const double vip = V(i, p), viq = V(i, q);
          V(i, p) = vip - s * (viq + tau * vip);
          V(i, q) = viq + s * (vip - tau * viq);
        }
      }
    }
  }

  SymmetricEigen eig;
  eig.n = n;
  eig.values.resize(n);
  for (int i = 0; i < n; ++i) eig.values[i] = A(i, i);

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return eig.values[x] > eig.values[y]; });

  std::vector<double> values_sorted(n);
  eig.vectors.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int k = 0; k < n; ++k) {
    values_sorted[k] = eig.values[order[k]];
    for (int i = 0; i < n; ++i) eig.vectors[static_cast<std::size_t>(i) * n + k] = V(i, order[k]);
  }
  eig.values = std::move(values_sorted);
  return eig;
}

}  // namespace t1moco
