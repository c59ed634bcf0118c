// Copyright (c) 2026 t1moco contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace t1moco {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First-moment / second-moment adaptive gradient descent with bias
// correction. State is per-coordinate; the parameter vector lives with the
// caller and is updated in place.
class Adam {
 public:
  explicit Adam(std::size_t n, AdamConfig cfg = {}) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {
    if (!(cfg.lr > 0)) throw std::invalid_argument("Adam: lr must be positive");
    if (!(cfg.beta1 >= 0 && cfg.beta1 < 1) || !(cfg.beta2 >= 0 && cfg.beta2 < 1))
      throw std::invalid_argument("Adam: betas must lie in [0, 1)");
  }

  void step(std::span<double> params, std::span<const double> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size())
      throw std::invalid_argument("Adam: size mismatch");
    for (double g : grad)
      if (!std::isfinite(g)) throw std::invalid_argument("Adam: non-finite gradient");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < m_.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      params[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }

  void reset() {
    t_ = 0;
    std::fill(m_.begin(), m_.end(), 0.0);
    std::fill(v_.begin(), v_.end(), 0.0);
  }

  long steps() const { return t_; }
  const AdamConfig &config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

struct GradCheckReport {
  double max_rel_err = 0;
  double max_abs_err = 0;
  std::size_t worst_index = 0;
  double fd_at_worst = 0;
  double analytic_at_worst = 0;
};

/// Central-difference check of an analytic gradient at selected coordinates.
/// Relative error is |fd - g| / max(|fd|, floor), normalizing against the
/// numeric reference; `floor` keeps coordinates where the true derivative is
/// tiny from dominating. The point is perturbed in place and restored
/// bit-exactly.
template <typename F>
GradCheckReport check_gradient(F &&f, std::span<double> x, std::span<const double> analytic,
                               std::span<const std::size_t> indices, double step = 1e-5,
                               double floor = 1e-8) {
  if (analytic.size() != x.size()) throw std::invalid_argument("check_gradient: size mismatch");
  GradCheckReport rep;
  for (std::size_t idx : indices) {
    if (idx >= x.size()) throw std::out_of_range("check_gradient: index out of range");
    const double saved = x[idx];
    const double h = step * std::max(1.0, std::abs(saved));
    x[idx] = saved + h;
    const double f_plus = f(std::span<const double>(x.data(), x.size()));
    x[idx] = saved - h;
    const double f_minus = f(std::span<const double>(x.data(), x.size()));
    x[idx] = saved;
    const double fd = (f_plus - f_minus) / (2.0 * h);
    const double a = analytic[idx];
    const double abs_err = std::abs(fd - a);
    const double rel_err = abs_err / std::max(std::abs(fd), floor);
    if (rel_err > rep.max_rel_err) {
      rep.max_rel_err = rel_err;
      rep.max_abs_err = abs_err;
      rep.worst_index = idx;
      rep.fd_at_worst = fd;
      rep.analytic_at_worst = a;
    }
  }
  return rep;
}

/// Convenience overload checking every coordinate.
template <typename F>
GradCheckReport check_gradient(F &&f, std::span<double> x, std::span<const double> analytic,
                               double step = 1e-5, double floor = 1e-8) {
  std::vector<std::size_t> all(x.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return check_gradient(f, x, analytic, std::span<const std::size_t>(all), step, floor);
}

}  // namespace t1moco
