// Copyright (c) 2026 t1moco contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "t1moco/losses.hpp"
#include "t1moco/optimizer.hpp"
#include "t1moco/relaxometry.hpp"
#include "t1moco/types.hpp"
#include "t1moco/warp.hpp"

// Registration drivers. All scenarios optimize dense per-image displacement
// fields with Adam from a zero initialization:
//   raw        no optimization, identity fields
//   vm-p       pairwise to the first image, NMI + smoothness, phi_1 frozen
//   vm-g       groupwise to the running mean image, NMI + smoothness + cyclic
//   pca        eigenvalue concentration + smoothness + cyclic
//   pca-relax  pca warm start, then alternation with frozen relaxometry fits

namespace t1moco {

enum class Scenario { raw, vm_p, vm_g, pca, pca_relax };

inline const char *scenario_name(Scenario s) {
  switch (s) {
    case Scenario::raw: return "raw";
    case Scenario::vm_p: return "vm-p";
    case Scenario::vm_g: return "vm-g";
    case Scenario::pca: return "pca";
    case Scenario::pca_relax: return "pca-relax";
  }
  return "?";
}

inline Scenario parse_scenario(const std::string &name) {
  for (Scenario s : {Scenario::raw, Scenario::vm_p, Scenario::vm_g, Scenario::pca, Scenario::pca_relax})
    if (name == scenario_name(s)) return s;
  throw std::invalid_argument("unknown scenario '" + name + "'");
}

/// Reduced-budget fit used for the alternation refits inside pca-relax. The
/// final quality maps are always refit with the full FitConfig afterwards;
/// these interim maps only steer the relax term, so a coarser simplex and a
/// capped polarity search buy a large speedup at no accuracy cost that
/// survives the final fit.
inline FitConfig alternation_fit_config() {
  FitConfig cfg;
  cfg.max_iter = 120;
  cfg.simplex_tol = 1e-5;
  cfg.m_max = 6;
  return cfg;
}

struct RegistrationConfig {
  Scenario scenario = Scenario::pca_relax;
  LossWeights weights{1.0, 10.0, 0.1, 10.0, 10.0};  // pca, reg, cyclic, relax, nmi
  double lr = 0.1;                // Adam step in pixels; tuned on the phantom
  int max_iter = 500;
  int patience = 30;              // early-stop window
  double min_rel_improvement = 1e-6;
  int refit_period = 25;          // R, alternation period of pca-relax
  int warmup_iter = 100;          // pca-only iterations before relax engages
  FitConfig refit = alternation_fit_config();
  NmiConfig nmi;
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const {
    weights.validate();
    if (max_iter < 1) throw std::invalid_argument("registration: max_iter must be >= 1");
    if (refit_period < 1) throw std::invalid_argument("registration: refit_period must be >= 1");
    if (patience < 1) throw std::invalid_argument("registration: patience must be >= 1");
    if (!(lr > 0)) throw std::invalid_argument("registration: lr must be positive");
    if (warmup_iter < 0) throw std::invalid_argument("registration: warmup_iter must be >= 0");
  }
};

struct IterationTrace {
  double total = 0;
  double pca = 0, reg = 0, cyclic = 0, relax = 0, nmi = 0;  // unweighted terms
};

struct RegistrationReport {
  Scenario scenario = Scenario::raw;
  DeformationSet defs;
  std::vector<IterationTrace> trace;
  int iterations = 0;
  double wall_s = 0;
  CorrelationSpectrum before, after;
};

namespace detail {

inline void pack_defs(const DeformationSet &defs, std::vector<double> &flat) {
  flat.clear();
  for (const VecField &f : defs.fields) {
    flat.insert(flat.end(), f.dx.data.begin(), f.dx.data.end());
    flat.insert(flat.end(), f.dy.data.begin(), f.dy.data.end());
  }
}

inline void unpack_defs(const std::vector<double> &flat, DeformationSet &defs) {
  std::size_t off = 0;
  for (VecField &f : defs.fields) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), f.dx.size(), f.dx.data.begin());
    off += f.dx.size();
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), f.dy.size(), f.dy.data.begin());
    off += f.dy.size();
  }
}

inline std::string describe_terms(int iter, const TotalLoss &tl) {
  std::ostringstream os;
  os << "iteration " << iter << ": total=" << tl.total << " pca=" << tl.pca << " reg=" << tl.reg
     << " cyclic=" << tl.cyclic << " relax=" << tl.relax << " nmi=" << tl.nmi;
  return os.str();
}

// Shared Adam loop. `loss_fn(warped, defs, iter)` returns the TotalLoss for
// the scenario; `objective_epoch(iter)` labels phases of a changing objective
// (pca-relax warmup / refits) so improvement bookkeeping resets at each
// switch instead of stopping early against a stale baseline. The defs that
// achieved the best total within the final epoch are returned.
template <typename LossFn, typename EpochFn>
void run_adam_loop(const ImageSeries &series, DeformationSet &defs,
                   std::vector<IterationTrace> &trace, const RegistrationConfig &cfg,
                   LossFn &&loss_fn, EpochFn &&objective_epoch) {
  std::vector<double> params;
  pack_defs(defs, params);
  Adam adam(params.size(), AdamConfig{cfg.lr});
  std::vector<double> grad(params.size());

  double best = std::numeric_limits<double>::infinity();
  DeformationSet best_defs = defs;
  int streak = 0;
  long epoch = objective_epoch(0);

  for (int it = 0; it < cfg.max_iter; ++it) {
    unpack_defs(params, defs);
    const WarpedSeries warped = warp_series(series, defs, cfg.jobs);
    const long e = objective_epoch(it);
    if (e != epoch) {  // objective changed; restart the improvement baseline
      epoch = e;
      best = std::numeric_limits<double>::infinity();
      streak = 0;
    }
    const TotalLoss tl = loss_fn(warped, defs, it);
    if (!std::isfinite(tl.total))
      throw std::runtime_error("registration diverged at " + describe_terms(it, tl));
    trace.push_back({tl.total, tl.pca, tl.reg, tl.cyclic, tl.relax, tl.nmi});

    if (tl.total < best) {
      const double improve = (best - tl.total) / std::max(std::abs(best), 1e-30);
      streak = std::isfinite(best) && improve <= cfg.min_rel_improvement ? streak + 1 : 0;
      best = tl.total;
      best_defs = defs;
    } else {
      ++streak;
    }
    if (streak >= cfg.patience) break;

    pack_defs(tl.grad, grad);
    for (double g : grad)
      if (!std::isfinite(g))
        throw std::runtime_error("non-finite gradient at " + describe_terms(it, tl));
    adam.step(params, grad);
  }
  defs = best_defs;
}

inline ImageSeries as_series(const std::vector<Grid> &images, const std::vector<double> &times,
                             int w, int h) {
  ImageSeries s;
  s.width = w;
  s.height = h;
  s.inversion_times_ms = times;
  s.images = images;
  return s;
}

}  // namespace detail

/// vm-p: every image i >= 2 is registered to the raw first image with NMI +
/// smoothness; the first image's field stays identity.
inline RegistrationReport register_pairwise(const ImageSeries &series, const RegistrationConfig &cfg) {
  if (cfg.scenario != Scenario::vm_p)
    throw std::invalid_argument("register_pairwise: scenario must be vm-p");
  cfg.validate();
  if (series.count() < 2) throw std::invalid_argument("register_pairwise: need N >= 2");
  const auto t0 = std::chrono::steady_clock::now();

  const int n = series.count(), w = series.width, h = series.height;
  ImageSeries moving;
  moving.width = w;
  moving.height = h;
  moving.inversion_times_ms.assign(series.inversion_times_ms.begin() + 1,
                                   series.inversion_times_ms.end());
  moving.images.assign(series.images.begin() + 1, series.images.end());

  const Grid &tmpl = series.images[0];
  LossWeights eff;
  eff.nmi = cfg.weights.nmi;
  eff.reg = cfg.weights.reg;

  DeformationSet sub(n - 1, w, h);
  RegistrationReport rep;
  rep.scenario = cfg.scenario;
  detail::run_adam_loop(
      moving, sub, rep.trace, cfg,
      [&](const WarpedSeries &warped, const DeformationSet &defs, int) {
        return total_loss(warped, defs, nullptr, eff, &tmpl, cfg.nmi, cfg.jobs);
      },
      [](int) { return 0L; });

  rep.defs = DeformationSet(n, w, h);
  for (int i = 1; i < n; ++i) rep.defs.fields[i] = sub.fields[i - 1];
  rep.iterations = static_cast<int>(rep.trace.size());
  rep.before = correlation_spectrum(series.images);
  rep.after = correlation_spectrum(warp_series(series, rep.defs, cfg.jobs).images);
  rep.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// vm-g: groupwise against the mean warped image, recomputed every iteration.
/// The template is a function of the optimized fields, so the NMI gradient
/// includes the template path; dropping it leaves a partial gradient that
/// measurably under-converges.
inline RegistrationReport register_groupwise_template(const ImageSeries &series,
                                                      const RegistrationConfig &cfg) {
  if (cfg.scenario != Scenario::vm_g)
    throw std::invalid_argument("register_groupwise_template: scenario must be vm-g");
  cfg.validate();
  if (series.count() < 2) throw std::invalid_argument("register_groupwise_template: need N >= 2");
  const auto t0 = std::chrono::steady_clock::now();
  const int n = series.count(), w = series.width, h = series.height;

  LossWeights eff;
  eff.nmi = cfg.weights.nmi;
  eff.reg = cfg.weights.reg;
  eff.cyclic = cfg.weights.cyclic;

  RegistrationReport rep;
  rep.scenario = cfg.scenario;
  rep.defs = DeformationSet(n, w, h);
  detail::run_adam_loop(
      series, rep.defs, rep.trace, cfg,
      [&](const WarpedSeries &warped, const DeformationSet &defs, int) {
        Grid tmpl(w, h, 0.0);
        for (const Grid &img : warped.images)
          for (long p = 0; p < static_cast<long>(tmpl.data.size()); ++p)
            tmpl.data[p] += img.data[p] / n;
        return total_loss(warped, defs, nullptr, eff, &tmpl, cfg.nmi, cfg.jobs,
                          /*nmi_mean_template=*/true);
      },
      [](int) { return 0L; });

  rep.iterations = static_cast<int>(rep.trace.size());
  rep.before = correlation_spectrum(series.images);
  rep.after = correlation_spectrum(warp_series(series, rep.defs, cfg.jobs).images);
  rep.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// pca and pca-relax scenarios; raw returns identity fields immediately.
/// pca-relax runs a pca-only warm start, then alternates: every refit_period
/// iterations the parameter maps are refit on the current warped series and
/// frozen in between.
inline RegistrationReport register_series(const ImageSeries &series, const RegistrationConfig &cfg) {
  cfg.validate();
  if (cfg.scenario == Scenario::vm_p) return register_pairwise(series, cfg);
  if (cfg.scenario == Scenario::vm_g) return register_groupwise_template(series, cfg);
  if (series.count() < 2) throw std::invalid_argument("register_series: need N >= 2");

  const auto t0 = std::chrono::steady_clock::now();
  const int n = series.count(), w = series.width, h = series.height;
  RegistrationReport rep;
  rep.scenario = cfg.scenario;
  rep.defs = DeformationSet(n, w, h);
  rep.before = correlation_spectrum(series.images);

  if (cfg.scenario == Scenario::raw) {
    rep.after = rep.before;
    rep.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
  }

  LossWeights pca_only;
  pca_only.pca = cfg.weights.pca;
  pca_only.reg = cfg.weights.reg;
  pca_only.cyclic = cfg.weights.cyclic;
  LossWeights with_relax = pca_only;
  with_relax.relax = cfg.scenario == Scenario::pca_relax ? cfg.weights.relax : 0.0;

  std::optional<ParameterMaps> maps;
  const bool relax_on = cfg.scenario == Scenario::pca_relax && with_relax.relax > 0;

  detail::run_adam_loop(
      series, rep.defs, rep.trace, cfg,
      [&](const WarpedSeries &warped, const DeformationSet &defs, int it) {
        if (relax_on && it >= cfg.warmup_iter) {
          if ((it - cfg.warmup_iter) % cfg.refit_period == 0 || !maps) {
            const ImageSeries ws =
                detail::as_series(warped.images, series.inversion_times_ms, w, h);
            maps = fit_series(ws, nullptr, cfg.refit, cfg.jobs);
          }
          return total_loss(warped, defs, &*maps, with_relax, nullptr, cfg.nmi, cfg.jobs);
        }
        return total_loss(warped, defs, nullptr, pca_only, nullptr, cfg.nmi, cfg.jobs);
      },
      [&](int it) {
        if (!relax_on || it < cfg.warmup_iter) return 0L;
        return 1L + (it - cfg.warmup_iter) / cfg.refit_period;  // new epoch per refit
      });

  rep.iterations = static_cast<int>(rep.trace.size());
  rep.after = correlation_spectrum(warp_series(series, rep.defs, cfg.jobs).images);
  rep.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace t1moco
