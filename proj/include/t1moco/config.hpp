// Copyright (c) 2026 t1moco contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "t1moco/io.hpp"
#include "t1moco/phantom.hpp"
#include "t1moco/registration.hpp"

// JSON bindings for the configurable types. Absent keys fall back to the
// compiled defaults so config files only need to state what they override.

namespace t1moco::cfg {

using json = nlohmann::json;

inline json fit_config_to_json(const FitConfig &c) {
  return json{{"max_iter", c.max_iter},
              {"simplex_tol", c.simplex_tol},
              {"m_max", c.m_max},
              {"t1star_bounds_ms", {c.t1star_min_ms, c.t1star_max_ms}}};
}

inline FitConfig fit_config_from_json(const json &j, FitConfig base = {}) {
  base.max_iter = j.value("max_iter", base.max_iter);
  base.simplex_tol = j.value("simplex_tol", base.simplex_tol);
  base.m_max = j.value("m_max", base.m_max);
  if (j.contains("t1star_bounds_ms")) {
    const auto &b = j.at("t1star_bounds_ms");
    if (!b.is_array() || b.size() != 2)
      throw std::invalid_argument("fit config: t1star_bounds_ms must be [min, max]");
    base.t1star_min_ms = b[0].get<double>();
    base.t1star_max_ms = b[1].get<double>();
  }
  if (base.max_iter < 1 || !(base.simplex_tol > 0) ||
      !(base.t1star_min_ms > 0 && base.t1star_max_ms > base.t1star_min_ms))
    throw std::invalid_argument("fit config: invalid values");
  return base;
}

inline json loss_weights_to_json(const LossWeights &w) {
  return json{{"pca", w.pca}, {"reg", w.reg}, {"cyclic", w.cyclic}, {"relax", w.relax}, {"nmi", w.nmi}};
}

inline LossWeights loss_weights_from_json(const json &j, LossWeights base = {}) {
  base.pca = j.value("pca", base.pca);
  base.reg = j.value("reg", base.reg);
  base.cyclic = j.value("cyclic", base.cyclic);
  base.relax = j.value("relax", base.relax);
  base.nmi = j.value("nmi", base.nmi);
  base.validate();
  return base;
}

inline json registration_config_to_json(const RegistrationConfig &c) {
  return json{{"scenario", scenario_name(c.scenario)},
              {"weights", loss_weights_to_json(c.weights)},
              {"lr", c.lr},
              {"max_iter", c.max_iter},
              {"patience", c.patience},
              {"min_rel_improvement", c.min_rel_improvement},
              {"refit_period", c.refit_period},
              {"warmup_iter", c.warmup_iter},
              {"refit", fit_config_to_json(c.refit)},
              {"nmi_bins", c.nmi.bins},
              {"seed", c.seed},
              {"jobs", c.jobs}};
}

inline RegistrationConfig registration_config_from_json(const json &j, RegistrationConfig base = {}) {
  if (j.contains("scenario")) base.scenario = parse_scenario(j.at("scenario").get<std::string>());
  if (j.contains("weights")) base.weights = loss_weights_from_json(j.at("weights"), base.weights);
  base.lr = j.value("lr", base.lr);
  base.max_iter = j.value("max_iter", base.max_iter);
  base.patience = j.value("patience", base.patience);
  base.min_rel_improvement = j.value("min_rel_improvement", base.min_rel_improvement);
  base.refit_period = j.value("refit_period", base.refit_period);
  base.warmup_iter = j.value("warmup_iter", base.warmup_iter);
  if (j.contains("refit")) base.refit = fit_config_from_json(j.at("refit"), base.refit);
  base.nmi.bins = j.value("nmi_bins", base.nmi.bins);
  base.seed = j.value("seed", base.seed);
  base.jobs = j.value("jobs", base.jobs);
  base.validate();
  return base;
}

inline json phantom_spec_to_json(const phantom::PhantomSpec &s) {
  auto tissue = [](const phantom::TissueParams &t) {
    return json{{"t1_ms", t.t1_ms}, {"c", t.c}, {"k", t.k}};
  };
  return json{{"width", s.width},
              {"height", s.height},
              {"inversion_times_ms", s.inversion_times_ms},
              {"blood", tissue(s.blood)},
              {"myocardium", tissue(s.myocardium)},
              {"background", tissue(s.background)},
              {"blood_radius_frac", s.blood_radius_frac},
              {"myo_radius_frac", s.myo_radius_frac},
              {"tissue_smooth_px", s.tissue_smooth_px},
              {"texture_amp", s.texture_amp},
              {"texture_smooth_px", s.texture_smooth_px},
              {"motion_amplitude_px", s.motion_amplitude_px},
              {"motion_smooth_px", s.motion_smooth_px},
              {"noise_sigma", s.noise_sigma},
              {"seed", s.seed}};
}

inline phantom::PhantomSpec phantom_spec_from_json(const json &j, phantom::PhantomSpec base = {}) {
  auto tissue = [](const json &t, phantom::TissueParams b) {
    b.t1_ms = t.value("t1_ms", b.t1_ms);
    b.c = t.value("c", b.c);
    b.k = t.value("k", b.k);
    return b;
  };
  base.width = j.value("width", base.width);
  base.height = j.value("height", base.height);
  if (j.contains("inversion_times_ms"))
    base.inversion_times_ms = j.at("inversion_times_ms").get<std::vector<double>>();
  if (j.contains("blood")) base.blood = tissue(j.at("blood"), base.blood);
  if (j.contains("myocardium")) base.myocardium = tissue(j.at("myocardium"), base.myocardium);
  if (j.contains("background")) base.background = tissue(j.at("background"), base.background);
  base.blood_radius_frac = j.value("blood_radius_frac", base.blood_radius_frac);
  base.myo_radius_frac = j.value("myo_radius_frac", base.myo_radius_frac);
  base.tissue_smooth_px = j.value("tissue_smooth_px", base.tissue_smooth_px);
  base.texture_amp = j.value("texture_amp", base.texture_amp);
  base.texture_smooth_px = j.value("texture_smooth_px", base.texture_smooth_px);
  base.motion_amplitude_px = j.value("motion_amplitude_px", base.motion_amplitude_px);
  base.motion_smooth_px = j.value("motion_smooth_px", base.motion_smooth_px);
  base.noise_sigma = j.value("noise_sigma", base.noise_sigma);
  base.seed = j.value("seed", base.seed);
  return base;
}

inline json report_to_json(const RegistrationReport &r) {
  json trace = json::array();
  for (const IterationTrace &t : r.trace)
    trace.push_back({{"total", t.total},
                     {"pca", t.pca},
                     {"reg", t.reg},
                     {"cyclic", t.cyclic},
                     {"relax", t.relax},
                     {"nmi", t.nmi}});
  return json{{"scenario", scenario_name(r.scenario)},
              {"iterations", r.iterations},
              {"wall_s", r.wall_s},
              {"eigenvalues_before", r.before.eigenvalues},
              {"eigenvalues_after", r.after.eigenvalues},
              {"trace", trace}};
}

/// Writes <dir>/<name>_report.json plus the defs container.
inline void save_report(const RegistrationReport &r, const std::filesystem::path &dir,
                        const std::string &name = "registration") {
  std::filesystem::create_directories(dir);
  io::detail::save_sidecar(dir / (name + "_report.json"), report_to_json(r));
  io::save_defs(r.defs, dir / (name + "_defs.json"));
}

inline json load_json_file(const std::filesystem::path &path) {
  return io::detail::load_sidecar(path);
}

}  // namespace t1moco::cfg
