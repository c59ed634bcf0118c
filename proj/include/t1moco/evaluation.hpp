// Copyright (c) 2026 t1moco contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "t1moco/io.hpp"
#include "t1moco/phantom.hpp"
#include "t1moco/registration.hpp"

// Quantitative evaluation: the quality metric is the fitting SD of T1 inside
// the myocardium (lower = better mapping), compared across registration
// scenarios; on phantoms the displacement error against ground truth is also
// reported. CSV is the authoritative output, the PGM chart a convenience.

namespace t1moco::eval {

struct SdStats {
  double mean_ms = 0;
  double sd_ms = 0;  // population SD across the mask
};

/// Mean and population SD of sd_T1 over converged masked pixels.
inline SdStats myocardial_sd(const ParameterMaps &maps, const Mask &mask) {
  if (mask.grid.width != maps.width() || mask.grid.height != maps.height())
    throw std::invalid_argument("myocardial_sd: mask shape mismatch");
  double sum = 0, sum2 = 0;
  long n = 0;
  for (std::size_t i = 0; i < mask.grid.data.size(); ++i) {
    if (!mask.grid.data[i] || !maps.converged.data[i]) continue;
    const double v = maps.sd_t1_ms.data[i];
    sum += v;
    sum2 += v * v;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("myocardial_sd: no converged pixels in mask");
  SdStats s;
  s.mean_ms = sum / static_cast<double>(n);
  const double var = sum2 / static_cast<double>(n) - s.mean_ms * s.mean_ms;
  s.sd_ms = std::sqrt(std::max(var, 0.0));
  return s;
}

struct EvalRow {
  int sequence_id = 0;
  std::string scenario;
  double sd_mean_ms = 0;
  double sd_sd_ms = 0;
  double disp_err_px = std::numeric_limits<double>::quiet_NaN();  // phantom only
  double wall_s = 0;
};

struct EvalSummary {
  std::vector<EvalRow> rows;
  std::vector<std::string> errors;  // failed scenarios; the rest continue
};

/// Runs each scenario end to end (register, warp, full-quality fit, SD) on
/// one series. Registration failures are recorded and the remaining
/// scenarios still run. Ground-truth motion, when given, adds the composed
/// displacement error over the mask.
inline EvalSummary compare_scenarios(const ImageSeries &series, const Mask &mask,
                                     const std::vector<RegistrationConfig> &configs,
                                     int sequence_id = 0,
                                     const DeformationSet *truth_motion = nullptr,
                                     const FitConfig &final_fit = {}) {
  if (configs.empty()) throw std::invalid_argument("compare_scenarios: no configs");
  EvalSummary summary;
  for (const RegistrationConfig &cfg : configs) {
    try {
      const RegistrationReport report = register_series(series, cfg);
      ImageSeries aligned = series;
      aligned.images = warp_series(series, report.defs, cfg.jobs).images;
      const ParameterMaps maps = fit_series(aligned, nullptr, final_fit, cfg.jobs);
      const SdStats stats = myocardial_sd(maps, mask);

      EvalRow row;
      row.sequence_id = sequence_id;
      row.scenario = scenario_name(cfg.scenario);
      row.sd_mean_ms = stats.mean_ms;
      row.sd_sd_ms = stats.sd_ms;
      row.wall_s = report.wall_s;
      if (truth_motion)
        row.disp_err_px = phantom::displacement_error(report.defs, *truth_motion, &mask).mean_px;
      summary.rows.push_back(std::move(row));
    } catch (const std::exception &e) {
      summary.errors.push_back(std::string(scenario_name(cfg.scenario)) + ": " + e.what());
    }
  }
  return summary;
}

namespace detail {

inline std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace detail

inline constexpr const char *kCsvHeader = "sequence_id,scenario,sd_mean_ms,sd_sd_ms,disp_err_px,wall_s";

/// Appends rows (with a header when the file starts empty) in the fixed
/// schema sequence_id,scenario,sd_mean_ms,sd_sd_ms,disp_err_px,wall_s.
inline void write_csv(const std::vector<EvalRow> &rows, const std::filesystem::path &path,
                      bool append = false) {
  const bool need_header = !append || !std::filesystem::exists(path) ||
                           std::filesystem::file_size(path) == 0;
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (need_header) out << kCsvHeader << "\n";
  for (const EvalRow &r : rows) {
    out << r.sequence_id << "," << r.scenario << "," << detail::format_value(r.sd_mean_ms) << ","
        << detail::format_value(r.sd_sd_ms) << "," << detail::format_value(r.disp_err_px) << ","
        << detail::format_value(r.wall_s) << "\n";
  }
}

/// Paired before/after eigenvalue CSV plus a small PGM bar chart
/// (before = gray bars, after = white bars, baseline axis at the bottom).
inline void spectrum_plot(const CorrelationSpectrum &before, const CorrelationSpectrum &after,
                          const std::filesystem::path &prefix) {
  if (before.n != after.n || before.n < 1)
    throw std::invalid_argument("spectrum_plot: spectra sizes disagree");
  const std::filesystem::path csv_path = prefix.string() + "_spectrum.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
  csv << "index,before,after\n";
  for (int i = 0; i < before.n; ++i)
    csv << (i + 1) << "," << detail::format_value(before.eigenvalues[i]) << ","
        << detail::format_value(after.eigenvalues[i]) << "\n";
  csv.close();

  const int n = before.n;
  const int bar_w = 9, gap = 8, margin = 16, chart_h = 180;
  const int w = margin * 2 + n * (2 * bar_w + gap) - gap;
  const int h = chart_h + 2 * margin;
  ByteGrid img(w, h, 0);
  double ymax = 1e-12;
  for (int i = 0; i < n; ++i)
    ymax = std::max({ymax, before.eigenvalues[i], after.eigenvalues[i]});

  auto draw_bar = [&](int x0, double value, std::uint8_t shade) {
    const int bh = static_cast<int>(std::max(value, 0.0) / ymax * chart_h + 0.5);
    for (int y = 0; y < bh; ++y)
      for (int x = 0; x < bar_w; ++x) img.at(x0 + x, h - 1 - margin - y) = shade;
  };
  for (int i = 0; i < n; ++i) {
    const int x0 = margin + i * (2 * bar_w + gap);
    draw_bar(x0, before.eigenvalues[i], 110);
    draw_bar(x0 + bar_w, after.eigenvalues[i], 255);
  }
  for (int x = margin / 2; x < w - margin / 2; ++x) img.at(x, h - margin) = 255;  // axis
  for (double tick = 1.0; tick <= ymax; tick += 1.0) {                            // unit ticks
    const int y = h - 1 - margin - static_cast<int>(tick / ymax * chart_h + 0.5);
    if (y < 0) break;
    for (int x = margin / 2; x < margin; ++x) img.at(x, y) = 180;
  }
  io::write_pgm(std::filesystem::path(prefix.string() + "_spectrum.pgm"), img);
}

}  // namespace t1moco::eval
