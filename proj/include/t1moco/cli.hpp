// Copyright (c) 2026 t1moco contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "t1moco/config.hpp"
#include "t1moco/evaluation.hpp"
#include "t1moco/io.hpp"
#include "t1moco/phantom.hpp"
#include "t1moco/registration.hpp"

// Command-line wiring. Exit codes: 0 success, 1 validation/usage error,
// 2 runtime failure. Every run logs its resolved configuration and seed to
// stderr; file outputs are byte-stable for fixed seeds.

namespace t1moco::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace detail {

inline void log_config(const std::string &cmd, const json &resolved, bool verbose) {
  std::cerr << "[" << cmd << "] config " << resolved.dump() << "\n";
  if (verbose) std::cerr << "[" << cmd << "] verbose logging on\n";
}

inline int run_phantom(const std::string &spec_path, std::optional<std::uint64_t> seed,
                       const std::string &out_dir, bool verbose) {
  phantom::PhantomSpec spec;
  if (!spec_path.empty()) spec = cfg::phantom_spec_from_json(cfg::load_json_file(spec_path));
  if (seed) spec.seed = *seed;
  log_config("phantom", cfg::phantom_spec_to_json(spec), verbose);

  const phantom::PhantomTruth truth = phantom::generate(spec);
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  io::save_series(truth.corrupted, dir / "series.json");
  io::save_series(truth.clean, dir / "clean.json");
  io::save_defs(truth.motion, dir / "truth_defs.json");
  io::save_mask(truth.myocardium, dir / "myocardium.json");
  io::save_maps(truth.maps, dir / "truth_maps", "truth");
  io::detail::save_sidecar(dir / "spec_resolved.json", cfg::phantom_spec_to_json(spec));
  if (verbose)
    std::cerr << "[phantom] wrote " << truth.corrupted.count() << " images ("
              << spec.width << "x" << spec.height << ") to " << out_dir << "\n";
  return 0;
}

inline int run_register(const std::string &in_path, const std::string &config_path,
                        const std::string &scenario, std::optional<std::uint64_t> seed, int jobs,
                        const std::string &out_dir, bool verbose) {
  RegistrationConfig rc;
  if (!config_path.empty()) rc = cfg::registration_config_from_json(cfg::load_json_file(config_path));
  if (!scenario.empty()) rc.scenario = parse_scenario(scenario);
  if (seed) rc.seed = *seed;
  if (jobs > 0) rc.jobs = jobs;
  log_config("register", cfg::registration_config_to_json(rc), verbose);

  const ImageSeries series = io::load_series(in_path);
  const RegistrationReport report = register_series(series, rc);
  cfg::save_report(report, out_dir);
  if (verbose)
    std::cerr << "[register] " << scenario_name(report.scenario) << " finished after "
              << report.iterations << " iterations in " << report.wall_s << " s\n";
  return 0;
}

inline int run_fit(const std::string &in_path, const std::string &defs_path,
                   const std::string &config_path, int jobs, const std::string &out_dir,
                   bool verbose) {
  FitConfig fc;
  if (!config_path.empty()) fc = cfg::fit_config_from_json(cfg::load_json_file(config_path));
  log_config("fit", cfg::fit_config_to_json(fc), verbose);

  ImageSeries series = io::load_series(in_path);
  if (!defs_path.empty()) {
    const DeformationSet defs = io::load_defs(defs_path);
    if (!defs.matches(series))
      throw std::invalid_argument("fit: defs shape does not match the series");
    series.images = warp_series(series, defs, std::max(jobs, 1)).images;
  }
  const ParameterMaps maps = fit_series(series, nullptr, fc, std::max(jobs, 1));
  io::save_maps(maps, out_dir);
  if (verbose)
    std::cerr << "[fit] converged fraction " << maps.converged_fraction() << "\n";
  return 0;
}

inline std::vector<RegistrationConfig> scenario_configs(const RegistrationConfig &base,
                                                        const std::string &scenarios_csv) {
  std::vector<RegistrationConfig> configs;
  std::string token;
  std::istringstream ss(scenarios_csv);
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    RegistrationConfig c = base;
    c.scenario = parse_scenario(token);
    configs.push_back(c);
  }
  if (configs.empty()) throw std::invalid_argument("eval: no scenarios given");
  return configs;
}

inline int run_eval(int batch, const std::string &scenarios_csv, const std::string &in_path,
                    const std::string &mask_path, const std::string &config_path,
                    const std::string &spec_path, std::optional<std::uint64_t> seed, int jobs,
                    const std::string &out_dir, bool verbose) {
  RegistrationConfig base;
  if (!config_path.empty())
    base = cfg::registration_config_from_json(cfg::load_json_file(config_path));
  if (jobs > 0) base.jobs = jobs;
  if (seed) base.seed = *seed;
  const std::vector<RegistrationConfig> configs = scenario_configs(base, scenarios_csv);

  fs::create_directories(out_dir);
  const fs::path csv_path = fs::path(out_dir) / "summary.csv";
  std::vector<eval::EvalRow> all_rows;
  std::vector<std::string> all_errors;

  if (batch > 0) {
    phantom::PhantomSpec spec;
    spec.motion_amplitude_px = 5.0;
    spec.noise_sigma = 0.02;
    if (!spec_path.empty()) spec = cfg::phantom_spec_from_json(cfg::load_json_file(spec_path));
    const std::uint64_t seed0 = seed.value_or(spec.seed);
    log_config("eval", json{{"batch", batch},
                            {"scenarios", scenarios_csv},
                            {"seed", seed0},
                            {"phantom", cfg::phantom_spec_to_json(spec)},
                            {"registration", cfg::registration_config_to_json(base)}},
               verbose);
    for (int s = 0; s < batch; ++s) {
      phantom::PhantomSpec ps = spec;
      ps.seed = seed0 + static_cast<std::uint64_t>(s);
      const phantom::PhantomTruth truth = phantom::generate(ps);
      const eval::EvalSummary summary =
          eval::compare_scenarios(truth.corrupted, truth.myocardium, configs, s, &truth.motion);
      all_rows.insert(all_rows.end(), summary.rows.begin(), summary.rows.end());
      all_errors.insert(all_errors.end(), summary.errors.begin(), summary.errors.end());
      if (verbose) std::cerr << "[eval] sequence " << s << " done\n";
    }
  } else {
    if (in_path.empty() || mask_path.empty())
      throw std::invalid_argument("eval: need --batch or both --in and --mask");
    log_config("eval", json{{"in", in_path},
                            {"scenarios", scenarios_csv},
                            {"registration", cfg::registration_config_to_json(base)}},
               verbose);
    const ImageSeries series = io::load_series(in_path);
    const Mask mask = io::load_mask(mask_path);
    const eval::EvalSummary summary = eval::compare_scenarios(series, mask, configs, 0);
    all_rows = summary.rows;
    all_errors = summary.errors;
  }

  eval::write_csv(all_rows, csv_path);
  for (const std::string &e : all_errors) std::cerr << "[eval] scenario failed: " << e << "\n";
  if (verbose) std::cerr << "[eval] wrote " << all_rows.size() << " rows to " << csv_path << "\n";
  return all_errors.empty() ? 0 : 2;
}

inline int run_spectrum(const std::string &in_path, const std::string &defs_path,
                        const std::string &out_prefix, bool verbose) {
  log_config("spectrum", json{{"in", in_path}, {"defs", defs_path}}, verbose);
  const ImageSeries series = io::load_series(in_path);
  const CorrelationSpectrum before = correlation_spectrum(series.images);
  CorrelationSpectrum after = before;
  if (!defs_path.empty()) {
    const DeformationSet defs = io::load_defs(defs_path);
    if (!defs.matches(series))
      throw std::invalid_argument("spectrum: defs shape does not match the series");
    after = correlation_spectrum(warp_series(series, defs).images);
  }
  eval::spectrum_plot(before, after, out_prefix);
  return 0;
}

}  // namespace detail

/// Entry point shared by the binary and the tests. `args` excludes argv[0].
inline int run(const std::vector<std::string> &args) {
  CLI::App app{"Groupwise motion correction and T1 mapping for MOLLI series"};
  app.require_subcommand(1);

  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "chatty logging to stderr");

  std::string spec_path, config_path, in_path, out_path, defs_path, mask_path;
  std::string scenario, scenarios_csv = "raw,vm-p,vm-g,pca,pca-relax";
  int batch = 0, jobs = 0;
  std::optional<std::uint64_t> seed;
  auto add_seed = [&](CLI::App *cmd) {
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&seed](const std::uint64_t &v) { seed = v; }, "seed override");
  };

  CLI::App *cmd_phantom = app.add_subcommand("phantom", "generate a synthetic series + truth");
  cmd_phantom->add_option("--spec", spec_path, "phantom spec JSON")->check(CLI::ExistingFile);
  cmd_phantom->add_option("--out", out_path, "output directory")->required();
  add_seed(cmd_phantom);

  CLI::App *cmd_register = app.add_subcommand("register", "estimate displacement fields");
  cmd_register->add_option("--in", in_path, "series sidecar JSON")->required()->check(CLI::ExistingFile);
  cmd_register->add_option("--config", config_path, "registration config JSON")->check(CLI::ExistingFile);
  cmd_register->add_option("--scenario", scenario, "raw|vm-p|vm-g|pca|pca-relax");
  cmd_register->add_option("--jobs", jobs, "worker threads");
  cmd_register->add_option("--out", out_path, "output directory")->required();
  add_seed(cmd_register);

  CLI::App *cmd_fit = app.add_subcommand("fit", "fit T1 maps");
  cmd_fit->add_option("--in", in_path, "series sidecar JSON")->required()->check(CLI::ExistingFile);
  cmd_fit->add_option("--defs", defs_path, "pre-warp displacement fields")->check(CLI::ExistingFile);
  cmd_fit->add_option("--config", config_path, "fit config JSON")->check(CLI::ExistingFile);
  cmd_fit->add_option("--jobs", jobs, "worker threads");
  cmd_fit->add_option("--out", out_path, "output directory")->required();

  CLI::App *cmd_eval = app.add_subcommand("eval", "compare scenarios end to end");
  cmd_eval->add_option("--batch", batch, "number of seeded phantom sequences");
  cmd_eval->add_option("--scenarios", scenarios_csv, "comma-separated scenario list");
  cmd_eval->add_option("--in", in_path, "series sidecar JSON (instead of --batch)")->check(CLI::ExistingFile);
  cmd_eval->add_option("--mask", mask_path, "mask sidecar JSON (with --in)")->check(CLI::ExistingFile);
  cmd_eval->add_option("--config", config_path, "registration config JSON")->check(CLI::ExistingFile);
  cmd_eval->add_option("--spec", spec_path, "phantom spec JSON (with --batch)")->check(CLI::ExistingFile);
  cmd_eval->add_option("--jobs", jobs, "worker threads");
  cmd_eval->add_option("--out", out_path, "output directory")->required();
  add_seed(cmd_eval);

  CLI::App *cmd_spectrum = app.add_subcommand("spectrum", "eigenvalue spectra before/after");
  cmd_spectrum->add_option("--in", in_path, "series sidecar JSON")->required()->check(CLI::ExistingFile);
  cmd_spectrum->add_option("--defs", defs_path, "displacement fields")->check(CLI::ExistingFile);
  cmd_spectrum->add_option("--out", out_path, "output path prefix")->required();

  std::vector<const char *> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("t1moco");
  for (const std::string &a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    if (cmd_phantom->parsed()) return detail::run_phantom(spec_path, seed, out_path, verbose);
    if (cmd_register->parsed())
      return detail::run_register(in_path, config_path, scenario, seed, jobs, out_path, verbose);
    if (cmd_fit->parsed()) return detail::run_fit(in_path, defs_path, config_path, jobs, out_path, verbose);
    if (cmd_eval->parsed())
      return detail::run_eval(batch, scenarios_csv, in_path, mask_path, config_path, spec_path,
                              seed, jobs, out_path, verbose);
    if (cmd_spectrum->parsed()) return detail::run_spectrum(in_path, defs_path, out_path, verbose);
    return 1;
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // help/version exit cleanly; usage errors are validation errors
  } catch (const nlohmann::json::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace t1moco::cli
