// Copyright (c) 2026 t1moco contributors
// SPDX-License-Identifier: Apache-2.0

#include <t1moco/cli.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "test_util.hpp"

using namespace t1moco;
using t1test::TempDir;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  REQUIRE(out.good());
  out << text;
}

std::string small_phantom_spec(double amplitude, double sigma, std::uint64_t seed,
                               int side = 32) {
  phantom::PhantomSpec spec;
  spec.width = side;
  spec.height = side;
  spec.inversion_times_ms = side >= 48
                                ? std::vector<double>{100, 260, 950, 1110, 1800, 2650, 3500}
                                : std::vector<double>{100, 500, 1000, 1800, 2800};
  spec.motion_amplitude_px = amplitude;
  spec.noise_sigma = sigma;
  spec.seed = seed;
  return cfg::phantom_spec_to_json(spec).dump(2);
}

std::string slurp_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("cli phantom writes a reloadable dataset", "[cli]") {
  TempDir dir("cliph");
  write_text(dir.str("spec.json"), small_phantom_spec(2.0, 0.01, 5));
  REQUIRE(cli::run({"phantom", "--spec", dir.str("spec.json"), "--out", dir.str("a")}) == 0);

  const ImageSeries series = io::load_series(dir.str("a/series.json"));
  REQUIRE(series.width == 32);
  REQUIRE(series.height == 32);
  REQUIRE(series.count() == 5);
  const ImageSeries clean = io::load_series(dir.str("a/clean.json"));
  REQUIRE(clean.count() == 5);
  const DeformationSet truth = io::load_defs(dir.str("a/truth_defs.json"));
  REQUIRE(static_cast<int>(truth.fields.size()) == 5);
  const Mask myo = io::load_mask(dir.str("a/myocardium.json"));
  REQUIRE(myo.count_true() > 0);
  const ParameterMaps maps = io::load_maps(dir.str("a/truth_maps"), "truth");
  REQUIRE(maps.converged_fraction() == 1.0);

  SECTION("seed override reproduces the dataset byte for byte") {
    REQUIRE(cli::run({"phantom", "--spec", dir.str("spec.json"), "--seed", "5",
                      "--out", dir.str("b")}) == 0);
    REQUIRE(cli::run({"phantom", "--spec", dir.str("spec.json"), "--seed", "6",
                      "--out", dir.str("c")}) == 0);
    REQUIRE(slurp_bytes(dir.str("a/series.raw")) == slurp_bytes(dir.str("b/series.raw")));
    REQUIRE(slurp_bytes(dir.str("a/series.raw")) != slurp_bytes(dir.str("c/series.raw")));
  }
}

TEST_CASE("cli register then fit beats fitting the corrupted series", "[cli]") {
  TempDir dir("clireg");
  // 48^2 with the 7-point series: large enough for the registration to
  // reliably improve the downstream fit
  write_text(dir.str("spec.json"), small_phantom_spec(3.0, 0.01, 21, 48));
  REQUIRE(cli::run({"phantom", "--spec", dir.str("spec.json"), "--out", dir.str("ph")}) == 0);

  write_text(dir.str("reg.json"), R"({"max_iter": 300, "patience": 50})");
  REQUIRE(cli::run({"register", "--in", dir.str("ph/series.json"), "--scenario", "pca",
                    "--config", dir.str("reg.json"), "--out", dir.str("reg")}) == 0);
  REQUIRE(std::filesystem::exists(dir.str("reg/registration_report.json")));
  const DeformationSet defs = io::load_defs(dir.str("reg/registration_defs.json"));
  REQUIRE(static_cast<int>(defs.fields.size()) == 7);

  REQUIRE(cli::run({"fit", "--in", dir.str("ph/series.json"), "--out", dir.str("raw")}) == 0);
  REQUIRE(cli::run({"fit", "--in", dir.str("ph/series.json"), "--defs",
                    dir.str("reg/registration_defs.json"), "--out", dir.str("moco")}) == 0);

  const Mask myo = io::load_mask(dir.str("ph/myocardium.json"));
  const auto sd_raw = eval::myocardial_sd(io::load_maps(dir.str("raw")), myo);
  const auto sd_moco = eval::myocardial_sd(io::load_maps(dir.str("moco")), myo);
  INFO("raw " << sd_raw.mean_ms << " ms vs moco " << sd_moco.mean_ms << " ms");
  REQUIRE(sd_moco.mean_ms < sd_raw.mean_ms);
}

TEST_CASE("cli eval batch writes the summary csv", "[cli]") {
  TempDir dir("clieval");
  write_text(dir.str("spec.json"), small_phantom_spec(1.5, 0.02, 3));
  REQUIRE(cli::run({"eval", "--batch", "2", "--scenarios", "raw", "--spec", dir.str("spec.json"),
                    "--out", dir.str("ev")}) == 0);

  std::ifstream csv(dir.str("ev/summary.csv"));
  REQUIRE(csv.good());
  std::string line;
  std::getline(csv, line);
  REQUIRE(line == eval::kCsvHeader);
  std::getline(csv, line);
  REQUIRE(line.rfind("0,raw,", 0) == 0);
  std::getline(csv, line);
  REQUIRE(line.rfind("1,raw,", 0) == 0);
  REQUIRE_FALSE(std::getline(csv, line));
}

TEST_CASE("cli spectrum emits csv and chart", "[cli]") {
  TempDir dir("clispec");
  write_text(dir.str("spec.json"), small_phantom_spec(1.0, 0.01, 8));
  REQUIRE(cli::run({"phantom", "--spec", dir.str("spec.json"), "--out", dir.str("ph")}) == 0);
  REQUIRE(cli::run({"spectrum", "--in", dir.str("ph/series.json"), "--defs",
                    dir.str("ph/truth_defs.json"), "--out", dir.str("fig")}) == 0);
  REQUIRE(std::filesystem::exists(dir.str("fig_spectrum.csv")));
  REQUIRE(std::filesystem::exists(dir.str("fig_spectrum.pgm")));
}

TEST_CASE("cli exit codes distinguish usage, validation and runtime errors", "[cli]") {
  TempDir dir("clierr");

  SECTION("help exits cleanly") {
    REQUIRE(cli::run({"--help"}) == 0);
    REQUIRE(cli::run({"phantom", "--help"}) == 0);
  }
  SECTION("missing required option") { REQUIRE(cli::run({"phantom"}) == 1); }
  SECTION("no subcommand") { REQUIRE(cli::run({}) == 1); }
  SECTION("unknown flag") {
    REQUIRE(cli::run({"phantom", "--out", dir.str("x"), "--bogus"}) == 1);
  }
  SECTION("nonexistent input file") {
    REQUIRE(cli::run({"fit", "--in", dir.str("missing.json"), "--out", dir.str("x")}) == 1);
  }
  SECTION("unknown scenario name") {
    write_text(dir.str("spec.json"), small_phantom_spec(0, 0, 1));
    REQUIRE(cli::run({"phantom", "--spec", dir.str("spec.json"), "--out", dir.str("ph")}) == 0);
    REQUIRE(cli::run({"register", "--in", dir.str("ph/series.json"), "--scenario", "bogus",
                      "--out", dir.str("r")}) == 1);
  }
  SECTION("corrupt json input") {
    write_text(dir.str("broken.json"), "{not json");
    REQUIRE(cli::run({"register", "--in", dir.str("broken.json"), "--scenario", "pca",
                      "--out", dir.str("r")}) == 1);
  }
  SECTION("scenario failures surface as a runtime error code") {
    write_text(dir.str("spec.json"), small_phantom_spec(0, 0.01, 2));
    phantom::PhantomSpec other;
    other.width = 24;
    other.height = 24;
    other.inversion_times_ms = {100, 500, 1000, 1800, 2800};
    REQUIRE(cli::run({"phantom", "--spec", dir.str("spec.json"), "--out", dir.str("ph")}) == 0);
    io::save_mask(phantom::generate(other).myocardium, dir.str("small_mask.json"));
    // mask shape disagrees with the series: every scenario fails downstream
    REQUIRE(cli::run({"eval", "--scenarios", "raw", "--in", dir.str("ph/series.json"),
                      "--mask", dir.str("small_mask.json"), "--out", dir.str("ev")}) == 2);
  }
}
