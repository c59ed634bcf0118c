// Copyright (c) 2026 t1moco contributors
// SPDX-License-Identifier: Apache-2.0

#include <t1moco/grid.hpp>
#include <t1moco/io.hpp>
#include <t1moco/types.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>

#include "test_util.hpp"

using namespace t1moco;
using namespace t1moco::io;
using t1test::TempDir;

namespace {

ImageSeries make_series(int w, int h, int n, unsigned seed = 7) {
  std::mt19937_64 rng(seed);
  ImageSeries s = t1test::random_series(w, h, n, rng, 0.0, 2.0);
  finalize_series(s);
  return s;
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("grid basics", "[io]") {
  Grid g(3, 2);
  REQUIRE(g.width == 3);
  REQUIRE(g.height == 2);
  REQUIRE(g.data.size() == 6);
  g.at(2, 1) = 5.0;
  REQUIRE(g.at(2, 1) == 5.0);
  REQUIRE(g.data[5] == 5.0);  // row-major

  Grid h(3, 2), k(2, 3);
  REQUIRE(g.same_shape(h));
  REQUIRE_FALSE(g.same_shape(k));

  g.fill(1.5);
  REQUIRE(max_abs(g) == 1.5);

  VecField f(4, 4);
  f.dx.at(1, 1) = 3.0;
  f.dy.at(1, 1) = 4.0;
  REQUIRE(max_magnitude(f) == Catch::Approx(5.0));
  REQUIRE(all_finite(f.dx));
  f.dx.at(0, 0) = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_FALSE(all_finite(f.dx));
}

TEST_CASE("finalize_series sorts by inversion time and returns the permutation", "[io]") {
  ImageSeries s;
  for (double t : {200.0, 100.0, 300.0}) {
    Grid g(2, 2);
    g.fill(t);
    s.images.push_back(g);
    s.inversion_times_ms.push_back(t);
  }
  auto perm = finalize_series(s);
  REQUIRE(s.inversion_times_ms == std::vector<double>{100.0, 200.0, 300.0});
  REQUIRE(perm == std::vector<int>{1, 0, 2});
  // images travel with their times
  REQUIRE(s.images[0].at(0, 0) == 100.0);
  REQUIRE(s.images[2].at(0, 0) == 300.0);
}

TEST_CASE("finalize_series validation", "[io]") {
  SECTION("fewer than 3 images") {
    ImageSeries s;
    s.images.assign(2, Grid(2, 2));
    s.inversion_times_ms = {100, 200};
    REQUIRE_THROWS_AS(finalize_series(s), std::invalid_argument);
  }
  SECTION("shape mismatch") {
    ImageSeries s;
    s.images = {Grid(2, 2), Grid(2, 2), Grid(3, 2)};
    s.inversion_times_ms = {100, 200, 300};
    REQUIRE_THROWS_AS(finalize_series(s), std::invalid_argument);
  }
  SECTION("non-finite intensity") {
    ImageSeries s;
    s.images.assign(3, Grid(2, 2));
    s.images[1].at(0, 1) = std::numeric_limits<double>::infinity();
    s.inversion_times_ms = {100, 200, 300};
    REQUIRE_THROWS_AS(finalize_series(s), std::invalid_argument);
  }
  SECTION("non-positive time") {
    ImageSeries s;
    s.images.assign(3, Grid(2, 2));
    s.inversion_times_ms = {0, 200, 300};
    REQUIRE_THROWS_AS(finalize_series(s), std::invalid_argument);
  }
  SECTION("duplicate times") {
    ImageSeries s;
    s.images.assign(3, Grid(2, 2));
    s.inversion_times_ms = {100, 200, 200};
    REQUIRE_THROWS_AS(finalize_series(s), std::invalid_argument);
  }
}

TEST_CASE("series round-trip is exact at f32 precision", "[io]") {
  TempDir dir("series");
  ImageSeries s = make_series(5, 4, 3);
  // quantize to f32 so the round-trip is bitwise
  for (auto& img : s.images)
    for (auto& v : img.data) v = static_cast<double>(static_cast<float>(v));
  s.spacing_mm = 1.25;

  save_series(s, dir.str("series.json"));
  ImageSeries r = load_series(dir.str("series.json"));

  REQUIRE(r.count() == s.count());
  REQUIRE(r.width == s.width);
  REQUIRE(r.height == s.height);
  REQUIRE(r.inversion_times_ms == s.inversion_times_ms);
  REQUIRE(r.spacing_mm == 1.25);
  for (int i = 0; i < s.count(); ++i) REQUIRE(r.images[i].data == s.images[i].data);
}

TEST_CASE("re-saving a loaded series is byte-identical", "[io]") {
  TempDir dir("resave");
  std::filesystem::create_directories(dir.path / "again");
  ImageSeries s = make_series(6, 6, 4);
  save_series(s, dir.str("a.json"));
  ImageSeries r = load_series(dir.str("a.json"));
  save_series(r, dir.str("again/a.json"));  // same basename, so same sidecar
  REQUIRE(slurp(dir.str("a.json")) == slurp(dir.str("again/a.json")));
  REQUIRE(slurp(dir.str("a.raw")) == slurp(dir.str("again/a.raw")));
}

TEST_CASE("load_series rejects corrupt containers", "[io]") {
  TempDir dir("corrupt");
  ImageSeries s = make_series(4, 4, 3);
  save_series(s, dir.str("s.json"));

  SECTION("missing data file") {
    std::filesystem::remove(dir.str("s.raw"));
    REQUIRE_THROWS(load_series(dir.str("s.json")));
  }
  SECTION("truncated data file") {
    std::ofstream out(dir.str("s.raw"), std::ios::binary | std::ios::trunc);
    out << "xx";
    out.close();
    REQUIRE_THROWS(load_series(dir.str("s.json")));
  }
  SECTION("missing sidecar") { REQUIRE_THROWS(load_series(dir.str("nope.json"))); }
}

TEST_CASE("pgm writer emits valid P5", "[io]") {
  TempDir dir("pgm");
  ByteGrid img(3, 2);
  for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<uint8_t>(40 * i);
  write_pgm(dir.str("x.pgm"), img);
  auto bytes = slurp(dir.str("x.pgm"));
  std::string head(bytes.begin(), bytes.begin() + 3);
  REQUIRE(head == "P5\n");
  // payload = last 6 bytes
  REQUIRE(bytes.size() >= 6);
  REQUIRE(static_cast<uint8_t>(bytes[bytes.size() - 6]) == 0);
  REQUIRE(static_cast<uint8_t>(bytes.back()) == 200);
}

TEST_CASE("window_to_bytes maps the selected range to 0..255", "[io]") {
  Grid m(2, 2);
  m.data = {10.0, 20.0, 30.0, -5.0};
  ByteGrid sel(2, 2);
  sel.data = {1, 1, 1, 0};  // -5 excluded from the window
  ByteGrid b = window_to_bytes(m, sel);
  REQUIRE(b.data[0] == 0);
  REQUIRE(b.data[2] == 255);
  REQUIRE(b.data[1] == 128);  // midpoint, round-half-up
  REQUIRE(b.data[3] == 0);    // deselected pixels render black
}

TEST_CASE("maps round-trip with convergence flags", "[io]") {
  TempDir dir("maps");
  ParameterMaps maps(3, 2);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> d(0.5, 2.0);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x) {
      maps.c.at(x, y) = static_cast<float>(d(rng));
      maps.k.at(x, y) = static_cast<float>(d(rng));
      maps.t1star_ms.at(x, y) = static_cast<float>(1000 * d(rng));
      maps.t1_ms.at(x, y) = static_cast<float>(900 * d(rng));
      maps.sd_t1_ms.at(x, y) = static_cast<float>(20 * d(rng));
      maps.converged.at(x, y) = 1;
    }
  maps.converged.at(2, 1) = 0;
  maps.t1_ms.at(2, 1) = kSentinelMs;

  save_maps(maps, dir.str(), "m");
  ParameterMaps r = load_maps(dir.str(), "m");
  REQUIRE(r.width() == 3);
  REQUIRE(r.t1_ms.data == maps.t1_ms.data);
  REQUIRE(r.converged.data == maps.converged.data);
  REQUIRE(r.converged_fraction() == Catch::Approx(5.0 / 6.0));
  // preview images exist
  REQUIRE(std::filesystem::exists(dir.path / "m_t1_ms.pgm"));
  REQUIRE(std::filesystem::exists(dir.path / "m_sd_t1_ms.pgm"));
}

TEST_CASE("maps with zero converged pixels still save (black previews)", "[io]") {
  TempDir dir("maps0");
  ParameterMaps maps(2, 2);
  maps.t1_ms.fill(kSentinelMs);
  maps.sd_t1_ms.fill(kSentinelMs);
  REQUIRE_NOTHROW(save_maps(maps, dir.str(), "m"));
  ParameterMaps r = load_maps(dir.str(), "m");
  REQUIRE(r.converged_fraction() == 0.0);
}

TEST_CASE("defs round-trip", "[io]") {
  TempDir dir("defs");
  std::mt19937_64 rng(3);
  DeformationSet defs(3, 4, 5);
  for (auto& f : defs.fields) {
    f = t1test::random_field(4, 5, rng, 2.0);
    for (auto* comp : {&f.dx, &f.dy})
      for (auto& v : comp->data) v = static_cast<double>(static_cast<float>(v));
  }
  save_defs(defs, dir.str("d.json"));
  DeformationSet r = load_defs(dir.str("d.json"));
  REQUIRE(r.count() == 3);
  REQUIRE(r.width() == 4);
  REQUIRE(r.height() == 5);
  for (int i = 0; i < 3; ++i) {
    REQUIRE(r.fields[i].dx.data == defs.fields[i].dx.data);
    REQUIRE(r.fields[i].dy.data == defs.fields[i].dy.data);
  }
}

TEST_CASE("mask round-trip preserves role and pixels", "[io]") {
  TempDir dir("mask");
  Mask m;
  m.grid = ByteGrid(4, 3);
  m.grid.data = {0, 1, 1, 0, 1, 1, 1, 0, 0, 0, 1, 0};
  m.role = "myocardium";
  save_mask(m, dir.str("mask.json"));
  Mask r = load_mask(dir.str("mask.json"));
  REQUIRE(r.grid.data == m.grid.data);
  REQUIRE(r.role == "myocardium");
  REQUIRE(r.count_true() == 6);
}

TEST_CASE("loss weights validate", "[io]") {
  LossWeights w;
  REQUIRE_NOTHROW(w.validate());
  w.reg = -1.0;
  REQUIRE_THROWS_AS(w.validate(), std::invalid_argument);
  w.reg = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(w.validate(), std::invalid_argument);
}

TEST_CASE("max_displacement over a deformation set", "[io]") {
  DeformationSet defs(2, 2, 2);
  defs.fields[1].dx.at(0, 1) = -3.0;
  defs.fields[1].dy.at(0, 1) = 4.0;
  REQUIRE(max_displacement(defs) == Catch::Approx(5.0));
}
