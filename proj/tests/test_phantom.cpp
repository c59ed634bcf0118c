// Copyright (c) 2026 t1moco contributors
// SPDX-License-Identifier: Apache-2.0

#include <t1moco/evaluation.hpp>
#include <t1moco/losses.hpp>
#include <t1moco/phantom.hpp>
#include <t1moco/relaxometry.hpp>
#include <t1moco/warp.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace t1moco;
using phantom::PhantomSpec;
using phantom::PhantomTruth;

namespace {

PhantomSpec small_spec() {
  PhantomSpec spec;
  spec.width = 64;
  spec.height = 64;
  return spec;
}

}  // namespace

TEST_CASE("motionless noiseless phantom: corrupted equals clean, fit recovers truth", "[phantom]") {
  PhantomSpec spec = small_spec();
  PhantomTruth t = phantom::generate(spec);

  REQUIRE(t.clean.count() == 11);
  REQUIRE(t.corrupted.count() == 11);
  for (int i = 0; i < 11; ++i) REQUIRE(t.corrupted.images[i].data == t.clean.images[i].data);
  REQUIRE(max_displacement(t.motion) == 0.0);
  REQUIRE(t.myocardium.count_true() > 100);
  REQUIRE(t.maps.converged_fraction() == 1.0);

  // fitting the clean series reproduces the (smoothed) truth maps
  ParameterMaps fitted = fit_series(t.clean);
  double worst = 0;
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      if (!t.myocardium.grid.at(x, y)) continue;
      REQUIRE(fitted.converged.at(x, y) == 1);
      worst = std::max(worst, std::abs(fitted.t1_ms.at(x, y) - t.maps.t1_ms.at(x, y)) /
                                  t.maps.t1_ms.at(x, y));
    }
  REQUIRE(worst < 1e-3);
}

TEST_CASE("phantom motion respects amplitude and smoothness budgets", "[phantom]") {
  PhantomSpec spec = small_spec();
  spec.motion_amplitude_px = 5.0;
  spec.seed = 17;
  PhantomTruth t = phantom::generate(spec);

  // image 0 is the static anchor
  REQUIRE(max_magnitude(t.motion.fields[0]) == 0.0);
  // every moving field is peak-normalized to the amplitude
  for (int i = 1; i < t.motion.count(); ++i) {
    const double peak = max_magnitude(t.motion.fields[i]);
    REQUIRE(peak <= 5.0 + 1e-9);
    REQUIRE(peak == Catch::Approx(5.0).epsilon(1e-9));
  }
  // corrupted is exactly the warped clean series when noise is off
  WarpedSeries w = warp_series(t.clean, t.motion);
  for (int i = 0; i < t.clean.count(); ++i)
    REQUIRE(t.corrupted.images[i].data == w.images[i].data);

  // truth fields satisfy the closed-form smoothness budget
  const double energy = smoothness_loss(t.motion);
  REQUIRE(energy <= phantom::motion_energy_budget(spec.motion_amplitude_px, spec.motion_smooth_px));
}

TEST_CASE("phantom generation is seed-reproducible", "[phantom]") {
  PhantomSpec spec = small_spec();
  spec.motion_amplitude_px = 4.0;
  spec.noise_sigma = 0.02;
  spec.seed = 99;
  PhantomTruth a = phantom::generate(spec);
  PhantomTruth b = phantom::generate(spec);
  for (int i = 0; i < a.corrupted.count(); ++i)
    REQUIRE(a.corrupted.images[i].data == b.corrupted.images[i].data);
  for (int i = 0; i < a.motion.count(); ++i) {
    REQUIRE(a.motion.fields[i].dx.data == b.motion.fields[i].dx.data);
    REQUIRE(a.motion.fields[i].dy.data == b.motion.fields[i].dy.data);
  }

  spec.seed = 100;
  PhantomTruth c = phantom::generate(spec);
  REQUIRE(a.corrupted.images[1].data != c.corrupted.images[1].data);
}

TEST_CASE("phantom spec validation", "[phantom]") {
  SECTION("zero-area myocardium") {
    PhantomSpec spec = small_spec();
    spec.myo_radius_frac = spec.blood_radius_frac;  // annulus collapses
    REQUIRE_THROWS_AS(phantom::generate(spec), std::invalid_argument);
  }
  SECTION("geometry must fit the image") {
    PhantomSpec spec = small_spec();
    spec.myo_radius_frac = 0.9;
    REQUIRE_THROWS_AS(phantom::generate(spec), std::invalid_argument);
  }
  SECTION("negative amplitude") {
    PhantomSpec spec = small_spec();
    spec.motion_amplitude_px = -1.0;
    REQUIRE_THROWS_AS(phantom::generate(spec), std::invalid_argument);
  }
  SECTION("bad tissue T1") {
    PhantomSpec spec = small_spec();
    spec.myocardium.t1_ms = 0.0;
    REQUIRE_THROWS_AS(phantom::generate(spec), std::invalid_argument);
  }
}

TEST_CASE("invert_field undoes smooth truth motion", "[phantom]") {
  PhantomSpec spec = small_spec();
  spec.motion_amplitude_px = 4.0;
  spec.seed = 5;
  PhantomTruth t = phantom::generate(spec);
  const VecField& phi = t.motion.fields[3];
  VecField psi = phantom::invert_field(phi);
  // composition residual phi(x + psi(x)) + psi(x) vanishes away from borders
  double worst = 0;
  for (int y = 8; y < spec.height - 8; ++y)
    for (int x = 8; x < spec.width - 8; ++x) {
      const double px = psi.dx.at(x, y), py = psi.dy.at(x, y);
      const double rx = px + sample_bilinear(phi.dx, x + px, y + py);
      const double ry = py + sample_bilinear(phi.dy, x + px, y + py);
      worst = std::max(worst, std::hypot(rx, ry));
    }
  REQUIRE(worst < 1e-6);
}

TEST_CASE("displacement_error oracle cases", "[phantom]") {
  PhantomSpec spec = small_spec();
  spec.motion_amplitude_px = 5.0;
  spec.seed = 8;
  PhantomTruth t = phantom::generate(spec);

  SECTION("estimate equal to the exact correction is near zero") {
    // the exact correction of a pull-warp corruption is the inverse field
    DeformationSet est(t.motion.count(), spec.width, spec.height);
    for (int i = 0; i < t.motion.count(); ++i) est.fields[i] = phantom::invert_field(t.motion.fields[i]);
    auto err = phantom::displacement_error(est, t.motion, &t.myocardium);
    REQUIRE(err.mean_px < 0.05);
  }
  SECTION("identity estimate scores exactly the mean truth magnitude") {
    DeformationSet zero(t.motion.count(), spec.width, spec.height);
    auto err = phantom::displacement_error(zero, t.motion, &t.myocardium);
    double mean_mag = 0;
    long cnt = 0;
    for (int i = 0; i < t.motion.count(); ++i)
      for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
          if (!t.myocardium.grid.at(x, y)) continue;
          mean_mag += std::hypot(t.motion.fields[i].dx.at(x, y), t.motion.fields[i].dy.at(x, y));
          ++cnt;
        }
    mean_mag /= static_cast<double>(cnt);
    REQUIRE(err.mean_px == Catch::Approx(mean_mag).epsilon(1e-12));
    REQUIRE(err.max_px <= 5.0 + 1e-9);
  }
  SECTION("pure translation composes exactly") {
    DeformationSet truth(2, 16, 16), est(2, 16, 16);
    truth.fields[1].dx.fill(3.0);
    truth.fields[1].dy.fill(-2.0);
    est.fields[1].dx.fill(-3.0);  // the inverse of a translation is its negation
    est.fields[1].dy.fill(2.0);
    auto err = phantom::displacement_error(est, truth);
    REQUIRE(err.max_px < 1e-6);

    DeformationSet zero(2, 16, 16);
    auto id_err = phantom::displacement_error(zero, truth);
    REQUIRE(id_err.mean_px == Catch::Approx(std::hypot(3.0, 2.0) / 2.0).epsilon(1e-9));
  }
  SECTION("shape mismatch throws") {
    DeformationSet bad(t.motion.count(), 8, 8);
    REQUIRE_THROWS_AS(phantom::displacement_error(bad, t.motion), std::invalid_argument);
  }
}

TEST_CASE("default-difficulty phantom degrades the raw sd by at least 30%", "[phantom]") {
  PhantomSpec spec = small_spec();
  spec.motion_amplitude_px = 5.0;
  spec.noise_sigma = 0.02;
  spec.seed = 3;
  PhantomTruth t = phantom::generate(spec);

  ImageSeries aligned = t.clean;
  std::mt19937_64 rng(1234);
  std::normal_distribution<double> noise(0.0, 0.02 * spec.blood.c);
  for (auto& img : aligned.images)
    for (auto& v : img.data) v = std::abs(v + noise(rng));

  ParameterMaps raw_maps = fit_series(t.corrupted);
  ParameterMaps aligned_maps = fit_series(aligned);
  const auto raw_sd = eval::myocardial_sd(raw_maps, t.myocardium);
  const auto aligned_sd = eval::myocardial_sd(aligned_maps, t.myocardium);
  INFO("raw " << raw_sd.mean_ms << " aligned " << aligned_sd.mean_ms);
  REQUIRE(raw_sd.mean_ms >= 1.3 * aligned_sd.mean_ms);
}
