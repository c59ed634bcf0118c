// Copyright (c) 2026 t1moco contributors
// SPDX-License-Identifier: Apache-2.0

#include <t1moco/optimizer.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

using namespace t1moco;

TEST_CASE("adam: zero gradient leaves parameters unchanged", "[optimizer]") {
  Adam opt(3);
  std::vector<double> x = {1.0, -2.0, 0.5};
  std::vector<double> g(3, 0.0);
  opt.step(x, g);
  REQUIRE(x == std::vector<double>{1.0, -2.0, 0.5});
  REQUIRE(opt.steps() == 1);
}

TEST_CASE("adam: bias-corrected first step", "[optimizer]") {
  AdamConfig cfg;
  cfg.lr = 1e-3;
  Adam opt(1, cfg);
  std::vector<double> x = {0.0};
  std::vector<double> g = {1.0};
  opt.step(x, g);
  // closed form: -lr * g / (|g| + eps), an epsilon-hair under lr in magnitude
  REQUIRE(x[0] == Catch::Approx(-1e-3).epsilon(1e-7));
  REQUIRE(x[0] > -1e-3);

  // sign follows the gradient regardless of magnitude
  Adam opt2(1, cfg);
  std::vector<double> y = {0.0};
  std::vector<double> g2 = {-1e-4};
  opt2.step(y, g2);
  REQUIRE(y[0] > 0.0);
}

TEST_CASE("adam: quadratic bowl converges", "[optimizer]") {
  AdamConfig cfg;
  cfg.lr = 0.1;
  Adam opt(1, cfg);
  std::vector<double> x = {1.0};
  for (int i = 0; i < 200; ++i) {
    std::vector<double> g = {2.0 * x[0]};
    opt.step(x, g);
  }
  REQUIRE(std::abs(x[0]) < 1e-2);
}

TEST_CASE("adam: input validation", "[optimizer]") {
  Adam opt(2);
  std::vector<double> x = {0.0, 0.0};
  std::vector<double> bad_size = {1.0};
  REQUIRE_THROWS_AS(opt.step(x, bad_size), std::invalid_argument);
  std::vector<double> nan_grad = {1.0, std::numeric_limits<double>::quiet_NaN()};
  REQUIRE_THROWS_AS(opt.step(x, nan_grad), std::invalid_argument);
}

TEST_CASE("adam: reset clears moments", "[optimizer]") {
  Adam opt(1);
  std::vector<double> x = {0.0};
  std::vector<double> g = {1.0};
  opt.step(x, g);
  opt.reset();
  REQUIRE(opt.steps() == 0);
  std::vector<double> y = {0.0};
  opt.step(y, g);
  REQUIRE(y[0] == Catch::Approx(x[0]));  // identical first step after reset
}

TEST_CASE("check_gradient validates correct analytic gradients", "[optimizer]") {
  SECTION("sum of squares") {
    auto f = [](std::span<const double> v) {
      double s = 0;
      for (double u : v) s += u * u;
      return s;
    };
    std::vector<double> x = {1.0, 2.0};
    std::vector<double> grad = {2.0, 4.0};
    auto rep = check_gradient(f, x, grad, 1e-5);
    REQUIRE(rep.max_rel_err < 1e-10);
    REQUIRE(x == std::vector<double>{1.0, 2.0});  // restored bit-exactly
  }
  SECTION("sin(x1) * x2") {
    auto f = [](std::span<const double> v) { return std::sin(v[0]) * v[1]; };
    std::vector<double> x = {0.3, 2.0};
    std::vector<double> grad = {std::cos(0.3) * 2.0, std::sin(0.3)};
    auto rep = check_gradient(f, x, grad, 1e-6);
    REQUIRE(rep.max_rel_err < 1e-8);
  }
}

TEST_CASE("check_gradient flags a doubled gradient with error near 1", "[optimizer]") {
  auto f = [](std::span<const double> v) {
    double s = 0;
    for (double u : v) s += u * u;
    return s;
  };
  std::vector<double> x = {1.0, -0.7};
  std::vector<double> wrong = {4.0, -2.8};  // 2x the true gradient
  auto rep = check_gradient(f, x, wrong);
  REQUIRE(rep.max_rel_err == Catch::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("check_gradient index subset and validation", "[optimizer]") {
  auto f = [](std::span<const double> v) { return v[0] + 10.0 * v[1]; };
  std::vector<double> x = {0.0, 0.0};
  std::vector<double> grad = {1.0, -5.0};  // second entry wrong
  std::vector<std::size_t> first_only = {0};
  REQUIRE(check_gradient(f, x, grad, first_only).max_rel_err < 1e-10);
  std::vector<std::size_t> both = {0, 1};
  auto rep = check_gradient(f, x, grad, both);
  REQUIRE(rep.max_rel_err > 1.0);
  REQUIRE(rep.worst_index == 1);
  std::vector<std::size_t> oob = {5};
  REQUIRE_THROWS_AS(check_gradient(f, x, grad, oob), std::out_of_range);
}
