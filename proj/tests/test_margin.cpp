#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "properties.hpp"

using namespace margin_maxer;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
const double kLn2 = std::numbers::ln2;
}

TEST_CASE("log loss in closed form") {
  const auto toy = make_toy(0.5);
  CHECK(log_loss(Vector{0.0, 0.0}, toy) == 0.0);
  CHECK_THAT(log_loss(Vector{1.0, 0.0}, toy), WithinAbs(-0.5, 1e-15));
  const double big = log_loss(Vector{1e6, 0.0}, toy);
  CHECK(std::isfinite(big));
  CHECK_THAT(big, WithinRel(-5e5, 1e-15));
  CHECK_THROWS_AS(log_loss(Vector{1.0, 0.0, 0.0}, toy), DimensionMismatch);
}

TEST_CASE("normalized gradient on the toy dataset") {
  for (double g : {0.1, 0.5, 0.9}) {
    const auto toy = make_toy(g);
    const double h = std::sqrt(1 - g * g);
    for (double w1 : {0.0, 3.0, 1e4}) {
      const Vector ng = normalized_gradient(Vector{w1, 0.0}, toy);
      CHECK_THAT(-ng[0], WithinAbs(g, 1e-15));
      CHECK_THAT(-ng[1], WithinAbs(h / 3.0, 1e-15));
    }
    // The w2-velocity vanishes on the attractor line.
    const Vector on_line{2.0, kLn2 / (2 * h)};
    CHECK_THAT(normalized_gradient(on_line, toy)[1], WithinAbs(0.0, 1e-15));
  }
}

TEST_CASE("margin examples") {
  const auto toy = make_toy(0.5);
  CHECK_THAT(margin(Vector{1.0, 0.0}, toy), WithinAbs(0.5, 1e-15));
  CHECK_THAT(margin(Vector{0.0, 1.0}, toy), WithinAbs(-std::sqrt(0.75), 1e-15));
  CHECK_THAT(margin(Vector{7.3, 0.0}, toy), WithinAbs(margin(Vector{1.0, 0.0}, toy), 1e-15));
  CHECK_THROWS_AS(margin(Vector{0.0, 0.0}, toy), ZeroVectorError);
  CHECK(argmin_margin(Vector{1.0, 0.0}, toy) == 0);
  CHECK(argmin_margin(Vector{1.0, 1.0}, toy) == 1);
}

TEST_CASE("projections") {
  const Vector e1{1.0, 0.0};
  const Vector p = project_parallel(Vector{3.0, 4.0}, e1);
  const Vector q = project_perp(Vector{3.0, 4.0}, e1);
  CHECK(p == Vector{3.0, 0.0});
  CHECK(q == Vector{0.0, 4.0});
  CHECK(norm(project_perp(e1, e1)) == 0.0);
  CHECK(norm(project_parallel(Vector{0.0, 2.0}, e1)) == 0.0);
  CHECK_THROWS_AS(project_perp(Vector{1.0, 1.0}, Vector{1.0, 1.0}), DomainError);
}

TEST_CASE("directional error") {
  const Vector e1{1.0, 0.0};
  CHECK(directional_error(Vector{5.0, 0.0}, e1) == 0.0);
  CHECK_THAT(directional_error(Vector{0.0, -2.0}, e1), WithinAbs(std::sqrt(2.0), 1e-15));
  for (double r : {1e-3, 1e-4, 1e-6}) {
    const double e = directional_error(Vector{1.0, r}, e1);
    CHECK(e / r >= 0.9);
    CHECK(e / r <= 1.1);
  }
  const Vector w{0.3, -0.7};
  const double c = dot(w, e1) / norm(w);
  CHECK_THAT(directional_error(w, e1), WithinAbs(std::sqrt(2 * (1 - c)), 1e-15));
  CHECK_THROWS_AS(directional_error(Vector{0.0, 0.0}, e1), ZeroVectorError);
}

TEST_CASE("centripetal velocity on the toy dataset") {
  const double g = 0.5;
  const double h = std::sqrt(1 - g * g);
  const auto toy = make_toy(g);
  const Vector e1{1.0, 0.0};
  const double line = kLn2 / (2 * h);
  CHECK_THAT(centripetal_velocity(Vector{4.0, line}, e1, toy), WithinAbs(0.0, 1e-15));
  CHECK_THAT(centripetal_velocity(Vector{4.0, 60.0}, e1, toy), WithinAbs(h, 1e-12));
  CHECK(centripetal_velocity(Vector{4.0, 0.5 * line}, e1, toy) < 0.0);
  // phi = -h (1 - e^x) / (1 + e^x) for w2 > 0, x = 2 h w2 - log 2
  for (double w2 : {0.1, 0.3, 1.0, 2.5}) {
    const double x = 2 * h * w2 - kLn2;
    const double expect = -h * (1 - std::exp(x)) / (1 + std::exp(x));
    CHECK_THAT(centripetal_velocity(Vector{3.0, w2}, e1, toy), WithinAbs(expect, 1e-14));
  }
  CHECK_THROWS_AS(centripetal_velocity(Vector{4.0, 0.0}, e1, toy), DegenerateError);
}

TEST_CASE("property suites") {
  for (const auto& s : mm_test::run_margin_properties(60, 20, 11)) {
    INFO(s.name << ": " << s.cases << " cases, worst " << s.worst);
    CHECK(s.cases >= 60);
    CHECK(s.worst <= 0.0);
  }
}
