#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

#include "properties.hpp"
#include "support.hpp"

using namespace margin_maxer;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("gd step") {
  const auto toy = make_toy(0.5);
  const Vector w = gd_step(Vector{0.0, 0.0}, toy, 1.0);
  CHECK_THAT(w[0], WithinAbs(0.5, 1e-15));
  CHECK_THAT(w[1], WithinAbs(0.28867513459481287, 1e-15));
  const Vector same = gd_step(Vector{0.3, -0.2}, toy, 0.0);
  CHECK(same == Vector{0.3, -0.2});
  CHECK_THROWS_AS(gd_step(Vector{0.0, 0.0}, toy, -1.0), DomainError);
}

TEST_CASE("gd axis progress stays in [0, eta]") {
  const auto ds = make_synthetic({Family::SphereCap, 0.1, 30, 2});
  const Vector e1{1.0, 0.0};
  Vector prev{0.0, 0.0};
  double lo = 1.0;
  double hi = 0.0;
  RunOptions opts;
  opts.observer = [&](std::size_t, Phase, std::span<const double> w) {
    const double step = w[0] - prev[0];
    lo = std::min(lo, step);
    hi = std::max(hi, step);
    prev.assign(w.begin(), w.end());
  };
  run_baseline(ds, Method::GD, 1.0, 2000, opts);
  CHECK(lo >= 0.0);
  CHECK(hi <= 1.0);
}

TEST_CASE("ngd step on the toy dataset") {
  const double g = 0.5;
  const double h = std::sqrt(1 - g * g);
  const auto toy = make_toy(g);
  const Vector w = ngd_step(Vector{0.0, 0.0}, toy, 1.0);
  CHECK(w[0] == 0.5);
  CHECK_THAT(w[1], WithinAbs(h / 3, 1e-15));
  for (const Vector& w0 : {Vector{2.0, 0.4}, Vector{17.0, -3.0}, Vector{1e3, 0.25}}) {
    CHECK(ngd_step(w0, toy, 1.0)[0] == w0[0] + g);
  }
  const double x1 = 2 * h * w[1] - std::numbers::ln2;
  CHECK_THAT(x1, WithinAbs(-std::numbers::ln2 + 2 * (1 - g * g) / 3, 1e-15));
}

TEST_CASE("ngd axis progress stays in [eta gamma*, eta]") {
  Rng rng(5);
  double worst = -1.0;
  for (int r = 0; r < 50; ++r) {
    const auto km = mm_test::random_known_dataset(rng);
    const double eta = rng.uniform(0.1, 1.0);
    Vector prev(km.ds.dim(), 0.0);
    RunOptions opts;
    opts.observer = [&](std::size_t, Phase, std::span<const double> w) {
      const double step = dot(w, km.w_star) - dot(prev, km.w_star);
      worst = std::max({worst, eta * km.gamma_star - 1e-12 - step, step - eta - 1e-12});
      prev.assign(w.begin(), w.end());
    };
    run_baseline(km.ds, Method::NGD, eta, 200, opts);
  }
  CHECK(worst <= 0.0);
}

TEST_CASE("ngd baseline on the toy dataset") {
  const double g = 0.5;
  const double h = std::sqrt(1 - g * g);
  const auto toy = make_toy(g);
  const double lo = std::numbers::ln2 / (4 * h);
  const double hi = 3 * std::numbers::ln2 / (4 * h);
  bool inside = true;
  Vector last;
  RunOptions opts;
  opts.observer = [&](std::size_t, Phase, std::span<const double> w) {
    inside = inside && w[1] >= lo && w[1] <= hi;
    last.assign(w.begin(), w.end());
  };
  opts.log_stride = 1000;
  const auto tr = run_baseline(toy, Method::NGD, 1.0, 20'000, opts);
  CHECK(inside);
  CHECK_THAT(norm(last) / 20'000, WithinRel(g, 1e-4));
  CHECK(tr.rows.size() == 20);
  CHECK(tr.rows.back().t == 20'000);
  CHECK(tr.final_weight == last);
}

TEST_CASE("gd is slower than ngd on the toy dataset") {
  const auto toy = make_toy(0.5);
  RunOptions opts;
  opts.reference = ReferenceDirection{{1.0, 0.0}, 0.5};
  opts.log_stride = 100'000;
  const auto gd = run_baseline(toy, Method::GD, 1.0, 100'000, opts);
  const auto ngd = run_baseline(toy, Method::NGD, 1.0, 100'000, opts);
  CHECK(gd.rows.back().margin_gap > ngd.rows.back().margin_gap);
}

TEST_CASE("baseline argument checks") {
  const auto toy = make_toy(0.5);
  CHECK_THROWS_AS(run_baseline(toy, Method::NGD, 1.0, 0), ConfigError);
  CHECK_THROWS_AS(run_baseline(toy, Method::NGD, 1.5, 10), ConfigError);
  RunOptions big;
  big.allow_large_step = true;
  CHECK_NOTHROW(run_baseline(toy, Method::NGD, 1.5, 10, big));
  RunOptions bad;
  bad.stop_gap = 1e-3;
  CHECK_THROWS_AS(run_baseline(toy, Method::NGD, 1.0, 10, bad), ConfigError);
}

TEST_CASE("prgd rescale and projection contracts") {
  const auto ds = make_synthetic({Family::BallCap, 0.05, 60, 4});
  RunOptions opts;
  opts.reference = ReferenceDirection{{1.0, 0.0}, 0.05};
  Vector prev;
  double radius = 0.0;
  std::size_t k = 0;
  double worst_norm = 0.0;
  double worst_margin = 0.0;
  double worst_dir = 0.0;
  double worst_ball = 0.0;
  const Schedule sched = Schedule::exp_radius(4, 1.3, 2.0);
  opts.observer = [&](std::size_t, Phase phase, std::span<const double> w) {
    if (phase == Phase::Rescale) {
      radius = sched.radius(k++, 2.0);
      worst_norm = std::max(worst_norm, std::abs(norm(w) - radius) / radius);
      if (!prev.empty()) {
        worst_margin = std::max(worst_margin, std::abs(margin(w, ds) - margin(prev, ds)));
        const Vector e1{1.0, 0.0};
        worst_dir = std::max(worst_dir, std::abs(directional_error(w, e1) - directional_error(prev, e1)));
      }
    } else if (phase == Phase::NgdStep) {
      worst_ball = std::max(worst_ball, norm(w) - radius);
    }
    prev.assign(w.begin(), w.end());
  };
  Vector w0 = ngd_step(Vector{0.0, 0.0}, ds, 1.0);
  prev = w0;
  const auto tr = prgd_run(w0, ds, 1.0, sched, 20, opts);
  CHECK(k == 21);
  CHECK(tr.iterations == 20 * 4 + 1);
  CHECK(worst_norm <= 1e-12);
  CHECK(worst_margin <= 1e-12);
  CHECK(worst_dir <= 1e-12);
  CHECK(worst_ball <= 1e-12 * sched.radius(20, 2.0));
  CHECK(tr.rows.back().phase == Phase::Rescale);
  CHECK(tr.resolved_r0 == 2.0);
}

TEST_CASE("prgd needs a direction") {
  const auto toy = make_toy(0.5);
  CHECK_THROWS_AS(prgd_run(Vector{0.0, 0.0}, toy, 1.0, Schedule::exp_radius(), 3), ZeroVectorError);
  CHECK_THROWS_AS(prgd_run(Vector{1.0, 0.0, 0.0}, toy, 1.0, Schedule::exp_radius(), 3), DimensionMismatch);
}

TEST_CASE("explicit schedule bounds the cycle count") {
  const auto toy = make_toy(0.5);
  const auto sched = Schedule::explicit_schedule({0, 3, 7}, {1.0, 2.0, 4.0});
  const auto tr = prgd_run(Vector{1.0, 0.5}, toy, 1.0, sched, kUnboundedCycles);
  // cycles 0 and 1 run 3 and 4 iterations, cycle 2 only rescales
  CHECK(tr.iterations == 3 + 4 + 1);
  CHECK_THAT(norm(tr.final_weight), WithinAbs(4.0, 1e-12));
}

TEST_CASE("adaptive prgd matches the toy recursion") {
  const double g = 0.5;
  const std::size_t K = 25;
  std::vector<double> even_w1;
  RunOptions opts;
  opts.observer = [&](std::size_t t, Phase phase, std::span<const double> w) {
    if (phase == Phase::Rescale) {
      CHECK(t % 2 == 0);
      CHECK_THAT(w[1], WithinAbs(1.0, 1e-12));
      even_w1.push_back(w[0]);
    }
  };
  mm_test::toy_adaptive_prgd(g, K, opts);
  // Independent closed form: w1(2k+2) = q^{-k} (w1(2) + g/(1-q)) - g/(1-q).
  const double h = std::sqrt(1 - g * g);
  const double e = std::exp(2 * h);
  const double q = 1 + h * (2 - e) / (2 + e);
  CHECK_THAT(q, WithinAbs(toy_prgd_q(g), 1e-15));
  REQUIRE(even_w1.size() == K + 1);
  const double first = g / (h / 3);
  const auto oracle = toy_oracle_prgd(g, K);
  for (std::size_t k = 0; k <= K; ++k) {
    const double closed = std::pow(q, -static_cast<double>(k)) * (first + g / (1 - q)) - g / (1 - q);
    // Scores <w, z_i> lose about ||w|| * eps absolutely; w1 reaches ~1e6 here.
    CHECK_THAT(even_w1[k], WithinRel(closed, 1e-9));
    CHECK_THAT(oracle[k], WithinRel(closed, 1e-12));
  }
}

TEST_CASE("two-phase run") {
  const auto ds = make_synthetic({Family::SphereCap, 0.05, 50, 1});
  const auto base = run_baseline(ds, Method::NGD, 1.0, 30);
  const auto tp = two_phase_run(ds, 1.0, Method::NGD, 30, Schedule::exp_radius(), 0);
  REQUIRE(tp.rows.size() == 31);
  for (std::size_t i = 0; i < 30; ++i) {
    CHECK(tp.rows[i].norm == base.rows[i].norm);
    CHECK(tp.rows[i].phase == Phase::Warmup);
  }
  CHECK(tp.rows.back().phase == Phase::Rescale);
  CHECK(tp.final_weight == base.final_weight);
  CHECK(tp.warmup_iterations == 30);
  CHECK(*tp.resolved_r0 == norm(base.final_weight));
  CHECK_THROWS_AS(two_phase_run(ds, 1.0, Method::NGD, 0, Schedule::exp_radius(), 0), ConfigError);

  const auto longer = two_phase_run(ds, 1.0, Method::GD, 30, Schedule::poly_radius(3, 1.5), 4);
  CHECK(longer.iterations == 30 + 4 * 3 + 1);
}

TEST_CASE("stopping and logging") {
  const auto ds = make_synthetic({Family::SphereCap, std::sin(std::numbers::pi / 100), 100, 0});
  RunOptions opts;
  opts.reference = ReferenceDirection{{1.0, 0.0}, std::sin(std::numbers::pi / 100)};
  opts.stop_gap = 1e-3;
  opts.log_stride = 50;
  const auto tr = run_baseline(ds, Method::NGD, 1.0, 100'000, opts);
  REQUIRE(tr.stop_iteration);
  CHECK(tr.iterations == *tr.stop_iteration);
  CHECK(tr.rows.back().t == *tr.stop_iteration);
  CHECK(tr.rows.back().margin_gap < 1e-3);
  for (std::size_t i = 0; i + 1 < tr.rows.size(); ++i) {
    CHECK(tr.rows[i].t % 50 == 0);
    CHECK(tr.rows[i].margin_gap >= 1e-3);
    CHECK_THAT(tr.rows[i].margin_gap, WithinAbs(opts.reference->gamma_star - tr.rows[i].margin, 1e-14));
  }
  RunOptions capped;
  capped.max_iterations = 25;
  CHECK(two_phase_run(ds, 1.0, Method::GD, 10, Schedule::exp_radius(), kUnboundedCycles, capped).iterations == 25);
}

TEST_CASE("runs are deterministic") {
  const auto ds = make_synthetic({Family::BallCap, 0.03, 80, 12});
  RunOptions opts;
  opts.reference = ReferenceDirection{{1.0, 0.0}, 0.03};
  const auto a = two_phase_run(ds, 1.0, Method::GD, 200, Schedule::exp_radius(), 40, opts);
  const auto b = two_phase_run(ds, 1.0, Method::GD, 200, Schedule::exp_radius(), 40, opts);
  std::ostringstream sa;
  std::ostringstream sb;
  write_trajectory_csv(a, sa);
  write_trajectory_csv(b, sb);
  CHECK(sa.str() == sb.str());
  CHECK(a.final_weight == b.final_weight);
}

TEST_CASE("span invariance") {
  const auto res = mm_test::run_span_invariance(150, 3);
  INFO(res.cases << " runs, worst " << res.worst);
  CHECK(res.passed(150));
}

TEST_CASE("schedules") {
  const auto e = Schedule::exp_radius(5, 1.2, 2.0);
  CHECK_THAT(e.radius(3, 2.0), WithinRel(2.0 * 1.728, 1e-15));
  CHECK(e.cycle_length(7) == 5);
  const auto p = Schedule::poly_radius(5, 2.0);
  CHECK(p.radius(0, 3.0) == 3.0);
  CHECK(p.radius(2, 3.0) == 27.0);
  const auto pb = Schedule::poly_both(2.0, 1.0, 1.0);
  CHECK(pb.cycle_length(0) == 2);
  CHECK(pb.cycle_length(3) == 8);
  CHECK_THROWS_AS(Schedule::exp_radius(5, 1.0).validate(), ConfigError);
  CHECK_THROWS_AS(Schedule::explicit_schedule({0, 3}, {1.0}).validate(), ConfigError);
  CHECK_THROWS_AS(Schedule::explicit_schedule({0, 0}, {1.0, 2.0}).validate(), ConfigError);
  CHECK_THROWS_AS(Schedule::explicit_schedule({0, 1}, {1.0, -2.0}).validate(), ConfigError);
  for (const auto& s : {e, p, pb, Schedule::explicit_schedule({0, 4, 9}, {1.0, 2.0, 3.0})}) {
    const nlohmann::json j = s;
    CHECK(j.get<Schedule>() == s);
  }
  CHECK(schedule_kind_from_string("exp") == ScheduleKind::ExpRadius);
}

TEST_CASE("trajectory csv round trip") {
  const auto toy = make_toy(0.5);
  RunOptions opts;
  opts.reference = ReferenceDirection{{1.0, 0.0}, 0.5};
  const auto tr = two_phase_run(toy, 1.0, Method::NGD, 5, Schedule::exp_radius(2), 3, opts);
  std::stringstream ss;
  write_trajectory_csv(tr, ss);
  const auto back = read_trajectory_csv(ss);
  REQUIRE(back.rows.size() == tr.rows.size());
  for (std::size_t i = 0; i < tr.rows.size(); ++i) {
    CHECK(back.rows[i].t == tr.rows[i].t);
    CHECK(back.rows[i].phase == tr.rows[i].phase);
    CHECK(back.rows[i].margin_gap == tr.rows[i].margin_gap);
    CHECK(back.rows[i].log_loss == tr.rows[i].log_loss);
  }
  const auto no_ref = run_baseline(toy, Method::GD, 1.0, 3);
  std::stringstream s2;
  write_trajectory_csv(no_ref, s2);
  CHECK(std::isnan(read_trajectory_csv(s2).rows[0].dir_err));
  std::istringstream bad("t,phase,norm,margin,margin_gap,dir_err,log_loss\n2,ngd-step,1,1,1,1,1\n1,ngd-step,1,1,1,1,1\n");
  CHECK_THROWS_AS(read_trajectory_csv(bad), ParseError);
}
