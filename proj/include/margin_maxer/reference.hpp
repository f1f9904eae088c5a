#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"
#include "margin_maxer/dataset.hpp"
#include "margin_maxer/errors.hpp"
#include "margin_maxer/linalg.hpp"
#include "margin_maxer/margin.hpp"
#include "margin_maxer/optimizers.hpp"
#include "margin_maxer/trajectory.hpp"

namespace margin_maxer {

struct SolverResiduals {
  /// max_i (1 - <u, z_i>) over the scaled primal u = w*/gamma*, clipped at 0.
  double primal_infeasibility = 0.0;
  /// max_i alpha_i |<u, z_i> - 1|; zero for solvers without dual variables.
  double complementary_slackness = 0.0;
  /// ||sum_{i in I} alpha_i z_i - w*||; NaN when no dual coefficients exist.
  double representation_error = std::numeric_limits<double>::quiet_NaN();
  std::size_t iterations = 0;
};

struct MaxMarginSolution {
  Vector w_star;
  double gamma_star = 0.0;
  std::vector<std::size_t> support;
  /// Smallest margin among non-support samples; +inf when every sample is a support vector.
  double gamma_sub = std::numeric_limits<double>::infinity();
  /// Coefficients over `support` with w* = sum alpha_i y_i x_i (dual solver only).
  Vector dual_alpha;
  std::string method;
  bool approximate = false;
  SolverResiduals residuals;

  ReferenceDirection direction() const { return {w_star, gamma_star}; }
};

inline void to_json(nlohmann::json& j, const MaxMarginSolution& s) {
  auto finite_or_null = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  j = nlohmann::json{
      {"w_star", s.w_star},
      {"gamma_star", s.gamma_star},
      {"support", s.support},
      {"gamma_sub", finite_or_null(s.gamma_sub)},
      {"dual_alpha", s.dual_alpha},
      {"method", s.method},
      {"approximate", s.approximate},
      {"residuals",
       {{"primal_infeasibility", s.residuals.primal_infeasibility},
        {"complementary_slackness", s.residuals.complementary_slackness},
        {"representation_error", finite_or_null(s.residuals.representation_error)},
        {"iterations", s.residuals.iterations}}}};
}

namespace detail {

/// Support set by margin equality and the sub-margin of the remaining samples.
inline void fill_support(const Dataset& ds, MaxMarginSolution& s, double tol) {
  s.support.clear();
  s.gamma_sub = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double m = dot(s.w_star, ds.z(i));
    if (std::abs(m - s.gamma_star) <= tol) {
      s.support.push_back(i);
    } else {
      s.gamma_sub = std::min(s.gamma_sub, m);
    }
  }
}

inline void fill_primal_residual(const Dataset& ds, MaxMarginSolution& s) {
  double worst = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    worst = std::max(worst, 1.0 - dot(s.w_star, ds.z(i)) / s.gamma_star);
  }
  s.residuals.primal_infeasibility = worst;
}

}  // namespace detail

/// Known solution of a synthetic family: w* = e_1, gamma* from the generator.
/// Verifies min_i <w*, z_i> = gamma* to 1e-12.
inline MaxMarginSolution solve_exact_synthetic(const Dataset& ds, Family family) {
  if (!ds.origin()) {
    throw UnsupportedError("exact solution needs a dataset built by a synthetic generator");
  }
  if (ds.origin()->family != family) {
    throw DomainError("dataset was generated as " + to_string(ds.origin()->family) + ", not " +
                      to_string(family));
  }
  MaxMarginSolution s;
  s.w_star.assign(ds.dim(), 0.0);
  s.w_star[0] = 1.0;
  s.gamma_star = ds.origin()->gamma_star;
  s.method = "exact";
  const double attained = margin(s.w_star, ds);
  if (std::abs(attained - s.gamma_star) > 1e-12) {
    throw DomainError(fmt::format("dataset margin along e1 is {}, generator promised {}", attained,
                                  s.gamma_star));
  }
  detail::fill_support(ds, s, 1e-9);
  detail::fill_primal_residual(ds, s);
  return s;
}

struct DualSolverOptions {
  std::size_t max_sweeps = 1'000'000;
  /// KKT tolerance on primal feasibility and complementary slackness.
  double tol = 1e-9;
  /// ||u|| above this (margin below its inverse) is reported as non-separable.
  double max_norm = 1e12;
};

/// Hard-margin SVM through the origin, min ||u||^2/2 s.t. <u, z_i> >= 1, solved by
/// cyclic coordinate ascent on the dual max sum(a) - ||sum a_i z_i||^2 / 2, a >= 0.
inline MaxMarginSolution solve_dual(const Dataset& ds, const DualSolverOptions& opts = {}) {
  const std::size_t n = ds.size();
  Vector sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    sq[i] = dot(ds.z(i), ds.z(i));
    if (sq[i] == 0.0) throw NonSeparableError(fmt::format("sample {} is the zero vector", i));
  }
  Vector alpha(n, 0.0);
  Vector u(ds.dim(), 0.0);
  std::size_t sweep = 0;
  double infeas = 0.0;
  double slack = 0.0;
  bool converged = false;
  while (sweep < opts.max_sweeps) {
    ++sweep;
    for (std::size_t i = 0; i < n; ++i) {
      const double next = std::max(0.0, alpha[i] + (1.0 - dot(u, ds.z(i))) / sq[i]);
      const double delta = next - alpha[i];
      if (delta != 0.0) {
        axpy(delta, ds.z(i), u);
        alpha[i] = next;
      }
    }
    const double un = norm(u);
    if (!std::isfinite(un) || un > opts.max_norm) {
      throw NonSeparableError(fmt::format("dual objective diverges (||u|| = {:.3g})", un));
    }
    infeas = 0.0;
    slack = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double m = dot(u, ds.z(i));
      infeas = std::max(infeas, 1.0 - m);
      slack = std::max(slack, alpha[i] * std::abs(m - 1.0));
    }
    if (infeas <= opts.tol && slack <= opts.tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw NonSeparableError(fmt::format(
        "KKT residual stalled after {} sweeps (infeasibility {:.3g}, slackness {:.3g})", sweep, infeas, slack));
  }

  const double un = norm(u);
  MaxMarginSolution s;
  s.method = "dual";
  s.w_star = scaled(u, 1.0 / un);
  s.gamma_star = 1.0 / un;
  s.residuals.primal_infeasibility = std::max(0.0, infeas);
  s.residuals.complementary_slackness = slack;
  s.residuals.iterations = sweep;

  const double amax = *std::max_element(alpha.begin(), alpha.end());
  Vector rep(ds.dim(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (alpha[i] > 1e-6 * amax) {
      s.support.push_back(i);
      // w* = u / ||u|| = sum (alpha_i / ||u||) z_i
      s.dual_alpha.push_back(alpha[i] / un);
      axpy(alpha[i] / un, ds.z(i), rep);
    }
  }
  s.residuals.representation_error = norm(difference(rep, s.w_star));
  s.gamma_sub = std::numeric_limits<double>::infinity();
  std::size_t next_support = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (next_support < s.support.size() && s.support[next_support] == i) {
      ++next_support;
      continue;
    }
    s.gamma_sub = std::min(s.gamma_sub, dot(s.w_star, ds.z(i)));
  }
  return s;
}

/// Max-margin estimate from T NGD steps (eta = 1) from the origin: w* ~ w(T)/||w(T)||
/// and gamma* ~ gamma(w(T)), a lower estimate. Support is every sample within
/// `support_tol` of the estimated margin.
inline MaxMarginSolution approx_by_ngd(const Dataset& ds, std::size_t T, double support_tol = 1e-4) {
  if (T < 1000) throw DomainError(fmt::format("approx_by_ngd needs T >= 1000, got {}", T));
  Vector w(ds.dim(), 0.0);
  for (std::size_t t = 0; t < T; ++t) w = ngd_step(w, ds, 1.0);
  const double wn = norm(w);
  if (wn == 0.0 || !std::isfinite(wn)) throw NonSeparableError("NGD iterate stayed at the origin");
  const double m = margin(w, ds);
  if (m <= 0.0) throw NonSeparableError(fmt::format("NGD margin after {} steps is {:.3g} <= 0", T, m));
  MaxMarginSolution s;
  s.method = "ngd";
  s.approximate = true;
  s.w_star = scaled(w, 1.0 / wn);
  s.gamma_star = m;
  s.residuals.iterations = T;
  detail::fill_support(ds, s, support_tol);
  detail::fill_primal_residual(ds, s);
  return s;
}

/// rank{x_i : i in support} and rank{x_i : i in [n]}.
struct RankDiagnostics {
  std::size_t support_rank = 0;
  std::size_t data_rank = 0;
};

inline RankDiagnostics rank_diagnostics(const Dataset& ds, const std::vector<std::size_t>& support) {
  std::vector<Vector> sup;
  for (std::size_t i : support) sup.emplace_back(ds.x(i).begin(), ds.x(i).end());
  return {rank(sup), rank(ds.points())};
}

// ---------------------------------------------------------------------------
// Closed-form dynamics on the three-point toy dataset (eta = 1).
//
// With z1 = z3 = (g, h), z2 = (g, -h), h = sqrt(1 - g^2), the negative normalized
// gradient is (g, h (2 - e^{2 h w2}) / (2 + e^{2 h w2})), so the coordinates
// decouple. NGD gives w1(t) = g t and, with x = 2 h w2 - log 2,
//   x(t+1) = x(t) + 2 h^2 (1 - e^{x}) / (1 + e^{x}),  x(0) = -log 2.

inline void check_toy_gamma(double g) {
  if (!(g > 0.0 && g < 1.0)) throw DomainError(fmt::format("gamma_star must lie in (0,1), got {}", g));
}

/// NGD iterates w(0..T) from the decoupled recursion.
inline std::vector<Vector> toy_oracle_ngd_weights(double gamma_star, std::size_t T) {
  check_toy_gamma(gamma_star);
  const double h2 = 1.0 - gamma_star * gamma_star;
  const double h = std::sqrt(h2);
  std::vector<Vector> out;
  out.reserve(T + 1);
  double x = -std::numbers::ln2;
  for (std::size_t t = 0; t <= T; ++t) {
    out.push_back({gamma_star * static_cast<double>(t), (x + std::numbers::ln2) / (2.0 * h)});
    const double ex = std::exp(x);
    x += 2.0 * h2 * (1.0 - ex) / (1.0 + ex);
  }
  return out;
}

/// The x(t) = 2 sqrt(1-g^2) w2(t) - log 2 sequence for t = 0..T.
inline std::vector<double> toy_oracle_x(double gamma_star, std::size_t T) {
  const auto ws = toy_oracle_ngd_weights(gamma_star, T);
  const double h = std::sqrt(1.0 - gamma_star * gamma_star);
  std::vector<double> xs;
  xs.reserve(ws.size());
  for (const auto& w : ws) xs.push_back(2.0 * h * w[1] - std::numbers::ln2);
  return xs;
}

/// Trajectory record (rows for t = 1..T) of the closed-form NGD run.
inline Trajectory toy_oracle_ngd(double gamma_star, std::size_t T) {
  const auto ws = toy_oracle_ngd_weights(gamma_star, T);
  const Dataset ds = make_toy(gamma_star);
  const Vector e1{1.0, 0.0};
  Trajectory tr;
  for (std::size_t t = 1; t <= T; ++t) {
    TrajectoryRow r;
    r.t = t;
    r.phase = Phase::NgdStep;
    r.norm = norm(ws[t]);
    r.margin = margin(ws[t], ds);
    r.margin_gap = gamma_star - r.margin;
    r.dir_err = directional_error(ws[t], e1);
    r.log_loss = log_loss(ws[t], ds);
    tr.rows.push_back(r);
  }
  tr.iterations = T;
  tr.final_weight = ws.back();
  return tr;
}

/// q = 1 + h (2 - e^{2h}) / (2 + e^{2h}): the w2 value one NGD step after a rescale to w2 = 1.
inline double toy_prgd_q(double gamma_star) {
  check_toy_gamma(gamma_star);
  const double h = std::sqrt(1.0 - gamma_star * gamma_star);
  const double e = std::exp(2.0 * h);
  return 1.0 + h * (2.0 - e) / (2.0 + e);
}

/// w1 at the rescaled iterates w(2k+2), k = 0..K, for one NGD step from 0 followed
/// by PRGD with T_{k+1} - T_k = 2 and R_k chosen so that each rescale lands on w2 = 1:
///   w1(2) = g / w2(1),  w1(2k+4) = (w1(2k+2) + g) / q.
inline std::vector<double> toy_oracle_prgd(double gamma_star, std::size_t K) {
  const double q = toy_prgd_q(gamma_star);
  if (!(q > 0.0 && q < 1.0)) throw DomainError(fmt::format("q = {} outside (0,1)", q));
  const double h = std::sqrt(1.0 - gamma_star * gamma_star);
  const double w2_first = h / 3.0;  // w2(1) after one NGD step from the origin
  std::vector<double> w1{gamma_star / w2_first};
  w1.reserve(K + 1);
  for (std::size_t k = 1; k <= K; ++k) w1.push_back((w1.back() + gamma_star) / q);
  return w1;
}

}  // namespace margin_maxer
