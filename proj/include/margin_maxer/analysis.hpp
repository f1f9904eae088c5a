#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"
#include "margin_maxer/dataset.hpp"
#include "margin_maxer/errors.hpp"
#include "margin_maxer/linalg.hpp"
#include "margin_maxer/margin.hpp"
#include "margin_maxer/reference.hpp"
#include "margin_maxer/rng.hpp"
#include "margin_maxer/trajectory.hpp"

namespace margin_maxer {

// ---------------------------------------------------------------------------
// Rate fitting

/// Candidate decay laws for an error sequence g(t). Each is fitted by ordinary
/// least squares on log g, so r^2 values are comparable across families:
///   PowerLaw     log g = log c + p log t
///   Exponential  log g = log c + s t
///   InverseLog   log g = log c + p log log t   (p = -1 for g = c / log t)
enum class RateFamily { PowerLaw, Exponential, InverseLog };

inline std::string to_string(RateFamily f) {
  switch (f) {
    case RateFamily::PowerLaw: return "power";
    case RateFamily::Exponential: return "exponential";
    case RateFamily::InverseLog: return "inverse-log";
  }
  return "?";
}

inline RateFamily rate_family_from_string(std::string_view s) {
  if (s == "power" || s == "power-law") return RateFamily::PowerLaw;
  if (s == "exponential" || s == "exp") return RateFamily::Exponential;
  if (s == "inverse-log" || s == "invlog") return RateFamily::InverseLog;
  throw DomainError("unknown rate family '" + std::string(s) + "'");
}

inline constexpr RateFamily kAllRateFamilies[] = {RateFamily::PowerLaw, RateFamily::Exponential,
                                                  RateFamily::InverseLog};

/// Which trajectory column to fit.
enum class RateMetric { MarginGap, DirectionalError };

inline std::string to_string(RateMetric m) { return m == RateMetric::MarginGap ? "margin_gap" : "dir_err"; }

inline RateMetric rate_metric_from_string(std::string_view s) {
  if (s == "margin_gap" || s == "gap") return RateMetric::MarginGap;
  if (s == "dir_err" || s == "dir") return RateMetric::DirectionalError;
  throw DomainError("unknown metric '" + std::string(s) + "'");
}

struct FitWindow {
  double t_min = 0.0;
  double t_max = std::numeric_limits<double>::infinity();
};

struct RateFit {
  RateFamily family = RateFamily::PowerLaw;
  double slope = 0.0;
  /// Intercept of the linearised fit (log c).
  double log_c = 0.0;
  double r2 = 0.0;
  FitWindow window;
  std::size_t points = 0;
};

inline constexpr std::size_t kMinFitPoints = 10;

/// Fits one family to samples (t_i, g_i). Only samples inside the window with
/// g > 0 (and t > 1 for InverseLog) enter the regression.
inline RateFit fit_series(std::span<const double> ts, std::span<const double> gs, RateFamily family,
                          FitWindow window = {}) {
  require_same_dim(ts.size(), gs.size(), "fit_series");
  if (!(window.t_min <= window.t_max)) throw DomainError("fit window is empty");
  std::vector<double> xs;
  std::vector<double> ys;
  std::size_t in_window = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double t = ts[i];
    if (t < window.t_min || t > window.t_max || std::isnan(gs[i])) continue;
    ++in_window;
    if (!(gs[i] > 0.0)) continue;
    double x = 0.0;
    switch (family) {
      case RateFamily::PowerLaw:
        if (!(t > 0.0)) continue;
        x = std::log(t);
        break;
      case RateFamily::Exponential: x = t; break;
      case RateFamily::InverseLog:
        if (!(t > 1.0)) continue;
        x = std::log(std::log(t));
        break;
    }
    xs.push_back(x);
    ys.push_back(std::log(gs[i]));
  }
  if (xs.empty() && in_window >= kMinFitPoints) {
    throw InsufficientDataError("every error in the window is zero (converged exactly)");
  }
  if (xs.size() < kMinFitPoints) {
    throw InsufficientDataError(fmt::format("{} usable points in window, need {}", xs.size(), kMinFitPoints));
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw InsufficientDataError("all samples share one abscissa");
  RateFit fit;
  fit.family = family;
  fit.slope = sxy / sxx;
  fit.log_c = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (fit.log_c + fit.slope * xs[i]);
    ss_res += r * r;
  }
  fit.r2 = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  fit.window = window;
  fit.points = xs.size();
  return fit;
}

inline RateFit fit_rate(const Trajectory& traj, RateFamily family, FitWindow window = {},
                        RateMetric metric = RateMetric::MarginGap) {
  std::vector<double> ts;
  std::vector<double> gs;
  ts.reserve(traj.rows.size());
  gs.reserve(traj.rows.size());
  for (const auto& r : traj.rows) {
    ts.push_back(static_cast<double>(r.t));
    gs.push_back(metric == RateMetric::MarginGap ? r.margin_gap : r.dir_err);
  }
  return fit_series(ts, gs, family, window);
}

inline void to_json(nlohmann::json& j, const RateFit& f) {
  j = nlohmann::json{{"family", to_string(f.family)},
                     {"slope", f.slope},
                     {"log_c", f.log_c},
                     {"r2", f.r2},
                     {"window",
                      {f.window.t_min,
                       std::isfinite(f.window.t_max) ? nlohmann::json(f.window.t_max) : nlohmann::json(nullptr)}},
                     {"points", f.points}};
}

// ---------------------------------------------------------------------------
// Attractor of NGD on the toy dataset

/// (log 2 / (4 sqrt(1-g^2)), 3 log 2 / (4 sqrt(1-g^2))): the band of w2 heights
/// NGD from the origin never leaves on the toy dataset.
inline std::pair<double, double> attractor_band(double gamma_star) {
  check_toy_gamma(gamma_star);
  const double h = std::sqrt(1.0 - gamma_star * gamma_star);
  return {std::numbers::ln2 / (4.0 * h), 3.0 * std::numbers::ln2 / (4.0 * h)};
}

/// Height log 2 / (2 sqrt(1-g^2)) at which the toy centripetal velocity vanishes.
inline double attractor_line(double gamma_star) {
  check_toy_gamma(gamma_star);
  return std::numbers::ln2 / (2.0 * std::sqrt(1.0 - gamma_star * gamma_star));
}

// ---------------------------------------------------------------------------
// Centripetal velocity on semi-infinite hollow cylinders

/// C(D1, D2; H) = {w in span{x_i} : D1 <= ||P_perp(w)|| <= D2, <w, w*> >= H}.
struct CylinderSpec {
  double d1 = 1.0;
  double d2 = 2.0;
  double h = 1.0;
  std::size_t samples = 10'000;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(d1 > 0.0 && d1 <= d2)) throw DomainError("cylinder needs 0 < D1 <= D2");
    if (!(h > 0.0)) throw DomainError("cylinder needs H > 0");
  }
};

struct CylinderResult {
  double min_phi = std::numeric_limits<double>::infinity();
  Vector argmin;
  std::size_t samples = 0;
};

/// Monte-Carlo minimum of phi over C(D1, D2; H) truncated at height h_max.
///
/// Each sample draws h ~ U[H, h_max], D ~ U[D1, D2] and a direction v uniform on the
/// unit sphere of span{x_i} orthogonal to w*, then evaluates w = h w* + D v. Samples
/// are drawn in a fixed order from one stream, so a larger sample count with the same
/// seed evaluates a superset of points.
inline CylinderResult min_centripetal_on_cylinder(const Dataset& ds, const MaxMarginSolution& mm,
                                                  const CylinderSpec& spec, double h_max) {
  spec.validate();
  if (!(h_max > spec.h)) throw DomainError("h_max must exceed H");
  const auto basis = orthonormal_basis(ds.points());
  if (basis.size() < 2) {
    throw DegenerateError("data span is one-dimensional; no direction orthogonal to w*");
  }
  const Vector& ws = mm.w_star;
  Rng rng(spec.seed);
  CylinderResult out;
  Vector w(ds.dim());
  while (out.samples < spec.samples) {
    const double h = rng.uniform(spec.h, h_max);
    const double dist = rng.uniform(spec.d1, spec.d2);
    Vector v(ds.dim(), 0.0);
    for (const auto& b : basis) axpy(rng.normal(), b, v);
    axpy(-dot(v, ws), ws, v);
    const double vn = norm(v);
    if (vn < 1e-12) continue;
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = h * ws[j] + dist * v[j] / vn;
    const double phi = centripetal_velocity(w, ws, ds);
    if (phi < out.min_phi) {
      out.min_phi = phi;
      out.argmin = w;
    }
    ++out.samples;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Planar vector field

struct GridBounds {
  double w1_min = -1.0;
  double w1_max = 1.0;
  double w2_min = -1.0;
  double w2_max = 1.0;
};

struct FieldPoint {
  double w1 = 0.0;
  double w2 = 0.0;
  /// Unit direction of -grad L within the plane.
  double dir1 = 0.0;
  double dir2 = 0.0;
  /// Centripetal velocity; NaN on the w* ray.
  double phi = kNaN;
};

/// Samples the direction of -grad L and phi on a res1 x res2 grid. For d = 2 the
/// plane is the coordinate plane; otherwise pass two orthonormal vectors spanning
/// the slice (points are w1 b1 + w2 b2, arrows are projected onto the slice).
inline std::vector<FieldPoint> field_grid(const Dataset& ds, std::span<const double> w_star,
                                          const GridBounds& bounds, std::size_t res1, std::size_t res2,
                                          std::optional<std::pair<Vector, Vector>> slice = std::nullopt) {
  if (res1 < 2 || res2 < 2) throw DomainError("grid resolution must be at least 2 x 2");
  Vector b1;
  Vector b2;
  if (slice) {
    b1 = slice->first;
    b2 = slice->second;
    require_same_dim(b1.size(), ds.dim(), "slice basis");
    require_same_dim(b2.size(), ds.dim(), "slice basis");
  } else {
    if (ds.dim() != 2) throw DimensionMismatch("field grid for d != 2 needs a slice basis");
    b1 = {1.0, 0.0};
    b2 = {0.0, 1.0};
  }
  std::vector<FieldPoint> out;
  out.reserve(res1 * res2);
  for (std::size_t i = 0; i < res1; ++i) {
    const double a = bounds.w1_min + (bounds.w1_max - bounds.w1_min) * static_cast<double>(i) / (res1 - 1);
    for (std::size_t j = 0; j < res2; ++j) {
      const double b = bounds.w2_min + (bounds.w2_max - bounds.w2_min) * static_cast<double>(j) / (res2 - 1);
      Vector w(ds.dim(), 0.0);
      axpy(a, b1, w);
      axpy(b, b2, w);
      const Vector g = normalized_gradient(w, ds);
      FieldPoint p{a, b};
      const double c1 = -dot(g, b1);
      const double c2 = -dot(g, b2);
      const double cn = std::hypot(c1, c2);
      if (cn > 0.0) {
        p.dir1 = c1 / cn;
        p.dir2 = c2 / cn;
      }
      try {
        p.phi = centripetal_velocity(w, w_star, ds);
      } catch (const DegenerateError&) {
        p.phi = kNaN;
      }
      out.push_back(p);
    }
  }
  return out;
}

inline void write_field_csv(const std::vector<FieldPoint>& grid, std::ostream& os) {
  os << "w1,w2,dir1,dir2,phi\n";
  for (const auto& p : grid) {
    os << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", p.w1, p.w2, p.dir1, p.dir2, p.phi);
  }
}

inline void save_field_csv(const std::vector<FieldPoint>& grid, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_field_csv(grid, os);
  if (!os) throw Error("write to '" + path + "' failed");
}

}  // namespace margin_maxer
