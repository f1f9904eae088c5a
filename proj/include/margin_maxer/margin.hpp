#pragma once

// Exponential loss L(w) = (1/n) sum_i exp(-<w, z_i>) and the geometry built on it.
//
// L itself is never formed: iterates reach norms where exp(-gamma * ||w||)
// underflows, and every algorithm here only consumes log L or the ratio
// grad L / L, which is a softmax-weighted average of -z_i.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "margin_maxer/dataset.hpp"
#include "margin_maxer/errors.hpp"
#include "margin_maxer/linalg.hpp"

namespace margin_maxer {

/// Below this the orthogonal component counts as zero and phi(w) is undefined.
inline constexpr double kPerpDegenerate = 1e-14;

struct LossEval {
  double log_loss = 0.0;
  /// p_i proportional to exp(-<w, z_i>), sums to one.
  Vector soft_weights;
  /// grad L(w) / L(w) = -sum_i p_i z_i.
  Vector normalized_gradient;
};

inline void check_weight(std::span<const double> w, const Dataset& ds) {
  require_same_dim(w.size(), ds.dim(), "weight vs dataset");
}

/// <w, z_i> for every sample.
inline Vector scores(std::span<const double> w, const Dataset& ds) {
  check_weight(w, ds);
  Vector s(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) s[i] = dot(w, ds.z(i));
  return s;
}

inline LossEval evaluate_loss(std::span<const double> w, const Dataset& ds) {
  const Vector s = scores(w, ds);
  const std::size_t n = ds.size();
  double top = -std::numeric_limits<double>::infinity();
  for (double v : s) top = std::max(top, -v);

  LossEval out;
  out.soft_weights.resize(n);
  Vector numer(ds.dim(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = std::exp(-s[i] - top);
    out.soft_weights[i] = e;
    total += e;
    axpy(e, ds.z(i), numer);
  }
  // Dividing the accumulated sums (rather than summing normalized weights)
  // makes coordinates where all z_i agree come out exact.
  out.normalized_gradient.resize(ds.dim());
  for (std::size_t j = 0; j < ds.dim(); ++j) out.normalized_gradient[j] = -numer[j] / total;
  for (double& p : out.soft_weights) p /= total;
  out.log_loss = top + std::log(total) - std::log(static_cast<double>(n));
  return out;
}

inline double log_loss(std::span<const double> w, const Dataset& ds) {
  return evaluate_loss(w, ds).log_loss;
}

/// grad L(w) / L(w); bounded in norm by [gamma*, 1] on separable data.
inline Vector normalized_gradient(std::span<const double> w, const Dataset& ds) {
  return evaluate_loss(w, ds).normalized_gradient;
}

/// Index attaining min_i <w, z_i>; ties resolve to the smallest index.
inline std::size_t argmin_margin(std::span<const double> w, const Dataset& ds) {
  const Vector s = scores(w, ds);
  std::size_t best = 0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i] < s[best]) best = i;
  }
  return best;
}

/// gamma(w) = min_i y_i <w/||w||, x_i>.
inline double margin(std::span<const double> w, const Dataset& ds) {
  check_weight(w, ds);
  const double nw = norm(w);
  if (nw == 0.0) throw ZeroVectorError("margin of the zero vector is undefined");
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ds.size(); ++i) m = std::min(m, dot(w, ds.z(i)));
  return m / nw;
}

namespace detail {
inline void require_unit(std::span<const double> w_star) {
  if (std::abs(norm(w_star) - 1.0) > 1e-10) {
    throw DomainError("reference direction must have unit norm");
  }
}
}  // namespace detail

/// Component of w along the unit direction w_star.
inline Vector project_parallel(std::span<const double> w, std::span<const double> w_star) {
  detail::require_unit(w_star);
  return scaled(w_star, dot(w, w_star));
}

/// w minus its component along w_star.
inline Vector project_perp(std::span<const double> w, std::span<const double> w_star) {
  detail::require_unit(w_star);
  Vector out(w.begin(), w.end());
  axpy(-dot(w, w_star), w_star, out);
  return out;
}

/// ||w/||w|| - w_star||.
inline double directional_error(std::span<const double> w, std::span<const double> w_star) {
  detail::require_unit(w_star);
  const double nw = norm(w);
  if (nw == 0.0) throw ZeroVectorError("direction of the zero vector is undefined");
  const Vector what = scaled(w, 1.0 / nw);
  return norm(difference(what, w_star));
}

/// Centripetal velocity phi(w) = <-grad L / L, -P_perp(w)/||P_perp(w)||>.
/// Positive values move the iterate toward the w_star ray.
inline double centripetal_velocity(std::span<const double> w, std::span<const double> w_star,
                                   const Dataset& ds) {
  const Vector perp = project_perp(w, w_star);
  const double pn = norm(perp);
  if (pn < kPerpDegenerate) {
    throw DegenerateError("centripetal velocity undefined on the max-margin ray");
  }
  const Vector g = normalized_gradient(w, ds);
  return dot(g, perp) / pn;
}

}  // namespace margin_maxer
