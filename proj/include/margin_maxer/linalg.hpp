#pragma once

// Small dense-vector helpers. Dimensions here are tiny (d is 2 for every
// synthetic family), so plain std::vector<double> is the storage type.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "margin_maxer/errors.hpp"

namespace margin_maxer {

using Vector = std::vector<double>;

inline void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionMismatch(std::string(what) + ": dimension " + std::to_string(a) +
                            " vs " + std::to_string(b));
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline Vector scaled(std::span<const double> a, double c) {
  Vector out(a.begin(), a.end());
  for (double& v : out) v *= c;
  return out;
}

/// y += c * x
inline void axpy(double c, std::span<const double> x, std::span<double> y) {
  require_same_dim(x.size(), y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += c * x[i];
}

inline Vector difference(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "difference");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline bool all_finite(std::span<const double> a) {
  for (double v : a) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

/// Orthonormal basis of span{vectors} by modified Gram-Schmidt. A vector whose
/// residual falls below `rel_tol` times the largest input norm is treated as
/// linearly dependent and dropped.
inline std::vector<Vector> orthonormal_basis(const std::vector<Vector>& vectors,
                                             double rel_tol = 1e-10) {
  double scale = 0.0;
  for (const auto& v : vectors) scale = std::max(scale, norm(v));
  std::vector<Vector> basis;
  if (scale == 0.0) return basis;
  for (const auto& v : vectors) {
    Vector r = v;
    // two passes keep the basis orthogonal to working precision
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) axpy(-dot(r, b), b, r);
    }
    const double rn = norm(r);
    if (rn > rel_tol * scale) {
      for (double& c : r) c /= rn;
      basis.push_back(std::move(r));
    }
  }
  return basis;
}

inline std::size_t rank(const std::vector<Vector>& vectors, double rel_tol = 1e-10) {
  return orthonormal_basis(vectors, rel_tol).size();
}

/// Norm of the component of `v` orthogonal to span(basis); `basis` must be orthonormal.
inline double residual_from_span(std::span<const double> v, const std::vector<Vector>& basis) {
  Vector r(v.begin(), v.end());
  for (const auto& b : basis) axpy(-dot(r, b), b, r);
  return norm(r);
}

}  // namespace margin_maxer
