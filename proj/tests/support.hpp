#pragma once

// Shared fixtures for the test binaries: datasets whose max-margin solution is
// known by construction, and naive reference formulas.

#include <cmath>
#include <cstddef>
#include <vector>

#include "margin_maxer/margin_maxer.hpp"

namespace mm_test {

using margin_maxer::Dataset;
using margin_maxer::Rng;
using margin_maxer::Vector;

/// Dataset in R^d with max margin exactly g along e1.
///
/// Pinned pairs z = g e1 +- h e_j (j = 2..d) average to g e1, so no unit vector
/// beats margin g on them; the remaining points satisfy <z, e1> >= g + slack.
/// Returns the dataset and the smallest margin among non-pinned points.
struct KnownMargin {
  Dataset ds;
  double gamma_star;
  Vector w_star;
  double gamma_sub;
};

inline KnownMargin known_margin_dataset(std::size_t d, std::size_t extra, double g, double slack, Rng& rng) {
  std::vector<Vector> pts;
  std::vector<int> ys;
  const double h = std::sqrt(1.0 - g * g);
  for (std::size_t j = 1; j < d; ++j) {
    for (double s : {1.0, -1.0}) {
      Vector z(d, 0.0);
      z[0] = g;
      z[j] = s * h;
      const int y = rng.uniform() < 0.5 ? 1 : -1;
      for (double& v : z) v *= y;
      pts.push_back(z);
      ys.push_back(y);
    }
  }
  double sub = std::numeric_limits<double>::infinity();
  while (pts.size() < 2 * (d - 1) + extra) {
    Vector z(d);
    for (double& v : z) v = rng.uniform(-1.0, 1.0);
    const double zn = margin_maxer::norm(z);
    if (zn > 1.0 || z[0] < g + slack) continue;
    sub = std::min(sub, z[0]);
    const int y = rng.uniform() < 0.5 ? 1 : -1;
    for (double& v : z) v *= y;
    pts.push_back(z);
    ys.push_back(y);
  }
  Vector e1(d, 0.0);
  e1[0] = 1.0;
  return {Dataset(pts, ys), g, e1, sub};
}

/// Textbook ratio sum_i e^{-<w,z_i>} (-z_i) / sum_i e^{-<w,z_i>}.
inline Vector naive_normalized_gradient(const Vector& w, const Dataset& ds) {
  Vector num(ds.dim(), 0.0);
  double den = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < ds.dim(); ++j) s += w[j] * ds.z(i)[j];
    const double e = std::exp(-s);
    den += e;
    for (std::size_t j = 0; j < ds.dim(); ++j) num[j] -= e * ds.z(i)[j];
  }
  for (double& v : num) v /= den;
  return num;
}

/// One NGD step from the origin on the toy dataset, then PRGD with two-step
/// cycles whose radius puts each rescaled iterate at w2 = 1. Rows start at t = 2.
inline margin_maxer::Trajectory toy_adaptive_prgd(double g, std::size_t cycles,
                                                  const margin_maxer::RunOptions& opts = {}) {
  using namespace margin_maxer;
  const Dataset ds = make_toy(g);
  Vector w1 = ngd_step(Vector{0.0, 0.0}, ds, 1.0);
  auto to_unit_w2 = [](std::size_t, std::span<const double> w) { return norm(w) / std::abs(w[1]); };
  return prgd_run(std::move(w1), ds, 1.0, Schedule::exp_radius(2), cycles, opts, to_unit_w2, 1);
}

inline Vector random_vector(std::size_t d, double scale, Rng& rng) {
  Vector w(d);
  for (double& v : w) v = scale * rng.normal();
  return w;
}

}  // namespace mm_test
