#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"
#include "margin_maxer/errors.hpp"
#include "margin_maxer/linalg.hpp"
#include "margin_maxer/rng.hpp"

namespace margin_maxer {

/// Slack allowed on the ||x_i|| <= 1 assumption.
inline constexpr double kNormSlack = 1e-12;

enum class Family { Toy, SphereCap, BallCap };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::Toy: return "toy";
    case Family::SphereCap: return "sphere-cap";
    case Family::BallCap: return "ball-cap";
  }
  return "?";
}

inline Family family_from_string(std::string_view s) {
  if (s == "toy") return Family::Toy;
  if (s == "sphere-cap" || s == "dataset-1") return Family::SphereCap;
  if (s == "ball-cap" || s == "dataset-2") return Family::BallCap;
  throw DomainError("unknown dataset family '" + std::string(s) + "'");
}

/// Parameters of one of the synthetic separable families.
struct SyntheticSpec {
  Family family = Family::SphereCap;
  double gamma_star = std::sin(std::numbers::pi / 100.0);
  std::size_t n = 100;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(gamma_star > 0.0 && gamma_star < 1.0)) {
      throw DomainError(fmt::format("gamma_star must lie in (0,1), got {}", gamma_star));
    }
    if (family == Family::Toy && n != 3) {
      throw DomainError(fmt::format("toy family has exactly 3 points, got n={}", n));
    }
    if (family != Family::Toy && n < 2) {
      throw DomainError(fmt::format("cap families need n >= 2, got n={}", n));
    }
  }

  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

inline void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = nlohmann::json{{"family", to_string(s.family)},
                     {"gamma_star", s.gamma_star},
                     {"n", s.n},
                     {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  s = SyntheticSpec{};
  s.family = family_from_string(j.at("family").get<std::string>());
  if (j.contains("gamma_star")) s.gamma_star = j.at("gamma_star").get<double>();
  if (j.contains("n")) {
    s.n = j.at("n").get<std::size_t>();
  } else if (s.family == Family::Toy) {
    s.n = 3;
  }
  if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
}

/// Labelled points with ||x_i|| <= 1 and y_i in {-1,+1}. Immutable once built.
///
/// Storage is row-major; `z(i)` is the label-multiplied point y_i * x_i, which is
/// the only form the loss and margin ever need.
class Dataset {
 public:
  Dataset(const std::vector<Vector>& points, const std::vector<int>& labels,
          std::optional<SyntheticSpec> origin = std::nullopt)
      : origin_(origin) {
    if (points.empty()) throw DomainError("dataset must contain at least one point");
    if (points.size() != labels.size()) {
      throw DimensionMismatch(fmt::format("{} points but {} labels", points.size(), labels.size()));
    }
    n_ = points.size();
    d_ = points.front().size();
    if (d_ == 0) throw DimensionMismatch("points must have dimension >= 1");
    x_.reserve(n_ * d_);
    z_.reserve(n_ * d_);
    std::vector<std::size_t> too_long;
    for (std::size_t i = 0; i < n_; ++i) {
      if (points[i].size() != d_) {
        throw DimensionMismatch(
            fmt::format("point {} has dimension {}, expected {}", i, points[i].size(), d_));
      }
      if (labels[i] != 1 && labels[i] != -1) {
        throw DomainError(fmt::format("label of point {} is {}, expected +1 or -1", i, labels[i]));
      }
      if (!all_finite(points[i])) throw DomainError(fmt::format("point {} is not finite", i));
      if (norm(points[i]) > 1.0 + kNormSlack) too_long.push_back(i);
      for (double v : points[i]) {
        x_.push_back(v);
        z_.push_back(labels[i] * v);
      }
    }
    if (!too_long.empty()) {
      throw NormViolation(too_long, fmt::format("{} point(s) have norm above 1 (first: index {})",
                                                too_long.size(), too_long.front()));
    }
    y_ = labels;
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t dim() const noexcept { return d_; }

  std::span<const double> x(std::size_t i) const { return {x_.data() + i * d_, d_}; }
  std::span<const double> z(std::size_t i) const { return {z_.data() + i * d_, d_}; }
  int y(std::size_t i) const { return y_[i]; }

  std::vector<Vector> points() const {
    std::vector<Vector> out;
    out.reserve(n_);
    for (std::size_t i = 0; i < n_; ++i) out.emplace_back(x(i).begin(), x(i).end());
    return out;
  }
  const std::vector<int>& labels() const noexcept { return y_; }

  /// Generator parameters when the dataset came from one of the synthetic families.
  const std::optional<SyntheticSpec>& origin() const noexcept { return origin_; }

  double max_norm() const {
    double m = 0.0;
    for (std::size_t i = 0; i < n_; ++i) m = std::max(m, norm(x(i)));
    return m;
  }

  /// Equality of the labelled points; provenance is ignored.
  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.n_ == b.n_ && a.d_ == b.d_ && a.x_ == b.x_ && a.y_ == b.y_;
  }

 private:
  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::vector<double> x_;
  std::vector<double> z_;
  std::vector<int> y_;
  std::optional<SyntheticSpec> origin_;
};

// ---------------------------------------------------------------------------
// Synthetic families

inline Dataset make_toy(double gamma_star) {
  SyntheticSpec spec{Family::Toy, gamma_star, 3, 0};
  spec.validate();
  const double h = std::sqrt(1.0 - gamma_star * gamma_star);
  return Dataset({{gamma_star, h}, {gamma_star, -h}, {-gamma_star, -h}}, {1, 1, -1}, spec);
}

namespace detail {

inline int sign_label(double v) { return v > 0.0 ? 1 : -1; }

/// The two boundary points x1 = (g, h), x2 = (-g, h) shared by both cap families.
inline void push_cap_pins(double g, std::vector<Vector>& pts, std::vector<int>& ys) {
  const double h = std::sqrt(1.0 - g * g);
  pts.push_back({g, h});
  pts.push_back({-g, h});
  ys.push_back(1);
  ys.push_back(-1);
}

}  // namespace detail

/// Unit-circle points with |x_1| >= gamma_star; the angle is uniform over the two
/// admissible arcs. Labels are sgn(x_1).
inline Dataset make_sphere_cap(const SyntheticSpec& spec) {
  spec.validate();
  if (spec.family != Family::SphereCap) throw DomainError("make_sphere_cap needs family sphere-cap");
  const double g = spec.gamma_star;
  std::vector<Vector> pts;
  std::vector<int> ys;
  detail::push_cap_pins(g, pts, ys);
  Rng rng(spec.seed);
  const double half = std::acos(g);  // arc half-width around angle 0 and angle pi
  while (pts.size() < spec.n) {
    const double s = rng.uniform(0.0, 4.0 * half);
    const double theta = s < 2.0 * half ? -half + s : std::numbers::pi - half + (s - 2.0 * half);
    const double x1 = std::cos(theta);
    if (std::abs(x1) < g) continue;  // arc endpoint rounded inside the strip
    pts.push_back({x1, std::sin(theta)});
    ys.push_back(detail::sign_label(x1));
  }
  return Dataset(pts, ys, spec);
}

/// Unit-ball points with |x_1| >= gamma_star by rejection from the square [-1,1)^2.
inline Dataset make_ball_cap(const SyntheticSpec& spec) {
  spec.validate();
  if (spec.family != Family::BallCap) throw DomainError("make_ball_cap needs family ball-cap");
  const double g = spec.gamma_star;
  std::vector<Vector> pts;
  std::vector<int> ys;
  detail::push_cap_pins(g, pts, ys);
  Rng rng(spec.seed);
  while (pts.size() < spec.n) {
    const double a = rng.uniform(-1.0, 1.0);
    const double b = rng.uniform(-1.0, 1.0);
    if (a * a + b * b > 1.0 || std::abs(a) < g) continue;
    pts.push_back({a, b});
    ys.push_back(detail::sign_label(a));
  }
  return Dataset(pts, ys, spec);
}

inline Dataset make_synthetic(const SyntheticSpec& spec) {
  switch (spec.family) {
    case Family::Toy:
      spec.validate();
      return make_toy(spec.gamma_star);
    case Family::SphereCap: return make_sphere_cap(spec);
    case Family::BallCap: return make_ball_cap(spec);
  }
  throw DomainError("unknown family");
}

// ---------------------------------------------------------------------------
// CSV: header x0,...,x{d-1},y; one row per point.

struct CsvReadOptions {
  /// Divide every point by max_i ||x_i|| when some norm exceeds 1, instead of rejecting.
  bool rescale = false;
};

inline void write_csv(const Dataset& ds, std::ostream& os) {
  for (std::size_t j = 0; j < ds.dim(); ++j) os << 'x' << j << ',';
  os << "y\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.x(i)) os << fmt::format("{:.17g},", v);
    os << ds.y(i) << '\n';
  }
}

inline void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_csv(ds, os);
  if (!os) throw Error("write to '" + path + "' failed");
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

}  // namespace detail

inline Dataset read_csv(std::istream& is, const CsvReadOptions& opts = {}) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError(1, "empty input, expected header");
  const auto header = detail::split_commas(line);
  if (header.size() < 2 || detail::trim(header.back()) != "y") {
    throw ParseError(1, "header must be x0,...,x{d-1},y");
  }
  const std::size_t d = header.size() - 1;
  for (std::size_t j = 0; j < d; ++j) {
    if (detail::trim(header[j]) != "x" + std::to_string(j)) {
      throw ParseError(1, fmt::format("header column {} should be x{}", j, j));
    }
  }
  std::vector<Vector> pts;
  std::vector<int> ys;
  std::vector<std::size_t> rows;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_commas(line);
    if (cells.size() != d + 1) {
      throw DimensionMismatch(
          fmt::format("row {}: {} columns, header declares {}", row, cells.size(), d + 1));
    }
    Vector x(d);
    for (std::size_t j = 0; j < d; ++j) {
      const auto v = detail::parse_double(cells[j]);
      if (!v || !std::isfinite(*v)) throw ParseError(row, fmt::format("bad number in column x{}", j));
      x[j] = *v;
    }
    const auto yv = detail::parse_double(cells[d]);
    if (!yv || (*yv != 1.0 && *yv != -1.0)) throw ParseError(row, "label must be +1 or -1");
    pts.push_back(std::move(x));
    ys.push_back(*yv > 0 ? 1 : -1);
    rows.push_back(row);
  }
  if (pts.empty()) throw ParseError(row, "no data rows");

  std::vector<std::size_t> bad_rows;
  double max_n = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double nn = norm(pts[i]);
    max_n = std::max(max_n, nn);
    if (nn > 1.0 + kNormSlack) bad_rows.push_back(rows[i]);
  }
  if (!bad_rows.empty()) {
    if (!opts.rescale) {
      std::string list;
      for (std::size_t r : bad_rows) list += (list.empty() ? "" : ", ") + std::to_string(r);
      throw NormViolation(bad_rows, "feature norm exceeds 1 on row(s) " + list +
                                        " (use rescaling to normalise)");
    }
    for (auto& p : pts) {
      for (double& v : p) v /= max_n;
    }
  }
  return Dataset(pts, ys);
}

inline Dataset load_csv(const std::string& path, const CsvReadOptions& opts = {}) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open '" + path + "'");
  return read_csv(is, opts);
}

}  // namespace margin_maxer
