#pragma once

#include <cstddef>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "margin_maxer/dataset.hpp"
#include "margin_maxer/errors.hpp"
#include "margin_maxer/linalg.hpp"

namespace margin_maxer {

enum class Phase { Warmup, Rescale, NgdStep, GdStep };

inline std::string to_string(Phase p) {
  switch (p) {
    case Phase::Warmup: return "warmup";
    case Phase::Rescale: return "rescale";
    case Phase::NgdStep: return "ngd-step";
    case Phase::GdStep: return "gd-step";
  }
  return "?";
}

inline Phase phase_from_string(std::string_view s) {
  if (s == "warmup") return Phase::Warmup;
  if (s == "rescale") return Phase::Rescale;
  if (s == "ngd-step") return Phase::NgdStep;
  if (s == "gd-step") return Phase::GdStep;
  throw DomainError("unknown phase '" + std::string(s) + "'");
}

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// One logged iterate. margin_gap and dir_err are NaN when no reference
/// solution was supplied to the run.
struct TrajectoryRow {
  std::size_t t = 0;
  Phase phase = Phase::NgdStep;
  double norm = 0.0;
  double margin = kNaN;
  double margin_gap = kNaN;
  double dir_err = kNaN;
  double log_loss = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryRow> rows;
  Vector final_weight;
  /// Index t of the final iterate.
  std::size_t iterations = 0;
  /// Iterations spent in a warm-up phase (0 for single-phase runs).
  std::size_t warmup_iterations = 0;
  /// First t with margin_gap below the requested stop threshold.
  std::optional<std::size_t> stop_iteration;
  /// R0 actually used by the PRGD phase, if there was one.
  std::optional<double> resolved_r0;
};

inline constexpr std::string_view kTrajectoryHeader = "t,phase,norm,margin,margin_gap,dir_err,log_loss";

inline void write_trajectory_csv(const Trajectory& tr, std::ostream& os) {
  os << kTrajectoryHeader << '\n';
  for (const auto& r : tr.rows) {
    os << fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.t, to_string(r.phase),
                      r.norm, r.margin, r.margin_gap, r.dir_err, r.log_loss);
  }
}

inline void save_trajectory_csv(const Trajectory& tr, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_trajectory_csv(tr, os);
  if (!os) throw Error("write to '" + path + "' failed");
}

namespace detail {
inline double parse_csv_double(std::string_view cell, std::size_t row) {
  const auto t = trim(cell);
  if (t == "nan" || t == "-nan") return kNaN;
  if (t == "inf") return std::numeric_limits<double>::infinity();
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  const auto v = parse_double(t);
  if (!v) throw ParseError(row, "bad number '" + std::string(t) + "'");
  return *v;
}
}  // namespace detail

/// Reads rows written by write_trajectory_csv. Only `rows` is populated.
inline Trajectory read_trajectory_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || detail::trim(line) != kTrajectoryHeader) {
    throw ParseError(1, "expected header " + std::string(kTrajectoryHeader));
  }
  Trajectory tr;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_commas(line);
    if (cells.size() != 7) throw ParseError(row, "expected 7 columns");
    TrajectoryRow r;
    const double t = detail::parse_csv_double(cells[0], row);
    if (!(t >= 0.0)) throw ParseError(row, "bad iteration index");
    r.t = static_cast<std::size_t>(t);
    try {
      r.phase = phase_from_string(detail::trim(cells[1]));
    } catch (const DomainError& e) {
      throw ParseError(row, e.what());
    }
    r.norm = detail::parse_csv_double(cells[2], row);
    r.margin = detail::parse_csv_double(cells[3], row);
    r.margin_gap = detail::parse_csv_double(cells[4], row);
    r.dir_err = detail::parse_csv_double(cells[5], row);
    r.log_loss = detail::parse_csv_double(cells[6], row);
    if (!tr.rows.empty() && r.t <= tr.rows.back().t) throw ParseError(row, "t must be strictly increasing");
    tr.rows.push_back(r);
  }
  if (!tr.rows.empty()) tr.iterations = tr.rows.back().t;
  return tr;
}

inline Trajectory load_trajectory_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open '" + path + "'");
  return read_trajectory_csv(is);
}

}  // namespace margin_maxer
