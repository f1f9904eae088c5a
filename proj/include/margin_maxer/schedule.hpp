#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"
#include "margin_maxer/errors.hpp"

namespace margin_maxer {

enum class ScheduleKind { ExpRadius, PolyRadius, PolyBoth, Explicit };

inline std::string to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::ExpRadius: return "exp-radius";
    case ScheduleKind::PolyRadius: return "poly-radius";
    case ScheduleKind::PolyBoth: return "poly-both";
    case ScheduleKind::Explicit: return "explicit";
  }
  return "?";
}

inline ScheduleKind schedule_kind_from_string(std::string_view s) {
  if (s == "exp-radius" || s == "exp") return ScheduleKind::ExpRadius;
  if (s == "poly-radius" || s == "poly") return ScheduleKind::PolyRadius;
  if (s == "poly-both") return ScheduleKind::PolyBoth;
  if (s == "explicit") return ScheduleKind::Explicit;
  throw ConfigError("schedule.kind", "unknown schedule kind '" + std::string(s) + "'");
}

/// Progressive times T_k and radii R_k for PRGD.
///
/// Cycle k starts with a rescale to R_k and lasts T_{k+1} - T_k iterations
/// (the rescale plus T_{k+1} - T_k - 1 projected NGD steps). For the
/// polynomial kinds the exponent base is k + 1 so that the first radius is R0.
///
///   exp-radius   R_k = R0 * base^k,         T_{k+1} - T_k = spacing
///   poly-radius  R_k = R0 * (k+1)^alpha,    T_{k+1} - T_k = spacing
///   poly-both    R_k = R0 * (k+1)^alpha,    T_{k+1} - T_k = round(T0 * (k+1)^beta)
///   explicit     R_k = radii[k],            T_{k+1} - T_k = times[k+1] - times[k]
///
/// An unset R0 means "the norm of the iterate PRGD starts from".
struct Schedule {
  ScheduleKind kind = ScheduleKind::ExpRadius;
  std::optional<double> r0;
  double t0 = 5.0;
  double alpha = 1.2;
  double beta = 0.0;
  double base = 1.2;
  std::size_t spacing = 5;
  std::vector<std::size_t> times;
  std::vector<double> radii;

  static Schedule exp_radius(std::size_t spacing = 5, double base = 1.2,
                             std::optional<double> r0 = std::nullopt) {
    Schedule s;
    s.kind = ScheduleKind::ExpRadius;
    s.spacing = spacing;
    s.base = base;
    s.r0 = r0;
    return s;
  }

  static Schedule poly_radius(std::size_t spacing = 5, double alpha = 1.2,
                              std::optional<double> r0 = std::nullopt) {
    Schedule s;
    s.kind = ScheduleKind::PolyRadius;
    s.spacing = spacing;
    s.alpha = alpha;
    s.r0 = r0;
    return s;
  }

  static Schedule poly_both(double t0, double alpha, double beta,
                            std::optional<double> r0 = std::nullopt) {
    Schedule s;
    s.kind = ScheduleKind::PolyBoth;
    s.t0 = t0;
    s.alpha = alpha;
    s.beta = beta;
    s.r0 = r0;
    return s;
  }

  static Schedule explicit_schedule(std::vector<std::size_t> times, std::vector<double> radii) {
    Schedule s;
    s.kind = ScheduleKind::Explicit;
    s.times = std::move(times);
    s.radii = std::move(radii);
    return s;
  }

  void validate() const {
    if (r0 && !(*r0 > 0.0 && std::isfinite(*r0))) throw ConfigError("schedule.r0", "must be > 0");
    switch (kind) {
      case ScheduleKind::ExpRadius:
        if (!(base > 1.0)) throw ConfigError("schedule.base", "must be > 1");
        if (spacing < 1) throw ConfigError("schedule.spacing", "must be >= 1");
        break;
      case ScheduleKind::PolyRadius:
        if (spacing < 1) throw ConfigError("schedule.spacing", "must be >= 1");
        if (!std::isfinite(alpha)) throw ConfigError("schedule.alpha", "must be finite");
        break;
      case ScheduleKind::PolyBoth:
        if (!(t0 >= 1.0)) throw ConfigError("schedule.t0", "must be >= 1");
        if (!std::isfinite(alpha) || !std::isfinite(beta)) {
          throw ConfigError("schedule.alpha", "alpha and beta must be finite");
        }
        break;
      case ScheduleKind::Explicit:
        if (radii.empty()) throw ConfigError("schedule.radii", "must not be empty");
        if (times.size() != radii.size()) {
          throw ConfigError("schedule.times", "needs one time per radius");
        }
        for (std::size_t k = 1; k < times.size(); ++k) {
          if (times[k] <= times[k - 1]) throw ConfigError("schedule.times", "must be strictly increasing");
        }
        for (double r : radii) {
          if (!(r > 0.0)) throw ConfigError("schedule.radii", "must be > 0");
        }
        break;
    }
  }

  /// Last cycle index an explicit schedule can serve; unbounded otherwise.
  std::optional<std::size_t> max_cycle() const {
    if (kind == ScheduleKind::Explicit) return radii.size() - 1;
    return std::nullopt;
  }

  /// R_k given the resolved R0.
  double radius(std::size_t k, double resolved_r0) const {
    const double kk = static_cast<double>(k);
    switch (kind) {
      case ScheduleKind::ExpRadius: return resolved_r0 * std::pow(base, kk);
      case ScheduleKind::PolyRadius:
      case ScheduleKind::PolyBoth: return resolved_r0 * std::pow(kk + 1.0, alpha);
      case ScheduleKind::Explicit:
        if (k >= radii.size()) throw ConfigError("schedule.radii", fmt::format("no radius for cycle {}", k));
        return radii[k];
    }
    return resolved_r0;
  }

  /// T_{k+1} - T_k.
  std::size_t cycle_length(std::size_t k) const {
    switch (kind) {
      case ScheduleKind::ExpRadius:
      case ScheduleKind::PolyRadius: return spacing;
      case ScheduleKind::PolyBoth: {
        const double len = std::round(t0 * std::pow(static_cast<double>(k) + 1.0, beta));
        return len < 1.0 ? std::size_t{1} : static_cast<std::size_t>(len);
      }
      case ScheduleKind::Explicit:
        if (k + 1 >= times.size()) throw ConfigError("schedule.times", fmt::format("no end time for cycle {}", k));
        return times[k + 1] - times[k];
    }
    return spacing;
  }

  friend bool operator==(const Schedule&, const Schedule&) = default;
};

inline void to_json(nlohmann::json& j, const Schedule& s) {
  j = nlohmann::json{{"kind", to_string(s.kind)},
                     {"r0", s.r0 ? nlohmann::json(*s.r0) : nlohmann::json(nullptr)},
                     {"t0", s.t0},
                     {"alpha", s.alpha},
                     {"beta", s.beta},
                     {"base", s.base},
                     {"spacing", s.spacing},
                     {"times", s.times},
                     {"radii", s.radii}};
}

inline void from_json(const nlohmann::json& j, Schedule& s) {
  s = Schedule{};
  if (j.contains("kind")) s.kind = schedule_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("r0") && !j.at("r0").is_null()) s.r0 = j.at("r0").get<double>();
  if (j.contains("t0")) s.t0 = j.at("t0").get<double>();
  if (j.contains("alpha")) s.alpha = j.at("alpha").get<double>();
  if (j.contains("beta")) s.beta = j.at("beta").get<double>();
  if (j.contains("base")) s.base = j.at("base").get<double>();
  if (j.contains("spacing")) s.spacing = j.at("spacing").get<std::size_t>();
  if (j.contains("times")) s.times = j.at("times").get<std::vector<std::size_t>>();
  if (j.contains("radii")) s.radii = j.at("radii").get<std::vector<double>>();
}

}  // namespace margin_maxer
