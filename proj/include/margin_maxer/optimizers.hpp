#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include <fmt/format.h>

#include "margin_maxer/dataset.hpp"
#include "margin_maxer/errors.hpp"
#include "margin_maxer/linalg.hpp"
#include "margin_maxer/margin.hpp"
#include "margin_maxer/schedule.hpp"
#include "margin_maxer/trajectory.hpp"

namespace margin_maxer {

enum class Method { GD, NGD };

inline std::string to_string(Method m) { return m == Method::GD ? "gd" : "ngd"; }

inline Method method_from_string(std::string_view s) {
  if (s == "gd") return Method::GD;
  if (s == "ngd") return Method::NGD;
  throw ConfigError("method", "expected gd or ngd, got '" + std::string(s) + "'");
}

/// Max-margin direction and value used to fill the gap and direction columns.
struct ReferenceDirection {
  Vector w_star;
  double gamma_star = 0.0;
};

/// Called after every iteration with the new iterate w(t).
using StepObserver = std::function<void(std::size_t t, Phase phase, std::span<const double> w)>;

struct RunOptions {
  std::optional<ReferenceDirection> reference;
  /// Stop as soon as gamma* - gamma(w(t)) drops below this (needs `reference`).
  std::optional<double> stop_gap;
  /// Log every `log_stride`-th iterate; the final and stopping iterates are always logged.
  std::size_t log_stride = 1;
  /// Hard bound on the iteration index t.
  std::optional<std::size_t> max_iterations;
  /// Permit eta > 1 for GD/NGD baselines.
  bool allow_large_step = false;
  StepObserver observer;
};

inline constexpr std::size_t kUnboundedCycles = std::numeric_limits<std::size_t>::max();

// ---------------------------------------------------------------------------
// Single steps

inline void check_step_size(double eta) {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw DomainError(fmt::format("step size must be >= 0, got {}", eta));
}

/// w - eta * grad L(w), with grad L reconstructed as exp(log L) * (grad L / L).
/// At large norms the factor underflows and GD stalls, as it does in exact arithmetic.
inline Vector gd_step(std::span<const double> w, const Dataset& ds, double eta) {
  check_step_size(eta);
  const LossEval ev = evaluate_loss(w, ds);
  Vector out(w.begin(), w.end());
  axpy(-eta * std::exp(ev.log_loss), ev.normalized_gradient, out);
  return out;
}

/// w - eta * grad L(w) / L(w).
inline Vector ngd_step(std::span<const double> w, const Dataset& ds, double eta) {
  check_step_size(eta);
  const Vector g = normalized_gradient(w, ds);
  Vector out(w.begin(), w.end());
  axpy(-eta, g, out);
  return out;
}

inline Vector take_step(Method m, std::span<const double> w, const Dataset& ds, double eta) {
  return m == Method::GD ? gd_step(w, ds, eta) : ngd_step(w, ds, eta);
}

namespace detail {

/// Appends logged rows to a trajectory and decides when a run must stop.
class Recorder {
 public:
  Recorder(const Dataset& ds, const RunOptions& opts, Trajectory& out)
      : ds_(ds), opts_(opts), out_(out) {
    if (opts_.log_stride == 0) throw ConfigError("log_stride", "must be >= 1");
    if (opts_.stop_gap) {
      if (!opts_.reference) throw ConfigError("stop_gap", "requires a reference solution");
      if (!(*opts_.stop_gap > 0.0)) throw ConfigError("stop_gap", "must be > 0");
    }
    if (opts_.reference) require_same_dim(opts_.reference->w_star.size(), ds.dim(), "reference");
  }

  /// Records w(t). Returns true when the run has to end here.
  bool record(std::size_t t, Phase phase, std::span<const double> w) {
    if (opts_.observer) opts_.observer(t, phase, w);
    out_.iterations = t;
    last_phase_ = phase;
    last_w_.assign(w.begin(), w.end());

    bool stop = false;
    std::optional<TrajectoryRow> row;
    if (opts_.stop_gap) {
      row = make_row(t, phase, w);
      if (row->margin_gap < *opts_.stop_gap) {
        out_.stop_iteration = t;
        stop = true;
      }
    }
    if (opts_.max_iterations && t >= *opts_.max_iterations) stop = true;
    if (stop || t % opts_.log_stride == 0) {
      push(row ? *row : make_row(t, phase, w));
    }
    return stop;
  }

  /// Ensures the last recorded iterate appears in the log.
  void finish() {
    if (last_w_.empty()) return;
    if (out_.rows.empty() || out_.rows.back().t != out_.iterations) {
      push(make_row(out_.iterations, last_phase_, last_w_));
    }
  }

 private:
  TrajectoryRow make_row(std::size_t t, Phase phase, std::span<const double> w) const {
    TrajectoryRow r;
    r.t = t;
    r.phase = phase;
    r.norm = norm(w);
    r.log_loss = log_loss(w, ds_);
    if (r.norm > 0.0) {
      r.margin = margin(w, ds_);
      if (opts_.reference) {
        r.margin_gap = opts_.reference->gamma_star - r.margin;
        r.dir_err = directional_error(w, opts_.reference->w_star);
      }
    }
    return r;
  }

  void push(const TrajectoryRow& r) {
    if (out_.rows.empty() || out_.rows.back().t < r.t) out_.rows.push_back(r);
  }

  const Dataset& ds_;
  const RunOptions& opts_;
  Trajectory& out_;
  Phase last_phase_ = Phase::NgdStep;
  Vector last_w_;
};

/// Runs `steps` plain GD/NGD iterations starting at index t. Returns false if the recorder stopped the run.
inline bool run_steps(Vector& w, std::size_t& t, Method m, const Dataset& ds, double eta,
                      std::size_t steps, Phase phase, Recorder& rec) {
  for (std::size_t s = 0; s < steps; ++s) {
    w = take_step(m, w, ds, eta);
    ++t;
    if (rec.record(t, phase, w)) return false;
  }
  return true;
}

inline void check_baseline_eta(double eta, const RunOptions& opts) {
  if (!(eta > 0.0)) throw ConfigError("eta", "must be > 0");
  if (eta > 1.0 && !opts.allow_large_step) {
    throw ConfigError("eta", "must be <= 1 unless large steps are allowed");
  }
}

/// PRGD loop: cycles 0..K-1 are rescale + projected NGD steps, then a
/// final rescale at cycle K. `radius_for(k, w)` gives R_k from w(T_k).
template <class RadiusFn>
void prgd_loop(Vector& w, std::size_t& t, const Dataset& ds, double eta, const Schedule& sched,
               std::size_t cycles, RadiusFn&& radius_for, Recorder& rec) {
  check_step_size(eta);
  if (const auto last = sched.max_cycle(); last && cycles > *last) cycles = *last;
  for (std::size_t k = 0;; ++k) {
    const double wn = norm(w);
    if (wn < 1e-300) throw ZeroVectorError(fmt::format("PRGD rescale at cycle {} from a zero iterate", k));
    const double radius = radius_for(k, std::span<const double>(w));
    if (!(radius > 0.0) || !std::isfinite(radius)) {
      throw DomainError(fmt::format("radius for cycle {} must be positive, got {}", k, radius));
    }
    for (double& v : w) v *= radius / wn;
    ++t;
    if (rec.record(t, Phase::Rescale, w)) return;
    if (k == cycles) return;
    const std::size_t len = sched.cycle_length(k);
    for (std::size_t s = 1; s < len; ++s) {
      Vector v = ngd_step(w, ds, eta);
      const double vn = norm(v);
      if (vn > radius) {
        for (double& c : v) c *= radius / vn;
      }
      w = std::move(v);
      ++t;
      if (rec.record(t, Phase::NgdStep, w)) return;
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Runs

/// GD or NGD from w(0) = 0 for T iterations.
inline Trajectory run_baseline(const Dataset& ds, Method kind, double eta, std::size_t T,
                               const RunOptions& opts = {}) {
  if (T < 1) throw ConfigError("budget", "must be >= 1");
  detail::check_baseline_eta(eta, opts);
  Trajectory tr;
  detail::Recorder rec(ds, opts, tr);
  Vector w(ds.dim(), 0.0);
  std::size_t t = 0;
  detail::run_steps(w, t, kind, ds, eta, T, kind == Method::GD ? Phase::GdStep : Phase::NgdStep, rec);
  rec.finish();
  tr.final_weight = std::move(w);
  return tr;
}

/// PRGD from w0 with a caller-supplied radius rule `radius_for(k, w(T_k)) -> R_k`.
/// The schedule still supplies the cycle lengths. Iteration indices start at `start_time`.
template <class RadiusFn>
Trajectory prgd_run(Vector w0, const Dataset& ds, double eta, const Schedule& sched,
                    std::size_t cycles, const RunOptions& opts, RadiusFn&& radius_for,
                    std::size_t start_time = 0) {
  check_weight(w0, ds);
  Trajectory tr;
  detail::Recorder rec(ds, opts, tr);
  std::size_t t = start_time;
  tr.iterations = t;
  detail::prgd_loop(w0, t, ds, eta, sched, cycles, std::forward<RadiusFn>(radius_for), rec);
  rec.finish();
  tr.final_weight = std::move(w0);
  return tr;
}

/// PRGD (rescale, projected NGD steps) from w0 following `sched`. R0 defaults to ||w0||.
inline Trajectory prgd_run(Vector w0, const Dataset& ds, double eta, const Schedule& sched,
                           std::size_t cycles, const RunOptions& opts = {},
                           std::size_t start_time = 0) {
  sched.validate();
  const double r0 = sched.r0.value_or(norm(w0));
  auto tr = prgd_run(
      std::move(w0), ds, eta, sched, cycles, opts,
      [&](std::size_t k, std::span<const double>) { return sched.radius(k, r0); }, start_time);
  tr.resolved_r0 = r0;
  return tr;
}

/// Warm-up with GD or NGD from 0 for `warmup_steps`, then PRGD from w(warmup_steps).
inline Trajectory two_phase_run(const Dataset& ds, double eta, Method warmup_kind,
                                std::size_t warmup_steps, const Schedule& sched,
                                std::size_t cycles, const RunOptions& opts = {}) {
  if (warmup_steps < 1) throw ConfigError("warmup.steps", "must be >= 1");
  detail::check_baseline_eta(eta, opts);
  sched.validate();
  Trajectory tr;
  detail::Recorder rec(ds, opts, tr);
  Vector w(ds.dim(), 0.0);
  std::size_t t = 0;
  const bool go_on = detail::run_steps(w, t, warmup_kind, ds, eta, warmup_steps, Phase::Warmup, rec);
  tr.warmup_iterations = t;
  if (go_on) {
    const double r0 = sched.r0.value_or(norm(w));
    tr.resolved_r0 = r0;
    detail::prgd_loop(
        w, t, ds, eta, sched, cycles,
        [&](std::size_t k, std::span<const double>) { return sched.radius(k, r0); }, rec);
  }
  rec.finish();
  tr.final_weight = std::move(w);
  return tr;
}

}  // namespace margin_maxer
