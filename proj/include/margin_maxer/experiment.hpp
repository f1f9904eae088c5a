#pragma once

// Reproducible experiment descriptions: a JSON-serialisable config, a runner
// that resolves the dataset and reference solution, and summary/compare output.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <future>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"
#include "margin_maxer/analysis.hpp"
#include "margin_maxer/dataset.hpp"
#include "margin_maxer/errors.hpp"
#include "margin_maxer/optimizers.hpp"
#include "margin_maxer/reference.hpp"
#include "margin_maxer/schedule.hpp"
#include "margin_maxer/trajectory.hpp"

namespace margin_maxer {

enum class Algorithm { GD, NGD, PRGD };

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::GD: return "gd";
    case Algorithm::NGD: return "ngd";
    case Algorithm::PRGD: return "prgd";
  }
  return "?";
}

inline Algorithm algorithm_from_string(std::string_view s) {
  if (s == "gd") return Algorithm::GD;
  if (s == "ngd") return Algorithm::NGD;
  if (s == "prgd") return Algorithm::PRGD;
  throw ConfigError("algorithm", "expected gd, ngd or prgd, got '" + std::string(s) + "'");
}

/// Either a synthetic family or a CSV file.
struct DatasetSource {
  std::optional<SyntheticSpec> synthetic = SyntheticSpec{};
  std::string path;
  bool rescale = false;
};

inline void to_json(nlohmann::json& j, const DatasetSource& d) {
  if (d.synthetic) {
    j = *d.synthetic;
  } else {
    j = nlohmann::json{{"path", d.path}, {"rescale", d.rescale}};
  }
}

/// A "path" key selects a CSV file; otherwise the object is a SyntheticSpec.
inline void from_json(const nlohmann::json& j, DatasetSource& d) {
  d = DatasetSource{};
  if (j.contains("path")) {
    d.synthetic.reset();
    d.path = j.at("path").get<std::string>();
    if (j.contains("rescale")) d.rescale = j.at("rescale").get<bool>();
  } else {
    d.synthetic = j.get<SyntheticSpec>();
  }
}

struct WarmupConfig {
  Method kind = Method::GD;
  std::size_t steps = 1000;
};

struct ExperimentConfig {
  /// Column label in comparisons; defaults to the algorithm name.
  std::string name;
  DatasetSource dataset;
  Algorithm algorithm = Algorithm::PRGD;
  double eta = 1.0;
  WarmupConfig warmup;
  Schedule schedule = Schedule::exp_radius(5, 1.2);
  std::size_t budget = 10'000;
  std::optional<double> stop_gap;
  std::size_t log_stride = 1;
  std::string out;
  std::uint64_t seed = 0;
  FitWindow fit_window;
  /// exact | dual | ngd | auto (exact for synthetic data, dual otherwise).
  std::string reference = "auto";

  void validate() const {
    if (budget < 1) throw ConfigError("budget", "must be >= 1");
    if (stop_gap && !(*stop_gap > 0.0)) throw ConfigError("stop_gap", "must be > 0");
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("eta", "must be > 0");
    if (log_stride < 1) throw ConfigError("log_stride", "must be >= 1");
    if (!dataset.synthetic && dataset.path.empty()) throw ConfigError("dataset", "needs a family or a path");
    if (dataset.synthetic) dataset.synthetic->validate();
    if (algorithm == Algorithm::PRGD) {
      if (warmup.steps < 1) throw ConfigError("warmup.steps", "must be >= 1");
      schedule.validate();
    }
    if (!(fit_window.t_min <= fit_window.t_max)) throw ConfigError("fit_window", "t_min must be <= t_max");
    static const std::set<std::string> refs{"auto", "exact", "dual", "ngd"};
    if (!refs.count(reference)) throw ConfigError("reference", "expected auto, exact, dual or ngd");
  }

  std::string label() const { return name.empty() ? to_string(algorithm) : name; }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{
      {"name", c.name},
      {"dataset", c.dataset},
      {"algorithm", to_string(c.algorithm)},
      {"eta", c.eta},
      {"warmup", {{"kind", to_string(c.warmup.kind)}, {"steps", c.warmup.steps}}},
      {"schedule", c.schedule},
      {"budget", c.budget},
      {"stop_gap", c.stop_gap ? nlohmann::json(*c.stop_gap) : nlohmann::json(nullptr)},
      {"log_stride", c.log_stride},
      {"out", c.out},
      {"seed", c.seed},
      {"fit_window",
       {c.fit_window.t_min,
        std::isfinite(c.fit_window.t_max) ? nlohmann::json(c.fit_window.t_max) : nlohmann::json(nullptr)}},
      {"reference", c.reference}};
}

/// Missing keys keep their defaults. A top-level "seed" overrides the dataset seed.
inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c = ExperimentConfig{};
  try {
    if (j.contains("name")) c.name = j.at("name").get<std::string>();
    if (j.contains("dataset")) c.dataset = j.at("dataset").get<DatasetSource>();
    if (j.contains("algorithm")) c.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
    if (j.contains("eta")) c.eta = j.at("eta").get<double>();
    if (j.contains("warmup")) {
      const auto& w = j.at("warmup");
      if (w.contains("kind")) c.warmup.kind = method_from_string(w.at("kind").get<std::string>());
      if (w.contains("steps")) c.warmup.steps = w.at("steps").get<std::size_t>();
    }
    if (j.contains("schedule")) c.schedule = j.at("schedule").get<Schedule>();
    if (j.contains("budget")) c.budget = j.at("budget").get<std::size_t>();
    if (j.contains("stop_gap") && !j.at("stop_gap").is_null()) c.stop_gap = j.at("stop_gap").get<double>();
    if (j.contains("log_stride")) c.log_stride = j.at("log_stride").get<std::size_t>();
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
    if (j.contains("seed")) {
      c.seed = j.at("seed").get<std::uint64_t>();
    } else if (c.dataset.synthetic) {
      c.seed = c.dataset.synthetic->seed;
    }
    if (c.dataset.synthetic) c.dataset.synthetic->seed = c.seed;
    if (j.contains("fit_window")) {
      const auto& w = j.at("fit_window");
      c.fit_window.t_min = w.at(0).get<double>();
      if (!w.at(1).is_null()) c.fit_window.t_max = w.at(1).get<double>();
    }
    if (j.contains("reference")) c.reference = j.at("reference").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config", e.what());
  }
}

inline Dataset load_dataset(const DatasetSource& src) {
  if (src.synthetic) return make_synthetic(*src.synthetic);
  return load_csv(src.path, CsvReadOptions{src.rescale});
}

/// Reference solution by method name; "auto" picks exact for generator output, dual otherwise.
inline MaxMarginSolution reference_solution(const Dataset& ds, std::string_view method,
                                            std::size_t ngd_steps = 100'000) {
  if (method == "auto") method = ds.origin() ? "exact" : "dual";
  if (method == "exact") {
    if (!ds.origin()) throw UnsupportedError("method 'exact' only applies to synthetic datasets");
    return solve_exact_synthetic(ds, ds.origin()->family);
  }
  if (method == "dual") return solve_dual(ds);
  if (method == "ngd") return approx_by_ngd(ds, ngd_steps);
  throw UnsupportedError("unknown solver method '" + std::string(method) + "'");
}

struct ExperimentResult {
  ExperimentConfig config;
  MaxMarginSolution reference;
  Trajectory trajectory;
  nlohmann::json summary;
};

/// Summary of a finished run, including fits of all three rate families.
inline nlohmann::json summarize(const ExperimentConfig& cfg, const Dataset& ds,
                                const MaxMarginSolution& ref, const Trajectory& tr) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json s;
  s["algorithm"] = to_string(cfg.algorithm);
  s["name"] = cfg.label();
  s["iterations"] = tr.iterations;
  s["warmup_iterations"] = tr.warmup_iterations;
  const auto& w = tr.final_weight;
  const double wn = norm(w);
  s["final_norm"] = wn;
  if (wn > 0.0) {
    const double m = margin(w, ds);
    s["final_margin"] = m;
    s["final_gap"] = ref.gamma_star - m;
    s["final_dir_err"] = directional_error(w, ref.w_star);
  } else {
    s["final_margin"] = nullptr;
    s["final_gap"] = nullptr;
    s["final_dir_err"] = nullptr;
  }
  s["stop_gap"] = cfg.stop_gap ? nlohmann::json(*cfg.stop_gap) : nlohmann::json(nullptr);
  s["stop_reached"] = tr.stop_iteration.has_value();
  if (tr.stop_iteration) {
    s["iterations_to_stop"] = *tr.stop_iteration;
    s["acceleration_iterations_to_stop"] = *tr.stop_iteration - std::min(*tr.stop_iteration, tr.warmup_iterations);
  } else {
    s["iterations_to_stop"] = nullptr;
    s["acceleration_iterations_to_stop"] = nullptr;
  }
  s["resolved_r0"] = tr.resolved_r0 ? num(*tr.resolved_r0) : nlohmann::json(nullptr);
  s["reference"] = ref;
  nlohmann::json fits = nlohmann::json::array();
  for (RateFamily f : kAllRateFamilies) {
    try {
      fits.push_back(fit_rate(tr, f, cfg.fit_window, RateMetric::MarginGap));
    } catch (const Error& e) {
      fits.push_back({{"family", to_string(f)}, {"error", e.what()}});
    }
  }
  s["fits"] = fits;
  return s;
}

inline ExperimentResult run_experiment(ExperimentConfig cfg) {
  if (cfg.dataset.synthetic) cfg.dataset.synthetic->seed = cfg.seed;
  cfg.validate();
  const Dataset ds = load_dataset(cfg.dataset);
  ExperimentResult res;
  res.reference = reference_solution(ds, cfg.reference);
  RunOptions opts;
  opts.reference = res.reference.direction();
  opts.stop_gap = cfg.stop_gap;
  opts.log_stride = cfg.log_stride;
  opts.max_iterations = cfg.budget;
  opts.allow_large_step = true;  // the config is explicit about eta
  switch (cfg.algorithm) {
    case Algorithm::GD: res.trajectory = run_baseline(ds, Method::GD, cfg.eta, cfg.budget, opts); break;
    case Algorithm::NGD: res.trajectory = run_baseline(ds, Method::NGD, cfg.eta, cfg.budget, opts); break;
    case Algorithm::PRGD:
      if (cfg.warmup.steps >= cfg.budget) throw ConfigError("budget", "must exceed warmup.steps for prgd");
      res.trajectory = two_phase_run(ds, cfg.eta, cfg.warmup.kind, cfg.warmup.steps, cfg.schedule,
                                     kUnboundedCycles, opts);
      break;
  }
  res.summary = summarize(cfg, ds, res.reference, res.trajectory);
  res.config = std::move(cfg);
  return res;
}

/// Default configs for the four compared methods: gd, ngd, prgd-exp and prgd-poly.
/// PRGD variants warm up with 1000 GD steps and use T_{k+1} - T_k = 5.
inline ExperimentConfig preset_config(std::string_view preset, ExperimentConfig base = {}) {
  base.name = std::string(preset);
  if (preset == "gd") {
    base.algorithm = Algorithm::GD;
  } else if (preset == "ngd") {
    base.algorithm = Algorithm::NGD;
  } else if (preset == "prgd-exp" || preset == "prgd") {
    base.algorithm = Algorithm::PRGD;
    base.schedule = Schedule::exp_radius(5, 1.2, base.schedule.r0);
  } else if (preset == "prgd-poly") {
    base.algorithm = Algorithm::PRGD;
    base.schedule = Schedule::poly_radius(5, 1.2, base.schedule.r0);
  } else {
    throw ConfigError("algorithm", "unknown preset '" + std::string(preset) + "'");
  }
  return base;
}

/// Runs configs concurrently; results come back in config order. All configs
/// must describe the same dataset.
inline std::vector<ExperimentResult> run_comparison(const std::vector<ExperimentConfig>& configs) {
  if (configs.empty()) throw ConfigError("configs", "need at least one config");
  std::vector<ExperimentConfig> resolved = configs;
  for (auto& c : resolved) {
    if (c.dataset.synthetic) c.dataset.synthetic->seed = c.seed;
    c.validate();
  }
  const Dataset first = load_dataset(resolved.front().dataset);
  for (std::size_t i = 1; i < resolved.size(); ++i) {
    if (!(load_dataset(resolved[i].dataset) == first)) {
      throw ConfigError("dataset", fmt::format("config {} targets a different dataset than config 0", i));
    }
  }
  std::vector<std::future<ExperimentResult>> jobs;
  jobs.reserve(resolved.size());
  for (const auto& c : resolved) jobs.push_back(std::async(std::launch::async, run_experiment, c));
  std::vector<ExperimentResult> out;
  out.reserve(jobs.size());
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

/// Combined CSV: t, then one gap column per run. Blank cells where a run logged no row at t.
inline void write_comparison_csv(const std::vector<ExperimentResult>& results, std::ostream& os) {
  std::vector<std::string> names;
  std::map<std::string, int> seen;
  for (const auto& r : results) {
    std::string n = r.config.label();
    if (seen[n]++ > 0) n += fmt::format("_{}", seen[n] - 1);
    names.push_back(n);
  }
  std::map<std::size_t, std::vector<std::optional<double>>> table;
  for (std::size_t k = 0; k < results.size(); ++k) {
    for (const auto& row : results[k].trajectory.rows) {
      auto& cells = table[row.t];
      cells.resize(results.size());
      cells[k] = row.margin_gap;
    }
  }
  os << 't';
  for (const auto& n : names) os << ",gap_" << n;
  os << '\n';
  for (const auto& [t, cells] : table) {
    os << t;
    for (std::size_t k = 0; k < results.size(); ++k) {
      os << ',';
      if (k < cells.size() && cells[k]) os << fmt::format("{:.17g}", *cells[k]);
    }
    os << '\n';
  }
}

}  // namespace margin_maxer
