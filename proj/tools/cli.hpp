#pragma once

// Command-line front end. Every subcommand builds a JSON config in three layers
// (defaults, --config file, explicit flags), echoes the resolved document and
// writes its data either to --out or to stdout. When data goes to stdout the
// echo goes to stderr.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "json.hpp"
#include "margin_maxer/margin_maxer.hpp"

namespace margin_maxer::cli {

using nlohmann::json;

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2 };

inline std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto log = std::make_shared<spdlog::logger>("margin_maxer", sink);
  log->set_pattern("[%l] %v");
  auto level = spdlog::level::warn;
  if (const char* env = std::getenv("MARGIN_MAXER_LOG"); env && *env) {
    level = spdlog::level::from_str(env);
  }
  log->set_level(level);
  return log;
}

inline json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config", "cannot open '" + path + "'");
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", "'" + path + "': " + e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot re-open '" + path + "' for validation");
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

/// Flags shared by every subcommand. Values are only applied if the flag was given.
struct GlobalFlags {
  std::uint64_t seed = 0;
  std::string out;
  std::string config;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;
  CLI::Option* config_opt = nullptr;
};

struct DatasetFlags {
  std::string data;
  bool rescale = false;
  std::string family;
  double gamma = 0.0;
  std::size_t n = 0;
  CLI::Option* data_opt = nullptr;
  CLI::Option* rescale_opt = nullptr;
  CLI::Option* family_opt = nullptr;
  CLI::Option* gamma_opt = nullptr;
  CLI::Option* n_opt = nullptr;

  void add(CLI::App* app, bool with_file = true) {
    if (with_file) {
      data_opt = app->add_option("--data", data, "Dataset CSV (x_1..x_d,y)");
      rescale_opt = app->add_flag("--rescale", rescale, "Divide points by the largest norm instead of rejecting");
    }
    family_opt = app->add_option("--family", family, "toy | sphere-cap | ball-cap");
    gamma_opt = app->add_option("--gamma", gamma, "Max-margin value gamma*");
    n_opt = app->add_option("--n", n, "Number of points");
  }

  bool synthetic_given() const { return *family_opt || *gamma_opt || *n_opt; }

  /// Overrides a DatasetSource JSON object in place.
  void apply(json& ds) const {
    if (data_opt && *data_opt) {
      if (synthetic_given()) throw ConfigError("dataset", "--data cannot be combined with --family/--gamma/--n");
      ds = json{{"path", data}, {"rescale", rescale}};
      return;
    }
    if (synthetic_given() && ds.contains("path")) ds = json::object();
    if (rescale_opt && *rescale_opt && ds.contains("path")) ds["rescale"] = rescale;
    if (*family_opt) {
      const bool was_toy = ds.contains("family") && ds["family"] == "toy";
      ds["family"] = family;
      if (family == "toy" && !*n_opt) ds["n"] = 3;
      if (was_toy && family != "toy" && !*n_opt) ds.erase("n");
    }
    if (*gamma_opt) ds["gamma_star"] = gamma;
    if (*n_opt) ds["n"] = n;
  }
};

class Runner {
 public:
  Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err), log_(make_logger(err)) {}

  int main(int argc, const char* const* argv);

 private:
  json base_config() const { return global_.config.empty() ? json::object() : read_json_file(global_.config); }

  std::string out_path(const json& cfg) const {
    if (*global_.out_opt) return global_.out;
    if (cfg.contains("out") && cfg["out"].is_string()) return cfg["out"].get<std::string>();
    return {};
  }

  void apply_seed(json& ds) const {
    if (*global_.seed_opt && !ds.contains("path")) ds["seed"] = global_.seed;
  }

  /// Where config echoes and reports go: stderr when stdout carries data.
  std::ostream& report_stream(const std::string& out) const { return out.empty() ? err_ : out_; }

  void report(const std::string& out, const json& doc) const { report_stream(out) << doc.dump(2) << '\n'; }

  int cmd_gen();
  int cmd_solve();
  int cmd_run();
  int cmd_compare();
  int cmd_field();
  int cmd_fit();

  std::ostream& out_;
  std::ostream& err_;
  std::shared_ptr<spdlog::logger> log_;
  GlobalFlags global_;

  DatasetFlags gen_ds_, solve_ds_, run_ds_, cmp_ds_, field_ds_;

  std::string solve_method_ = "auto";
  std::size_t solve_ngd_steps_ = 100'000;
  CLI::Option* solve_method_opt_ = nullptr;
  CLI::Option* solve_steps_opt_ = nullptr;

  struct RunFlags {
    std::string name, algorithm, warmup_kind, schedule, reference, summary;
    double eta = 1.0, stop_gap = 0.0, base = 1.2, alpha = 1.2, beta = 0.0, r0 = 1.0, t0 = 5.0;
    std::size_t budget = 0, log_stride = 1, warmup_steps = 0, spacing = 0;
    std::vector<double> fit_window;
    std::map<std::string, CLI::Option*> opt;

    void add(CLI::App* app, bool single) {
      if (single) {
        opt["name"] = app->add_option("--name", name, "Run label");
        opt["algorithm"] = app->add_option("--algorithm", algorithm, "gd | ngd | prgd");
        opt["summary"] = app->add_option("--summary", summary, "Summary JSON path (default <out stem>.summary.json)");
        opt["schedule"] = app->add_option("--schedule", schedule, "exp-radius | poly-radius | poly-both | explicit");
        opt["base"] = app->add_option("--base", base, "Radius growth base (exp-radius)");
        opt["alpha"] = app->add_option("--alpha", alpha, "Radius exponent (poly-radius, poly-both)");
        opt["beta"] = app->add_option("--beta", beta, "Cycle-length exponent (poly-both)");
        opt["spacing"] = app->add_option("--spacing", spacing, "Cycle length T_{k+1} - T_k");
        opt["t0"] = app->add_option("--t0", t0, "Base cycle length (poly-both)");
      }
      opt["r0"] = app->add_option("--r0", r0, "First PRGD radius (default: norm at the switch)");
      opt["eta"] = app->add_option("--eta", eta, "Step size");
      opt["budget"] = app->add_option("--budget", budget, "Total iteration budget");
      opt["stop_gap"] = app->add_option("--stop-gap", stop_gap, "Stop once the margin gap drops below this");
      opt["log_stride"] = app->add_option("--log-stride", log_stride, "Log every k-th iterate");
      opt["warmup_kind"] = app->add_option("--warmup-kind", warmup_kind, "gd | ngd");
      opt["warmup_steps"] = app->add_option("--warmup-steps", warmup_steps, "Warm-up iterations before PRGD");
      opt["reference"] = app->add_option("--reference", reference, "auto | exact | dual | ngd");
      opt["fit_window"] = app->add_option("--fit-window", fit_window, "t_min t_max for rate fits")->expected(2);
    }

    bool given(const std::string& k) const {
      auto it = opt.find(k);
      return it != opt.end() && it->second->count() > 0;
    }

    void apply(json& c) const {
      if (given("name")) c["name"] = name;
      if (given("algorithm")) c["algorithm"] = algorithm;
      if (given("eta")) c["eta"] = eta;
      if (given("budget")) c["budget"] = budget;
      if (given("stop_gap")) c["stop_gap"] = stop_gap;
      if (given("log_stride")) c["log_stride"] = log_stride;
      if (given("warmup_kind")) c["warmup"]["kind"] = warmup_kind;
      if (given("warmup_steps")) c["warmup"]["steps"] = warmup_steps;
      if (given("reference")) c["reference"] = reference;
      if (given("fit_window")) c["fit_window"] = fit_window;
      if (given("schedule")) c["schedule"]["kind"] = schedule;
      if (given("base")) c["schedule"]["base"] = base;
      if (given("alpha")) c["schedule"]["alpha"] = alpha;
      if (given("beta")) c["schedule"]["beta"] = beta;
      if (given("spacing")) c["schedule"]["spacing"] = spacing;
      if (given("t0")) c["schedule"]["t0"] = t0;
      if (given("r0")) c["schedule"]["r0"] = r0;
    }
  };
  RunFlags run_flags_, cmp_flags_;

  std::vector<std::string> cmp_algorithms_;
  std::vector<std::string> cmp_configs_;
  CLI::Option* cmp_algorithms_opt_ = nullptr;

  std::vector<double> field_bounds_;
  std::vector<std::size_t> field_res_;
  std::string field_reference_ = "auto";
  CLI::Option* field_bounds_opt_ = nullptr;
  CLI::Option* field_res_opt_ = nullptr;
  CLI::Option* field_reference_opt_ = nullptr;

  std::string fit_traj_;
  std::vector<std::string> fit_families_;
  std::string fit_metric_ = "margin_gap";
  double fit_tmin_ = 0.0;
  double fit_tmax_ = 0.0;
  CLI::Option* fit_traj_opt_ = nullptr;
  CLI::Option* fit_families_opt_ = nullptr;
  CLI::Option* fit_metric_opt_ = nullptr;
  CLI::Option* fit_tmin_opt_ = nullptr;
  CLI::Option* fit_tmax_opt_ = nullptr;
};

// ---------------------------------------------------------------------------

inline int Runner::cmd_gen() {
  json cfg = base_config();
  gen_ds_.apply(cfg);
  if (!cfg.contains("family")) cfg["family"] = to_string(Family::SphereCap);
  apply_seed(cfg);
  const std::string out = out_path(cfg);
  cfg.erase("out");
  const auto spec = cfg.get<SyntheticSpec>();
  const Dataset ds = make_synthetic(spec);
  const auto mm = solve_exact_synthetic(ds, spec.family);

  json resolved = spec;
  resolved["out"] = out;
  if (out.empty()) {
    write_csv(ds, out_);
  } else {
    save_csv(ds, out);
    if (!(load_csv(out) == ds)) throw Error("re-read of '" + out + "' does not match the generated dataset");
    log_->info("wrote {} points to {}", ds.size(), out);
  }
  report(out, {{"config", resolved}, {"gamma_star", mm.gamma_star}, {"w_star", mm.w_star}});
  return kOk;
}

inline int Runner::cmd_solve() {
  json cfg = base_config();
  json ds_json = cfg.value("dataset", json::object());
  solve_ds_.apply(ds_json);
  if (!ds_json.contains("path") && !ds_json.contains("family")) ds_json["family"] = to_string(Family::SphereCap);
  apply_seed(ds_json);
  const auto src = ds_json.get<DatasetSource>();
  std::string method = cfg.value("method", std::string("auto"));
  if (*solve_method_opt_) method = solve_method_;
  std::size_t steps = cfg.value("ngd_steps", std::size_t{100'000});
  if (*solve_steps_opt_) steps = solve_ngd_steps_;
  const std::string out = out_path(cfg);

  const json resolved{{"dataset", src}, {"method", method}, {"ngd_steps", steps}, {"out", out}};
  const Dataset ds = load_dataset(src);
  const auto mm = reference_solution(ds, method, steps);
  const auto rk = rank_diagnostics(ds, mm.support);
  json result = mm;
  result["rank_support"] = rk.support_rank;
  result["rank_data"] = rk.data_rank;

  if (out.empty()) {
    out_ << result.dump(2) << '\n';
  } else {
    {
      std::ofstream os(out);
      if (!os) throw Error("cannot open '" + out + "' for writing");
      os << result.dump(2) << '\n';
      if (!os) throw Error("write to '" + out + "' failed");
    }
    if (json::parse(read_file(out)) != result) throw Error("re-read of '" + out + "' does not match");
  }
  report(out, {{"config", resolved}});
  return kOk;
}

inline int Runner::cmd_run() {
  json cfg = base_config();
  json ds_json = cfg.value("dataset", json::object());
  run_ds_.apply(ds_json);
  if (!ds_json.empty()) cfg["dataset"] = ds_json;
  run_flags_.apply(cfg);
  if (*global_.seed_opt) cfg["seed"] = global_.seed;
  if (*global_.out_opt) cfg["out"] = global_.out;
  auto config = cfg.get<ExperimentConfig>();
  if (config.dataset.synthetic) config.dataset.synthetic->seed = config.seed;
  config.validate();

  std::string summary_path = run_flags_.given("summary") ? run_flags_.summary : std::string{};
  if (summary_path.empty() && !config.out.empty()) {
    std::filesystem::path p(config.out);
    summary_path = (p.parent_path() / (p.stem().string() + ".summary.json")).string();
  }
  log_->info("running {} for at most {} iterations", to_string(config.algorithm), config.budget);
  const auto res = run_experiment(config);
  const json resolved = res.config;

  if (config.out.empty()) {
    write_trajectory_csv(res.trajectory, out_);
  } else {
    save_trajectory_csv(res.trajectory, config.out);
    if (load_trajectory_csv(config.out).rows.size() != res.trajectory.rows.size()) {
      throw Error("re-read of '" + config.out + "' lost rows");
    }
  }
  if (!summary_path.empty()) {
    {
      std::ofstream os(summary_path);
      if (!os) throw Error("cannot open '" + summary_path + "' for writing");
      os << res.summary.dump(2) << '\n';
      if (!os) throw Error("write to '" + summary_path + "' failed");
    }
    if (json::parse(read_file(summary_path)) != res.summary) throw Error("re-read of '" + summary_path + "' does not match");
  }
  json doc{{"config", resolved}, {"summary_path", summary_path}};
  if (summary_path.empty()) doc["summary"] = res.summary;
  report(config.out, doc);
  return kOk;
}

inline int Runner::cmd_compare() {
  json base = base_config();
  std::vector<ExperimentConfig> configs;
  auto finish = [&](json c) {
    json ds_json = c.value("dataset", json::object());
    cmp_ds_.apply(ds_json);
    if (!ds_json.empty()) c["dataset"] = ds_json;
    cmp_flags_.apply(c);
    if (*global_.seed_opt) c["seed"] = global_.seed;
    c.erase("out");
    return c.get<ExperimentConfig>();
  };
  if (base.is_array()) {
    for (const auto& c : base) configs.push_back(finish(c));
    base = json::object();
  }
  for (const auto& path : cmp_configs_) configs.push_back(finish(read_json_file(path)));
  std::vector<std::string> presets = cmp_algorithms_;
  if (configs.empty() && presets.empty()) presets = {"gd", "ngd", "prgd-exp", "prgd-poly"};
  if (!presets.empty()) {
    const ExperimentConfig b = finish(base);
    for (const auto& p : presets) configs.push_back(preset_config(p, b));
  }
  const std::string out = out_path(base);
  log_->info("comparing {} runs", configs.size());
  const auto results = run_comparison(configs);

  std::ostringstream csv;
  write_comparison_csv(results, csv);
  if (out.empty()) {
    out_ << csv.str();
  } else {
    {
      std::ofstream os(out);
      if (!os) throw Error("cannot open '" + out + "' for writing");
      os << csv.str();
      if (!os) throw Error("write to '" + out + "' failed");
    }
    if (read_file(out) != csv.str()) throw Error("re-read of '" + out + "' does not match");
  }
  json doc{{"configs", json::array()}, {"summaries", json::array()}, {"out", out}};
  for (const auto& r : results) {
    doc["configs"].push_back(r.config);
    doc["summaries"].push_back(r.summary);
  }
  report(out, doc);
  return kOk;
}

inline int Runner::cmd_field() {
  json cfg = base_config();
  json ds_json = cfg.value("dataset", json::object());
  field_ds_.apply(ds_json);
  if (!ds_json.contains("path") && !ds_json.contains("family")) {
    ds_json["family"] = to_string(Family::Toy);
    ds_json["n"] = 3;
  }
  apply_seed(ds_json);
  const auto src = ds_json.get<DatasetSource>();

  GridBounds b;
  if (cfg.contains("bounds")) {
    const auto v = cfg["bounds"].get<std::vector<double>>();
    if (v.size() != 4) throw ConfigError("bounds", "expected [w1_min, w1_max, w2_min, w2_max]");
    b = {v[0], v[1], v[2], v[3]};
  }
  if (*field_bounds_opt_) b = {field_bounds_[0], field_bounds_[1], field_bounds_[2], field_bounds_[3]};
  std::vector<std::size_t> res = cfg.value("resolution", std::vector<std::size_t>{21, 21});
  if (*field_res_opt_) res = field_res_;
  if (res.size() != 2) throw ConfigError("resolution", "expected [res1, res2]");
  std::string reference = cfg.value("reference", std::string("auto"));
  if (*field_reference_opt_) reference = field_reference_;
  const std::string out = out_path(cfg);

  const Dataset ds = load_dataset(src);
  const auto mm = reference_solution(ds, reference);
  const auto grid = field_grid(ds, mm.w_star, b, res[0], res[1]);
  std::ostringstream csv;
  write_field_csv(grid, csv);
  if (out.empty()) {
    out_ << csv.str();
  } else {
    save_field_csv(grid, out);
    if (count_lines(read_file(out)) != grid.size() + 1) throw Error("re-read of '" + out + "' lost rows");
  }
  json doc{{"config",
            {{"dataset", src},
             {"bounds", {b.w1_min, b.w1_max, b.w2_min, b.w2_max}},
             {"resolution", res},
             {"reference", reference},
             {"out", out}}},
           {"gamma_star", mm.gamma_star},
           {"w_star", mm.w_star}};
  if (src.synthetic && src.synthetic->family == Family::Toy) {
    const auto [lo, hi] = attractor_band(src.synthetic->gamma_star);
    doc["attractor_band"] = {lo, hi};
    doc["attractor_line"] = attractor_line(src.synthetic->gamma_star);
  }
  report(out, doc);
  return kOk;
}

inline int Runner::cmd_fit() {
  json cfg = base_config();
  std::string traj = cfg.value("trajectory", std::string{});
  if (*fit_traj_opt_) traj = fit_traj_;
  if (traj.empty()) throw ConfigError("trajectory", "fit needs --trajectory");
  std::vector<std::string> families = cfg.value("families", std::vector<std::string>{});
  if (*fit_families_opt_) families = fit_families_;
  if (families.empty()) {
    for (RateFamily f : kAllRateFamilies) families.push_back(to_string(f));
  }
  std::string metric = cfg.value("metric", std::string("margin_gap"));
  if (*fit_metric_opt_) metric = fit_metric_;
  FitWindow window;
  if (cfg.contains("fit_window")) {
    window.t_min = cfg["fit_window"].at(0).get<double>();
    if (!cfg["fit_window"].at(1).is_null()) window.t_max = cfg["fit_window"].at(1).get<double>();
  }
  if (*fit_tmin_opt_) window.t_min = fit_tmin_;
  if (*fit_tmax_opt_) window.t_max = fit_tmax_;
  const std::string out = out_path(cfg);

  const auto tr = load_trajectory_csv(traj);
  const RateMetric m = rate_metric_from_string(metric);
  json fits = json::array();
  for (const auto& name : families) fits.push_back(fit_rate(tr, rate_family_from_string(name), window, m));

  if (out.empty()) {
    out_ << fits.dump(2) << '\n';
  } else {
    {
      std::ofstream os(out);
      if (!os) throw Error("cannot open '" + out + "' for writing");
      os << fits.dump(2) << '\n';
      if (!os) throw Error("write to '" + out + "' failed");
    }
    if (json::parse(read_file(out)) != fits) throw Error("re-read of '" + out + "' does not match");
  }
  json resolved{{"trajectory", traj},
                {"families", families},
                {"metric", metric},
                {"fit_window",
                 {window.t_min, std::isfinite(window.t_max) ? json(window.t_max) : json(nullptr)}},
                {"out", out}};
  report(out, {{"config", resolved}});
  return kOk;
}

// ---------------------------------------------------------------------------

inline int Runner::main(int argc, const char* const* argv) {
  CLI::App app{"Margin-maximization benchmark harness", "margin_maxer"};
  app.require_subcommand(1);
  app.fallthrough();
  global_.seed_opt = app.add_option("--seed", global_.seed, "RNG seed for synthetic data");
  global_.out_opt = app.add_option("--out", global_.out, "Output path (default: stdout)");
  global_.config_opt = app.add_option("--config", global_.config, "JSON config file");

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  gen_ds_.add(gen, false);

  auto* solve = app.add_subcommand("solve", "Compute the max-margin solution");
  solve_ds_.add(solve);
  solve_method_opt_ = solve->add_option("--method", solve_method_, "auto | exact | dual | ngd");
  solve_steps_opt_ = solve->add_option("--ngd-steps", solve_ngd_steps_, "NGD iterations for method ngd");

  auto* run = app.add_subcommand("run", "Run one optimizer and write its trajectory");
  run_ds_.add(run);
  run_flags_.add(run, true);

  auto* cmp = app.add_subcommand("compare", "Run several optimizers on one dataset");
  cmp_ds_.add(cmp);
  cmp_flags_.add(cmp, false);
  cmp_algorithms_opt_ = cmp->add_option("--algorithms", cmp_algorithms_, "Presets: gd ngd prgd-exp prgd-poly")
                            ->delimiter(',');
  cmp->add_option("configs", cmp_configs_, "Experiment config files");

  auto* field = app.add_subcommand("field", "Export the normalized-gradient field on a 2-D grid");
  field_ds_.add(field);
  field_bounds_opt_ = field->add_option("--bounds", field_bounds_, "w1_min w1_max w2_min w2_max")->expected(4);
  field_res_opt_ = field->add_option("--resolution", field_res_, "res1 res2")->expected(2);
  field_reference_opt_ = field->add_option("--reference", field_reference_, "auto | exact | dual | ngd");

  auto* fit = app.add_subcommand("fit", "Fit rate families to a trajectory CSV");
  fit_traj_opt_ = fit->add_option("--trajectory", fit_traj_, "Trajectory CSV");
  fit_families_opt_ = fit->add_option("--families", fit_families_, "power exponential inverse-log")->delimiter(',');
  fit_metric_opt_ = fit->add_option("--metric", fit_metric_, "margin_gap | dir_err");
  fit_tmin_opt_ = fit->add_option("--t-min", fit_tmin_, "Window start");
  fit_tmax_opt_ = fit->add_option("--t-max", fit_tmax_, "Window end");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out_, err_);
  }

  try {
    if (*gen) return cmd_gen();
    if (*solve) return cmd_solve();
    if (*run) return cmd_run();
    if (*cmp) return cmd_compare();
    if (*field) return cmd_field();
    if (*fit) return cmd_fit();
  } catch (const ConfigError& e) {
    err_ << fmt::format("error: config field '{}': {}\n", e.field(), e.what());
    return kUsage;
  } catch (const Error& e) {
    err_ << "error: " << e.what() << '\n';
    return kFailure;
  } catch (const nlohmann::json::exception& e) {
    err_ << "error: config: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err_ << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Runner r(out, err);
  return r.main(argc, argv);
}

/// Convenience overload; args excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"margin_maxer"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace margin_maxer::cli
