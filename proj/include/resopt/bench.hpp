#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "resopt/dp_reference.hpp"
#include "resopt/gmcsdp_trainer.hpp"
#include "resopt/gsdp_trainer.hpp"
#include "resopt/gv_trainer.hpp"
#include "resopt/model_io.hpp"
#include "resopt/stats.hpp"

namespace resopt {

using nlohmann::json;

enum class Method { Dp, Gv, Gsdp, Gmcsdp };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::Dp: return "dp";
    case Method::Gv: return "gv";
    case Method::Gsdp: return "gsdp";
    case Method::Gmcsdp: return "gmcsdp";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  for (Method m : {Method::Dp, Method::Gv, Method::Gsdp, Method::Gmcsdp})
    if (s == to_string(m)) return m;
  throw std::invalid_argument("unknown method: " + s);
}

// ---------------------------------------------------------------------------------------------
// DP configuration bundle: the oracle has no config file of its own.

struct DpJob {
  ForwardModel model{HjmParams::one_factor(0.08, 0.01), SeasonalCurve{30.0, {{5.0, 365.0}, {1.0, 7.0}}}, 1.0};
  StorageSpec storage;
  DpConfig dp;
  int sim_paths = 100000;
  std::uint64_t sim_seed = 7;

  json to_json() const {
    return {{"model", resopt::to_json(model)},
            {"storage", resopt::to_json(storage)},
            {"n_steps", dp.n_steps},
            {"grid_points", dp.grid_points},
            {"rule", dp.rule == ControlRule::BangBang ? "bang_bang" : "discrete"},
            {"control_step", dp.control_step},
            {"impact", dp.impact},
            {"mode", dp.mode == DpMode::Value ? "value" : "cash_flow"},
            {"n_paths", dp.n_paths},
            {"cells_per_dim", dp.cells_per_dim},
            {"seed", dp.seed},
            {"sim_paths", sim_paths},
            {"sim_seed", sim_seed}};
  }

  static DpJob from_json(const json& j) {
    DpJob d;
    if (j.contains("model")) d.model = model_from_json(j.at("model"));
    if (j.contains("storage")) d.storage = storage_from_json(j.at("storage"));
    d.dp.n_steps = j.value("n_steps", d.dp.n_steps);
    d.dp.grid_points = j.value("grid_points", d.dp.grid_points);
    const std::string rule = j.value("rule", std::string("bang_bang"));
    if (rule != "bang_bang" && rule != "discrete") throw std::invalid_argument("DpJob: rule must be bang_bang or discrete");
    d.dp.rule = rule == "bang_bang" ? ControlRule::BangBang : ControlRule::Discrete;
    d.dp.control_step = j.value("control_step", d.dp.control_step);
    d.dp.impact = j.value("impact", d.dp.impact);
    const std::string mode = j.value("mode", std::string("cash_flow"));
    if (mode != "value" && mode != "cash_flow") throw std::invalid_argument("DpJob: mode must be value or cash_flow");
    d.dp.mode = mode == "value" ? DpMode::Value : DpMode::CashFlow;
    d.dp.n_paths = j.value("n_paths", d.dp.n_paths);
    d.dp.cells_per_dim = j.value("cells_per_dim", d.dp.cells_per_dim);
    d.dp.seed = j.value("seed", d.dp.seed);
    d.sim_paths = j.value("sim_paths", d.sim_paths);
    d.sim_seed = j.value("sim_seed", d.sim_seed);
    d.validate();
    return d;
  }

  void validate() const {
    model.validate();
    storage.validate();
    if (dp.n_steps < 1 || dp.grid_points < 2 || dp.n_paths < 1 || dp.cells_per_dim < 1 || sim_paths < 1)
      throw std::invalid_argument("DpJob: counts must be positive");
    if (dp.impact < 0.0) throw std::invalid_argument("DpJob: impact must be >= 0");
  }
};

struct DpOutcome {
  double optimization = 0.0;
  SimulationResult simulation;
};

inline DpOutcome run_dp_job(const DpJob& job) {
  const BellmanTable t = solve_dp(job.model, job.storage, job.dp);
  return {t.value, simulate_dp_policy(t, job.model, job.sim_paths, job.sim_seed)};
}

// ---------------------------------------------------------------------------------------------
// Experiments and presets.

struct Reference {
  std::optional<double> value;  // per storage; empty until derived or when none exists
  std::string source;           // provenance: published table, or "derived: ..."
  std::optional<json> derive;   // DpJob to compute the reference at run time
};

struct ExperimentConfig {
  std::string name = "inline";
  std::string description;
  Method method = Method::Gv;
  json params;  // method config (DpJob, GvConfig, GsdpConfig or GmcsdpConfig JSON)
  int runs = 1;
  std::uint64_t seed = 1;
  double scale = 1.0;
  std::vector<std::string> scale_keys;  // JSON pointers multiplied by the scale factor
  Reference reference;
  bool deterministic = true;

  void validate() const {
    if (runs < 1) throw std::invalid_argument("ExperimentConfig: runs must be >= 1");
    if (!(scale > 0.0) || scale > 1.0) throw std::invalid_argument("ExperimentConfig: scale must be in (0, 1]");
    if (!params.is_object()) throw std::invalid_argument("ExperimentConfig: params must be an object");
    for (const auto& k : scale_keys)
      if (!params.contains(json::json_pointer(k)))
        throw std::invalid_argument("ExperimentConfig: scale key " + k + " not in params");
    // Parse once so schema errors surface before any compute.
    switch (method) {
      case Method::Dp: DpJob::from_json(params); break;
      case Method::Gv: GvConfig::from_json(params); break;
      case Method::Gsdp: GsdpConfig::from_json(params); break;
      case Method::Gmcsdp: GmcsdpConfig::from_json(params); break;
    }
    if (reference.derive) DpJob::from_json(*reference.derive);
  }

  json to_json() const {
    json r = {{"source", reference.source}};
    r["value"] = reference.value ? json(*reference.value) : json(nullptr);
    if (reference.derive) r["derive"] = *reference.derive;
    return {{"name", name},   {"description", description}, {"method", to_string(method)},
            {"params", params}, {"runs", runs},             {"seed", seed},
            {"scale", scale}, {"scale_keys", scale_keys},   {"reference", r},
            {"deterministic", deterministic}};
  }

  static ExperimentConfig from_json(const json& j) {
    ExperimentConfig c;
    c.name = j.value("name", c.name);
    c.description = j.value("description", c.description);
    c.method = method_from_string(j.at("method").get<std::string>());
    c.params = j.at("params");
    c.runs = j.value("runs", c.runs);
    c.seed = j.value("seed", c.seed);
    c.scale = j.value("scale", c.scale);
    c.scale_keys = j.value("scale_keys", c.scale_keys);
    c.deterministic = j.value("deterministic", c.deterministic);
    if (j.contains("reference")) {
      const json& r = j.at("reference");
      if (r.contains("value") && !r.at("value").is_null()) c.reference.value = r.at("value").get<double>();
      c.reference.source = r.value("source", std::string());
      if (r.contains("derive")) c.reference.derive = r.at("derive");
    }
    c.validate();
    return c;
  }
};

/// Multiplies each scale key by s, rounding integers and keeping them >= 1.
inline json apply_scale(json params, const std::vector<std::string>& keys, double s) {
  if (s == 1.0) return params;
  for (const auto& k : keys) {
    json& v = params.at(json::json_pointer(k));
    if (v.is_number_integer())
      v = std::max<std::int64_t>(1, std::llround(static_cast<double>(v.get<std::int64_t>()) * s));
    else if (v.is_number())
      v = v.get<double>() * s;
    else
      throw std::invalid_argument("apply_scale: " + k + " is not numeric");
  }
  return params;
}

/// Per-run seeding: every random source a method trains with moves with the run seed; the
/// evaluation seed stays fixed so runs share common evaluation paths.
inline json with_run_seed(Method m, json p, std::uint64_t seed) {
  switch (m) {
    case Method::Dp:
      p["seed"] = seed;
      break;
    case Method::Gv:
      p["train_seed"] = seed;
      p["policy"]["seed"] = seed;
      break;
    case Method::Gsdp:
      p["gv"]["train_seed"] = seed;
      p["gv"]["policy"]["seed"] = seed;
      break;
    case Method::Gmcsdp:
      p["seed"] = seed;
      break;
  }
  return p;
}

struct RunRow {
  int run = 0;
  std::uint64_t seed = 0;
  double value = std::numeric_limits<double>::quiet_NaN();  // per storage
  double std_error = 0.0;                                    // per storage; 0 when not sampled
  double seconds = 0.0;
  std::string status = "ok";
  json extra = json::object();

  bool ok() const { return status == "ok"; }
};

struct RunReport {
  ExperimentConfig config;
  json resolved_params;  // after scaling, before per-run seeding
  std::vector<RunRow> rows;
  int completed = 0;
  double max = std::numeric_limits<double>::quiet_NaN();
  double min = std::numeric_limits<double>::quiet_NaN();
  double average = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> reference;
  std::string reference_source;
  std::optional<double> min_diff;  // min |value - reference| over completed runs
  double seconds = 0.0;
  std::string config_hash;

  /// Index of the completed run closest to the reference, or the best value without one.
  std::optional<std::size_t> best_row() const {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!rows[i].ok()) continue;
      if (!best) {
        best = i;
        continue;
      }
      const double a = rows[i].value, b = rows[*best].value;
      if (reference ? std::abs(a - *reference) < std::abs(b - *reference) : a > b) best = i;
    }
    return best;
  }

  json to_json() const {
    json rs = json::array();
    for (const auto& r : rows)
      rs.push_back({{"run", r.run}, {"seed", r.seed}, {"value", r.ok() ? json(r.value) : json(nullptr)},
                    {"std_error", r.std_error}, {"seconds", r.seconds}, {"status", r.status}, {"extra", r.extra}});
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    return {{"config", config.to_json()},
            {"resolved_params", resolved_params},
            {"rows", rs},
            {"completed", completed},
            {"max", num(max)},
            {"min", num(min)},
            {"average", num(average)},
            {"reference", reference ? json(*reference) : json(nullptr)},
            {"reference_source", reference_source},
            {"min_diff", min_diff ? json(*min_diff) : json(nullptr)},
            {"seconds", seconds},
            {"config_hash", config_hash}};
  }
};

/// FNV-1a over the canonical JSON dump.
inline std::string config_hash(const json& j) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

/// Fills max/min/average/min_diff from the completed rows.
inline void aggregate(RunReport& r) {
  std::vector<double> v;
  for (const auto& row : r.rows)
    if (row.ok()) v.push_back(row.value);
  r.completed = static_cast<int>(v.size());
  if (v.empty()) return;
  r.max = *std::max_element(v.begin(), v.end());
  r.min = *std::min_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  r.average = s / static_cast<double>(v.size());
  if (r.reference) {
    double d = std::numeric_limits<double>::infinity();
    for (double x : v) d = std::min(d, std::abs(x - *r.reference));
    r.min_diff = d;
  }
}

using RunLogger = std::function<void(const std::string&)>;

/// One seeded run of a resolved method config; value and error are per storage.
inline RunRow run_once(Method m, const json& params, int run, std::uint64_t seed) {
  RunRow row;
  row.run = run;
  row.seed = seed;
  const json p = with_run_seed(m, params, seed);
  const auto t0 = std::chrono::steady_clock::now();
  switch (m) {
    case Method::Dp: {
      const DpOutcome o = run_dp_job(DpJob::from_json(p));
      row.value = o.simulation.mean;
      row.std_error = o.simulation.std_error;
      row.extra = {{"optimization", o.optimization}};
      break;
    }
    case Method::Gv: {
      const TrainedPolicy tp = train_gv(GvConfig::from_json(p));
      const EvalResult e = evaluate_policy(tp);
      row.value = e.per_storage;
      row.std_error = e.per_storage_error;
      row.extra = {{"total", e.mean}, {"train_seconds", tp.train_seconds},
                   {"final_objective", tp.log.empty() ? json(nullptr) : json(tp.log.back().objective)}};
      break;
    }
    case Method::Gsdp: {
      const GsdpResult g = run_gsdp(GsdpConfig::from_json(p));
      row.value = g.evaluation.per_storage;
      row.std_error = g.evaluation.per_storage_error;
      row.extra = {{"total", g.evaluation.mean}, {"blocks", g.sizes}};
      break;
    }
    case Method::Gmcsdp: {
      const GmcsdpConfig c = GmcsdpConfig::from_json(p);
      const GmcsdpResult g = run_gmcsdp(c);
      row.value = g.value / c.storages;
      json stages = json::array();
      for (const auto& s : g.stages)
        stages.push_back({{"stage", s.stage}, {"mean_cuts", s.mean_cuts}, {"max_cuts", s.max_cuts},
                          {"lp_seconds", s.lp_seconds}, {"fit_seconds", s.fit_seconds},
                          {"final_mse", s.mse_log.empty() ? json(nullptr) : json(s.mse_log.back().objective)}});
      row.extra = {{"total", g.value}, {"stages", stages}};
      if (g.simulation) {
        row.extra["simulation"] = g.simulation->mean / c.storages;
        row.extra["simulation_error"] = g.simulation->std_error / c.storages;
      }
      break;
    }
  }
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

/// Resolves the reference, runs every seed (failures are recorded per run), aggregates.
inline RunReport run_experiment(const ExperimentConfig& c, const RunLogger& log = {}) {
  c.validate();
  const auto t0 = std::chrono::steady_clock::now();
  RunReport r;
  r.config = c;
  r.resolved_params = apply_scale(c.params, c.scale_keys, c.scale);
  r.config_hash = config_hash(c.to_json());
  r.reference = c.reference.value;
  r.reference_source = c.reference.source;
  if (!r.reference && c.reference.derive) {
    if (log) log("deriving reference by dynamic programming");
    const DpOutcome o = run_dp_job(DpJob::from_json(*c.reference.derive));
    r.reference = o.simulation.mean;
    r.reference_source += " (optimization " + std::to_string(o.optimization) + ")";
  }
  for (int k = 0; k < c.runs; ++k) {
    const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(k);
    RunRow row;
    try {
      row = run_once(c.method, r.resolved_params, k, seed);
    } catch (const std::exception& e) {
      row.run = k;
      row.seed = seed;
      row.status = std::string("error: ") + e.what();
    }
    if (log) {
      std::ostringstream os;
      os << c.name << " run " << k << " seed " << seed << ": ";
      if (row.ok())
        os << std::fixed << std::setprecision(2) << row.value << " (" << row.seconds << " s)";
      else
        os << row.status;
      log(os.str());
    }
    r.rows.push_back(std::move(row));
  }
  aggregate(r);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// ---------------------------------------------------------------------------------------------
// Output.

inline void write_runs_csv_header(std::ostream& os) { os << "preset,run,seed,value,std_error,seconds,status\n"; }

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + "\"";
}

inline void write_runs_csv(std::ostream& os, const RunReport& r, bool header = true) {
  if (header) write_runs_csv_header(os);
  os << std::setprecision(12);
  for (const auto& row : r.rows) {
    os << csv_field(r.config.name) << ',' << row.run << ',' << row.seed << ',';
    if (row.ok()) os << row.value;
    os << ',' << row.std_error << ',' << row.seconds << ',' << csv_field(row.status) << '\n';
  }
}

inline void write_summary_csv_header(std::ostream& os) {
  os << "preset,method,runs,completed,max,min,average,reference,reference_source,min_diff,seconds,config_hash\n";
}

inline void write_summary_csv(std::ostream& os, const RunReport& r, bool header = true) {
  if (header) write_summary_csv_header(os);
  auto num = [&](double v) {
    if (std::isfinite(v)) os << v;
  };
  os << std::setprecision(12) << csv_field(r.config.name) << ',' << to_string(r.config.method) << ','
     << r.config.runs << ',' << r.completed << ',';
  num(r.max);
  os << ',';
  num(r.min);
  os << ',';
  num(r.average);
  os << ',';
  if (r.reference) os << *r.reference;
  os << ',' << csv_field(r.reference_source) << ',';
  if (r.min_diff) os << *r.min_diff;
  os << ',' << r.seconds << ',' << r.config_hash << '\n';
}

/// Human-readable table: Maximal, Minimal, Average, Reference, Min diff.
inline void write_table(std::ostream& os, const RunReport& r) {
  auto cell = [](double v) {
    std::ostringstream s;
    if (std::isfinite(v)) s << std::fixed << std::setprecision(1) << v;
    else s << "-";
    return s.str();
  };
  os << r.config.name << " (" << to_string(r.config.method) << ", " << r.completed << "/" << r.config.runs
     << " runs, scale " << r.config.scale << ")\n";
  os << std::left << std::setw(12) << "Maximal" << std::setw(12) << "Minimal" << std::setw(12) << "Average"
     << std::setw(12) << "Reference" << "Min diff\n";
  os << std::setw(12) << cell(r.max) << std::setw(12) << cell(r.min) << std::setw(12) << cell(r.average)
     << std::setw(12) << cell(r.reference ? *r.reference : NAN) << cell(r.min_diff ? *r.min_diff : NAN) << "\n";
  os << "reference: " << (r.reference_source.empty() ? "none" : r.reference_source) << "\n";
  for (const auto& row : r.rows)
    if (!row.ok()) os << "run " << row.run << " failed: " << row.status << "\n";
}

// ---------------------------------------------------------------------------------------------
// Preset catalog.

struct Preset {
  ExperimentConfig config;
  bool full_scale = true;
  std::string desk;  // name of the desk-scale variant (full-scale presets only)
};

namespace presets {

inline ForwardModel seasonal_linear_model(int n) {
  return {HjmParams::one_factor(0.08, 0.01), SeasonalCurve{30.0, {{5.0, double(n)}, {1.0, 7.0}}}, 1.0};
}
inline ForwardModel three_factor_model(int n) {
  return {HjmParams{{0.04, 0.028, 0.023}, {0.01, 0.005, 0.0033}}, SeasonalCurve{30.0, {{5.0, double(n)}, {1.0, 7.0}}},
          1.0};
}
inline ForwardModel gmcsdp_model(double period) {
  return {HjmParams::one_factor(0.3, 0.16), SeasonalCurve{30.0, {{4.0, period}}}, 1.0};
}

inline DpJob dp_job(const ForwardModel& m, const StorageSpec& s, int n, double impact) {
  DpJob d;
  d.model = m;
  d.storage = s;
  d.dp.n_steps = n;
  d.dp.mode = DpMode::Value;
  d.dp.impact = impact;
  if (impact > 0.0) {
    d.dp.rule = ControlRule::Discrete;
    d.dp.control_step = 0.5;
    d.dp.grid_points = 201;
  }
  return d;
}

inline GvConfig gv(const ForwardModel& m, int n, int storages, PolicyKind kind, double impact) {
  GvConfig c;
  c.model = m;
  c.horizon = n;
  c.storages = storages;
  c.policy.kind = kind;
  c.impact = impact;
  if (m.factors() > 1) c.features = FeatureKind::Factors;
  return c;
}

inline const std::vector<std::string>& gv_scale_keys() {
  static const std::vector<std::string> k{"/iterations", "/eval_paths"};
  return k;
}
inline const std::vector<std::string>& gsdp_scale_keys() {
  static const std::vector<std::string> k{"/gv/iterations", "/gv/eval_paths", "/value_iterations", "/fit_samples"};
  return k;
}
inline const std::vector<std::string>& gmcsdp_scale_keys() {
  static const std::vector<std::string> k{"/iterations", "/schedule/decay_steps", "/samples"};
  return k;
}
inline const std::vector<std::string>& dp_scale_keys() {
  static const std::vector<std::string> k{"/n_paths", "/sim_paths"};
  return k;
}

inline Preset make(std::string name, std::string description, Method m, json params, int runs, Reference ref,
                   bool full, std::string desk = {}) {
  Preset p;
  p.config.name = std::move(name);
  p.config.description = std::move(description);
  p.config.method = m;
  p.config.params = std::move(params);
  p.config.runs = runs;
  p.config.reference = std::move(ref);
  switch (m) {
    case Method::Dp: p.config.scale_keys = dp_scale_keys(); break;
    case Method::Gv: p.config.scale_keys = gv_scale_keys(); break;
    case Method::Gsdp: p.config.scale_keys = gsdp_scale_keys(); break;
    case Method::Gmcsdp: p.config.scale_keys = gmcsdp_scale_keys(); break;
  }
  p.full_scale = full;
  p.desk = std::move(desk);
  return p;
}

inline Reference published_ref(double v, std::string source) { return {v, std::move(source), std::nullopt}; }
inline Reference derived_ref(const DpJob& job) {
  return {std::nullopt, "derived: dp_reference simulation, value-mode regression", job.to_json()};
}

// Desk scale: N=30 for the one-year GV cases, N=56 for the GSDP cases; iterations shrink too.
inline constexpr int kDeskGvN = 30;
inline constexpr int kDeskGsdpN = 56;

inline GvConfig desk_gv(GvConfig c) {
  const int n = kDeskGvN;
  c.model = c.model.factors() > 1 ? three_factor_model(n) : seasonal_linear_model(n);
  c.horizon = n;
  c.iterations = 10000;
  c.eval_paths = 20000;
  return c;
}

inline GsdpConfig gsdp(const GvConfig& g, int blocks, BellmanNetSpec value) {
  GsdpConfig c;
  c.gv = g;
  c.blocks = blocks;
  c.value = value;
  return c;
}

inline GsdpConfig desk_gsdp(GsdpConfig c, int blocks) {
  c.gv.model = seasonal_linear_model(kDeskGsdpN);
  c.gv.horizon = kDeskGsdpN;
  c.gv.iterations = 3000;
  c.gv.eval_paths = 20000;
  c.blocks = blocks;
  c.value_iterations = 5000;
  c.fit_samples = 10000;
  if (c.value.kind == BellmanNetKind::GroupMax) c.value.m_y = 20;
  return c;
}

inline BellmanNetSpec value_spec(BellmanNetKind kind, int layers, int neurons) {
  BellmanNetSpec s;
  s.kind = kind;
  s.layers = layers;
  s.neurons = neurons;
  s.icnn_layers = 3;
  s.m_x = 10;
  s.m_y = kind == BellmanNetKind::GroupMax ? 40 : 20;
  return s;
}

inline GmcsdpConfig gmcsdp_small(int m, int layers, int m_y, int group) {
  GmcsdpConfig c;  // defaults are the small case: N=8, C_I=10, C_W=20, m_x=6
  c.model = gmcsdp_model(4.0);
  c.storages = m;
  c.layers = layers;
  c.m_y = m_y;
  c.group = group;
  return c;
}

inline GmcsdpConfig gmcsdp_n42(int m, int m_y) {
  GmcsdpConfig c;
  c.model = gmcsdp_model(7.0);
  c.storage = StorageSpec{};  // C_I=5, C_W=10, Q_max=100, Q_init=50
  c.horizon = 42;
  c.storages = m;
  c.m_x = 8;
  c.m_y = m_y;
  return c;
}

inline GmcsdpConfig desk_gmcsdp(GmcsdpConfig c) {
  c.iterations = 4000;
  c.schedule = ad::LearningRateSchedule::linear(5e-3, 1e-4, c.iterations);
  c.samples = 5000;
  return c;
}

}  // namespace presets

/// Catalog: one preset per published table row family, each with a desk-scale variant.
inline const std::vector<Preset>& preset_catalog() {
  static const std::vector<Preset> catalog = [] {
    using namespace presets;
    std::vector<Preset> v;
    const StorageSpec storage;  // C_I=5, C_W=10, Q_max=100, Q_init=50
    const DpJob desk_linear = dp_job(seasonal_linear_model(kDeskGvN), storage, kDeskGvN, 0.0);
    const DpJob desk_impact = dp_job(seasonal_linear_model(kDeskGvN), storage, kDeskGvN, 0.2);
    const DpJob desk_gsdp_ref = dp_job(seasonal_linear_model(kDeskGsdpN), storage, kDeskGsdpN, 0.0);
    auto add_pair = [&](Preset full, Preset desk) {
      full.desk = desk.config.name;
      v.push_back(std::move(full));
      v.push_back(std::move(desk));
    };

    // Dynamic-programming references.
    add_pair(make("dp-linear-365", "DP reference, one storage, linear, N=365", Method::Dp,
                  dp_job(seasonal_linear_model(365), storage, 365, 0.0).to_json(), 1,
                  published_ref(4932, "Table 1 simulated DP value 4932"), true),
             make("desk-dp-linear-30", "DP reference on the desk linear case, N=30", Method::Dp, desk_linear.to_json(), 1,
                  derived_ref(desk_linear), false));
    add_pair(make("dp-nonlinear-365", "DP reference with price impact P=0.2, N=365", Method::Dp,
                  dp_job(seasonal_linear_model(365), storage, 365, 0.2).to_json(), 1,
                  published_ref(3796, "Table 3 simulated DP value 3796"), true),
             make("desk-dp-nonlinear-30", "DP reference with price impact P=0.2, N=30", Method::Dp,
                  desk_impact.to_json(), 1, derived_ref(desk_impact), false));
    {
      const GmcsdpConfig g = gmcsdp_small(1, 1, 12, 2);
      const DpJob small = dp_job(g.model, g.storage, g.horizon, 0.0);
      add_pair(make("dp-gmcsdp-8", "DP reference for the small linear-program case, N=8", Method::Dp, small.to_json(), 1,
                    published_ref(1818, "Table 9 reference value 1818"), true),
               make("desk-dp-gmcsdp-8", "DP reference for the small case (derived)", Method::Dp, small.to_json(), 1,
                    derived_ref(small), false));
    }

    // Table 1: one network per day vs a merged network.
    for (auto [kind, tag, desc] : {std::tuple{PolicyKind::PerStep, "perstep", "one network per day"},
                                   std::tuple{PolicyKind::Merged, "merged", "single merged network"}}) {
      const GvConfig g = gv(seasonal_linear_model(365), 365, 1, kind, 0.0);
      add_pair(make(std::string("table1-") + tag, std::string("Global valuation, ") + desc + ", N=365", Method::Gv,
                    g.to_json(), 10, published_ref(4932, "Table 1, DP reference 4932"), true),
               make(std::string("desk-table1-") + tag, std::string("Global valuation, ") + desc + ", N=30", Method::Gv,
                    desk_gv(g).to_json(), 10, derived_ref(desk_linear), false));
    }
    // Table 2: M storages, feedforward vs DeepSet.
    for (auto [kind, tag] : {std::pair{PolicyKind::PerStep, "ff"}, std::pair{PolicyKind::DeepSet, "deepset"}})
      for (int m : {3, 10}) {
        const GvConfig g = gv(seasonal_linear_model(365), 365, m, kind, 0.0);
        const std::string n = std::string("table2-") + tag + "-m" + std::to_string(m);
        add_pair(make(n, "Global valuation per storage, M=" + std::to_string(m), Method::Gv, g.to_json(), 10,
                      published_ref(4932, "Table 2, J^M/M against the DP reference 4932"), true),
                 make("desk-" + n, "Desk variant, N=30", Method::Gv, desk_gv(g).to_json(), 10, derived_ref(desk_linear),
                      false));
      }
    // Table 3: price impact P=0.2.
    for (int m : {1, 5, 10}) {
      const GvConfig g = gv(seasonal_linear_model(365), 365, m, PolicyKind::PerStep, 0.2);
      const std::string n = "table3-nonlinear-m" + std::to_string(m);
      add_pair(make(n, "Global valuation with price impact, M=" + std::to_string(m), Method::Gv, g.to_json(), 10,
                    published_ref(3796, "Table 3, DP reference 3796"), true),
               make("desk-" + n, "Desk variant, N=30", Method::Gv, desk_gv(g).to_json(), 10, derived_ref(desk_impact),
                    false));
    }
    // Table 4: three-factor prices, factor features vs LSTM on the price history.
    for (auto [kind, tag] : {std::pair{PolicyKind::PerStep, "ff"}, std::pair{PolicyKind::LstmFf, "lstm"}})
      for (int m : {1, 5, 10}) {
        GvConfig g = gv(three_factor_model(365), 365, m, kind, 0.0);
        if (kind == PolicyKind::LstmFf) g.features = FeatureKind::Spot;
        const std::string n = std::string("table4-") + tag + "-m" + std::to_string(m);
        add_pair(make(n, "Three-factor prices, M=" + std::to_string(m), Method::Gv, g.to_json(), 10,
                      published_ref(4300, "Table 4 unconverged DP value 4300 (indicative only)"), true),
                 make("desk-" + n, "Desk variant, N=30 (no reference: dim-3 DP is diagnostic)", Method::Gv,
                      desk_gv(g).to_json(), 10, Reference{std::nullopt, "none at desk scale", std::nullopt}, false));
      }
    // Table 5: GSDP with feedforward Bellman regression, varying L and the network size.
    for (auto [l, neurons, layers] : {std::tuple{4, 11, 2}, std::tuple{13, 11, 2}, std::tuple{53, 11, 2},
                                      std::tuple{4, 30, 3}, std::tuple{13, 30, 3}, std::tuple{53, 30, 3}}) {
      const GsdpConfig g = gsdp(gv(seasonal_linear_model(365), 365, 1, PolicyKind::PerStep, 0.0), l,
                                value_spec(BellmanNetKind::Feedforward, layers, neurons));
      const std::string n = "table5-ff-l" + std::to_string(l) + "-m" + std::to_string(neurons);
      const int desk_l = l == 4 ? 2 : (l == 13 ? 4 : 8);
      add_pair(make(n, "GSDP, feedforward regression, L=" + std::to_string(l), Method::Gsdp, g.to_json(), 10,
                    published_ref(4932, "Table 5, DP reference 4932"), true),
               make("desk-" + n, "Desk variant, N=56, L=" + std::to_string(desk_l), Method::Gsdp,
                    desk_gsdp(g, desk_l).to_json(), 5, derived_ref(desk_gsdp_ref), false));
    }
    // Table 6: feedforward regression with 5 layers of 20 neurons, L=53, linear and nonlinear.
    for (double impact : {0.0, 0.2})
      for (int m : {1, 5, 10}) {
        const GsdpConfig g = gsdp(gv(seasonal_linear_model(365), 365, m, PolicyKind::PerStep, impact), 53,
                                  value_spec(BellmanNetKind::Feedforward, 5, 20));
        const std::string n = std::string("table6-") + (impact > 0 ? "nonlinear" : "linear") + "-m" + std::to_string(m);
        GsdpConfig d = desk_gsdp(g, 8);
        const DpJob ref = dp_job(seasonal_linear_model(kDeskGsdpN), storage, kDeskGsdpN, impact);
        add_pair(make(n, "GSDP, deep feedforward regression, L=53", Method::Gsdp, g.to_json(), 10,
                      published_ref(impact > 0 ? 3796 : 4932, impact > 0 ? "Table 6, DP reference 3796"
                                                                    : "Table 6, DP reference 4932"),
                      true),
                 make("desk-" + n, "Desk variant, N=56, L=8", Method::Gsdp, d.to_json(), 5, derived_ref(ref), false));
      }
    // Table 7: structured Bellman networks (concave, free, GroupMax), L=53.
    for (double impact : {0.0, 0.2})
      for (auto [kind, tag] : {std::pair{BellmanNetKind::Concave, "a"}, std::pair{BellmanNetKind::Free, "ad"},
                               std::pair{BellmanNetKind::GroupMax, "gm"}})
        for (int m : {1, 5, 10}) {
          const GsdpConfig g =
              gsdp(gv(seasonal_linear_model(365), 365, m, PolicyKind::PerStep, impact), 53, value_spec(kind, 2, 11));
          const std::string n = std::string("table7-") + (impact > 0 ? "nonlinear-" : "linear-") + tag + "-m" +
                                std::to_string(m);
          const DpJob ref = dp_job(seasonal_linear_model(kDeskGsdpN), storage, kDeskGsdpN, impact);
          add_pair(make(n, "GSDP, structured Bellman network, L=53", Method::Gsdp, g.to_json(), 10,
                        published_ref(impact > 0 ? 3796 : 4932, impact > 0 ? "Table 7, DP reference 3796"
                                                                      : "Table 7, DP reference 4932"),
                        true),
                   make("desk-" + n, "Desk variant, N=56, L=8", Method::Gsdp, desk_gsdp(g, 8).to_json(), 5,
                        derived_ref(ref), false));
        }
    // Table 8: GMCSDP on the N=42 case.
    for (int m : {1, 3, 5})
      for (int my : {8, 10, 12}) {
        const GmcsdpConfig g = gmcsdp_n42(m, my);
        const std::string n = "table8-dim" + std::to_string(m) + "-my" + std::to_string(my);
        add_pair(make(n, "GMCSDP, N=42, M=" + std::to_string(m), Method::Gmcsdp, g.to_json(), 10,
                      published_ref(3424, "Table 8, DP forward value 3424"), true),
                 make("desk-" + n, "Desk variant: fewer samples and iterations", Method::Gmcsdp,
                      desk_gmcsdp(g).to_json(), 3, published_ref(3424, "Table 8, DP forward value 3424"), false));
      }
    // Table 9: GMCSDP on the small N=8 case.
    for (int m : {1, 2, 3, 4})
      for (auto [layers, my, group] : {std::tuple{1, 9, 3}, std::tuple{1, 10, 2}, std::tuple{1, 12, 2},
                                       std::tuple{2, 10, 5}}) {
        if (layers == 2 && m > 2) continue;
        const GmcsdpConfig g = gmcsdp_small(m, layers, my, group);
        std::string n = "table9-dim" + std::to_string(m) + (layers == 2 ? "-k3" : "") + "-my" + std::to_string(my);
        if (group != 2) n += "-g" + std::to_string(group);
        add_pair(make(n, "GMCSDP, small case N=8, M=" + std::to_string(m), Method::Gmcsdp, g.to_json(), 10,
                      published_ref(1818, "Table 9 reference value 1818"), true),
                 make("desk-" + n, "Desk variant: fewer samples and iterations", Method::Gmcsdp,
                      desk_gmcsdp(g).to_json(), 3, published_ref(1818, "Table 9 reference value 1818"), false));
      }
    return v;
  }();
  return catalog;
}

inline const Preset& find_preset(const std::string& name) {
  for (const auto& p : preset_catalog())
    if (p.config.name == name) return p;
  throw std::invalid_argument("unknown preset: " + name);
}

inline void write_preset_list(std::ostream& os) {
  for (const auto& p : preset_catalog()) {
    const auto& c = p.config;
    os << std::left << std::setw(34) << c.name << std::setw(8) << to_string(c.method) << std::setw(7)
       << (p.full_scale ? "full" : "desk") << std::setw(10);
    if (c.reference.value) os << *c.reference.value;
    else os << (c.reference.derive ? "derived" : "-");
    os << c.reference.source << "\n";
  }
}

}  // namespace resopt
