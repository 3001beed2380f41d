#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "resopt/bench.hpp"
#include "resopt/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace resopt;

namespace {

struct Common {
  std::string preset;
  std::string config;
  std::uint64_t seed = 0;
  int runs = 0;
  double scale = 1.0;
  bool deterministic = false;
  std::string out;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--preset", c.preset, "Named preset (see list-presets)");
  app->add_option("--config", c.config, "JSON config file: an experiment or a bare method config");
  app->add_option("--seed", c.seed, "Base seed; run k uses seed + k (0 keeps the config's seed)");
  app->add_option("--runs", c.runs, "Number of seeded runs (0 keeps the config's count)");
  app->add_option("--scale", c.scale, "Scale factor in (0, 1] applied to the preset's scale keys")
      ->check(CLI::Range(1e-6, 1.0));
  app->add_flag("--deterministic", c.deterministic, "Single-threaded, reproducible execution");
  app->add_option("--out", c.out, "Output directory (default: $RESOPT_OUT or ./out)");
}

fs::path out_dir(const Common& c) {
  fs::path p = c.out;
  if (p.empty()) {
    const char* env = std::getenv("RESOPT_OUT");
    p = env ? env : "out";
  }
  fs::create_directories(p);
  return p;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

/// Resolves --preset/--config into an experiment, applying --seed/--runs/--scale overrides.
ExperimentConfig resolve(const Common& c, std::optional<Method> expected) {
  ExperimentConfig e;
  if (!c.preset.empty() && !c.config.empty()) throw std::invalid_argument("--preset and --config are exclusive");
  if (!c.preset.empty()) {
    e = find_preset(c.preset).config;
  } else if (!c.config.empty()) {
    const json j = read_json_file(c.config);
    if (j.contains("method") && j.contains("params")) {
      e = ExperimentConfig::from_json(j);
    } else {
      if (!expected) throw std::invalid_argument("run: --config must be an experiment with method and params");
      e.name = fs::path(c.config).stem().string();
      e.method = *expected;
      e.params = j;
      e.reference.source = "none";
    }
  } else if (expected) {
    e.name = std::string("default-") + to_string(*expected);
    e.method = *expected;
    switch (*expected) {
      case Method::Dp: e.params = DpJob{}.to_json(); break;
      case Method::Gv: e.params = GvConfig{}.to_json(); break;
      case Method::Gsdp: e.params = GsdpConfig{}.to_json(); break;
      case Method::Gmcsdp: e.params = GmcsdpConfig{}.to_json(); break;
    }
    e.reference.source = "none";
  } else {
    throw std::invalid_argument("one of --preset or --config is required");
  }
  if (expected && e.method != *expected)
    throw std::invalid_argument(std::string("preset method is ") + to_string(e.method) + ", expected " +
                                to_string(*expected));
  if (c.seed) e.seed = c.seed;
  if (c.runs) e.runs = c.runs;
  e.scale = c.scale;
  e.deterministic = e.deterministic || c.deterministic;
  e.validate();
  return e;
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

void emit_report(const RunReport& r, const fs::path& dir) {
  write_json_file((dir / "report.json").string(), r.to_json());
  auto runs = open_out(dir / "runs.csv");
  write_runs_csv(runs, r);
  auto summary = open_out(dir / "summary.csv");
  write_summary_csv(summary, r);
  auto table = open_out(dir / "table.txt");
  write_table(table, r);
  write_table(std::cout, r);
  std::cout << "wrote " << (dir / "report.json").string() << "\n";
}

/// Runs every seed through `one`, which writes per-run artifacts and returns the row.
RunReport run_with_artifacts(const ExperimentConfig& e, const std::function<RunRow(const json&, int, std::uint64_t)>& one) {
  const auto t0 = std::chrono::steady_clock::now();
  RunReport r;
  r.config = e;
  r.resolved_params = apply_scale(e.params, e.scale_keys, e.scale);
  r.config_hash = config_hash(e.to_json());
  r.reference = e.reference.value;
  r.reference_source = e.reference.source;
  if (!r.reference && e.reference.derive) {
    log_line("deriving reference by dynamic programming");
    r.reference = run_dp_job(DpJob::from_json(*e.reference.derive)).simulation.mean;
  }
  for (int k = 0; k < e.runs; ++k) {
    const std::uint64_t seed = e.seed + static_cast<std::uint64_t>(k);
    RunRow row;
    const auto t1 = std::chrono::steady_clock::now();
    try {
      row = one(with_run_seed(e.method, r.resolved_params, seed), k, seed);
    } catch (const std::exception& ex) {
      row.status = std::string("error: ") + ex.what();
    }
    row.run = k;
    row.seed = seed;
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
    log_line(e.name + " run " + std::to_string(k) + ": " + (row.ok() ? std::to_string(row.value) : row.status));
    r.rows.push_back(std::move(row));
  }
  aggregate(r);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::string run_tag(int k) { return "run" + std::to_string(k); }

int cmd_simulate_prices(const Common& c, int paths, int steps) {
  ForwardModel model = DpJob{}.model;
  if (!c.config.empty()) model = model_from_json(read_json_file(c.config));
  model.validate();
  const std::uint64_t seed = c.seed ? c.seed : 1;
  const fs::path dir = out_dir(c);
  const PathBatch b = sample_paths(model, paths, steps, seed);
  auto f = open_out(dir / "paths.csv");
  write_paths_csv(f, b);
  // Per-date moment check: sample mean of S_t vs F(0,t) and Var(log S_t) vs its closed form.
  auto s = open_out(dir / "moments.csv");
  s << "step,forward,mean,std_error,log_variance,log_variance_closed_form\n";
  s.precision(10);
  for (int t = 0; t < steps; ++t) {
    std::vector<double> v(paths), l(paths);
    for (int p = 0; p < paths; ++p) {
      v[p] = b.spot_at(p, t);
      l[p] = std::log(v[p]);
    }
    const SimulationResult m = mean_and_error(v);
    const SimulationResult lm = mean_and_error(l);
    const double lv = lm.std_error * lm.std_error * paths;
    const double time = t * model.dt;
    s << t << ',' << model.forward(time) << ',' << m.mean << ',' << m.std_error << ',' << lv << ','
      << model.log_variance(time) << '\n';
  }
  std::cout << "wrote " << paths << " paths x " << steps << " steps to " << dir.string() << "\n";
  return 0;
}

int cmd_dp_reference(const Common& c) {
  const ExperimentConfig e = resolve(c, Method::Dp);
  const fs::path dir = out_dir(c);
  const RunReport r = run_with_artifacts(e, [&](const json& p, int k, std::uint64_t) {
    const DpJob job = DpJob::from_json(p);
    const BellmanTable t = solve_dp(job.model, job.storage, job.dp);
    auto f = open_out(dir / ("bellman_" + run_tag(k) + ".csv"));
    write_bellman_csv(f, t);
    const SimulationResult s = simulate_dp_policy(t, job.model, job.sim_paths, job.sim_seed);
    RunRow row;
    row.value = s.mean;
    row.std_error = s.std_error;
    row.extra = {{"optimization", t.value}, {"fallback_cells", t.fallback_cells}};
    std::cout << "optimization value " << t.value << ", simulated " << s.mean << " +- " << s.std_error << "\n";
    return row;
  });
  emit_report(r, dir);
  return r.completed == e.runs ? 0 : 1;
}

int cmd_train_gv(const Common& c) {
  const ExperimentConfig e = resolve(c, Method::Gv);
  const fs::path dir = out_dir(c);
  const RunReport r = run_with_artifacts(e, [&](const json& p, int k, std::uint64_t) {
    const GvConfig g = GvConfig::from_json(p);
    const TrainedPolicy tp = train_gv(g);
    auto f = open_out(dir / ("training_log_" + run_tag(k) + ".csv"));
    write_training_log_csv(f, tp.log);
    write_json_file((dir / ("policy_" + run_tag(k) + ".json")).string(), tp.checkpoint());
    const EvalResult ev = evaluate_policy(tp);
    RunRow row;
    row.value = ev.per_storage;
    row.std_error = ev.per_storage_error;
    row.extra = {{"total", ev.mean}, {"train_seconds", tp.train_seconds}};
    return row;
  });
  emit_report(r, dir);
  return r.completed == e.runs ? 0 : 1;
}

int cmd_train_gsdp(const Common& c) {
  const ExperimentConfig e = resolve(c, Method::Gsdp);
  const fs::path dir = out_dir(c);
  auto blocks_csv = open_out(dir / "blocks.csv");
  blocks_csv << "run,block,start,size,final_objective,final_value_mse,seconds\n";
  const RunReport r = run_with_artifacts(e, [&](const json& p, int k, std::uint64_t) {
    const GsdpConfig g = GsdpConfig::from_json(p);
    const GsdpResult res = run_gsdp(g);
    const fs::path cp = dir / ("checkpoints_" + run_tag(k));
    fs::create_directories(cp);
    for (std::size_t l = 0; l < res.blocks.size(); ++l) {
      const auto& b = res.blocks[l];
      write_json_file((cp / ("policy_block" + std::to_string(l) + ".json")).string(),
                      res.policy->block(l).checkpoint());
      if (l < res.values.size() && res.values[l])
        write_json_file((cp / ("value_block" + std::to_string(l) + ".json")).string(), res.values[l]->checkpoint());
      blocks_csv << k << ',' << b.block << ',' << b.start << ',' << b.size << ',';
      if (!b.policy_log.empty()) blocks_csv << b.policy_log.back().objective;
      blocks_csv << ',';
      if (!b.value_log.empty()) blocks_csv << b.value_log.back().objective;
      blocks_csv << ',' << b.seconds << '\n';
    }
    RunRow row;
    row.value = res.evaluation.per_storage;
    row.std_error = res.evaluation.per_storage_error;
    row.extra = {{"total", res.evaluation.mean}, {"blocks", res.sizes}, {"network", to_string(g.value.kind)}};
    return row;
  });
  emit_report(r, dir);
  return r.completed == e.runs ? 0 : 1;
}

int cmd_train_gmcsdp(const Common& c) {
  const ExperimentConfig e = resolve(c, Method::Gmcsdp);
  const fs::path dir = out_dir(c);
  auto stages_csv = open_out(dir / "stages.csv");
  stages_csv << "run,stage,mean_cuts,max_cuts,lp_seconds,fit_seconds,final_mse\n";
  const RunReport r = run_with_artifacts(e, [&](const json& p, int k, std::uint64_t) {
    const GmcsdpConfig g = GmcsdpConfig::from_json(p);
    const GmcsdpResult res = run_gmcsdp(g);
    for (const auto& s : res.stages) {
      stages_csv << k << ',' << s.stage << ',' << s.mean_cuts << ',' << s.max_cuts << ',' << s.lp_seconds << ','
                 << s.fit_seconds << ',';
      if (!s.mse_log.empty()) stages_csv << s.mse_log.back().objective;
      stages_csv << '\n';
    }
    RunRow row;
    row.value = res.value / g.storages;
    row.extra = {{"total", res.value}};
    if (res.simulation) {
      row.extra["simulation"] = res.simulation->mean / g.storages;
      row.extra["simulation_error"] = res.simulation->std_error / g.storages;
    }
    return row;
  });
  emit_report(r, dir);
  return r.completed == e.runs ? 0 : 1;
}

int cmd_run(const Common& c) {
  const ExperimentConfig e = resolve(c, std::nullopt);
  const fs::path dir = out_dir(c);
  const RunReport r = run_experiment(e, log_line);
  emit_report(r, dir);
  return r.completed == e.runs ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Storage optimization with neural-network policies: training and benchmark runner"};
  app.require_subcommand(1);

  Common sim_c, dp_c, gv_c, gsdp_c, gm_c, run_c;
  int paths = 10000, steps = 365;
  auto* sim = app.add_subcommand("simulate-prices", "Simulate spot paths and per-date moments");
  add_common(sim, sim_c);
  sim->add_option("--paths", paths, "Number of paths")->check(CLI::PositiveNumber);
  sim->add_option("--steps", steps, "Number of dates")->check(CLI::PositiveNumber);
  auto* dp = app.add_subcommand("dp-reference", "Dynamic-programming reference and Bellman table export");
  add_common(dp, dp_c);
  auto* gv = app.add_subcommand("train-gv", "Global valuation training");
  add_common(gv, gv_c);
  auto* gsdp = app.add_subcommand("train-gsdp", "Block-wise training with regressed Bellman values");
  add_common(gsdp, gsdp_c);
  auto* gm = app.add_subcommand("train-gmcsdp", "Backward GroupMax fitting with cut-based transition LPs");
  add_common(gm, gm_c);
  auto* run = app.add_subcommand("run", "Run a preset or experiment config and write the report");
  add_common(run, run_c);
  app.add_subcommand("list-presets", "List named presets with reference values and provenance");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sim) return cmd_simulate_prices(sim_c, paths, steps);
    if (*dp) return cmd_dp_reference(dp_c);
    if (*gv) return cmd_train_gv(gv_c);
    if (*gsdp) return cmd_train_gsdp(gsdp_c);
    if (*gm) return cmd_train_gmcsdp(gm_c);
    if (*run) return cmd_run(run_c);
    write_preset_list(std::cout);
    return 0;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  }
}
