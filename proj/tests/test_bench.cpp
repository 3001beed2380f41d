#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "resopt/bench.hpp"

using namespace resopt;

namespace {

ExperimentConfig tiny_gmcsdp(int runs, std::uint64_t seed) {
  GmcsdpConfig g;
  g.horizon = 3;
  g.samples = 400;
  g.iterations = 300;
  g.schedule = ad::LearningRateSchedule::linear(5e-3, 1e-4, 300);
  g.log_every = 100;
  ExperimentConfig c;
  c.name = "tiny";
  c.method = Method::Gmcsdp;
  c.params = g.to_json();
  c.runs = runs;
  c.seed = seed;
  c.scale_keys = presets::gmcsdp_scale_keys();
  c.reference = {100.0, "unit test constant", std::nullopt};
  return c;
}

json strip_timing(json j) {
  j.erase("seconds");
  for (auto& r : j["rows"]) {
    r.erase("seconds");
    if (r["extra"].contains("stages"))
      for (auto& s : r["extra"]["stages"]) {
        s.erase("lp_seconds");
        s.erase("fit_seconds");
      }
  }
  return j;
}

}  // namespace

TEST(BenchCatalog, CoversEveryTableFamily) {
  std::set<std::string> names;
  for (const auto& p : preset_catalog()) EXPECT_TRUE(names.insert(p.config.name).second) << p.config.name;
  for (int t = 1; t <= 9; ++t) {
    const std::string prefix = "table" + std::to_string(t) + "-";
    EXPECT_TRUE(std::any_of(names.begin(), names.end(), [&](const std::string& n) { return n.rfind(prefix, 0) == 0; }))
        << prefix;
  }
  EXPECT_TRUE(names.count("table1-perstep"));
  EXPECT_TRUE(names.count("table9-dim1-my12"));
}

TEST(BenchCatalog, EveryPresetNamesSourceAndValidates) {
  for (const auto& p : preset_catalog()) {
    EXPECT_FALSE(p.config.reference.source.empty()) << p.config.name;
    EXPECT_NO_THROW(p.config.validate()) << p.config.name;
    if (p.full_scale) {
      EXPECT_NE(p.config.reference.source.find("Table"), std::string::npos) << p.config.name;
      EXPECT_TRUE(p.config.reference.value.has_value()) << p.config.name;
    }
  }
}

TEST(BenchCatalog, EveryFullScalePresetHasDeskVariant) {
  for (const auto& p : preset_catalog()) {
    if (!p.full_scale) continue;
    ASSERT_FALSE(p.desk.empty()) << p.config.name;
    const Preset& d = find_preset(p.desk);
    EXPECT_FALSE(d.full_scale) << p.desk;
    EXPECT_EQ(d.config.method, p.config.method) << p.desk;
  }
  EXPECT_THROW(find_preset("no-such-preset"), std::invalid_argument);
}

TEST(BenchCatalog, FullScalePresetsKeepPublishedHyperparameters) {
  const GvConfig t1 = GvConfig::from_json(find_preset("table1-perstep").config.params);
  EXPECT_EQ(t1.horizon, 365);
  EXPECT_EQ(t1.batch, 200);
  EXPECT_EQ(t1.iterations, 100000);
  EXPECT_DOUBLE_EQ(t1.schedule.at(0), 2e-3);
  EXPECT_EQ(*find_preset("table1-perstep").config.reference.value, 4932.0);

  const Preset& t9 = find_preset("table9-dim1-my12");
  const GmcsdpConfig g = GmcsdpConfig::from_json(t9.config.params);
  EXPECT_EQ(g.horizon, 8);
  EXPECT_EQ(g.storages, 1);
  EXPECT_EQ(g.m_x, 6);
  EXPECT_EQ(g.m_y, 12);
  EXPECT_EQ(g.group, 2);
  EXPECT_EQ(g.layers, 1);
  EXPECT_EQ(g.batch, 200);
  EXPECT_EQ(g.iterations, 15000);
  EXPECT_EQ(*t9.config.reference.value, 1818.0);

  const GmcsdpConfig t8 = GmcsdpConfig::from_json(find_preset("table8-dim1-my10").config.params);
  EXPECT_EQ(t8.horizon, 42);
  EXPECT_EQ(t8.m_x, 8);
}

TEST(BenchScale, MapsOnlyTheListedKeys) {
  const Preset& p = find_preset("table9-dim1-my12");
  const json s = apply_scale(p.config.params, p.config.scale_keys, 0.1);
  EXPECT_EQ(s["iterations"].get<long>(), 1500);
  EXPECT_EQ(s["samples"].get<long>(), 2000);
  EXPECT_EQ(s["horizon"], p.config.params["horizon"]);
  EXPECT_EQ(s["batch"], p.config.params["batch"]);
  EXPECT_EQ(apply_scale(p.config.params, p.config.scale_keys, 1.0), p.config.params);
  EXPECT_EQ(apply_scale(json{{"n", 3}}, {"/n"}, 0.01)["n"].get<int>(), 1);

  ExperimentConfig c = p.config;
  c.scale = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.scale = 0.5;
  c.scale_keys.push_back("/missing");
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(BenchConfig, SchemaIsValidatedBeforeCompute) {
  ExperimentConfig c = tiny_gmcsdp(1, 1);
  const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());

  json bad = c.to_json();
  bad["method"] = "nope";
  EXPECT_THROW(ExperimentConfig::from_json(bad), std::invalid_argument);
  bad = c.to_json();
  bad["runs"] = 0;
  EXPECT_THROW(ExperimentConfig::from_json(bad), std::invalid_argument);
  bad = c.to_json();
  bad["params"]["horizon"] = 0;
  EXPECT_THROW(ExperimentConfig::from_json(bad), std::invalid_argument);
}

TEST(BenchReport, AggregatesRecomputeFromRows) {
  RunReport r;
  r.reference = 10.0;
  for (double v : {9.0, 12.5, 7.25}) {
    RunRow row;
    row.value = v;
    r.rows.push_back(row);
  }
  RunRow failed;
  failed.status = "error: boom";
  r.rows.push_back(failed);
  aggregate(r);
  EXPECT_EQ(r.completed, 3);
  EXPECT_EQ(r.max, 12.5);
  EXPECT_EQ(r.min, 7.25);
  EXPECT_EQ(r.average, (9.0 + 12.5 + 7.25) / 3.0);
  EXPECT_EQ(*r.min_diff, 1.0);
  EXPECT_EQ(*r.best_row(), 0u);

  const RunReport run = run_experiment(tiny_gmcsdp(3, 5));
  ASSERT_EQ(run.rows.size(), 3u);
  ASSERT_EQ(run.completed, 3);
  double mx = -1e300, mn = 1e300, s = 0.0, d = 1e300;
  for (const auto& row : run.rows) {
    mx = std::max(mx, row.value);
    mn = std::min(mn, row.value);
    s += row.value;
    d = std::min(d, std::abs(row.value - 100.0));
  }
  EXPECT_EQ(run.max, mx);
  EXPECT_EQ(run.min, mn);
  EXPECT_EQ(run.average, s / 3.0);
  EXPECT_EQ(*run.min_diff, d);
  EXPECT_EQ(run.rows[1].seed, 6u);
}

TEST(BenchReport, SubRunFailureIsRecordedPerRun) {
  ExperimentConfig c = tiny_gmcsdp(2, 1);
  c.params["schedule"] = resopt::to_json(ad::LearningRateSchedule::constant(1e30));
  const RunReport r = run_experiment(c);
  ASSERT_EQ(r.rows.size(), 2u);
  for (const auto& row : r.rows) EXPECT_FALSE(row.ok());
  EXPECT_EQ(r.completed, 0);
  EXPECT_TRUE(std::isnan(r.average));
  std::ostringstream table;
  write_table(table, r);
  EXPECT_NE(table.str().find("failed"), std::string::npos);
}

TEST(BenchReport, SameSeedGivesIdenticalReportAndEmbeddedConfigReproducesIt) {
  const ExperimentConfig c = tiny_gmcsdp(1, 7);
  const RunReport a = run_experiment(c);
  const RunReport b = run_experiment(c);
  EXPECT_EQ(strip_timing(a.to_json()), strip_timing(b.to_json()));
  EXPECT_EQ(a.config_hash, b.config_hash);

  const ExperimentConfig embedded = ExperimentConfig::from_json(a.to_json()["config"]);
  const RunReport e = run_experiment(embedded);
  EXPECT_EQ(strip_timing(e.to_json()), strip_timing(a.to_json()));
  EXPECT_NE(config_hash(tiny_gmcsdp(1, 8).to_json()), a.config_hash);
}

TEST(BenchReport, DerivedReferenceComesFromTheOracle) {
  DpJob job = presets::dp_job(presets::gmcsdp_model(4.0), StorageSpec{10.0, 20.0, 100.0, 50.0}, 3, 0.0);
  job.dp.n_paths = 5000;
  job.sim_paths = 5000;
  ExperimentConfig c;
  c.name = "tiny-dp";
  c.method = Method::Dp;
  c.params = job.to_json();
  c.reference = presets::derived_ref(job);
  const RunReport r = run_experiment(c);
  ASSERT_TRUE(r.reference.has_value());
  const DpOutcome o = run_dp_job(job);
  EXPECT_EQ(*r.reference, o.simulation.mean);
  EXPECT_EQ(r.rows[0].status, "ok");
  EXPECT_GT(r.rows[0].value, 0.0);
}

TEST(BenchOutput, CsvColumnsAreStable) {
  RunReport r;
  r.config = tiny_gmcsdp(2, 1);
  r.config.name = "a,b";
  for (int k = 0; k < 2; ++k) {
    RunRow row;
    row.run = k;
    row.seed = 1 + k;
    row.value = 1.5 * k;
    r.rows.push_back(row);
  }
  aggregate(r);
  std::ostringstream runs, summary;
  write_runs_csv(runs, r);
  write_summary_csv(summary, r);
  std::istringstream in(runs.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "preset,run,seed,value,std_error,seconds,status");
  std::getline(in, line);
  EXPECT_EQ(line.rfind("\"a,b\",0,1,0,", 0), 0u) << line;
  EXPECT_EQ(summary.str().rfind("preset,method,runs,completed,max,min,average,reference,reference_source,min_diff,"
                                "seconds,config_hash\n",
                                0),
            0u);
}
