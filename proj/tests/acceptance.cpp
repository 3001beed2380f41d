// Acceptance harness: one PASS/FAIL line per criterion; exit status 1 if any selected criterion fails,
// 77 if every selected criterion was skipped.

#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gradcheck.hpp"
#include "resopt/bench.hpp"
#include "resopt/lp.hpp"

using namespace resopt;
using ad::Mat;
using ad::Tape;

namespace {

enum class Verdict { Pass, Fail, Skipped };

struct Outcome {
  Verdict verdict = Verdict::Pass;
  std::string detail;
};

std::string fmt(double v, int digits = 6) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

/// Accumulates sub-checks; the criterion passes only if all of them do.
struct Checks {
  bool ok = true;
  std::ostringstream log;
  void add(bool pass, const std::string& what) {
    ok = ok && pass;
    log << (log.tellp() > 0 ? "; " : "") << what << (pass ? "" : " [fail]");
  }
  Outcome outcome() const { return {ok ? Verdict::Pass : Verdict::Fail, log.str()}; }
};

ForwardModel linear_model(double sigma, double a, double period) {
  return ForwardModel{HjmParams::one_factor(sigma, a), SeasonalCurve{30.0, {{5.0, period}, {1.0, 7.0}}}, 1.0};
}

Mat random_mat(int r, int c, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  const CounterRng rng(seed);
  Mat m(r, c);
  for (int i = 0; i < r * c; ++i) m(i) = lo + (hi - lo) * rng.uniform(0, i);
  return m;
}

void randomize(ad::ParamStore& s, std::uint64_t seed, double amp) {
  const CounterRng rng(seed);
  for (std::size_t i = 0; i < s.size(); ++i) s.values()[i] = amp * (2.0 * rng.uniform(1, i) - 1.0);
}

RunReport run_preset(const std::string& name, int runs, std::uint64_t seed) {
  ExperimentConfig c = find_preset(name).config;
  c.runs = runs;
  c.seed = seed;
  return run_experiment(c, [](const std::string& s) { std::cerr << "  " << s << std::endl; });
}

/// Mean and standard error of per-seed differences a - b (paired on seeds).
std::pair<double, double> paired_gap(const RunReport& a, const RunReport& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < std::min(a.rows.size(), b.rows.size()); ++i)
    if (a.rows[i].ok() && b.rows[i].ok()) d.push_back(a.rows[i].value - b.rows[i].value);
  if (d.size() < 2) return {NAN, NAN};
  const SimulationResult s = mean_and_error(d);
  return {s.mean, s.std_error};
}

// Oracle chain: grid DP equals exhaustive search on shared trees; the deterministic LP equals
// exhaustive search on sigma=0 instances.
Outcome criterion1() {
  Checks c;
  double worst_tree = 0.0;
  const StorageSpec small{10.0, 20.0, 100.0, 50.0};
  for (int n = 1; n <= 5; ++n)
    for (auto kind : {TreeKind::Binomial, TreeKind::GaussHermite3}) {
      DpConfig cfg;
      cfg.grid_points = 21;
      const auto tree = build_tree(linear_model(0.08, 0.01, 365.0), n, kind);
      worst_tree = std::max(worst_tree, std::abs(solve_dp_tree(tree, StorageSpec{}, cfg).value -
                                                 brute_force_tiny(tree, StorageSpec{})));
      cfg.grid_points = 11;
      const ForwardModel m{HjmParams::one_factor(0.3, 0.16), SeasonalCurve{30.0, {{4.0, 4.0}}}, 1.0};
      const auto t2 = build_tree(m, n, kind);
      worst_tree = std::max(worst_tree, std::abs(solve_dp_tree(t2, small, cfg).value - brute_force_tiny(t2, small)));
    }
  c.add(worst_tree <= 1e-9, "max |dp - brute| on trees N<=5 = " + fmt(worst_tree, 3) + " (tol 1e-9)");
  double worst_lp = 0.0;
  for (int n = 1; n <= 14; ++n) {
    const auto m = linear_model(0.0, 0.01, 14.0);
    const auto tree = build_tree(m, n, TreeKind::Binomial);
    for (const StorageSpec& s : {StorageSpec{}, StorageSpec{5.0, 10.0, 100.0, 15.0}})
      worst_lp = std::max(worst_lp, std::abs(deterministic_storage_lp(m, s, n) -
                                             brute_force_tiny(tree, s, ControlRule::Discrete, 5.0)));
  }
  c.add(worst_lp <= 1e-6, "max |lp - brute| sigma=0 N<=14 = " + fmt(worst_lp, 3) + " (tol 1e-6)");
  return c.outcome();
}

double policy_loss(Policy& pol, int steps, int batch, bool backward) {
  Tape t;
  const auto& c = pol.config();
  const auto p = ParamSource::trainable(pol.params());
  auto state = pol.initial_state(t, batch);
  ad::Var acc{};
  for (int i = 0; i < steps; ++i) {
    StepInput in;
    in.step = i;
    in.features = t.constant(random_mat(c.feature_dim, batch, 100 + i));
    in.spot = t.rows(in.features, 0, 1);
    in.stock = t.constant(random_mat(c.storages, batch, 200 + i, 0.0, 1.0));
    ad::Var term = t.mean(t.mul(pol.unit_control(t, p, in, state), t.constant(random_mat(c.storages, batch, 300 + i))));
    acc = acc.valid() ? t.add(acc, term) : term;
  }
  if (backward) t.backward(acc);
  return t.scalar(acc);
}

// Finite-difference gradient checks for every architecture.
Outcome criterion2() {
  Checks c;
  for (auto kind : {PolicyKind::PerStep, PolicyKind::DeepSet, PolicyKind::LstmFf}) {
    PolicyConfig pc;
    pc.kind = kind;
    pc.horizon = 3;
    pc.storages = 2;
    pc.neurons = 4;
    pc.lstm_units = 3;
    pc.deepset_width = 3;
    pc.seed = 11;
    auto pol = make_policy(pc);
    const auto r = testutil::grad_check(pol->params(), [&](bool bw) { return policy_loss(*pol, 3, 5, bw); });
    c.add(r.max_rel_error < 1e-4 && r.checked > 0,
          std::string(to_string(kind)) + " rel " + fmt(r.max_rel_error, 3) + " over " + std::to_string(r.checked));
  }
  for (auto kind : {ValueNetKind::Concave, ValueNetKind::Free, ValueNetKind::GroupMax}) {
    ad::ParamStore s;
    IcnnNet net(s, IcnnSpec{kind, 2, 2, 4, 4, 2, 2}, "");
    randomize(s, 51, 0.8);
    const Mat x = random_mat(2, 8, 1), y = random_mat(2, 8, 2, 0, 1), target = random_mat(1, 8, 3);
    auto loss = [&](bool bw) {
      Tape t;
      auto v = net.forward(t, ParamSource::trainable(s), t.constant(x), t.constant(y));
      auto l = t.mean(t.square(t.sub(v, t.constant(target))));
      if (bw) t.backward(l);
      return t.scalar(l);
    };
    const auto r = testutil::grad_check(s, loss);
    c.add(r.max_rel_error < 1e-4 && r.checked > static_cast<int>(s.size()) / 2,
          std::string(to_string(kind)) + " rel " + fmt(r.max_rel_error, 3) + " over " + std::to_string(r.checked) +
              " (" + std::to_string(r.kinks) + " kinks skipped)");
  }
  return c.outcome();
}

// Concavity in the stock input, cut/network equivalence, and the cut-count formula.
Outcome criterion3() {
  Checks c;
  for (auto kind : {ValueNetKind::Concave, ValueNetKind::GroupMax}) {
    ad::ParamStore s;
    IcnnNet net(s, IcnnSpec{kind, 2, 2, 6, 8, 2, 2}, "");
    randomize(s, 23, 1.0);
    const int n = 10000;
    const Mat x = random_mat(2, n, 1), y1 = random_mat(2, n, 2, -1, 2), y2 = random_mat(2, n, 3, -1, 2);
    const Mat lam = random_mat(1, n, 4, 0, 1);
    Mat ym(2, n);
    for (int j = 0; j < n; ++j) ym.col(j) = lam(0, j) * y1.col(j) + (1 - lam(0, j)) * y2.col(j);
    const Mat f1 = net.eval(s, x, y1), f2 = net.eval(s, x, y2), fm = net.eval(s, x, ym);
    int violations = 0;
    for (int j = 0; j < n; ++j)
      if (fm(0, j) < lam(0, j) * f1(0, j) + (1 - lam(0, j)) * f2(0, j) - 1e-9) ++violations;
    c.add(violations == 0, std::string(to_string(kind)) + " concavity violations " + std::to_string(violations) +
                               "/" + std::to_string(n));
  }
  double worst = 0.0;
  for (int yd : {1, 2}) {
    ad::ParamStore s;
    IcnnNet net(s, IcnnSpec{ValueNetKind::GroupMax, 2, yd, 4, 6, 1, 2}, "");
    randomize(s, 7 + yd, 1.0);
    const std::vector<double> x{0.3, -0.8};
    const CutSet cs = extract_cuts(net, s, x);
    const int n = 1000;
    const Mat y = random_mat(yd, n, 11, -2, 2);
    const Mat v = net.eval(s, Mat(Eigen::Map<const Mat>(x.data(), 2, 1)).replicate(1, n), y);
    for (int j = 0; j < n; ++j) {
      std::vector<double> yj(yd);
      for (int d = 0; d < yd; ++d) yj[d] = y(d, j);
      worst = std::max(worst, std::abs(cs(yj) - v(0, j)) / std::max(1.0, std::abs(v(0, j))));
    }
  }
  c.add(worst <= 1e-9, "cut/network max rel diff " + fmt(worst, 3) + " on 1000-point grids (tol 1e-9)");
  bool counts = true;
  std::string seen;
  for (int my : {4, 8, 10, 12}) {
    ad::ParamStore s;
    IcnnNet net(s, IcnnSpec{ValueNetKind::GroupMax, 1, 2, 6, my, 1, 2}, "");
    randomize(s, 3, 1.0);
    const std::size_t got = extract_cuts(net, s, {0.2}).enumerated;
    const std::size_t want = static_cast<std::size_t>(my) << (my / 2);
    counts = counts && got == want;
    seen += (seen.empty() ? "" : ",") + std::to_string(got) + "/" + std::to_string(want);
  }
  c.add(counts, "K=1 G=2 cut counts m_y*2^(m_y/2): " + seen);
  return c.outcome();
}

// GV on deterministic prices reaches the LP optimum.
Outcome criterion4() {
  GvConfig g;
  g.model = linear_model(0.0, 0.01, 30.0);
  g.horizon = 30;
  g.iterations = 20000;
  g.eval_paths = 1000;
  const double lp = deterministic_storage_lp(g.model, g.storage, g.horizon);
  const double v = evaluate_policy(train_gv(g)).mean;
  Checks c;
  c.add(v >= 0.995 * lp, "GV " + fmt(v, 7) + " vs LP " + fmt(lp, 7) + " = " + fmt(100.0 * v / lp, 5) +
                             "% (need >= 99.5%, 20000 iterations)");
  return c.outcome();
}

// Desk-scale GV against a derived DP reference; merged network clearly worse.
Outcome criterion5() {
  const int seeds = 3;
  const RunReport per = run_preset("desk-table1-perstep", seeds, 1);
  const RunReport merged = run_preset("desk-table1-merged", seeds, 1);
  Checks c;
  if (!per.reference || per.completed != seeds || merged.completed != seeds) {
    c.add(false, "runs incomplete");
    return c.outcome();
  }
  const double ref = *per.reference;
  c.add(std::abs(per.average - ref) <= 0.01 * ref, "per-step average " + fmt(per.average) + " vs DP " + fmt(ref) +
                                                       " (" + fmt(100.0 * (per.average / ref - 1.0), 3) + "%, tol 1%)");
  c.add(merged.average <= 0.9 * per.average,
        "merged average " + fmt(merged.average) + " = " + fmt(100.0 * merged.average / per.average, 4) +
            "% of per-step (need <= 90%)");
  return c.outcome();
}

// Full-scale GV, opt-in: hours of compute.
Outcome criterion6() {
  if (!std::getenv("RESOPT_ACCEPT_FULL_SCALE"))
    return {Verdict::Skipped, "set RESOPT_ACCEPT_FULL_SCALE=1 to run the N=365 presets (hours)"};
  Checks c;
  for (auto [name, ref] : {std::pair{"table1-perstep", 4932.0}, std::pair{"table3-nonlinear-m1", 3796.0}}) {
    const RunReport r = run_preset(name, 1, 1);
    c.add(r.completed == 1 && std::abs(r.average - ref) <= 0.005 * ref,
          std::string(name) + " " + fmt(r.average) + " vs " + fmt(ref) + " (tol 0.5%)");
  }
  return c.outcome();
}

// GMCSDP small case at published settings: best of 10 runs against 1818.
Outcome criterion7() {
  Checks c;
  for (auto [name, tol] : {std::pair{"table9-dim1-my12", 0.015}, std::pair{"table9-dim4-my10", 0.06}}) {
    const RunReport r = run_preset(name, 10, 1);
    const auto best = r.best_row();
    const double ref = *r.reference;
    if (!best) {
      c.add(false, std::string(name) + " no completed runs");
      continue;
    }
    const double v = r.rows[*best].value;
    c.add(std::abs(v - ref) <= tol * ref, std::string(name) + " best " + fmt(v) + " (error " +
                                              fmt(std::abs(v - ref), 4) + " = " +
                                              fmt(100.0 * std::abs(v - ref) / ref, 3) + "%, tol " +
                                              fmt(100.0 * tol) + "%; range " + fmt(r.min) + ".." + fmt(r.max) + ")");
  }
  return c.outcome();
}

// GSDP ordering over seeds at N=56: GroupMax >= free ICNN >= feedforward, and fewer blocks win.
Outcome criterion8() {
  const int seeds = 5;
  const RunReport gm = run_preset("desk-table7-linear-gm-m1", seeds, 1);
  const RunReport ad = run_preset("desk-table7-linear-ad-m1", seeds, 1);
  const RunReport ff = run_preset("desk-table5-ff-l53-m11", seeds, 1);
  const RunReport ff_small = run_preset("desk-table5-ff-l4-m11", seeds, 1);
  Checks c;
  auto gap = [&](const RunReport& hi, const RunReport& lo, const std::string& what) {
    const auto [g, se] = paired_gap(hi, lo);
    c.add(std::isfinite(g) && g + se >= 0.0,
          what + " gap " + fmt(g, 4) + " +- " + fmt(se, 3) + " (" + fmt(hi.average) + " vs " + fmt(lo.average) + ")");
  };
  gap(gm, ad, "GM-AD L=8");
  gap(ad, ff, "AD-FF L=8");
  gap(ff_small, ff, "FF L=2 minus L=8");
  return c.outcome();
}

// Price model moments at 10^6 paths.
Outcome criterion9() {
  Checks c;
  const int n = 1000000;
  const std::vector<ForwardModel> models{
      linear_model(0.08, 0.01, 365.0),
      ForwardModel{HjmParams::one_factor(0.3, 0.16), SeasonalCurve{30.0, {{4.0, 7.0}}}, 1.0},
      ForwardModel{HjmParams{{0.04, 0.028, 0.023}, {0.01, 0.005, 0.0033}}, SeasonalCurve{30.0, {{5.0, 365.0}, {1.0, 7.0}}},
                   1.0}};
  double worst_z = 0.0, worst_var = 0.0;
  for (std::size_t k = 0; k < models.size(); ++k)
    for (int t : {1, 30, 180, 364}) {
      const PathBatch b = sample_window(models[k], 2024 + k, 0, n, t, 1);
      std::vector<double> s(n), l(n);
      for (int p = 0; p < n; ++p) {
        s[p] = b.spot_at(p, 0);
        l[p] = std::log(s[p]);
      }
      const SimulationResult m = mean_and_error(s);
      const SimulationResult lm = mean_and_error(l);
      const double lvar = lm.std_error * lm.std_error * n;
      worst_z = std::max(worst_z, std::abs(m.mean - models[k].forward(t)) / m.std_error);
      worst_var = std::max(worst_var, std::abs(lvar / models[k].log_variance(t) - 1.0));
    }
  c.add(worst_z <= 3.0, "max |mean - F(0,t)| / s.e. = " + fmt(worst_z, 3) + " (need <= 3)");
  c.add(worst_var <= 0.01, "max log-variance rel error " + fmt(worst_var, 3) + " (need <= 1%)");
  return c.outcome();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> which;
  app.add_option("--criterion", which, "Criterion numbers to run (default: all)")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);
  if (which.empty()) which = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  const std::vector<std::function<Outcome()>> all{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                  criterion6, criterion7, criterion8, criterion9};
  bool failed = false, ran = false;
  for (int k : which) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = all[k - 1]();
    } catch (const std::exception& e) {
      o = {Verdict::Fail, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* tag = o.verdict == Verdict::Pass ? "PASS" : (o.verdict == Verdict::Fail ? "FAIL" : "SKIPPED");
    std::cout << "criterion " << k << ": " << tag << " | " << o.detail << " | " << fmt(s, 4) << " s" << std::endl;
    failed = failed || o.verdict == Verdict::Fail;
    ran = ran || o.verdict != Verdict::Skipped;
  }
  return failed ? 1 : (ran ? 0 : 77);
}
