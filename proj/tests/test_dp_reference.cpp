#include <gtest/gtest.h>

#include <sstream>

#include "resopt/dp_reference.hpp"
#include "resopt/lp.hpp"

using namespace resopt;

namespace {

ForwardModel base_model(double sigma = 0.08, double a = 0.01, double horizon = 365.0) {
  return ForwardModel{HjmParams::one_factor(sigma, a), SeasonalCurve{30.0, {{5.0, horizon}, {1.0, 7.0}}}, 1.0};
}

ForwardModel small_case_model(double sigma = 0.3) {
  return ForwardModel{HjmParams::one_factor(sigma, 0.16), SeasonalCurve{30.0, {{4.0, 4.0}}}, 1.0};
}

const StorageSpec kSmallCase{10.0, 20.0, 100.0, 50.0};

// First verified computation of the N=5 binomial tree, default storage, default price parameters.
constexpr double kPinnedBinomialN5 = 1745.7570842091186;

}  // namespace

TEST(StockGrid, UniformAndInterpolation) {
  const auto g = StockGrid::uniform(100.0, 21);
  EXPECT_EQ(g.size(), 21);
  EXPECT_DOUBLE_EQ(g.levels[1], 5.0);
  std::vector<double> v(21);
  for (int k = 0; k < 21; ++k) v[k] = 3.0 - 0.5 * g.levels[k];
  for (double q : {0.0, 2.5, 7.3, 50.0, 99.9, 100.0}) EXPECT_NEAR(g.interpolate(v.data(), q), 3.0 - 0.5 * q, 1e-12);
  EXPECT_THROW(StockGrid::uniform(100.0, 1), std::invalid_argument);
  StockGrid bad{{0.0, 60.0, 50.0, 100.0}};
  EXPECT_THROW(bad.validate(100.0), std::invalid_argument);
}

TEST(Regressor, ReproducesAffineTargetsExactly) {
  const int P = 5000;
  const CounterRng rng(3);
  Eigen::MatrixXd X(1, P), Y(P, 2);
  for (int p = 0; p < P; ++p) {
    X(0, p) = rng.normal(0, p);
    Y(p, 0) = 2.0 + 3.0 * X(0, p);
    Y(p, 1) = -1.0;
  }
  LocalAffineRegressor r(50);
  r.fit(X, Y);
  EXPECT_EQ(r.basis_functions(), 100);
  EXPECT_EQ(r.fallback_cells(), 0);
  const Eigen::MatrixXd pred = r.predict_all(X);
  EXPECT_LT((pred - Y).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Regressor, DegenerateInputsFallBackToMean) {
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(1, 100), Y(100, 1);
  for (int p = 0; p < 100; ++p) Y(p, 0) = p;
  LocalAffineRegressor r(50);
  r.fit(X, Y);
  double out = 0.0;
  const double x = 0.0;
  r.predict(&x, &out);
  EXPECT_NEAR(out, 49.5, 1e-12);
}

TEST(Regressor, LocalFitBeatsGlobalOnCurvedTarget) {
  const int P = 20000;
  const CounterRng rng(5);
  Eigen::MatrixXd X(1, P), Y(P, 1);
  for (int p = 0; p < P; ++p) X(0, p) = rng.normal(0, p), Y(p, 0) = X(0, p) * X(0, p);
  LocalAffineRegressor local(50), global(1);
  local.fit(X, Y);
  global.fit(X, Y);
  const double e_local = (local.predict_all(X) - Y).squaredNorm(), e_global = (global.predict_all(X) - Y).squaredNorm();
  EXPECT_LT(e_local, 0.01 * e_global);
}

TEST(Regressor, SparseCellsUseGlobalFit) {
  const int P = 300;
  const CounterRng rng(9);
  Eigen::MatrixXd X(3, P), Y(P, 1);
  for (int p = 0; p < P; ++p) {
    for (int d = 0; d < 3; ++d) X(d, p) = rng.normal(d, p);
    Y(p, 0) = X(0, p) - X(2, p);
  }
  LocalAffineRegressor r(10);
  r.fit(X, Y);
  EXPECT_EQ(r.cells(), 1000);
  EXPECT_GT(r.fallback_cells(), 0);
  EXPECT_LT((r.predict_all(X) - Y).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Controls, Candidates) {
  const StorageSpec s{};
  EXPECT_EQ(candidate_controls(50.0, s, ControlRule::BangBang, 1.0), (std::vector<double>{-10.0, 0.0, 5.0}));
  EXPECT_EQ(candidate_controls(0.0, s, ControlRule::BangBang, 1.0), (std::vector<double>{-0.0, 5.0}));
  EXPECT_EQ(candidate_controls(98.0, s, ControlRule::BangBang, 1.0), (std::vector<double>{-10.0, 0.0, 2.0}));
  EXPECT_EQ(candidate_controls(3.0, s, ControlRule::Discrete, 2.5), (std::vector<double>{-3.0, -2.5, 0.0, 2.5, 5.0}));
  EXPECT_EQ(candidate_controls(50.0, s, ControlRule::Discrete, 5.0), (std::vector<double>{-10.0, -5.0, 0.0, 5.0}));
}

TEST(BruteForce, SingleDateSellsMaximum) {
  const auto m = base_model();
  const auto tree = build_tree(m, 1, TreeKind::Binomial);
  EXPECT_DOUBLE_EQ(brute_force_tiny(tree, StorageSpec{}), 10.0 * 36.0);
}

TEST(BruteForce, TwoDatesByHandEnumeration) {
  const ForwardModel m{HjmParams::one_factor(0.3, 0.01), SeasonalCurve{30.0, {{-4.0, 4.0}}}, 1.0};
  const auto tree = build_tree(m, 2, TreeKind::Binomial);
  const StorageSpec s{5.0, 10.0, 100.0, 0.0};
  // From an empty store: inject 5 or wait, then sell everything in each branch.
  const double s0 = tree.spot[0][0], lo = tree.spot[1][0], hi = tree.spot[1][1];
  const double buy = -5.0 * s0 + 0.5 * 5.0 * (lo + hi);
  EXPECT_NEAR(brute_force_tiny(tree, s), std::max(0.0, buy), 1e-12);
  EXPECT_GT(buy, 0.0);  // the injection branch is the optimum here
}

TEST(BruteForce, TreeSizeGuard) {
  EXPECT_THROW(build_tree(base_model(), 30, TreeKind::Binomial, 1000), std::runtime_error);
  EXPECT_THROW(build_tree(ForwardModel{HjmParams::three_factor({0.1, 0.1, 0.1}, {0.1, 0.2, 0.3}),
                                       SeasonalCurve{30.0, {}}, 1.0},
                          2, TreeKind::Binomial),
               std::invalid_argument);
}

TEST(OracleChain, GridDpEqualsBruteForceOnTrees) {
  for (int n = 1; n <= 5; ++n)
    for (auto kind : {TreeKind::Binomial, TreeKind::GaussHermite3}) {
      const auto tree = build_tree(base_model(), n, kind);
      DpConfig cfg;
      cfg.grid_points = 21;
      EXPECT_NEAR(solve_dp_tree(tree, StorageSpec{}, cfg).value, brute_force_tiny(tree, StorageSpec{}), 1e-9) << n;
      const auto small = build_tree(small_case_model(), n, kind);
      cfg.grid_points = 11;
      EXPECT_NEAR(solve_dp_tree(small, kSmallCase, cfg).value, brute_force_tiny(small, kSmallCase), 1e-9) << n;
    }
}

TEST(OracleChain, BinomialN5Pinned) {
  const auto tree = build_tree(base_model(), 5, TreeKind::Binomial);
  EXPECT_NEAR(brute_force_tiny(tree, StorageSpec{}), kPinnedBinomialN5, 1e-9);
}

TEST(OracleChain, DeterministicLpEqualsBruteForce) {
  for (int n : {1, 2, 5, 9, 14}) {
    const auto m = base_model(0.0, 0.01, 14.0);
    const auto tree = build_tree(m, n, TreeKind::Binomial);
    const double bf = brute_force_tiny(tree, StorageSpec{}, ControlRule::Discrete, 5.0);
    EXPECT_NEAR(deterministic_storage_lp(m, StorageSpec{}, n), bf, 1e-6) << n;
    const StorageSpec empty{5.0, 10.0, 100.0, 15.0};
    EXPECT_NEAR(deterministic_storage_lp(m, empty, n),
                brute_force_tiny(tree, empty, ControlRule::Discrete, 5.0), 1e-6) << n;
  }
}

TEST(MonteCarloDp, DeterministicCaseMatchesLpAndSimulation) {
  const auto m = base_model(0.0, 0.01, 30.0);
  DpConfig cfg;
  cfg.n_steps = 30;
  cfg.n_paths = 200;
  cfg.rule = ControlRule::Discrete;
  cfg.control_step = 5.0;
  const auto t = solve_dp(m, StorageSpec{}, cfg);
  const double lp = deterministic_storage_lp(m, StorageSpec{}, 30);
  EXPECT_NEAR(t.value, lp, 1e-6);
  const auto sim = simulate_dp_policy(t, m, 50, 4);
  EXPECT_NEAR(sim.mean, t.value, 1e-9);
  EXPECT_NEAR(sim.std_error, 0.0, 1e-9);

  cfg.rule = ControlRule::BangBang;
  const double bb = solve_dp(m, StorageSpec{}, cfg).value;
  EXPECT_LE(bb, lp + 1e-9);
  EXPECT_GT(bb, 0.999 * lp);
}

TEST(OracleChain, TreeTableMonotoneAndConcave) {
  const auto tree = build_tree(base_model(0.08, 0.01, 30.0), 9, TreeKind::GaussHermite3);
  DpConfig cfg;
  cfg.rule = ControlRule::Discrete;
  cfg.control_step = 5.0;
  const auto t = solve_dp_tree(tree, StorageSpec{}, cfg);
  for (int i = 0; i < 9; ++i)
    for (int g = 1; g < 21; ++g) {
      EXPECT_GE(t.mean_value[i][g], t.mean_value[i][g - 1] - 1e-9);
      if (g + 1 < 21) {
        EXPECT_LE(t.mean_value[i][g + 1] - 2 * t.mean_value[i][g] + t.mean_value[i][g - 1], 1e-9);
      }
    }
}

TEST(MonteCarloDp, TableShapeMonotoneNearConcaveAndBias) {
  // Regression noise perturbs exact concavity; second differences stay within 2% of the local slope.
  const auto m = base_model(0.08, 0.01, 30.0);
  DpConfig cfg;
  cfg.n_steps = 30;
  cfg.n_paths = 20000;
  cfg.rule = ControlRule::Discrete;
  cfg.control_step = 5.0;
  const auto t = solve_dp(m, StorageSpec{}, cfg);
  for (int i = 0; i < 30; ++i)
    for (int g = 1; g < 21; ++g) {
      const double slope = t.mean_value[i][g] - t.mean_value[i][g - 1];
      EXPECT_GE(slope, -1e-9) << i << ' ' << g;
      if (g + 1 < 21) {
        const double d2 = t.mean_value[i][g + 1] - 2 * t.mean_value[i][g] + t.mean_value[i][g - 1];
        EXPECT_LE(d2, 0.02 * slope + 1e-9) << i << ' ' << g;
      }
    }
  const auto sim = simulate_dp_policy(t, m, 20000, 11);
  EXPECT_LE(sim.mean, t.value + 3.0 * sim.std_error);
  EXPECT_GT(sim.mean, 0.97 * t.value);
  std::ostringstream os;
  write_bellman_csv(os, t);
  EXPECT_EQ(os.str().substr(0, 17), "date,level,value\n");
}

TEST(MonteCarloDp, RefinementConsistency) {
  const auto m = base_model(0.08, 0.01, 30.0);
  DpConfig cfg;
  cfg.n_steps = 30;
  cfg.n_paths = 40000;
  const double base = solve_dp(m, StorageSpec{}, cfg).value;
  cfg.grid_points = 41;
  cfg.cells_per_dim = 100;
  const double fine = solve_dp(m, StorageSpec{}, cfg).value;
  EXPECT_LT(std::abs(fine - base), 0.002 * base);
}

TEST(MonteCarloDp, ValueModeAgreesWithCashFlowMode) {
  const auto m = base_model(0.08, 0.01, 30.0);
  DpConfig cfg;
  cfg.n_steps = 30;
  cfg.n_paths = 20000;
  const double cf = solve_dp(m, StorageSpec{}, cfg).value;
  cfg.mode = DpMode::Value;
  const double v = solve_dp(m, StorageSpec{}, cfg).value;
  EXPECT_LT(std::abs(cf - v), 0.01 * cf);
}
