#pragma once

#include <chrono>
#include <cmath>
#include <algorithm>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "resopt/autodiff.hpp"
#include "resopt/gv_trainer.hpp"
#include "resopt/lp.hpp"
#include "resopt/model_io.hpp"
#include "resopt/price_models.hpp"
#include "resopt/rng.hpp"
#include "resopt/stats.hpp"
#include "resopt/storage.hpp"
#include "resopt/value_networks.hpp"

namespace resopt {

/// Linear multistage problem: at date i with uncertainty s, choose U in [u_lo, u_hi] earning
/// cost(i, s) . U, and move X -> X + A(i, s) U + B(i, s) inside [x_lo, x_hi].
struct StageModel {
  int horizon = 1;
  int controls = 1;  // p
  int states = 1;    // q
  Eigen::VectorXd u_lo, u_hi, x_lo, x_hi;
  std::function<Eigen::VectorXd(int, double)> cost;  // (date, spot) -> p coefficients
  std::function<Eigen::MatrixXd(int, double)> A;     // q x p
  std::function<Eigen::VectorXd(int, double)> B;     // q
  bool identity_dynamics = false;                    // A = I and B = 0 at every date

  void validate() const {
    if (horizon < 1 || controls < 1 || states < 1) throw std::invalid_argument("StageModel: bad dimensions");
    if (u_lo.size() != controls || u_hi.size() != controls || x_lo.size() != states || x_hi.size() != states)
      throw std::invalid_argument("StageModel: bound sizes");
    if (!cost || !A || !B) throw std::invalid_argument("StageModel: maps must be set");
  }
};

/// M identical storages: U = injections, A = I, B = 0, cost = -S per unit.
inline StageModel storage_stage_model(const StorageSpec& spec, int m, int horizon) {
  spec.validate();
  StageModel sm;
  sm.horizon = horizon;
  sm.controls = sm.states = m;
  sm.u_lo = Eigen::VectorXd::Constant(m, -spec.c_withdraw);
  sm.u_hi = Eigen::VectorXd::Constant(m, spec.c_inject);
  sm.x_lo = Eigen::VectorXd::Zero(m);
  sm.x_hi = Eigen::VectorXd::Constant(m, spec.q_max);
  sm.cost = [m](int, double s) { return Eigen::VectorXd::Constant(m, -s); };
  sm.A = [m](int, double) { return Eigen::MatrixXd::Identity(m, m); };
  sm.B = [m](int, double) { return Eigen::VectorXd::Zero(m); };
  sm.identity_dynamics = true;
  return sm;
}

struct TransitionResult {
  double value = 0.0;
  Eigen::VectorXd u;
  std::vector<int> working_set;
};

/// max cost . U + xi  s.t.  xi <= alpha_k + beta_k . (X + A U + B) for every cut,
/// x_lo <= X + A U + B <= x_hi, u_lo <= U <= u_hi. An empty cut set means a zero value-to-go.
inline TransitionResult transition_value(const StageModel& sm, int date, double spot, const Eigen::VectorXd& x,
                                         const CutSet& cuts, const std::vector<int>* hint = nullptr) {
  const int p = sm.controls, q = sm.states;
  const Eigen::VectorXd c = sm.cost(date, spot);
  const Eigen::MatrixXd a = sm.A(date, spot);
  const Eigen::VectorXd shift = x + sm.B(date, spot);
  LpProblem lp(p + 1);
  for (int j = 0; j < p; ++j) {
    lp.set_objective(j, c(j));
    if (!sm.identity_dynamics) lp.set_bounds(j, sm.u_lo(j), sm.u_hi(j));
  }
  lp.set_objective(p, 1.0);
  std::vector<double> row(static_cast<std::size_t>(p + 1));
  if (sm.identity_dynamics) {
    // X~ = shift + U: the state box folds into the control box.
    for (int j = 0; j < p; ++j)
      lp.set_bounds(j, std::max(sm.u_lo(j), sm.x_lo(j) - shift(j)), std::min(sm.u_hi(j), sm.x_hi(j) - shift(j)));
  } else {
    for (int r = 0; r < q; ++r) {
      for (int j = 0; j < p; ++j) row[j] = a(r, j);
      row[p] = 0.0;
      lp.add_row(row, sm.x_hi(r) - shift(r));
      for (int j = 0; j < p; ++j) row[j] = -a(r, j);
      lp.add_row(row, shift(r) - sm.x_lo(r));
    }
  }
  if (cuts.cuts.empty()) {
    std::fill(row.begin(), row.end(), 0.0);
    row[p] = 1.0;
    lp.add_row(row, 0.0);
  }
  for (const Cut& k : cuts.cuts) {
    // xi - (beta^T A) U <= alpha + beta . shift
    double rhs = k.alpha;
    for (int r = 0; r < q; ++r) rhs += k.beta[r] * shift(r);
    for (int j = 0; j < p; ++j) {
      double v = 0.0;
      for (int r = 0; r < q; ++r) v += k.beta[r] * a(r, j);
      row[j] = -v;
    }
    row[p] = 1.0;
    lp.add_row(row, rhs);
  }
  const LpSolution sol = solve_lp(lp, {}, hint);
  if (!sol.optimal())
    throw std::runtime_error("transition_value: LP not optimal at date " + std::to_string(date) + " (status " +
                             std::to_string(static_cast<int>(sol.status)) + ")");
  return {sol.objective, sol.x.head(p), sol.working_set};
}

struct GmcsdpConfig {
  ForwardModel model{HjmParams::one_factor(0.3, 0.16), SeasonalCurve{30.0, {{4.0, 4.0}}}, 1.0};
  StorageSpec storage{10.0, 20.0, 100.0, 50.0};
  int horizon = 8;
  int storages = 1;
  int m_x = 6;
  int m_y = 12;
  int layers = 1;  // hidden min-layers
  int group = 2;
  int batch = 200;
  long iterations = 15000;
  ad::LearningRateSchedule schedule = ad::LearningRateSchedule::linear(5e-3, 1e-4, 15000);
  int samples = 20000;  // (parent, child, stock) triples per stage
  std::size_t cut_cap = kDefaultCutCap;
  std::uint64_t seed = 1;
  int sim_paths = 0;  // forward simulation of the cut policy; 0 disables it
  std::uint64_t eval_seed = 1000003;
  int log_every = 500;
  bool warm_start = false;  // initialize each stage from the later stage's fit

  void validate() const {
    model.validate();
    storage.validate();
    if (horizon < 1 || storages < 1 || batch < 1 || iterations < 0 || samples < 2 || sim_paths < 0 || log_every < 1)
      throw std::invalid_argument("GmcsdpConfig: bad sizes");
    spec().validate();
  }

  IcnnSpec spec() const {
    IcnnSpec s;
    s.kind = ValueNetKind::GroupMax;
    s.x_dim = static_cast<int>(model.factors());
    s.y_dim = storages;
    s.m_x = m_x;
    s.m_y = m_y;
    s.layers = layers;
    s.group = group;
    return s;
  }

  nlohmann::json to_json() const {
    return {{"model", resopt::to_json(model)}, {"storage", resopt::to_json(storage)},
            {"horizon", horizon},              {"storages", storages},
            {"m_x", m_x},                      {"m_y", m_y},
            {"layers", layers},                {"group", group},
            {"batch", batch},                  {"iterations", iterations},
            {"schedule", resopt::to_json(schedule)}, {"samples", samples},
            {"cut_cap", cut_cap},              {"seed", seed},
            {"sim_paths", sim_paths},          {"eval_seed", eval_seed},
            {"log_every", log_every},          {"warm_start", warm_start}};
  }

  static GmcsdpConfig from_json(const nlohmann::json& j) {
    GmcsdpConfig c;
    if (j.contains("model")) c.model = model_from_json(j.at("model"));
    if (j.contains("storage")) c.storage = storage_from_json(j.at("storage"));
    c.horizon = j.value("horizon", c.horizon);
    c.storages = j.value("storages", c.storages);
    c.m_x = j.value("m_x", c.m_x);
    c.m_y = j.value("m_y", c.m_y);
    c.layers = j.value("layers", c.layers);
    c.group = j.value("group", c.group);
    c.batch = j.value("batch", c.batch);
    c.iterations = j.value("iterations", c.iterations);
    if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"));
    c.samples = j.value("samples", c.samples);
    c.cut_cap = j.value("cut_cap", c.cut_cap);
    c.seed = j.value("seed", c.seed);
    c.sim_paths = j.value("sim_paths", c.sim_paths);
    c.eval_seed = j.value("eval_seed", c.eval_seed);
    c.log_every = j.value("log_every", c.log_every);
    c.warm_start = j.value("warm_start", c.warm_start);
    c.validate();
    return c;
  }
};

struct StageDiagnostics {
  int stage = 0;
  double mean_cuts = 0.0;
  std::size_t max_cuts = 0;
  double lp_seconds = 0.0;
  double fit_seconds = 0.0;
  double target_mean = 0.0;
  std::vector<TrainLogEntry> mse_log;  // standardized MSE averaged over each window
};

struct GmcsdpResult {
  GmcsdpConfig config;
  /// values[i] is VB^i: value-to-go after the decision at date i, as a function of the factor
  /// state at date i and the post-decision stock. The last entry stays null (zero value).
  std::vector<std::unique_ptr<ValueFunction>> values;
  std::vector<StageDiagnostics> stages;
  double value = 0.0;  // first-stage LP objective, J*
  Eigen::VectorXd first_control;
  std::optional<SimulationResult> simulation;  // total over storages
  double seconds = 0.0;
};

namespace detail {

inline std::vector<double> normalized_factors(const Normalization& norm, const PathBatch& paths, int p, int s) {
  std::vector<double> x(static_cast<std::size_t>(paths.n_factors));
  for (int k = 0; k < paths.n_factors; ++k) x[k] = norm.factor(k, paths.factor_at(p, s, k));
  return x;
}

inline CutSet stage_cuts(const ValueFunction* v, const std::vector<double>& x, std::size_t cap) {
  return v ? v->cuts(x, cap) : CutSet{};
}

}  // namespace detail

/// Regression pool for VB^{i-1}: parents at date i-1 from the exact marginal, one child each,
/// stocks uniform on the state box; targets are transition values at the child.
struct StagePool {
  ad::Mat x;  // normalized factors at date i-1
  ad::Mat q;  // stocks
  ad::Mat y;  // transition values
};

inline StagePool stage_pool(const GmcsdpConfig& c, const StageModel& sm, int i, const ValueFunction* next,
                            StageDiagnostics* diag = nullptr) {
  const Normalization norm = make_normalization(c.model, c.horizon);
  const std::uint64_t seed = derive_seed(derive_seed(c.seed, 0x9a1), static_cast<std::uint64_t>(i));
  const PathBatch paths = sample_window(c.model, seed, 0, c.samples, i - 1, 2);
  const CounterRng rng(derive_seed(seed, 1));
  const int nf = paths.n_factors, m = sm.states;
  StagePool pool{ad::Mat(nf, c.samples), ad::Mat(m, c.samples), ad::Mat(1, c.samples)};
  const auto t0 = std::chrono::steady_clock::now();
  double cut_sum = 0.0;
  std::size_t cut_max = 0;
  std::vector<int> hint;
  for (int s = 0; s < c.samples; ++s) {
    const auto parent = detail::normalized_factors(norm, paths, s, 0);
    for (int k = 0; k < nf; ++k) pool.x(k, s) = parent[k];
    Eigen::VectorXd x(m);
    for (int j = 0; j < m; ++j) x(j) = sm.x_lo(j) + (sm.x_hi(j) - sm.x_lo(j)) * rng.uniform(s, j);
    pool.q.col(s) = x;
    const CutSet cuts = detail::stage_cuts(next, detail::normalized_factors(norm, paths, s, 1), c.cut_cap);
    cut_sum += static_cast<double>(cuts.size());
    cut_max = std::max(cut_max, cuts.size());
    pool.y(0, s) = transition_value(sm, i, paths.spot_at(s, 1), x, cuts).value;
  }
  if (diag) {
    diag->mean_cuts = cut_sum / c.samples;
    diag->max_cuts = cut_max;
    diag->lp_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    diag->target_mean = pool.y.mean();
  }
  return pool;
}

/// Fits VB^{i-1} to the pool by minibatch ADAM on standardized targets.
/// A non-null warm network seeds the weights; its standardized output carries over as a shape.
inline std::unique_ptr<ValueFunction> fit_stage(const GmcsdpConfig& c, int i, const StagePool& pool,
                                                StageDiagnostics* diag = nullptr, const ValueFunction* warm = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  const int n = static_cast<int>(pool.y.cols());
  auto v = std::make_unique<ValueFunction>(c.spec(), c.storage.q_max,
                                           derive_seed(derive_seed(c.seed, 0x5e7), static_cast<std::uint64_t>(i)));
  if (warm) v->params().values() = warm->params().values();
  std::vector<double> ys(pool.y.data(), pool.y.data() + n);
  const SimulationResult st = mean_and_error(ys);
  const double sd = st.std_error * std::sqrt(static_cast<double>(n));
  const double scale = sd > 1e-9 * std::max(1.0, std::abs(st.mean)) ? sd : 1.0;
  v->set_target_normalization(st.mean, scale);
  ad::AdamConfig ac;
  ac.schedule = c.schedule;
  ad::Adam adam(v->params().size(), ac);
  const CounterRng pick(derive_seed(derive_seed(c.seed, 0x91d), static_cast<std::uint64_t>(i)));
  const int b = std::min(c.batch, n);
  ad::Mat x(pool.x.rows(), b), q(pool.q.rows(), b), y(1, b);
  double sum = 0.0;
  long count = 0;
  for (long it = 0; it < c.iterations; ++it) {
    for (int k = 0; k < b; ++k) {
      const auto idx = static_cast<Eigen::Index>(pick.uniform(static_cast<std::uint64_t>(it), k) * n);
      x.col(k) = pool.x.col(idx);
      q.col(k) = pool.q.col(idx);
      y(0, k) = pool.y(0, idx);
    }
    ad::Tape t;
    ad::Var pred = v->forward_trainable(t, t.constant(x), t.constant(q));
    ad::Var loss = t.mean(t.square(t.scale(t.sub(pred, t.constant(y)), 1.0 / scale)));
    const double lv = t.scalar(loss);
    if (!std::isfinite(lv)) throw std::runtime_error("fit_stage: non-finite loss at stage " + std::to_string(i));
    v->params().zero_grad();
    t.backward(loss);
    adam.step(v->params());
    sum += lv;
    ++count;
    if (diag && ((it + 1) % c.log_every == 0 || it + 1 == c.iterations)) {
      diag->mse_log.push_back({it + 1, sum / count, c.schedule.at(it)});
      sum = 0.0;
      count = 0;
    }
  }
  if (diag) diag->fit_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return v;
}

/// Forward rollout of the cut policy: each date solves its transition LP against VB^i.
inline SimulationResult simulate_gmcsdp(const GmcsdpResult& r, const StageModel& sm, int n_paths, std::uint64_t seed) {
  const GmcsdpConfig& c = r.config;
  const Normalization norm = make_normalization(c.model, c.horizon);
  const PathBatch paths = sample_paths(c.model, n_paths, c.horizon, derive_seed(seed, 0x51b));
  std::vector<double> totals(static_cast<std::size_t>(n_paths));
  for (int p = 0; p < n_paths; ++p) {
    Eigen::VectorXd x = Eigen::VectorXd::Constant(sm.states, c.storage.q_init);
    double total = 0.0;
    for (int i = 0; i < c.horizon; ++i) {
      const double spot = paths.spot_at(p, i);
      const CutSet cuts = detail::stage_cuts(r.values[static_cast<std::size_t>(i)].get(),
                                             detail::normalized_factors(norm, paths, p, i), c.cut_cap);
      const TransitionResult tr = transition_value(sm, i, spot, x, cuts);
      total += sm.cost(i, spot).dot(tr.u);
      x = (x + sm.A(i, spot) * tr.u + sm.B(i, spot)).cwiseMax(sm.x_lo).cwiseMin(sm.x_hi);
    }
    totals[p] = total;
  }
  return mean_and_error(totals);
}

/// Single backward pass i = N-1 .. 1 fitting VB^{i-1}, then the first-stage LP from q_init.
inline GmcsdpResult run_gmcsdp(const GmcsdpConfig& c) {
  c.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const StageModel sm = storage_stage_model(c.storage, c.storages, c.horizon);
  GmcsdpResult r;
  r.config = c;
  r.values.resize(static_cast<std::size_t>(c.horizon));
  for (int i = c.horizon - 1; i >= 1; --i) {
    StageDiagnostics d;
    d.stage = i - 1;
    const StagePool pool = stage_pool(c, sm, i, r.values[static_cast<std::size_t>(i)].get(), &d);
    r.values[static_cast<std::size_t>(i - 1)] = fit_stage(c, i, pool, &d, c.warm_start ? r.values[static_cast<std::size_t>(i)].get() : nullptr);
    r.stages.push_back(std::move(d));
  }
  // Factors start at zero, so the normalized date-0 state is zero too.
  const CutSet cuts = detail::stage_cuts(r.values[0].get(), std::vector<double>(c.model.factors(), 0.0), c.cut_cap);
  const TransitionResult first = transition_value(sm, 0, c.model.forward(0.0),
                                                  Eigen::VectorXd::Constant(c.storages, c.storage.q_init), cuts);
  r.value = first.value;
  r.first_control = first.u;
  if (c.sim_paths > 0) r.simulation = simulate_gmcsdp(r, sm, c.sim_paths, c.eval_seed);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace resopt
