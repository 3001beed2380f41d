#pragma once

#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "resopt/autodiff.hpp"
#include "resopt/checkpoint.hpp"
#include "resopt/model_io.hpp"
#include "resopt/policy_networks.hpp"
#include "resopt/price_models.hpp"
#include "resopt/rng.hpp"
#include "resopt/stats.hpp"
#include "resopt/storage.hpp"

namespace resopt {

/// What the control networks see of the uncertainty: the normalized spot, or the normalized
/// Markov factors.
enum class FeatureKind { Spot, Factors };

inline const char* to_string(FeatureKind k) { return k == FeatureKind::Spot ? "spot" : "factors"; }

inline FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "spot") return FeatureKind::Spot;
  if (s == "factors") return FeatureKind::Factors;
  throw std::invalid_argument("unknown feature kind '" + s + "'");
}

/// Everything a rollout needs besides the policy and the paths.
struct RolloutContext {
  TapeStorage storage;
  Normalization norm;
  FeatureKind features = FeatureKind::Spot;
  std::optional<PriceImpact> impact;
  ad::Vec inv_q_max;

  RolloutContext(const std::vector<StorageSpec>& specs, Normalization n, FeatureKind f, double impact_coefficient)
      : storage(specs), norm(std::move(n)), features(f), inv_q_max(specs.size()) {
    for (std::size_t j = 0; j < specs.size(); ++j) inv_q_max(j) = 1.0 / specs[j].q_max;
    if (impact_coefficient < 0.0) throw std::invalid_argument("RolloutContext: impact must be >= 0");
    if (impact_coefficient > 0.0) impact = PriceImpact{impact_coefficient, static_cast<int>(specs.size())};
  }

  int storages() const { return storage.size(); }
  int feature_dim(int n_factors) const { return features == FeatureKind::Spot ? 1 : n_factors; }
};

struct StepOutcome {
  ad::Var u, stock, cash;
};

namespace detail {

inline ad::Mat spot_row(const PathBatch& paths, int col0, int batch, int s) {
  ad::Mat m(1, batch);
  for (int b = 0; b < batch; ++b) m(0, b) = paths.spot_at(col0 + b, s);
  return m;
}

inline ad::Mat feature_block(const RolloutContext& ctx, const PathBatch& paths, int col0, int batch, int s) {
  if (ctx.features == FeatureKind::Spot) {
    ad::Mat m(1, batch);
    for (int b = 0; b < batch; ++b) m(0, b) = ctx.norm.spot(paths.spot_at(col0 + b, s));
    return m;
  }
  ad::Mat m(paths.n_factors, batch);
  for (int b = 0; b < batch; ++b)
    for (int k = 0; k < paths.n_factors; ++k) m(k, b) = ctx.norm.factor(k, paths.factor_at(col0 + b, s, k));
  return m;
}

}  // namespace detail

/// One decision date (window step s) for path columns [col0, col0 + batch). Stocks are raw
/// (M x batch); the policy sees them mapped to [-1, 1].
inline StepOutcome policy_step(ad::Tape& t, const Policy& policy, const ParamSource& src, const RolloutContext& ctx,
                               const PathBatch& paths, int col0, int batch, int s, int policy_index, ad::Var q,
                               std::vector<ad::Var>& state) {
  const ad::Mat raw = detail::spot_row(paths, col0, batch, s);
  StepInput in;
  in.step = policy_index;
  in.features = t.constant(detail::feature_block(ctx, paths, col0, batch, s));
  in.spot = t.constant(raw.unaryExpr([&](double v) { return ctx.norm.spot(v); }));
  in.stock = t.shift(t.mul(q, t.constant((2.0 * ctx.inv_q_max).replicate(1, batch))), -1.0);
  ad::Var phi = policy.unit_control(t, src, in, state);
  auto [u, next] = ctx.storage.step(t, q, phi);
  ad::Var cash = TapeStorage::cashflow(t, t.constant(raw), u, ctx.impact);
  return {u, next, cash};
}

struct RolloutResult {
  ad::Var cash;   // 1 x batch, summed over dates
  ad::Var stock;  // M x batch after the last date
};

/// Rolls the first `steps` dates of the window (all when negative) on one tape, so the result
/// is differentiable end to end.
inline RolloutResult rollout(ad::Tape& t, const Policy& policy, const ParamSource& src, const RolloutContext& ctx,
                             const PathBatch& paths, int col0, int batch, ad::Var q0, int policy_index0 = 0,
                             int steps = -1) {
  if (steps < 0) steps = paths.n_steps;
  if (steps < 1 || steps > paths.n_steps) throw std::invalid_argument("rollout: steps outside the window");
  std::vector<ad::Var> state = policy.initial_state(t, batch);
  ad::Var q = q0;
  ad::Var total;
  for (int s = 0; s < steps; ++s) {
    const StepOutcome o = policy_step(t, policy, src, ctx, paths, col0, batch, s, policy_index0 + s, q, state);
    total = total.valid() ? t.add(total, o.cash) : o.cash;
    q = o.stock;
  }
  return {total, q};
}

struct EvalResult {
  double mean = 0.0;
  double std_error = 0.0;
  double per_storage = 0.0;  // J^M / M
  double per_storage_error = 0.0;
  int paths = 0;
};

/// Out-of-sample Monte Carlo value. Each date gets a fresh tape and frozen parameters, so
/// memory stays flat in the horizon; path chunks have a fixed width so results depend only on
/// (seed, n_paths, chunk).
inline EvalResult evaluate_rollout(const Policy& policy, const RolloutContext& ctx, const ForwardModel& model,
                                   int horizon, const std::vector<double>& q_init, int n_paths, std::uint64_t seed,
                                   int chunk = 1000) {
  if (n_paths < 1 || chunk < 1) throw std::invalid_argument("evaluate: n_paths and chunk must be >= 1");
  if (static_cast<int>(q_init.size()) != ctx.storages()) throw std::invalid_argument("evaluate: q_init size");
  const ParamSource src = ParamSource::frozen(policy.params());
  const int m = ctx.storages();
  std::vector<double> totals;
  totals.reserve(static_cast<std::size_t>(n_paths));
  const std::uint64_t path_seed = derive_seed(seed, 0xe7a1);
  for (int c0 = 0; c0 < n_paths; c0 += chunk) {
    const int width = std::min(chunk, n_paths - c0);
    const PathBatch paths = sample_paths(model, width, horizon, path_seed, static_cast<std::uint64_t>(c0));
    ad::Mat q(m, width);
    for (int j = 0; j < m; ++j) q.row(j).setConstant(q_init[j]);
    ad::Mat cash = ad::Mat::Zero(1, width);
    std::vector<ad::Mat> state_values;
    for (int s = 0; s < horizon; ++s) {
      ad::Tape t;
      std::vector<ad::Var> state;
      if (s == 0) {
        state = policy.initial_state(t, width);
      } else {
        for (const auto& v : state_values) state.push_back(t.constant(v));
      }
      const StepOutcome o = policy_step(t, policy, src, ctx, paths, 0, width, s, s, t.constant(q), state);
      cash += t.value(o.cash);
      q = t.value(o.stock);
      state_values.clear();
      for (ad::Var v : state) state_values.push_back(t.value(v));
    }
    for (int b = 0; b < width; ++b) totals.push_back(cash(0, b));
  }
  const SimulationResult r = mean_and_error(totals);
  return {r.mean, r.std_error, r.mean / m, r.std_error / m, n_paths};
}

struct GvConfig {
  ForwardModel model{HjmParams::one_factor(0.08, 0.01), SeasonalCurve{30.0, {{5.0, 365.0}, {1.0, 7.0}}}, 1.0};
  StorageSpec storage;
  int horizon = 365;
  int storages = 1;
  PolicyConfig policy;  // horizon, storages and feature_dim are filled in from this config
  FeatureKind features = FeatureKind::Spot;
  double impact = 0.0;  // P
  int batch = 200;
  long iterations = 100000;
  ad::LearningRateSchedule schedule = ad::LearningRateSchedule::constant(2e-3);
  std::uint64_t train_seed = 1;
  std::uint64_t eval_seed = 1000003;
  int eval_paths = 200000;
  int eval_chunk = 1000;
  int log_every = 100;

  void validate() const {
    model.validate();
    storage.validate();
    if (horizon < 1 || storages < 1 || batch < 1 || iterations < 0 || eval_paths < 1 || eval_chunk < 1 ||
        log_every < 1)
      throw std::invalid_argument("GvConfig: counts must be positive");
    if (!(impact >= 0.0)) throw std::invalid_argument("GvConfig: impact P must be >= 0");
  }

  PolicyConfig resolved_policy() const {
    PolicyConfig p = policy;
    p.horizon = horizon;
    p.storages = storages;
    p.feature_dim = features == FeatureKind::Spot ? 1 : static_cast<int>(model.factors());
    return p;
  }

  std::vector<StorageSpec> storage_specs() const { return std::vector<StorageSpec>(storages, storage); }
  std::vector<double> initial_stock() const { return std::vector<double>(storages, storage.q_init); }

  RolloutContext context() const {
    return RolloutContext(storage_specs(), make_normalization(model, horizon), features, impact);
  }

  nlohmann::json to_json() const {
    return {{"model", resopt::to_json(model)},
            {"storage", resopt::to_json(storage)},
            {"horizon", horizon},
            {"storages", storages},
            {"policy", resolved_policy().to_json()},
            {"features", to_string(features)},
            {"impact", impact},
            {"batch", batch},
            {"iterations", iterations},
            {"schedule", resopt::to_json(schedule)},
            {"train_seed", train_seed},
            {"eval_seed", eval_seed},
            {"eval_paths", eval_paths},
            {"eval_chunk", eval_chunk},
            {"log_every", log_every}};
  }

  static GvConfig from_json(const nlohmann::json& j) {
    GvConfig c;
    if (j.contains("model")) c.model = model_from_json(j.at("model"));
    if (j.contains("storage")) c.storage = storage_from_json(j.at("storage"));
    c.horizon = j.value("horizon", c.horizon);
    c.storages = j.value("storages", c.storages);
    if (j.contains("policy")) c.policy = PolicyConfig::from_json(j.at("policy"));
    c.features = feature_kind_from_string(j.value("features", std::string(to_string(c.features))));
    c.impact = j.value("impact", c.impact);
    c.batch = j.value("batch", c.batch);
    c.iterations = j.value("iterations", c.iterations);
    if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"));
    c.train_seed = j.value("train_seed", c.train_seed);
    c.eval_seed = j.value("eval_seed", c.eval_seed);
    c.eval_paths = j.value("eval_paths", c.eval_paths);
    c.eval_chunk = j.value("eval_chunk", c.eval_chunk);
    c.log_every = j.value("log_every", c.log_every);
    c.validate();
    return c;
  }
};

/// M identical replicas of the configured storage; the reported metric becomes J^M / M.
inline GvConfig scale_to_dimension(GvConfig c, int m) {
  if (m < 1) throw std::invalid_argument("scale_to_dimension: M >= 1 required");
  c.storages = m;
  return c;
}

struct TrainLogEntry {
  long iteration = 0;  // last iteration of the logging window
  double objective = 0.0;  // mean in-sample profit over the window
  double learning_rate = 0.0;
};

/// Thrown when the training objective stops being finite; carries the last finite parameters.
struct TrainingDiverged : std::runtime_error {
  nlohmann::json checkpoint;
  TrainingDiverged(const std::string& what, nlohmann::json cp) : std::runtime_error(what), checkpoint(std::move(cp)) {}
};

struct TrainedPolicy {
  GvConfig config;
  std::unique_ptr<Policy> policy;
  Normalization norm;
  std::vector<TrainLogEntry> log;
  double train_seconds = 0.0;

  nlohmann::json checkpoint() const {
    nlohmann::json l = nlohmann::json::array();
    for (const auto& e : log) l.push_back({e.iteration, e.objective, e.learning_rate});
    return {{"format", "resopt-gv"}, {"config", config.to_json()}, {"normalization", to_json(norm)},
            {"params", policy->checkpoint()}, {"log", l}, {"train_seconds", train_seconds}};
  }

  static TrainedPolicy from_checkpoint(const nlohmann::json& j) {
    if (j.value("format", "") != "resopt-gv") throw std::runtime_error("checkpoint: not a GV policy");
    TrainedPolicy tp;
    tp.config = GvConfig::from_json(j.at("config"));
    tp.norm = normalization_from_json(j.at("normalization"));
    tp.policy = make_policy(tp.config.resolved_policy());
    params_from_json(tp.policy->params(), j.at("params"));
    for (const auto& e : j.value("log", nlohmann::json::array()))
      tp.log.push_back({e.at(0).get<long>(), e.at(1).get<double>(), e.at(2).get<double>()});
    tp.train_seconds = j.value("train_seconds", 0.0);
    return tp;
  }

  RolloutContext context() const {
    return RolloutContext(config.storage_specs(), norm, config.features, config.impact);
  }
};

/// Untrained policy for `config` (useful as a baseline and for checkpoint plumbing).
inline TrainedPolicy make_untrained(const GvConfig& config) {
  config.validate();
  TrainedPolicy tp;
  tp.config = config;
  tp.norm = make_normalization(config.model, config.horizon);
  tp.policy = make_policy(config.resolved_policy());
  return tp;
}

/// Global valuation: maximizes the batch-mean pathwise profit over all dates from the fixed
/// initial stock, drawing fresh paths every iteration.
inline TrainedPolicy train_gv(const GvConfig& config) {
  TrainedPolicy tp = make_untrained(config);
  const auto start = std::chrono::steady_clock::now();
  const RolloutContext ctx = tp.context();
  ad::ParamStore& store = tp.policy->params();
  ad::AdamConfig ac;
  ac.schedule = config.schedule;
  ad::Adam adam(store.size(), ac);
  const std::uint64_t path_seed = derive_seed(config.train_seed, 0x7a11);
  const ParamSource src = ParamSource::trainable(store);
  ad::Mat q0(config.storages, config.batch);
  for (int j = 0; j < config.storages; ++j) q0.row(j).setConstant(config.storage.q_init);

  double window_sum = 0.0;
  long window_count = 0;
  std::vector<double> last_good = store.values();
  for (long it = 0; it < config.iterations; ++it) {
    const PathBatch paths = sample_paths(config.model, config.batch, config.horizon, path_seed,
                                         static_cast<std::uint64_t>(it) * static_cast<std::uint64_t>(config.batch));
    ad::Tape t;
    const RolloutResult r = rollout(t, *tp.policy, src, ctx, paths, 0, config.batch, t.constant(q0));
    ad::Var profit = t.mean(r.cash);
    const double value = t.scalar(profit);
    if (!std::isfinite(value)) {
      store.values() = last_good;
      throw TrainingDiverged("train_gv: non-finite objective at iteration " + std::to_string(it), tp.checkpoint());
    }
    store.zero_grad();
    t.backward(t.neg(profit));
    last_good = store.values();
    adam.step(store);
    window_sum += value;
    ++window_count;
    if ((it + 1) % config.log_every == 0 || it + 1 == config.iterations) {
      tp.log.push_back({it + 1, window_sum / window_count, config.schedule.at(it)});
      window_sum = 0.0;
      window_count = 0;
    }
  }
  tp.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return tp;
}

inline EvalResult evaluate_policy(const TrainedPolicy& tp, int n_paths, std::uint64_t seed) {
  return evaluate_rollout(*tp.policy, tp.context(), tp.config.model, tp.config.horizon, tp.config.initial_stock(),
                          n_paths, seed, tp.config.eval_chunk);
}

inline EvalResult evaluate_policy(const TrainedPolicy& tp) {
  return evaluate_policy(tp, tp.config.eval_paths, tp.config.eval_seed);
}

/// CSV with columns iteration,objective,learning_rate.
inline void write_training_log_csv(std::ostream& os, const std::vector<TrainLogEntry>& log) {
  os << "iteration,objective,learning_rate\n";
  os.precision(12);
  for (const auto& e : log) os << e.iteration << ',' << e.objective << ',' << e.learning_rate << '\n';
}

}  // namespace resopt
