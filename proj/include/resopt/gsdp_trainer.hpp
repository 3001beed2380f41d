#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "resopt/autodiff.hpp"
#include "resopt/gv_trainer.hpp"
#include "resopt/policy_networks.hpp"
#include "resopt/value_networks.hpp"

namespace resopt {

/// Block sizes N_1..N_L: equal blocks of ceil(N/L) after a first block that absorbs the
/// remainder. When that leaves the first block empty the common size drops to
/// floor((N-1)/(L-1)).
inline std::vector<int> split_schedule(int n, int l) {
  if (n < 1 || l < 1) throw std::invalid_argument("split_schedule: N and L must be >= 1");
  if (l > n) throw std::invalid_argument("split_schedule: more blocks than dates");
  if (l == 1) return {n};
  int s = (n + l - 1) / l;
  if (n - (l - 1) * s < 1) s = (n - 1) / (l - 1);
  std::vector<int> sizes(static_cast<std::size_t>(l), s);
  sizes[0] = n - (l - 1) * s;
  return sizes;
}

inline std::vector<int> block_starts(const std::vector<int>& sizes) {
  std::vector<int> starts(sizes.size(), 0);
  for (std::size_t i = 1; i < sizes.size(); ++i) starts[i] = starts[i - 1] + sizes[i - 1];
  return starts;
}

enum class BellmanNetKind { Feedforward, Concave, Free, GroupMax };

inline const char* to_string(BellmanNetKind k) {
  switch (k) {
    case BellmanNetKind::Feedforward: return "feedforward";
    case BellmanNetKind::Concave: return "concave";
    case BellmanNetKind::Free: return "free";
    case BellmanNetKind::GroupMax: return "groupmax";
  }
  return "?";
}

inline BellmanNetKind bellman_kind_from_string(const std::string& s) {
  for (auto k : {BellmanNetKind::Feedforward, BellmanNetKind::Concave, BellmanNetKind::Free, BellmanNetKind::GroupMax})
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown value network kind '" + s + "'");
}

struct BellmanNetSpec {
  BellmanNetKind kind = BellmanNetKind::Feedforward;
  int layers = 2;    // feedforward hidden layers
  int neurons = 11;  // feedforward width
  int m_x = 10;
  int m_y = 0;  // 0 -> 40 for GroupMax, 20 otherwise
  int icnn_layers = 3;
  int group = 2;

  int resolved_m_y() const { return m_y > 0 ? m_y : kind == BellmanNetKind::GroupMax ? 40 : 20; }

  nlohmann::json to_json() const {
    return {{"kind", to_string(kind)}, {"layers", layers}, {"neurons", neurons},        {"m_x", m_x},
            {"m_y", resolved_m_y()},              {"icnn_layers", icnn_layers}, {"group", group}};
  }
  static BellmanNetSpec from_json(const nlohmann::json& j) {
    BellmanNetSpec s;
    s.kind = bellman_kind_from_string(j.value("kind", std::string(to_string(s.kind))));
    s.layers = j.value("layers", s.layers);
    s.neurons = j.value("neurons", s.neurons);
    s.m_x = j.value("m_x", s.m_x);
    s.m_y = j.value("m_y", s.m_y);
    s.icnn_layers = j.value("icnn_layers", s.icnn_layers);
    s.group = j.value("group", s.group);
    return s;
  }
};

/// Bellman value approximation V(x, q) = offset + scale * f(x, q / q_max) with identity output.
/// x holds the normalized Markov factors, q the raw stocks.
class BellmanNet {
 public:
  BellmanNet(const BellmanNetSpec& spec, int x_dim, int y_dim, double q_max, std::uint64_t seed)
      : spec_(spec), q_max_(q_max) {
    if (spec.kind == BellmanNetKind::Feedforward) {
      ff_ = Feedforward(store_, FeedforwardSpec{x_dim + y_dim, 1, spec.layers, spec.neurons, Activation::Relu,
                                                Activation::Identity},
                        "vf/");
      ff_.init(store_, seed);
    } else {
      IcnnSpec is;
      is.kind = spec.kind == BellmanNetKind::Concave ? ValueNetKind::Concave
                : spec.kind == BellmanNetKind::Free  ? ValueNetKind::Free
                                                     : ValueNetKind::GroupMax;
      is.x_dim = x_dim;
      is.y_dim = y_dim;
      is.m_x = spec.m_x;
      is.m_y = spec.resolved_m_y();
      is.layers = spec.icnn_layers;
      is.group = spec.group;
      is.validate();
      icnn_ = std::make_unique<ValueFunction>(is, q_max, seed);
    }
  }

  ad::Var forward(ad::Tape& t, bool trainable, ad::Var x, ad::Var q) {
    if (icnn_) return trainable ? icnn_->forward_trainable(t, x, q) : icnn_->forward_frozen(t, x, q);
    const ParamSource p = trainable ? ParamSource::trainable(store_) : ParamSource::frozen(store_);
    ad::Var in = t.concat_rows({x, t.scale(q, 1.0 / q_max_)});
    return t.shift(t.scale(ff_.forward(t, p, in), scale_), offset_);
  }

  ad::Var forward_frozen(ad::Tape& t, ad::Var x, ad::Var q) const {
    if (icnn_) return icnn_->forward_frozen(t, x, q);
    ad::Var in = t.concat_rows({x, t.scale(q, 1.0 / q_max_)});
    return t.shift(t.scale(ff_.forward(t, ParamSource::frozen(store_), in), scale_), offset_);
  }

  ad::Mat eval(const ad::Mat& x, const ad::Mat& q) const {
    ad::Tape t;
    return t.value(forward_frozen(t, t.constant(x), t.constant(q)));
  }

  void set_target_normalization(double offset, double scale) {
    if (icnn_) {
      icnn_->set_target_normalization(offset, scale);
      return;
    }
    if (!(scale > 0.0)) throw std::invalid_argument("BellmanNet: scale must be positive");
    offset_ = offset;
    scale_ = scale;
  }

  ad::ParamStore& params() { return icnn_ ? icnn_->params() : store_; }
  const ad::ParamStore& params() const { return icnn_ ? icnn_->params() : store_; }
  const BellmanNetSpec& spec() const { return spec_; }
  /// The ICNN wrapper (cuts, concavity); null for the feedforward kind.
  const ValueFunction* icnn() const { return icnn_.get(); }

  nlohmann::json checkpoint() const {
    if (icnn_) return icnn_->checkpoint();
    nlohmann::json arch = spec_.to_json();
    arch["q_max"] = q_max_;
    arch["offset"] = offset_;
    arch["scale"] = scale_;
    return params_to_json(store_, arch);
  }

 private:
  BellmanNetSpec spec_;
  double q_max_ = 1.0;
  ad::ParamStore store_;
  Feedforward ff_;
  std::unique_ptr<ValueFunction> icnn_;
  double offset_ = 0.0;
  double scale_ = 1.0;
};

struct GsdpConfig {
  GvConfig gv;  // model, storages, control networks, batch, policy iterations per block, seeds
  int blocks = 4;
  BellmanNetSpec value;
  long value_iterations = 100000;
  ad::LearningRateSchedule value_schedule = ad::LearningRateSchedule::constant(5e-3);
  int value_batch = 200;
  int fit_samples = 20000;     // regression pool per block boundary
  bool fixed_first_q0 = false;  // first block starts at q_init instead of a uniform draw

  void validate() const {
    gv.validate();
    if (gv.policy.kind == PolicyKind::LstmFf) throw std::invalid_argument("GsdpConfig: LSTM policies span blocks");
    if (blocks < 1 || blocks > gv.horizon) throw std::invalid_argument("GsdpConfig: need 1 <= L <= N");
    if (value_iterations < 0 || value_batch < 1 || fit_samples < 2)
      throw std::invalid_argument("GsdpConfig: bad regression sizes");
  }

  nlohmann::json to_json() const {
    return {{"gv", gv.to_json()},
            {"blocks", blocks},
            {"value", value.to_json()},
            {"value_iterations", value_iterations},
            {"value_schedule", resopt::to_json(value_schedule)},
            {"value_batch", value_batch},
            {"fit_samples", fit_samples},
            {"fixed_first_q0", fixed_first_q0}};
  }

  static GsdpConfig from_json(const nlohmann::json& j) {
    GsdpConfig c;
    if (j.contains("gv")) c.gv = GvConfig::from_json(j.at("gv"));
    c.blocks = j.value("blocks", c.blocks);
    if (j.contains("value")) c.value = BellmanNetSpec::from_json(j.at("value"));
    c.value_iterations = j.value("value_iterations", c.value_iterations);
    if (j.contains("value_schedule")) c.value_schedule = schedule_from_json(j.at("value_schedule"));
    c.value_batch = j.value("value_batch", c.value_batch);
    c.fit_samples = j.value("fit_samples", c.fit_samples);
    c.fixed_first_q0 = j.value("fixed_first_q0", c.fixed_first_q0);
    c.validate();
    return c;
  }
};

/// Decisions of consecutive blocks stitched into one horizon-long policy (evaluation only: each
/// block reads its own frozen parameters).
class BlockPolicy : public Policy {
 public:
  BlockPolicy(PolicyConfig c, std::vector<int> sizes, std::vector<std::unique_ptr<Policy>> blocks)
      : Policy(c), starts_(block_starts(sizes)), sizes_(std::move(sizes)), blocks_(std::move(blocks)) {
    if (blocks_.size() != sizes_.size()) throw std::invalid_argument("BlockPolicy: one policy per block");
  }

  ad::Var unit_control(ad::Tape& t, const ParamSource&, const StepInput& in, std::vector<ad::Var>& state) const override {
    const auto it = std::upper_bound(starts_.begin(), starts_.end(), in.step);
    const std::size_t l = static_cast<std::size_t>(it - starts_.begin()) - 1;
    StepInput local = in;
    local.step = in.step - starts_[l];
    return blocks_[l]->unit_control(t, ParamSource::frozen(blocks_[l]->params()), local, state);
  }

  const Policy& block(std::size_t l) const { return *blocks_.at(l); }
  std::size_t blocks() const { return blocks_.size(); }

 private:
  std::vector<int> starts_, sizes_;
  std::vector<std::unique_ptr<Policy>> blocks_;
};

struct BlockDiagnostics {
  int block = 0;
  int start = 0;
  int size = 0;
  std::vector<TrainLogEntry> policy_log;  // in-sample block objective
  std::vector<TrainLogEntry> value_log;   // normalized regression MSE
  double seconds = 0.0;
};

struct GsdpResult {
  GsdpConfig config;
  std::vector<int> sizes;
  std::unique_ptr<BlockPolicy> policy;
  /// values[l] approximates the Bellman value at the start of block l (index 0 unused when
  /// the first block is not regressed).
  std::vector<std::unique_ptr<BellmanNet>> values;
  std::vector<BlockDiagnostics> blocks;
  EvalResult evaluation;
  double seconds = 0.0;
};

namespace detail {

inline ad::Mat factor_features(const Normalization& norm, const PathBatch& paths, int col0, int batch, int s) {
  ad::Mat m(paths.n_factors, batch);
  for (int b = 0; b < batch; ++b)
    for (int k = 0; k < paths.n_factors; ++k) m(k, b) = norm.factor(k, paths.factor_at(col0 + b, s, k));
  return m;
}

inline ad::Mat uniform_stock(const CounterRng& rng, std::uint64_t stream0, int m, int batch, double q_max) {
  ad::Mat q(m, batch);
  for (int b = 0; b < batch; ++b)
    for (int j = 0; j < m; ++j) q(j, b) = q_max * rng.uniform(stream0 + static_cast<std::uint64_t>(b), j);
  return q;
}

}  // namespace detail

/// Trains the control networks of block l against the next boundary value `next` (null means
/// zero). Initial stocks are uniform on [0, q_max]^M unless `fixed_q0`; the uncertainty at the
/// block start comes from an exact jump from t = 0.
inline std::unique_ptr<Policy> train_block(const GsdpConfig& c, int l, int start, int size, BellmanNet* next,
                                           bool fixed_q0, std::vector<TrainLogEntry>* log = nullptr) {
  const GvConfig& g = c.gv;
  PolicyConfig pc = g.resolved_policy();
  pc.horizon = size;
  pc.seed = derive_seed(g.policy.seed, static_cast<std::uint64_t>(l));
  auto policy = make_policy(pc);
  const RolloutContext ctx = g.context();
  const Normalization& norm = ctx.norm;
  const int m = g.storages, b = g.batch;
  const std::uint64_t seed = derive_seed(derive_seed(g.train_seed, 0xb10c), static_cast<std::uint64_t>(l));
  const CounterRng q_rng(derive_seed(seed, 1));
  ad::AdamConfig ac;
  ac.schedule = g.schedule;
  ad::Adam adam(policy->params().size(), ac);
  const ParamSource src = ParamSource::trainable(policy->params());
  const int window = next ? size + 1 : size;
  double sum = 0.0;
  long count = 0;
  for (long it = 0; it < g.iterations; ++it) {
    const std::uint64_t stream0 = static_cast<std::uint64_t>(it) * static_cast<std::uint64_t>(b);
    const PathBatch paths = sample_window(g.model, seed, stream0, b, start, window);
    const ad::Mat q0 = fixed_q0 ? ad::Mat::Constant(m, b, g.storage.q_init)
                                : detail::uniform_stock(q_rng, stream0, m, b, g.storage.q_max);
    ad::Tape t;
    const RolloutResult r = rollout(t, *policy, src, ctx, paths, 0, b, t.constant(q0), 0, size);
    ad::Var total = r.cash;
    if (next)
      total = t.add(total, next->forward_frozen(t, t.constant(detail::factor_features(norm, paths, 0, b, size)), r.stock));
    ad::Var objective = t.mean(total);
    const double value = t.scalar(objective);
    if (!std::isfinite(value))
      throw TrainingDiverged("train_block: non-finite objective in block " + std::to_string(l), policy->checkpoint());
    policy->params().zero_grad();
    t.backward(t.neg(objective));
    adam.step(policy->params());
    sum += value;
    ++count;
    if (log && ((it + 1) % g.log_every == 0 || it + 1 == g.iterations)) {
      log->push_back({it + 1, sum / count, g.schedule.at(it)});
      sum = 0.0;
      count = 0;
    }
  }
  return policy;
}

struct RegressionPool {
  ad::Mat x;  // normalized factors at the block start (k x P)
  ad::Mat q;  // initial stocks (M x P)
  ad::Mat y;  // realized block cash plus next boundary value (1 x P)
};

/// Samples (x, Q0, target) with the trained block policy, frozen, on fresh paths.
inline RegressionPool block_regression_pool(const GsdpConfig& c, int l, int start, int size, const Policy& policy,
                                            const BellmanNet* next) {
  const GvConfig& g = c.gv;
  const RolloutContext ctx = g.context();
  const int m = g.storages, n = c.fit_samples, chunk = g.eval_chunk;
  const std::uint64_t seed = derive_seed(derive_seed(g.train_seed, 0xf17), static_cast<std::uint64_t>(l));
  const CounterRng q_rng(derive_seed(seed, 1));
  const int nf = static_cast<int>(g.model.factors());
  RegressionPool pool{ad::Mat(nf, n), ad::Mat(m, n), ad::Mat(1, n)};
  const ParamSource src = ParamSource::frozen(policy.params());
  for (int c0 = 0; c0 < n; c0 += chunk) {
    const int w = std::min(chunk, n - c0);
    const PathBatch paths = sample_window(g.model, seed, static_cast<std::uint64_t>(c0), w, start, next ? size + 1 : size);
    ad::Mat q = detail::uniform_stock(q_rng, static_cast<std::uint64_t>(c0), m, w, g.storage.q_max);
    pool.x.middleCols(c0, w) = detail::factor_features(ctx.norm, paths, 0, w, 0);
    pool.q.middleCols(c0, w) = q;
    ad::Mat cash = ad::Mat::Zero(1, w);
    for (int s = 0; s < size; ++s) {
      ad::Tape t;
      std::vector<ad::Var> state;
      const StepOutcome o = policy_step(t, policy, src, ctx, paths, 0, w, s, s, t.constant(q), state);
      cash += t.value(o.cash);
      q = t.value(o.stock);
    }
    if (next) cash += next->eval(detail::factor_features(ctx.norm, paths, 0, w, size), q);
    pool.y.middleCols(c0, w) = cash;
  }
  return pool;
}

/// Least-squares fit of a fresh value network to the pool, on standardized targets.
inline std::unique_ptr<BellmanNet> fit_bellman(const GsdpConfig& c, int l, const RegressionPool& pool,
                                               std::vector<TrainLogEntry>* log = nullptr) {
  const GvConfig& g = c.gv;
  const int n = static_cast<int>(pool.y.cols());
  auto net = std::make_unique<BellmanNet>(c.value, static_cast<int>(pool.x.rows()), static_cast<int>(pool.q.rows()),
                                          g.storage.q_max, derive_seed(derive_seed(g.policy.seed, 0x7a1e),
                                                                       static_cast<std::uint64_t>(l)));
  std::vector<double> ys(pool.y.data(), pool.y.data() + n);
  const SimulationResult st = mean_and_error(ys);
  const double sd = st.std_error * std::sqrt(static_cast<double>(n));
  const double scale = sd > 1e-9 * std::max(1.0, std::abs(st.mean)) ? sd : 1.0;
  net->set_target_normalization(st.mean, scale);
  ad::AdamConfig ac;
  ac.schedule = c.value_schedule;
  ad::Adam adam(net->params().size(), ac);
  const CounterRng pick(derive_seed(derive_seed(g.train_seed, 0x91c), static_cast<std::uint64_t>(l)));
  const int b = std::min(c.value_batch, n);
  ad::Mat x(pool.x.rows(), b), q(pool.q.rows(), b), y(1, b);
  double sum = 0.0;
  long count = 0;
  for (long it = 0; it < c.value_iterations; ++it) {
    for (int k = 0; k < b; ++k) {
      const auto idx = static_cast<Eigen::Index>(pick.uniform(static_cast<std::uint64_t>(it), k) * n);
      x.col(k) = pool.x.col(idx);
      q.col(k) = pool.q.col(idx);
      y(0, k) = pool.y(0, idx);
    }
    ad::Tape t;
    ad::Var v = net->forward(t, true, t.constant(x), t.constant(q));
    ad::Var loss = t.mean(t.square(t.scale(t.sub(v, t.constant(y)), 1.0 / scale)));
    const double value = t.scalar(loss);
    if (!std::isfinite(value))
      throw TrainingDiverged("fit_bellman: non-finite loss at boundary " + std::to_string(l), net->checkpoint());
    net->params().zero_grad();
    t.backward(loss);
    adam.step(net->params());
    sum += value;
    ++count;
    if (log && ((it + 1) % g.log_every == 0 || it + 1 == c.value_iterations)) {
      log->push_back({it + 1, sum / count, c.value_schedule.at(it)});
      sum = 0.0;
      count = 0;
    }
  }
  return net;
}

/// Backward pass over the blocks, then a forward evaluation from the configured initial stock.
inline GsdpResult run_gsdp(const GsdpConfig& c) {
  c.validate();
  const auto t0 = std::chrono::steady_clock::now();
  GsdpResult res;
  res.config = c;
  res.sizes = split_schedule(c.gv.horizon, c.blocks);
  const std::vector<int> starts = block_starts(res.sizes);
  const int L = c.blocks;
  std::vector<std::unique_ptr<Policy>> policies(static_cast<std::size_t>(L));
  res.values.resize(static_cast<std::size_t>(L));
  res.blocks.resize(static_cast<std::size_t>(L));
  for (int l = L - 1; l >= 0; --l) {
    const auto b0 = std::chrono::steady_clock::now();
    auto& d = res.blocks[static_cast<std::size_t>(l)];
    d.block = l;
    d.start = starts[l];
    d.size = res.sizes[l];
    BellmanNet* next = l + 1 < L ? res.values[static_cast<std::size_t>(l + 1)].get() : nullptr;
    policies[l] = train_block(c, l, d.start, d.size, next, l == 0 && c.fixed_first_q0, &d.policy_log);
    if (l > 0) {
      const RegressionPool pool = block_regression_pool(c, l, d.start, d.size, *policies[l], next);
      res.values[static_cast<std::size_t>(l)] = fit_bellman(c, l, pool, &d.value_log);
    }
    d.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - b0).count();
  }
  res.policy = std::make_unique<BlockPolicy>(c.gv.resolved_policy(), res.sizes, std::move(policies));
  res.evaluation = evaluate_rollout(*res.policy, c.gv.context(), c.gv.model, c.gv.horizon, c.gv.initial_stock(),
                                    c.gv.eval_paths, c.gv.eval_seed, c.gv.eval_chunk);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace resopt
