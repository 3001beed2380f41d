#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "resopt/autodiff.hpp"
#include "resopt/checkpoint.hpp"

namespace resopt {

enum class Activation { Identity, Tanh, Relu, Elu, Sigmoid };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Elu: return "elu";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  for (auto a : {Activation::Identity, Activation::Tanh, Activation::Relu, Activation::Elu, Activation::Sigmoid})
    if (s == to_string(a)) return a;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

inline ad::Var activate(ad::Tape& t, ad::Var x, Activation a) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::Tanh: return t.tanh(x);
    case Activation::Relu: return t.relu(x);
    case Activation::Elu: return t.elu(x);
    case Activation::Sigmoid: return t.sigmoid(x);
  }
  return x;
}

/// Where a network reads its weights from: trainable (gradients accumulate) or frozen.
class ParamSource {
 public:
  static ParamSource trainable(ad::ParamStore& s) { return ParamSource(&s, &s); }
  static ParamSource frozen(const ad::ParamStore& s) { return ParamSource(nullptr, &s); }

  ad::Var get(ad::Tape& t, int id) const { return train_ ? t.param(*train_, id) : t.frozen(*read_, id); }

 private:
  ParamSource(ad::ParamStore* train, const ad::ParamStore* read) : train_(train), read_(read) {}
  ad::ParamStore* train_;
  const ad::ParamStore* read_;
};

struct FeedforwardSpec {
  int inputs = 2;
  int outputs = 1;
  int hidden_layers = 2;
  int neurons = 11;
  Activation hidden = Activation::Tanh;
  Activation output = Activation::Sigmoid;

  nlohmann::json to_json() const {
    return {{"inputs", inputs}, {"outputs", outputs}, {"hidden_layers", hidden_layers},
            {"neurons", neurons}, {"hidden", to_string(hidden)}, {"output", to_string(output)}};
  }
};

/// z_{i+1} = rho(W_i z_i + b_i) for i < K, output = rho_hat(W_K z_K + b_K).
class Feedforward {
 public:
  Feedforward() = default;
  Feedforward(ad::ParamStore& store, const FeedforwardSpec& spec, const std::string& prefix) : spec_(spec) {
    if (spec.hidden_layers < 1 || spec.neurons < 1 || spec.inputs < 1 || spec.outputs < 1)
      throw std::invalid_argument("Feedforward: K >= 1 and m >= 1 required");
    int in = spec.inputs;
    for (int i = 0; i <= spec.hidden_layers; ++i) {
      const int out = i == spec.hidden_layers ? spec.outputs : spec.neurons;
      weights_.push_back(store.add(prefix + "w" + std::to_string(i), out, in));
      biases_.push_back(store.add(prefix + "b" + std::to_string(i), out, 1));
      in = out;
    }
  }

  void init(ad::ParamStore& store, std::uint64_t seed) const {
    for (int w : weights_) store.init_glorot(w, derive_seed(seed, static_cast<std::uint64_t>(w)));
    for (int b : biases_) store.value(b).setZero();
  }

  ad::Var forward(ad::Tape& t, const ParamSource& p, ad::Var x) const {
    ad::Var z = x;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      z = t.affine(p.get(t, weights_[i]), z, p.get(t, biases_[i]));
      z = activate(t, z, i + 1 == weights_.size() ? spec_.output : spec_.hidden);
    }
    return z;
  }

  /// Convenience evaluation on a (inputs x batch) matrix.
  ad::Mat eval(const ad::ParamStore& store, const ad::Mat& x) const {
    ad::Tape t;
    return t.value(forward(t, ParamSource::frozen(store), t.constant(x)));
  }

  const FeedforwardSpec& spec() const { return spec_; }
  const std::vector<int>& weight_slices() const { return weights_; }
  const std::vector<int>& bias_slices() const { return biases_; }

 private:
  FeedforwardSpec spec_;
  std::vector<int> weights_, biases_;
};

/// Standard LSTM cell: gates = W x + U h + b split as (input, forget, output, candidate).
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(ad::ParamStore& store, int inputs, int units, const std::string& prefix) : inputs_(inputs), units_(units) {
    w_ = store.add(prefix + "W", 4 * units, inputs);
    u_ = store.add(prefix + "U", 4 * units, units);
    b_ = store.add(prefix + "b", 4 * units, 1);
  }

  void init(ad::ParamStore& store, std::uint64_t seed) const {
    store.init_glorot(w_, derive_seed(seed, 1));
    store.init_glorot(u_, derive_seed(seed, 2));
    store.value(b_).setZero();
  }

  struct State {
    ad::Var h, c;
  };

  State zero_state(ad::Tape& t, int batch) const {
    return {t.constant(ad::Mat::Zero(units_, batch)), t.constant(ad::Mat::Zero(units_, batch))};
  }

  /// Returns the next state; the features are the new hidden state h.
  State step(ad::Tape& t, const ParamSource& p, const State& s, ad::Var x) const {
    ad::Var gates = t.add_bias(t.add(t.matmul(p.get(t, w_), x), t.matmul(p.get(t, u_), s.h)), p.get(t, b_));
    ad::Var in = t.sigmoid(t.rows(gates, 0, units_));
    ad::Var forget = t.sigmoid(t.rows(gates, units_, units_));
    ad::Var out = t.sigmoid(t.rows(gates, 2 * units_, units_));
    ad::Var cand = t.tanh(t.rows(gates, 3 * units_, units_));
    ad::Var c = t.add(t.mul(forget, s.c), t.mul(in, cand));
    ad::Var h = t.mul(out, t.tanh(c));
    return {h, c};
  }

  int units() const { return units_; }
  int inputs() const { return inputs_; }

 private:
  int inputs_ = 1, units_ = 50;
  int w_ = -1, u_ = -1, b_ = -1;
};

/// Per-step inputs handed to a policy by the rollout.
struct StepInput {
  int step = 0;
  ad::Var features;  // normalized uncertainty features (k x B)
  ad::Var spot;      // normalized spot (1 x B)
  ad::Var stock;     // normalized stock levels (M x B)
};

enum class PolicyKind { PerStep, Merged, DeepSet, LstmFf };

inline const char* to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::PerStep: return "per-step";
    case PolicyKind::Merged: return "merged";
    case PolicyKind::DeepSet: return "deepset";
    case PolicyKind::LstmFf: return "lstm-ff";
  }
  return "?";
}

inline PolicyKind policy_kind_from_string(const std::string& s) {
  for (auto k : {PolicyKind::PerStep, PolicyKind::Merged, PolicyKind::DeepSet, PolicyKind::LstmFf})
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown policy kind '" + s + "'");
}

struct PolicyConfig {
  PolicyKind kind = PolicyKind::PerStep;
  int horizon = 365;
  int storages = 1;
  int feature_dim = 1;
  int hidden_layers = 2;
  int neurons = 0;  // 0 -> 10 + M
  int deepset_width = 32;
  int lstm_units = 50;
  bool lstm_shared_head = false;
  std::uint64_t seed = 1;

  int resolved_neurons() const { return neurons > 0 ? neurons : 10 + storages; }

  nlohmann::json to_json() const {
    return {{"kind", to_string(kind)},         {"horizon", horizon},
            {"storages", storages},            {"feature_dim", feature_dim},
            {"hidden_layers", hidden_layers},  {"neurons", resolved_neurons()},
            {"deepset_width", deepset_width},  {"lstm_units", lstm_units},
            {"lstm_shared_head", lstm_shared_head}, {"seed", seed}};
  }

  static PolicyConfig from_json(const nlohmann::json& j) {
    PolicyConfig c;
    c.kind = policy_kind_from_string(j.value("kind", std::string(to_string(c.kind))));
    c.horizon = j.value("horizon", c.horizon);
    c.storages = j.value("storages", c.storages);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
    c.neurons = j.value("neurons", c.neurons);
    c.deepset_width = j.value("deepset_width", c.deepset_width);
    c.lstm_units = j.value("lstm_units", c.lstm_units);
    c.lstm_shared_head = j.value("lstm_shared_head", c.lstm_shared_head);
    c.seed = j.value("seed", c.seed);
    return c;
  }
};

/// Control approximator returning unit-interval outputs (M x B); admissible controls follow
/// from the clipping device.
class Policy {
 public:
  explicit Policy(PolicyConfig config) : config_(config) {}
  virtual ~Policy() = default;
  Policy(const Policy&) = delete;
  Policy& operator=(const Policy&) = delete;

  /// Recurrent state carried between steps (empty for Markov policies).
  virtual std::vector<ad::Var> initial_state(ad::Tape&, int /*batch*/) const { return {}; }

  virtual ad::Var unit_control(ad::Tape& t, const ParamSource& p, const StepInput& in,
                               std::vector<ad::Var>& state) const = 0;

  const PolicyConfig& config() const { return config_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

  nlohmann::json checkpoint() const { return params_to_json(params_, config_.to_json()); }

 protected:
  PolicyConfig config_;
  ad::ParamStore params_;
};

/// One feedforward network per decision date.
class PerStepPolicy : public Policy {
 public:
  explicit PerStepPolicy(PolicyConfig c) : Policy(c) {
    const FeedforwardSpec spec{c.feature_dim + c.storages, c.storages, c.hidden_layers, c.resolved_neurons(),
                               Activation::Tanh, Activation::Sigmoid};
    for (int i = 0; i < c.horizon; ++i) {
      nets_.emplace_back(params_, spec, "step" + std::to_string(i) + "/");
      nets_.back().init(params_, derive_seed(c.seed, static_cast<std::uint64_t>(i)));
    }
  }

  ad::Var unit_control(ad::Tape& t, const ParamSource& p, const StepInput& in, std::vector<ad::Var>&) const override {
    return nets_.at(in.step).forward(t, p, t.concat_rows({in.features, in.stock}));
  }

  const Feedforward& net(int step) const { return nets_.at(step); }

 private:
  std::vector<Feedforward> nets_;
};

/// A single network shared by all dates, with normalized time as an extra input.
class MergedPolicy : public Policy {
 public:
  explicit MergedPolicy(PolicyConfig c)
      : Policy(c),
        net_(params_,
             FeedforwardSpec{1 + c.feature_dim + c.storages, c.storages, c.hidden_layers, c.resolved_neurons(),
                             Activation::Tanh, Activation::Sigmoid},
             "merged/") {
    net_.init(params_, c.seed);
  }

  ad::Var unit_control(ad::Tape& t, const ParamSource& p, const StepInput& in, std::vector<ad::Var>&) const override {
    const auto cols = t.value(in.stock).cols();
    const double tn = config_.horizon > 1 ? static_cast<double>(in.step) / (config_.horizon - 1) : 0.0;
    ad::Var time = t.constant(ad::Mat::Constant(1, cols, tn));
    return net_.forward(t, p, t.concat_rows({time, in.features, in.stock}));
  }

  const Feedforward& net() const { return net_; }

 private:
  Feedforward net_;
};

/// Per-date DeepSet: phi_j = decoder(features, q_j, sum_k encoder(features, q_k)). The sum is
/// accumulated in sorted order, so permuting storages permutes the outputs bit for bit.
class DeepSetPolicy : public Policy {
 public:
  explicit DeepSetPolicy(PolicyConfig c) : Policy(c) {
    const int w = c.deepset_width;
    const FeedforwardSpec enc{c.feature_dim + 1, w, 1, w, Activation::Tanh, Activation::Tanh};
    const FeedforwardSpec dec{c.feature_dim + 1 + w, 1, 2, w, Activation::Tanh, Activation::Sigmoid};
    for (int i = 0; i < c.horizon; ++i) {
      const std::string s = "step" + std::to_string(i);
      encoders_.emplace_back(params_, enc, s + "/enc/");
      decoders_.emplace_back(params_, dec, s + "/dec/");
      encoders_.back().init(params_, derive_seed(c.seed, 2 * static_cast<std::uint64_t>(i)));
      decoders_.back().init(params_, derive_seed(c.seed, 2 * static_cast<std::uint64_t>(i) + 1));
    }
  }

  ad::Var unit_control(ad::Tape& t, const ParamSource& p, const StepInput& in, std::vector<ad::Var>&) const override {
    const auto& enc = encoders_.at(in.step);
    const auto& dec = decoders_.at(in.step);
    const int m = static_cast<int>(t.value(in.stock).rows());
    std::vector<ad::Var> own(m), codes(m), outs(m);
    for (int j = 0; j < m; ++j) {
      own[j] = t.rows(in.stock, j, 1);
      codes[j] = enc.forward(t, p, t.concat_rows({in.features, own[j]}));
    }
    ad::Var pooled = t.sorted_sum(codes);
    for (int j = 0; j < m; ++j) outs[j] = dec.forward(t, p, t.concat_rows({in.features, own[j], pooled}));
    return m == 1 ? outs[0] : t.concat_rows(outs);
  }

 private:
  std::vector<Feedforward> encoders_, decoders_;
};

/// LSTM over the normalized spot history feeding a feedforward head with the stock levels.
class LstmFfPolicy : public Policy {
 public:
  explicit LstmFfPolicy(PolicyConfig c) : Policy(c), cell_(params_, 1, c.lstm_units, "lstm/") {
    cell_.init(params_, derive_seed(c.seed, 0xbeef));
    const FeedforwardSpec head{c.lstm_units + c.storages, c.storages, c.hidden_layers, c.resolved_neurons(),
                               Activation::Tanh, Activation::Sigmoid};
    const int heads = c.lstm_shared_head ? 1 : c.horizon;
    for (int i = 0; i < heads; ++i) {
      heads_.emplace_back(params_, head, "head" + std::to_string(i) + "/");
      heads_.back().init(params_, derive_seed(c.seed, static_cast<std::uint64_t>(i)));
    }
  }

  std::vector<ad::Var> initial_state(ad::Tape& t, int batch) const override {
    auto s = cell_.zero_state(t, batch);
    return {s.h, s.c};
  }

  ad::Var unit_control(ad::Tape& t, const ParamSource& p, const StepInput& in,
                       std::vector<ad::Var>& state) const override {
    auto next = cell_.step(t, p, {state.at(0), state.at(1)}, in.spot);
    state = {next.h, next.c};
    const auto& head = heads_.at(config_.lstm_shared_head ? 0 : in.step);
    return head.forward(t, p, t.concat_rows({next.h, in.stock}));
  }

  const LstmCell& cell() const { return cell_; }

 private:
  LstmCell cell_;
  std::vector<Feedforward> heads_;
};

inline std::unique_ptr<Policy> make_policy(const PolicyConfig& c) {
  if (c.horizon < 1 || c.storages < 1 || c.feature_dim < 1) throw std::invalid_argument("make_policy: bad dimensions");
  switch (c.kind) {
    case PolicyKind::PerStep: return std::make_unique<PerStepPolicy>(c);
    case PolicyKind::Merged: return std::make_unique<MergedPolicy>(c);
    case PolicyKind::DeepSet: return std::make_unique<DeepSetPolicy>(c);
    case PolicyKind::LstmFf: return std::make_unique<LstmFfPolicy>(c);
  }
  throw std::invalid_argument("make_policy: unknown kind");
}

}  // namespace resopt
