#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "resopt/rng.hpp"

namespace resopt {

/// Mean-reverting volatility factors of the lognormal HJM forward dynamics
/// dF(t,T)/F(t,T) = sum_k exp(-a_k (T-t)) sigma_k dW^k_t. Units: days.
struct HjmParams {
  std::vector<double> sigma;
  std::vector<double> a;

  static HjmParams one_factor(double sigma, double a) { return HjmParams{{sigma}, {a}}; }
  static HjmParams three_factor(std::array<double, 3> sigma, std::array<double, 3> a) {
    return HjmParams{{sigma.begin(), sigma.end()}, {a.begin(), a.end()}};
  }

  std::size_t factors() const { return sigma.size(); }

  void validate() const {
    if (sigma.empty() || sigma.size() != a.size() || sigma.size() > 4)
      throw std::invalid_argument("HjmParams: need 1..4 factors with matching sigma/a");
    for (std::size_t k = 0; k < sigma.size(); ++k) {
      if (!(sigma[k] >= 0.0) || !std::isfinite(sigma[k]))
        throw std::invalid_argument("HjmParams: sigma must be finite and non-negative");
      if (!(a[k] > 0.0) || !std::isfinite(a[k]))
        throw std::invalid_argument("HjmParams: mean reversion must be positive");
    }
  }
};

using OneFactorParams = HjmParams;
using ThreeFactorParams = HjmParams;

/// Initial forward curve F(0,T) = base + sum amp * cos(2 pi T / period).
struct SeasonalCurve {
  struct Term {
    double amplitude = 0.0;
    double period = 1.0;
  };
  double base = 30.0;
  std::vector<Term> terms;

  double operator()(double t) const {
    double v = base;
    for (const auto& term : terms) v += term.amplitude * std::cos(2.0 * std::numbers::pi * t / term.period);
    return v;
  }

  // Conservative positivity check: base minus every amplitude.
  bool strictly_positive() const {
    double lo = base;
    for (const auto& term : terms) lo -= std::abs(term.amplitude);
    return lo > 0.0;
  }
};

struct FactorState {
  std::vector<double> y;
  double t = 0.0;
};

struct PricePath {
  std::vector<double> spot;
  std::vector<FactorState> factors;
};

/// Spot model: exact Ornstein-Uhlenbeck factor transitions plus lognormal reconstruction of
/// S_t = F(t,t).
struct ForwardModel {
  HjmParams params;
  SeasonalCurve curve;
  double dt = 1.0;

  void validate() const {
    params.validate();
    if (!(dt > 0.0)) throw std::invalid_argument("ForwardModel: dt must be positive");
    if (!curve.strictly_positive()) throw std::invalid_argument("ForwardModel: forward curve must stay positive");
  }

  std::size_t factors() const { return params.factors(); }

  /// Var of factor k accumulated from 0 to t.
  double factor_variance(std::size_t k, double t) const {
    const double s = params.sigma[k], a = params.a[k];
    return s * s * (-std::expm1(-2.0 * a * t)) / (2.0 * a);
  }

  /// Var(log S_t) = sum_k sigma_k^2 (1 - e^{-2 a_k t}) / (2 a_k).
  double log_variance(double t) const {
    double v = 0.0;
    for (std::size_t k = 0; k < factors(); ++k) v += factor_variance(k, t);
    return v;
  }

  double stationary_sd(std::size_t k) const { return params.sigma[k] / std::sqrt(2.0 * params.a[k]); }

  double forward(double t) const { return curve(t); }

  double spot(std::span<const double> y, double t) const {
    double s = 0.0;
    for (double v : y) s += v;
    return curve(t) * std::exp(s - 0.5 * log_variance(t));
  }
};

/// Exact OU transition of every factor over `dt` days driven by standard normals `noise`.
inline FactorState factor_step(const FactorState& state, const HjmParams& params, double dt,
                               std::span<const double> noise) {
  if (!(dt > 0.0)) throw std::invalid_argument("factor_step: dt must be positive");
  if (noise.size() != params.factors() || state.y.size() != params.factors())
    throw std::invalid_argument("factor_step: dimension mismatch");
  FactorState next{std::vector<double>(state.y.size()), state.t + dt};
  for (std::size_t k = 0; k < state.y.size(); ++k) {
    if (!std::isfinite(noise[k])) throw std::invalid_argument("factor_step: non-finite noise");
    const double a = params.a[k];
    const double decay = std::exp(-a * dt);
    const double sd = params.sigma[k] * std::sqrt(-std::expm1(-2.0 * a * dt) / (2.0 * a));
    next.y[k] = state.y[k] * decay + sd * noise[k];
  }
  return next;
}

inline double spot_at(const FactorState& state, const SeasonalCurve& curve, const HjmParams& params) {
  ForwardModel m{params, curve, 1.0};
  return m.spot(state.y, state.t);
}

/// Execution price under linear impact: spot + (P/M) * total traded volume.
inline double impacted_price(double spot, double total_control, double impact, int storages) {
  if (storages < 1) throw std::invalid_argument("impacted_price: need at least one storage");
  return spot + impact / storages * total_control;
}

/// Dense batch of simulated paths. Row-major by path.
struct PathBatch {
  int n_paths = 0;
  int n_steps = 0;
  int n_factors = 0;
  int first_step = 0;  // date index of column 0
  double dt = 1.0;
  std::vector<double> spot;     // [path * n_steps + step]
  std::vector<double> factors;  // [(path * n_steps + step) * n_factors + k]

  double spot_at(int path, int step) const { return spot[static_cast<std::size_t>(path) * n_steps + step]; }
  double factor_at(int path, int step, int k) const {
    return factors[(static_cast<std::size_t>(path) * n_steps + step) * n_factors + k];
  }
  std::span<const double> factor_state(int path, int step) const {
    return {factors.data() + (static_cast<std::size_t>(path) * n_steps + step) * n_factors,
            static_cast<std::size_t>(n_factors)};
  }

  PricePath path(int i) const {
    PricePath p;
    p.spot.reserve(n_steps);
    for (int s = 0; s < n_steps; ++s) {
      p.spot.push_back(spot_at(i, s));
      auto y = factor_state(i, s);
      p.factors.push_back(FactorState{{y.begin(), y.end()}, (first_step + s) * dt});
    }
    return p;
  }
};

namespace detail {
inline constexpr std::uint64_t kJumpCounterBase = 1ULL << 40;
inline std::uint64_t step_counter(std::uint64_t step, std::uint64_t k) { return (step << 2) | k; }
}  // namespace detail

/// Simulates dates first_step .. first_step+n_steps-1 for streams first_stream .. +n_paths-1.
/// The state at first_step is drawn by one exact jump from t=0, then daily transitions follow.
/// Path noise depends only on (seed, stream, date), never on batch layout.
inline PathBatch sample_window(const ForwardModel& model, std::uint64_t seed, std::uint64_t first_stream,
                               int n_paths, int first_step, int n_steps) {
  if (n_paths < 1 || n_steps < 1 || first_step < 0)
    throw std::invalid_argument("sample_window: n_paths, n_steps must be >= 1");
  const CounterRng rng(seed);
  const int nf = static_cast<int>(model.factors());
  PathBatch batch;
  batch.n_paths = n_paths;
  batch.n_steps = n_steps;
  batch.n_factors = nf;
  batch.first_step = first_step;
  batch.dt = model.dt;
  batch.spot.resize(static_cast<std::size_t>(n_paths) * n_steps);
  batch.factors.resize(static_cast<std::size_t>(n_paths) * n_steps * nf);

  std::vector<double> decay(nf), sd(nf), jump_decay(nf), jump_sd(nf);
  const double t0 = first_step * model.dt;
  for (int k = 0; k < nf; ++k) {
    const double a = model.params.a[k];
    decay[k] = std::exp(-a * model.dt);
    sd[k] = model.params.sigma[k] * std::sqrt(-std::expm1(-2.0 * a * model.dt) / (2.0 * a));
    jump_sd[k] = std::sqrt(model.factor_variance(k, t0));
  }
  std::vector<double> y(nf);
  for (int p = 0; p < n_paths; ++p) {
    const std::uint64_t stream = first_stream + static_cast<std::uint64_t>(p);
    for (int k = 0; k < nf; ++k)
      y[k] = first_step == 0 ? 0.0
                             : jump_sd[k] * rng.normal(stream, detail::kJumpCounterBase +
                                                                  detail::step_counter(first_step, k));
    for (int s = 0; s < n_steps; ++s) {
      if (s > 0) {
        const std::uint64_t date = static_cast<std::uint64_t>(first_step + s);
        for (int k = 0; k < nf; ++k) y[k] = y[k] * decay[k] + sd[k] * rng.normal(stream, detail::step_counter(date, k));
      }
      const std::size_t idx = static_cast<std::size_t>(p) * n_steps + s;
      std::copy(y.begin(), y.end(), batch.factors.begin() + static_cast<std::ptrdiff_t>(idx * nf));
      batch.spot[idx] = model.spot(y, (first_step + s) * model.dt);
    }
  }
  return batch;
}

inline PathBatch sample_paths(const ForwardModel& model, int n_paths, int n_steps, std::uint64_t seed,
                              std::uint64_t first_stream = 0) {
  return sample_window(model, seed, first_stream, n_paths, 0, n_steps);
}

/// CSV with columns path_id,step,spot.
inline void write_paths_csv(std::ostream& os, const PathBatch& batch) {
  os << "path_id,step,spot\n";
  os.precision(12);
  for (int p = 0; p < batch.n_paths; ++p)
    for (int s = 0; s < batch.n_steps; ++s) os << p << ',' << batch.first_step + s << ',' << batch.spot_at(p, s) << '\n';
}

/// Input scaling for networks, derived from the model so trained policies stay portable.
struct Normalization {
  double spot_center = 30.0;
  double spot_scale = 1.0;
  std::vector<double> factor_scale;
  int horizon = 1;

  double spot(double s) const { return (s - spot_center) / spot_scale; }
  double factor(std::size_t k, double y) const { return y / factor_scale[k]; }
  double time(int step) const { return horizon > 1 ? static_cast<double>(step) / (horizon - 1) : 0.0; }
};

inline Normalization make_normalization(const ForwardModel& model, int horizon) {
  Normalization n;
  n.horizon = horizon;
  double mean = 0.0;
  for (int i = 0; i < horizon; ++i) mean += model.forward(i * model.dt);
  mean /= horizon;
  double total_var = 0.0;
  for (std::size_t k = 0; k < model.factors(); ++k) {
    const double s = model.stationary_sd(k);
    total_var += s * s;
    n.factor_scale.push_back(s > 1e-12 ? s : 1.0);
  }
  n.spot_center = mean;
  n.spot_scale = mean * std::max(std::sqrt(total_var), 0.2);
  return n;
}

}  // namespace resopt
