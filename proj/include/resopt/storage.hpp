#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "resopt/autodiff.hpp"

namespace resopt {

/// One reservoir: rates are volumes per decision step.
struct StorageSpec {
  double c_inject = 5.0;
  double c_withdraw = 10.0;
  double q_max = 100.0;
  double q_init = 50.0;

  void validate() const {
    if (!(c_inject > 0.0) || !(c_withdraw > 0.0)) throw std::invalid_argument("StorageSpec: rates must be positive");
    if (!(q_max > 0.0) || q_init < 0.0 || q_init > q_max)
      throw std::invalid_argument("StorageSpec: need 0 <= q_init <= q_max");
  }
};

using StockVector = std::vector<double>;

struct FlowBounds {
  std::vector<double> cw_hat;  // room to withdraw
  std::vector<double> ci_hat;  // room to inject
};

/// Clipped capacities: ci = min(q + C_I, Q_max) - q, cw = q - max(q - C_W, 0).
inline FlowBounds effective_bounds(const StockVector& q, const std::vector<StorageSpec>& specs) {
  if (q.size() != specs.size()) throw std::invalid_argument("effective_bounds: dimension mismatch");
  FlowBounds b{std::vector<double>(q.size()), std::vector<double>(q.size())};
  for (std::size_t j = 0; j < q.size(); ++j) {
    const auto& s = specs[j];
    if (q[j] < 0.0 || q[j] > s.q_max) throw std::invalid_argument("effective_bounds: stock outside [0, q_max]");
    b.ci_hat[j] = std::min(q[j] + s.c_inject, s.q_max) - q[j];
    b.cw_hat[j] = q[j] - std::max(q[j] - s.c_withdraw, 0.0);
  }
  return b;
}

/// u = -cw + (cw + ci) * phi for phi in [0,1]^M.
inline std::vector<double> control_from_unit(const FlowBounds& bounds, const std::vector<double>& phi) {
  if (phi.size() != bounds.cw_hat.size()) throw std::invalid_argument("control_from_unit: dimension mismatch");
  std::vector<double> u(phi.size());
  for (std::size_t j = 0; j < phi.size(); ++j) {
    if (!(phi[j] >= 0.0 && phi[j] <= 1.0)) throw std::invalid_argument("control_from_unit: phi outside [0,1]");
    u[j] = -bounds.cw_hat[j] + (bounds.cw_hat[j] + bounds.ci_hat[j]) * phi[j];
  }
  return u;
}

inline StockVector apply_control(const StockVector& q, const std::vector<double>& u) {
  if (q.size() != u.size()) throw std::invalid_argument("apply_control: dimension mismatch");
  StockVector next(q.size());
  for (std::size_t j = 0; j < q.size(); ++j) next[j] = q[j] + u[j];
  return next;
}

struct PriceImpact {
  double coefficient = 0.0;  // P
  int storages = 1;          // M
};

/// Cash received over one step: -price * u summed over storages (buying costs, selling earns).
/// With impact the execution price is spot + (P/M) * sum(u).
inline double step_cashflow(double spot, const std::vector<double>& u, std::optional<PriceImpact> impact = {}) {
  double total = 0.0;
  for (double v : u) total += v;
  const double price = impact ? spot + impact->coefficient / impact->storages * total : spot;
  return -price * total;
}

/// Tape versions of the storage dynamics: stocks are (M x batch) nodes and gradients flow
/// through the clipping (ties take the unclipped branch).
struct TapeStorage {
  ad::Vec c_inject, c_withdraw, q_max, zero;

  explicit TapeStorage(const std::vector<StorageSpec>& specs)
      : c_inject(specs.size()), c_withdraw(specs.size()), q_max(specs.size()), zero(ad::Vec::Zero(specs.size())) {
    for (std::size_t j = 0; j < specs.size(); ++j) {
      c_inject(j) = specs[j].c_inject;
      c_withdraw(j) = specs[j].c_withdraw;
      q_max(j) = specs[j].q_max;
    }
  }

  int size() const { return static_cast<int>(q_max.size()); }

  /// Returns (cw_hat, ci_hat).
  std::pair<ad::Var, ad::Var> bounds(ad::Tape& tape, ad::Var q) const {
    ad::Var plus = tape.add_bias(q, tape.constant(c_inject));
    ad::Var ci = tape.sub(tape.min_const(plus, q_max), q);
    ad::Var minus = tape.add_bias(q, tape.constant(-c_withdraw));
    ad::Var cw = tape.sub(q, tape.max_const(minus, zero));
    return {cw, ci};
  }

  /// Control from a unit-interval network output, plus the resulting stock.
  std::pair<ad::Var, ad::Var> step(ad::Tape& tape, ad::Var q, ad::Var phi) const {
    auto [cw, ci] = bounds(tape, q);
    ad::Var u = tape.sub(tape.mul(tape.add(cw, ci), phi), cw);
    return {u, tape.add(q, u)};
  }

  /// Per-path cash (1 x batch) for controls u (M x batch) and spot row (1 x batch).
  static ad::Var cashflow(ad::Tape& tape, ad::Var spot, ad::Var u, const std::optional<PriceImpact>& impact) {
    ad::Var total = tape.sum_rows(u);
    ad::Var cash = tape.neg(tape.mul(spot, total));
    if (impact && impact->coefficient != 0.0)
      cash = tape.sub(cash, tape.scale(tape.square(total), impact->coefficient / impact->storages));
    return cash;
  }
};

}  // namespace resopt
