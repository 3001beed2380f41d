#pragma once

// Grid dynamic programming over stock levels with regression-based conditional expectations,
// plus exact recursions on small scenario trees.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <tuple>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "resopt/price_models.hpp"
#include "resopt/rng.hpp"
#include "resopt/stats.hpp"
#include "resopt/storage.hpp"

namespace resopt {

/// Sorted stock levels including 0 and q_max; piecewise-linear interpolation between levels.
struct StockGrid {
  std::vector<double> levels;
  double step = 0.0;  // > 0 when the levels are uniform

  static StockGrid uniform(double q_max, int points) {
    if (points < 2 || !(q_max > 0.0)) throw std::invalid_argument("StockGrid: need >= 2 points and q_max > 0");
    StockGrid g;
    for (int k = 0; k < points; ++k) g.levels.push_back(q_max * k / (points - 1));
    g.levels.back() = q_max;
    g.step = q_max / (points - 1);
    return g;
  }

  void validate(double q_max) const {
    if (levels.size() < 2 || levels.front() != 0.0 || levels.back() != q_max)
      throw std::invalid_argument("StockGrid: endpoints must be 0 and q_max");
    for (std::size_t k = 1; k < levels.size(); ++k)
      if (!(levels[k] > levels[k - 1])) throw std::invalid_argument("StockGrid: levels must increase strictly");
  }

  int size() const { return static_cast<int>(levels.size()); }

  /// Interpolates values[0..size) at q, clamped to the grid range.
  double interpolate(const double* values, double q) const {
    if (q <= levels.front()) return values[0];
    if (q >= levels.back()) return values[levels.size() - 1];
    std::size_t k;
    if (step > 0.0) {
      k = std::min(static_cast<std::size_t>(q / step) + 1, levels.size() - 1);
      if (levels[k - 1] > q) --k;
      else if (levels[k] <= q) ++k;
    } else {
      k = static_cast<std::size_t>(std::upper_bound(levels.begin(), levels.end(), q) - levels.begin());
    }
    const double lo = levels[k - 1], hi = levels[k];
    const double w = (q - lo) / (hi - lo);
    if (w == 0.0) return values[k - 1];
    return (1.0 - w) * values[k - 1] + w * values[k];
  }
};

/// Local affine regression on a partition into equal-count bins per coordinate.
class LocalAffineRegressor {
 public:
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  explicit LocalAffineRegressor(int cells_per_dim = 50) : cells_per_dim_(cells_per_dim) {
    if (cells_per_dim < 1) throw std::invalid_argument("LocalAffineRegressor: cells_per_dim >= 1");
  }

  /// X: d x P explanatory samples, Y: P x G targets (one regression per column).
  void fit(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
    dim_ = static_cast<int>(X.rows());
    const Eigen::Index P = X.cols();
    if (Y.rows() != P || P < 1) throw std::invalid_argument("LocalAffineRegressor::fit: shape mismatch");
    targets_ = static_cast<int>(Y.cols());
    edges_.assign(dim_, {});
    std::vector<double> buf(static_cast<std::size_t>(P));
    for (int d = 0; d < dim_; ++d) {
      for (Eigen::Index p = 0; p < P; ++p) buf[p] = X(d, p);
      std::sort(buf.begin(), buf.end());
      for (int c = 1; c < cells_per_dim_; ++c) {
        const double e = buf[static_cast<std::size_t>(static_cast<double>(c) * P / cells_per_dim_)];
        if (edges_[d].empty() || e > edges_[d].back()) edges_[d].push_back(e);
      }
    }
    n_cells_ = 1;
    for (int d = 0; d < dim_; ++d) n_cells_ *= static_cast<int>(edges_[d].size()) + 1;

    std::vector<int> cell(static_cast<std::size_t>(P));
    std::vector<std::vector<Eigen::Index>> members(n_cells_);
    for (Eigen::Index p = 0; p < P; ++p) {
      cell[p] = locate(X.col(p).data());
      members[cell[p]].push_back(p);
    }
    coef_.assign(n_cells_, Eigen::MatrixXd());
    center_.assign(n_cells_, Eigen::VectorXd());
    lo_.assign(n_cells_, Eigen::VectorXd());
    hi_.assign(n_cells_, Eigen::VectorXd());
    const RowMat Yr = Y;
    std::vector<Eigen::Index> all(static_cast<std::size_t>(P));
    for (Eigen::Index p = 0; p < P; ++p) all[p] = p;
    fit_cell(X, Yr, all, global_coef_, global_center_, global_lo_, global_hi_);
    fallbacks_ = 0;
    for (int c = 0; c < n_cells_; ++c) {
      if (static_cast<int>(members[c].size()) < dim_ + 2) {
        ++fallbacks_;
        continue;  // uses the global fit
      }
      fit_cell(X, Yr, members[c], coef_[c], center_[c], lo_[c], hi_[c]);
    }
  }

  /// Predictions for every target at one point.
  void predict(const double* x, double* out) const {
    const int c = locate(x);
    const bool local = coef_[c].size() > 0;
    const Eigen::MatrixXd& K = local ? coef_[c] : global_coef_;
    const Eigen::VectorXd& m = local ? center_[c] : global_center_;
    const Eigen::VectorXd& lo = local ? lo_[c] : global_lo_;
    const Eigen::VectorXd& hi = local ? hi_[c] : global_hi_;
    for (int g = 0; g < targets_; ++g) out[g] = K(0, g);
    for (int d = 0; d < dim_; ++d) {
      const double dx = std::clamp(x[d], lo(d), hi(d)) - m(d);
      if (dx == 0.0) continue;
      for (int g = 0; g < targets_; ++g) out[g] += K(1 + d, g) * dx;
    }
  }

  RowMat predict_all(const Eigen::MatrixXd& X) const {
    RowMat out(X.cols(), targets_);
    for (Eigen::Index p = 0; p < X.cols(); ++p) predict(X.col(p).data(), out.row(p).data());
    return out;
  }

  int cells() const { return n_cells_; }
  int basis_functions() const { return n_cells_ * (dim_ + 1); }
  int fallback_cells() const { return fallbacks_; }
  int targets() const { return targets_; }

 private:
  int locate(const double* x) const {
    int idx = 0;
    for (int d = 0; d < dim_; ++d) {
      const auto& e = edges_[d];
      const int k = static_cast<int>(std::upper_bound(e.begin(), e.end(), x[d]) - e.begin());
      idx = idx * (static_cast<int>(e.size()) + 1) + k;
    }
    return idx;
  }

  /// Least squares on [1, x - mean]; coordinates without spread in the cell get zero slope.
  void fit_cell(const Eigen::MatrixXd& X, const RowMat& Y, const std::vector<Eigen::Index>& rows,
                Eigen::MatrixXd& coef, Eigen::VectorXd& center, Eigen::VectorXd& lo, Eigen::VectorXd& hi) const {
    const double n = static_cast<double>(rows.size());
    center = Eigen::VectorXd::Zero(dim_);
    lo = Eigen::VectorXd::Constant(dim_, kInf);
    hi = Eigen::VectorXd::Constant(dim_, -kInf);
    Eigen::VectorXd ymean = Eigen::VectorXd::Zero(targets_);
    for (Eigen::Index p : rows) {
      for (int d = 0; d < dim_; ++d) {
        const double x = X(d, p);
        center(d) += x;
        lo(d) = std::min(lo(d), x);
        hi(d) = std::max(hi(d), x);
      }
      ymean += Y.row(p).transpose();
    }
    center /= n;
    ymean /= n;
    Eigen::MatrixXd Sxx = Eigen::MatrixXd::Zero(dim_, dim_);
    Eigen::MatrixXd Sxy = Eigen::MatrixXd::Zero(dim_, targets_);
    Eigen::VectorXd dx(dim_);
    for (Eigen::Index p : rows) {
      for (int d = 0; d < dim_; ++d) dx(d) = X(d, p) - center(d);
      const double* y = Y.row(p).data();
      for (int d = 0; d < dim_; ++d) {
        for (int e = 0; e < dim_; ++e) Sxx(d, e) += dx(d) * dx(e);
        for (int g = 0; g < targets_; ++g) Sxy(d, g) += dx(d) * (y[g] - ymean(g));
      }
    }
    coef = Eigen::MatrixXd::Zero(1 + dim_, targets_);
    coef.row(0) = ymean.transpose();
    std::vector<int> active;
    for (int d = 0; d < dim_; ++d)
      if (Sxx(d, d) > 1e-12 * n * (1.0 + center(d) * center(d))) active.push_back(d);
    if (active.empty()) return;
    const int k = static_cast<int>(active.size());
    Eigen::MatrixXd A(k, k), B(k, targets_);
    for (int i = 0; i < k; ++i) {
      B.row(i) = Sxy.row(active[i]);
      for (int j = 0; j < k; ++j) A(i, j) = Sxx(active[i], active[j]);
    }
    const Eigen::MatrixXd beta = A.ldlt().solve(B);
    for (int i = 0; i < k; ++i) coef.row(1 + active[i]) = beta.row(i);
  }

  static constexpr double kInf = std::numeric_limits<double>::infinity();
  int cells_per_dim_;
  int dim_ = 0, targets_ = 0, n_cells_ = 0, fallbacks_ = 0;
  std::vector<std::vector<double>> edges_;
  std::vector<Eigen::MatrixXd> coef_;
  std::vector<Eigen::VectorXd> center_, lo_, hi_;
  Eigen::MatrixXd global_coef_;
  Eigen::VectorXd global_center_, global_lo_, global_hi_;
};

enum class ControlRule { BangBang, Discrete };
enum class DpMode { CashFlow, Value };  // realized cash flows (Longstaff-Schwartz) or regressed values

struct DpConfig {
  int n_steps = 365;
  int grid_points = 21;
  ControlRule rule = ControlRule::BangBang;
  double control_step = 1.0;  // Discrete rule only
  double impact = 0.0;        // P; single storage so the price is S + P u
  DpMode mode = DpMode::CashFlow;
  int n_paths = 100000;
  int cells_per_dim = 50;
  std::uint64_t seed = 1;
};

/// Candidate controls at stock q: bang-bang {-cw_hat, 0, ci_hat} or a grid of multiples of step
/// between the clipped bounds (bounds included).
inline void candidate_controls(double q, const StorageSpec& spec, ControlRule rule, double step,
                               std::vector<double>& u) {
  const double cw = q - std::max(q - spec.c_withdraw, 0.0);
  const double ci = std::min(q + spec.c_inject, spec.q_max) - q;
  u.clear();
  u.push_back(-cw);
  if (rule == ControlRule::BangBang) {
    if (cw > 0.0) u.push_back(0.0);
    if (ci > 0.0) u.push_back(ci);
    return;
  }
  if (!(step > 0.0)) throw std::invalid_argument("candidate_controls: step must be positive");
  for (double k = std::floor(-cw / step) + 1; k * step < ci; k += 1.0)
    if (k * step > -cw) u.push_back(k * step);
  if (ci > -cw) u.push_back(ci);
}

inline std::vector<double> candidate_controls(double q, const StorageSpec& spec, ControlRule rule, double step) {
  std::vector<double> u;
  candidate_controls(q, spec, rule, step, u);
  return u;
}

inline double impacted_cash(double spot, double u, double impact) { return -(spot + impact * u) * u; }

/// Backward-induction output: per-date continuation regressions and the averaged Bellman table.
struct BellmanTable {
  StockGrid grid;
  DpConfig config;
  StorageSpec spec;
  std::vector<LocalAffineRegressor> continuation;  // date i < N-1: E[. at i+1 | factors at i]
  std::vector<std::vector<double>> mean_value;     // [date][level]: sample mean of V_i(., q)
  double value = 0.0;                               // optimization-phase value at q_init
  int fallback_cells = 0;
};

inline void write_bellman_csv(std::ostream& os, const BellmanTable& t) {
  os << "date,level,value\n";
  os.precision(12);
  for (std::size_t i = 0; i < t.mean_value.size(); ++i)
    for (int g = 0; g < t.grid.size(); ++g) os << i << ',' << t.grid.levels[g] << ',' << t.mean_value[i][g] << '\n';
}

namespace detail {

/// Best decision at (spot, q) given continuation values on the grid.
struct Decision {
  double u = 0.0, cash = 0.0, score = -std::numeric_limits<double>::infinity();
};

inline Decision decide(double spot, double q, const StorageSpec& spec, const DpConfig& cfg, const StockGrid& grid,
                       const double* cont) {
  thread_local std::vector<double> candidates;
  candidate_controls(q, spec, cfg.rule, cfg.control_step, candidates);
  Decision best;
  for (double u : candidates) {
    const double cash = impacted_cash(spot, u, cfg.impact);
    const double s = cash + (cont ? grid.interpolate(cont, q + u) : 0.0);
    if (s > best.score) best = {u, cash, s};
  }
  return best;
}

/// Candidate move from a grid level: control u and the interpolation stencil of q + u.
struct Move {
  double u;
  int k;     // upper stencil index (>= 1)
  double w;  // weight on levels[k]
};

inline std::vector<std::vector<Move>> grid_moves(const StockGrid& grid, const StorageSpec& spec, const DpConfig& cfg) {
  std::vector<std::vector<Move>> moves(grid.levels.size());
  std::vector<double> cand;
  for (std::size_t g = 0; g < grid.levels.size(); ++g) {
    const double q = grid.levels[g];
    candidate_controls(q, spec, cfg.rule, cfg.control_step, cand);
    for (double u : cand) {
      const double qn = std::clamp(q + u, 0.0, spec.q_max);
      // Stencil chosen so that (1 - w) v[k-1] + w v[k] reproduces StockGrid::interpolate.
      std::vector<double> probe(grid.levels.size(), 0.0);
      int k = 1;
      double w = 0.0;
      for (std::size_t j = 0; j < probe.size(); ++j) {
        probe[j] = 1.0;
        const double c = grid.interpolate(probe.data(), qn);
        probe[j] = 0.0;
        if (c != 0.0 && j >= 1) k = static_cast<int>(j), w = c;
        if (c != 0.0 && j == 0 && c == 1.0) k = 1, w = 0.0;
      }
      moves[g].push_back({u, k, w});
    }
  }
  return moves;
}

inline double apply_move(const Move& m, const double* v) {
  return m.w == 0.0 ? v[m.k - 1] : (m.w == 1.0 ? v[m.k] : (1.0 - m.w) * v[m.k - 1] + m.w * v[m.k]);
}

inline Eigen::MatrixXd factors_at(const PathBatch& b, int step) {
  Eigen::MatrixXd X(b.n_factors, b.n_paths);
  for (int p = 0; p < b.n_paths; ++p)
    for (int k = 0; k < b.n_factors; ++k) X(k, p) = b.factor_at(p, step, k);
  return X;
}

}  // namespace detail

/// Monte-Carlo regression DP on a single storage.
inline BellmanTable solve_dp(const ForwardModel& model, const StorageSpec& spec, const DpConfig& cfg) {
  spec.validate();
  if (cfg.n_steps < 1 || cfg.n_paths < 1) throw std::invalid_argument("solve_dp: N and path count must be >= 1");
  BellmanTable t;
  t.grid = StockGrid::uniform(spec.q_max, cfg.grid_points);
  t.config = cfg;
  t.spec = spec;
  const int N = cfg.n_steps, P = cfg.n_paths, G = t.grid.size();
  const PathBatch paths = sample_paths(model, P, N, derive_seed(cfg.seed, 0x0d9));
  t.continuation.assign(std::max(0, N - 1), LocalAffineRegressor(cfg.cells_per_dim));
  t.mean_value.assign(N, std::vector<double>(G, 0.0));

  const auto moves = detail::grid_moves(t.grid, spec, cfg);
  Eigen::MatrixXd next = Eigen::MatrixXd::Zero(P, G);  // realized (or estimated) value from i+1 on
  Eigen::MatrixXd cur(P, G), cont;
  // Row-major copies give contiguous per-path rows for interpolation.
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMat cont_rm, next_rm;
  for (int i = N - 1; i >= 0; --i) {
    const bool last = i == N - 1;
    if (!last) {
      auto& reg = t.continuation[i];
      const Eigen::MatrixXd X = detail::factors_at(paths, i);
      reg.fit(X, next);
      t.fallback_cells += reg.fallback_cells();
      cont_rm = reg.predict_all(X);
      next_rm = next;
    }
    for (int p = 0; p < P; ++p) {
      const double s = paths.spot_at(p, i);
      const double* c = last ? nullptr : cont_rm.row(p).data();
      const double* nx = last ? nullptr : next_rm.row(p).data();
      for (int g = 0; g < G; ++g) {
        double best = -std::numeric_limits<double>::infinity(), keep = 0.0;
        for (const auto& mv : moves[g]) {
          const double cash = impacted_cash(s, mv.u, cfg.impact);
          const double score = cash + (c ? detail::apply_move(mv, c) : 0.0);
          if (score > best) {
            best = score;
            keep = (c && cfg.mode == DpMode::CashFlow) ? cash + detail::apply_move(mv, nx) : score;
          }
        }
        cur(p, g) = keep;
      }
    }
    for (int g = 0; g < G; ++g) t.mean_value[i][g] = cur.col(g).mean();
    next = cur;
  }
  t.value = t.grid.interpolate(t.mean_value[0].data(), spec.q_init);
  return t;
}

/// Forward rollout on fresh paths, deciding with the regressed continuation values.
inline SimulationResult simulate_dp_policy(const BellmanTable& t, const ForwardModel& model, int n_paths,
                                           std::uint64_t seed) {
  const int N = t.config.n_steps, G = t.grid.size();
  const PathBatch paths = sample_paths(model, n_paths, N, derive_seed(seed, 0x51a));
  std::vector<double> cont(static_cast<std::size_t>(G)), x(static_cast<std::size_t>(paths.n_factors));
  std::vector<double> totals(static_cast<std::size_t>(n_paths));
  for (int p = 0; p < n_paths; ++p) {
    double q = t.spec.q_init, total = 0.0;
    for (int i = 0; i < N; ++i) {
      const bool last = i == N - 1;
      if (!last) {
        for (int k = 0; k < paths.n_factors; ++k) x[k] = paths.factor_at(p, i, k);
        t.continuation[i].predict(x.data(), cont.data());
      }
      const auto d = detail::decide(paths.spot_at(p, i), q, t.spec, t.config, t.grid, last ? nullptr : cont.data());
      total += d.cash;
      q = std::clamp(q + d.u, 0.0, t.spec.q_max);
    }
    totals[p] = total;
  }
  return mean_and_error(totals);
}

enum class TreeKind { Binomial, GaussHermite3 };

/// Non-recombining one-factor scenario tree; node k at level i has children k*b .. k*b+b-1.
struct ScenarioTree {
  int branching = 2;
  std::vector<double> shocks, probs;
  std::vector<std::vector<double>> spot;    // [level][node]
  std::vector<std::vector<double>> factor;  // [level][node]

  int levels() const { return static_cast<int>(spot.size()); }
  std::size_t nodes() const {
    std::size_t n = 0;
    for (const auto& l : spot) n += l.size();
    return n;
  }
};

inline ScenarioTree build_tree(const ForwardModel& model, int n_steps, TreeKind kind, std::size_t max_nodes = 1u << 20) {
  if (model.factors() != 1) throw std::invalid_argument("build_tree: one-factor models only");
  if (n_steps < 1) throw std::invalid_argument("build_tree: N >= 1 required");
  ScenarioTree t;
  if (kind == TreeKind::Binomial) {
    t.branching = 2, t.shocks = {-1.0, 1.0}, t.probs = {0.5, 0.5};
  } else {
    t.branching = 3, t.shocks = {-std::sqrt(3.0), 0.0, std::sqrt(3.0)}, t.probs = {1.0 / 6, 2.0 / 3, 1.0 / 6};
  }
  double total = 0.0, width = 1.0;
  for (int i = 0; i < n_steps; ++i, width *= t.branching) total += width;
  if (total > static_cast<double>(max_nodes)) throw std::runtime_error("build_tree: node count exceeds max_nodes");
  t.spot.assign(n_steps, {});
  t.factor.assign(n_steps, {});
  t.factor[0] = {0.0};
  t.spot[0] = {model.spot(std::vector<double>{0.0}, 0.0)};
  for (int i = 1; i < n_steps; ++i) {
    const double time = i * model.dt;
    for (double y : t.factor[i - 1])
      for (double e : t.shocks) {
        FactorState s{{y}, time - model.dt};
        const double eps[1] = {e};
        const auto next = factor_step(s, model.params, model.dt, eps);
        t.factor[i].push_back(next.y[0]);
        t.spot[i].push_back(model.spot(next.y, time));
      }
  }
  return t;
}

/// Grid DP on a tree with exact expectations (no regression).
inline BellmanTable solve_dp_tree(const ScenarioTree& tree, const StorageSpec& spec, DpConfig cfg) {
  spec.validate();
  cfg.n_steps = tree.levels();
  BellmanTable t;
  t.grid = StockGrid::uniform(spec.q_max, cfg.grid_points);
  t.config = cfg;
  t.spec = spec;
  const int G = t.grid.size(), b = tree.branching;
  t.mean_value.assign(tree.levels(), std::vector<double>(G, 0.0));
  std::vector<double> next, cur, cont(static_cast<std::size_t>(G));
  for (int i = tree.levels() - 1; i >= 0; --i) {
    const auto n = tree.spot[i].size();
    cur.assign(n * G, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const bool last = i == tree.levels() - 1;
      if (!last) {
        std::fill(cont.begin(), cont.end(), 0.0);
        for (int c = 0; c < b; ++c)
          for (int g = 0; g < G; ++g) cont[g] += tree.probs[c] * next[(k * b + c) * G + g];
      }
      for (int g = 0; g < G; ++g) {
        const auto d = detail::decide(tree.spot[i][k], t.grid.levels[g], spec, cfg, t.grid, last ? nullptr : cont.data());
        cur[k * G + g] = d.score;
      }
    }
    for (int g = 0; g < G; ++g) {
      double m = 0.0;
      for (std::size_t k = 0; k < n; ++k) m += cur[k * G + g];
      t.mean_value[i][g] = m / static_cast<double>(n);
    }
    next.swap(cur);
  }
  t.value = t.grid.interpolate(next.data(), spec.q_init);
  return t;
}

/// Exact recursion on the tree over reachable stock values (memoized), no grid.
inline double brute_force_tiny(const ScenarioTree& tree, const StorageSpec& spec, ControlRule rule = ControlRule::BangBang,
                               double control_step = 1.0, double impact = 0.0, std::size_t max_states = 1u << 22) {
  spec.validate();
  std::map<std::tuple<int, std::size_t, double>, double> memo;
  std::function<double(int, std::size_t, double)> value = [&](int i, std::size_t k, double q) -> double {
    if (i == tree.levels()) return 0.0;
    const auto key = std::make_tuple(i, k, q);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    if (memo.size() >= max_states) throw std::runtime_error("brute_force_tiny: state count exceeds the guard");
    double best = -std::numeric_limits<double>::infinity();
    for (double u : candidate_controls(q, spec, rule, control_step)) {
      double v = impacted_cash(tree.spot[i][k], u, impact);
      const double qn = std::clamp(q + u, 0.0, spec.q_max);
      if (i + 1 < tree.levels())
        for (int c = 0; c < tree.branching; ++c)
          v += tree.probs[c] * value(i + 1, k * tree.branching + c, qn);
      best = std::max(best, v);
    }
    memo.emplace(key, best);
    return best;
  };
  return value(0, 0, spec.q_init);
}

}  // namespace resopt
