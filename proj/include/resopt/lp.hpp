#pragma once

// Dense linear programming: maximize c.x subject to A x <= b and l <= x <= u.
//
// Primal active-set simplex on the inequality form. Bounds become rows; every row is scaled to
// unit 2-norm. A working set of n constraints defines the current point through its inverse
// basis. Coordinates without an active constraint are held by "pins" (x_j fixed), which must
// carry a zero multiplier at the optimum. Dantzig pricing, switching to Bland's rule after a run
// of degenerate steps.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "resopt/price_models.hpp"
#include "resopt/storage.hpp"

namespace resopt {

inline constexpr double kLpInf = std::numeric_limits<double>::infinity();

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
    case LpStatus::IterationLimit: return "iteration-limit";
  }
  return "?";
}

class LpProblem {
 public:
  explicit LpProblem(int n = 0)
      : n_(n), objective_(Eigen::VectorXd::Zero(n)), lower_(Eigen::VectorXd::Constant(n, -kLpInf)),
        upper_(Eigen::VectorXd::Constant(n, kLpInf)) {
    if (n < 0) throw std::invalid_argument("LpProblem: negative dimension");
  }

  int num_vars() const { return n_; }
  int num_rows() const { return static_cast<int>(rhs_.size()); }

  void set_objective(int j, double c) { objective_(j) = c; }
  void set_bounds(int j, double lo, double hi) {
    if (lo > hi) throw std::invalid_argument("LpProblem: lower bound above upper bound");
    lower_(j) = lo;
    upper_(j) = hi;
  }

  /// a . x <= rhs. Returns the row index.
  int add_row(std::span<const double> a, double rhs) {
    if (static_cast<int>(a.size()) != n_) throw std::invalid_argument("LpProblem::add_row: wrong length");
    coeffs_.insert(coeffs_.end(), a.begin(), a.end());
    rhs_.push_back(rhs);
    return num_rows() - 1;
  }
  int add_row(std::initializer_list<double> a, double rhs) { return add_row(std::span<const double>(a.begin(), a.size()), rhs); }

  double coeff(int r, int j) const { return coeffs_[static_cast<std::size_t>(r) * n_ + j]; }
  double rhs(int r) const { return rhs_[r]; }
  const Eigen::VectorXd& objective() const { return objective_; }
  const Eigen::VectorXd& lower() const { return lower_; }
  const Eigen::VectorXd& upper() const { return upper_; }

  void validate() const {
    auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(coeffs_.begin(), coeffs_.end(), finite) || !std::all_of(rhs_.begin(), rhs_.end(), finite) ||
        !objective_.allFinite())
      throw std::invalid_argument("LpProblem: non-finite coefficient");
    for (int j = 0; j < n_; ++j)
      if (std::isnan(lower_(j)) || std::isnan(upper_(j)) || lower_(j) > upper_(j))
        throw std::invalid_argument("LpProblem: bad bounds");
  }

  /// Plain-text listing for debugging.
  void write_listing(std::ostream& os) const {
    os.precision(17);
    os << "maximize";
    for (int j = 0; j < n_; ++j) os << ' ' << (objective_(j) >= 0 ? "+" : "") << objective_(j) << " x" << j;
    os << "\nsubject to\n";
    for (int r = 0; r < num_rows(); ++r) {
      os << "  r" << r << ':';
      for (int j = 0; j < n_; ++j)
        if (coeff(r, j) != 0.0) os << ' ' << (coeff(r, j) >= 0 ? "+" : "") << coeff(r, j) << " x" << j;
      os << " <= " << rhs_[r] << '\n';
    }
    os << "bounds\n";
    for (int j = 0; j < n_; ++j) os << "  " << lower_(j) << " <= x" << j << " <= " << upper_(j) << '\n';
  }

 private:
  int n_;
  Eigen::VectorXd objective_, lower_, upper_;
  std::vector<double> coeffs_;
  std::vector<double> rhs_;
};

struct LpOptions {
  double feasibility_tol = 1e-8;
  double optimality_tol = 1e-9;
  int max_iterations = 0;  // 0 -> 50 (m + n) + 1000
  int bland_after = 50;    // consecutive degenerate steps before Bland's rule
  int refactor_every = 64;
  bool vertex_cleanup = true;
};

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  Eigen::VectorXd x;
  double objective = 0.0;
  Eigen::VectorXd row_duals;    // >= 0, one per original row
  Eigen::VectorXd lower_duals;  // >= 0, multipliers of x_j >= l_j
  Eigen::VectorXd upper_duals;  // >= 0, multipliers of x_j <= u_j
  std::vector<int> active_rows;  // original rows in the final working set
  std::vector<int> working_set;  // internal constraint ids (pins as -1-j); a warm-start hint
  int iterations = 0;

  bool optimal() const { return status == LpStatus::Optimal; }

  /// b.y + u.y_u - l.y_l; equals the objective at an optimum.
  double dual_objective(const LpProblem& p) const {
    double v = 0.0;
    for (int r = 0; r < p.num_rows(); ++r) v += row_duals(r) * p.rhs(r);
    for (int j = 0; j < p.num_vars(); ++j) {
      if (upper_duals(j) != 0.0) v += upper_duals(j) * p.upper()(j);
      if (lower_duals(j) != 0.0) v -= lower_duals(j) * p.lower()(j);
    }
    return v;
  }
};

namespace detail {

/// Active-set iteration on normalized rows G x <= h (working-set ids >= rows are pins).
class ActiveSet {
 public:
  ActiveSet(const Eigen::MatrixXd& G, const Eigen::VectorXd& h, const Eigen::VectorXd& c, const LpOptions& opt)
      : G_(G), h_(h), c_(c), opt_(opt), m_(static_cast<int>(G.rows())), n_(static_cast<int>(G.cols())) {
    opt_tol_ = opt.optimality_tol * std::max(1.0, c.cwiseAbs().maxCoeff());
    ratio_.resize(m_);
  }

  bool is_pin(int id) const { return id >= m_; }

  /// Sets the point and working set; pins hold x_j at their current value.
  bool start(const Eigen::VectorXd& x, const std::vector<int>& working) {
    x_ = x;
    W_ = working;
    in_w_.assign(static_cast<std::size_t>(m_), 0);
    for (int id : W_)
      if (!is_pin(id)) in_w_[id] = 1;
    return refactor();
  }

  LpStatus run(int max_iter, int& iterations) {
    int degenerate = 0;
    Eigen::VectorXd lambda(n_), d(n_), ad(m_);
    while (true) {
      if (iterations >= max_iter) return LpStatus::IterationLimit;
      const bool bland = degenerate >= opt_.bland_after;
      lambda.noalias() = Binv_.transpose() * c_;
      int p = -1;
      double best = 0.0, sign = 0.0;
      for (int q = 0; q < n_; ++q) {
        double score = 0.0, s = 0.0;
        if (is_pin(W_[q])) {
          if (std::abs(lambda(q)) > opt_tol_) score = std::abs(lambda(q)), s = lambda(q) > 0 ? 1.0 : -1.0;
        } else if (lambda(q) < -opt_tol_) {
          score = -lambda(q), s = -1.0;
        }
        if (score == 0.0) continue;
        if (p < 0 || (bland ? W_[q] < W_[p] : score > best)) p = q, best = score, sign = s;
      }
      if (p < 0) return LpStatus::Optimal;

      d = sign * Binv_.col(p);
      ad.noalias() = G_ * d;
      const double piv_tol = 1e-9 * std::max(1.0, d.cwiseAbs().maxCoeff());
      // Two passes: the minimum ratio, then a tie-break among near-minimal rows.
      double tmin = kLpInf;
      for (int i = 0; i < m_; ++i) {
        if (in_w_[i] || ad(i) <= piv_tol) continue;
        ratio_(i) = std::max(0.0, h_(i) - G_.row(i).dot(x_)) / ad(i);
        tmin = std::min(tmin, ratio_(i));
      }
      int enter = -1;
      if (tmin < kLpInf) {
        const double band = tmin + 1e-12 * std::max(1.0, tmin);
        for (int i = 0; i < m_; ++i) {
          if (in_w_[i] || ad(i) <= piv_tol || ratio_(i) > band) continue;
          if (enter < 0 || (!bland && ad(i) > ad(enter))) enter = i;
        }
      }
      if (enter < 0) return LpStatus::Unbounded;
      x_ += tmin * d;
      pivot(p, enter);
      ++iterations;
      degenerate = tmin <= 1e-12 ? degenerate + 1 : 0;
      if (iterations % opt_.refactor_every == 0 && !refactor()) return LpStatus::IterationLimit;
    }
  }

  /// Swaps zero-multiplier pins for rows when a row is reachable along the pinned coordinate.
  void cleanup() {
    Eigen::VectorXd d(n_), ad(m_);
    for (int p = 0; p < n_; ++p) {
      if (!is_pin(W_[p])) continue;
      for (double s : {1.0, -1.0}) {
        d = s * Binv_.col(p);
        ad.noalias() = G_ * d;
        const double piv_tol = 1e-9 * std::max(1.0, d.cwiseAbs().maxCoeff());
        int enter = -1;
        double tmin = kLpInf;
        for (int i = 0; i < m_; ++i) {
          if (in_w_[i] || ad(i) <= piv_tol) continue;
          const double ti = std::max(0.0, h_(i) - G_.row(i).dot(x_)) / ad(i);
          if (ti < tmin) tmin = ti, enter = i;
        }
        if (enter >= 0) {
          x_ += tmin * d;
          pivot(p, enter);
          break;
        }
      }
    }
  }

  Eigen::VectorXd multipliers() const { return Binv_.transpose() * c_; }
  const Eigen::VectorXd& x() const { return x_; }
  const std::vector<int>& working() const { return W_; }

 private:
  void pivot(int p, int enter) {
    const Eigen::RowVectorXd r = G_.row(enter) * Binv_;
    const double a = r(p);
    Binv_.col(p) /= a;
    for (int j = 0; j < n_; ++j)
      if (j != p && r(j) != 0.0) Binv_.col(j) -= r(j) * Binv_.col(p);
    if (!is_pin(W_[p])) in_w_[W_[p]] = 0;
    W_[p] = enter;
    in_w_[enter] = 1;
  }

  bool refactor() {
    Eigen::MatrixXd B(n_, n_);
    Eigen::VectorXd rhs(n_);
    for (int q = 0; q < n_; ++q) {
      if (is_pin(W_[q])) {
        B.row(q).setZero();
        B(q, W_[q] - m_) = 1.0;
        rhs(q) = x_(W_[q] - m_);
      } else {
        B.row(q) = G_.row(W_[q]);
        rhs(q) = h_(W_[q]);
      }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
    if (lu.rank() < n_) return false;
    Binv_ = lu.inverse();
    // Re-anchor x on the working set; pins already hold their coordinate.
    x_ = Binv_ * rhs;
    return true;
  }

  const Eigen::MatrixXd& G_;
  const Eigen::VectorXd& h_;
  const Eigen::VectorXd& c_;
  LpOptions opt_;
  int m_, n_;
  double opt_tol_ = 0.0;
  Eigen::VectorXd x_, ratio_;
  Eigen::MatrixXd Binv_;
  std::vector<int> W_;
  std::vector<char> in_w_;
};

}  // namespace detail

/// Solves the problem. `hint` may carry the working_set of a previous solve of a problem with the
/// same constraint structure; it is used only if it yields a feasible starting vertex.
inline LpSolution solve_lp(const LpProblem& prob, const LpOptions& opt = {}, const std::vector<int>* hint = nullptr) {
  prob.validate();
  const int n = prob.num_vars(), m0 = prob.num_rows();
  LpSolution sol;
  sol.x = Eigen::VectorXd::Zero(n);
  sol.row_duals = Eigen::VectorXd::Zero(m0);
  sol.lower_duals = Eigen::VectorXd::Zero(n);
  sol.upper_duals = Eigen::VectorXd::Zero(n);
  if (n == 0) {
    for (int r = 0; r < m0; ++r)
      if (prob.rhs(r) < -opt.feasibility_tol) return sol;
    sol.status = LpStatus::Optimal;
    return sol;
  }

  // Internal rows: original rows, then finite upper bounds, then finite lower bounds.
  std::vector<int> kind;  // 0 row, 1 upper, 2 lower
  std::vector<int> ref;
  for (int r = 0; r < m0; ++r) kind.push_back(0), ref.push_back(r);
  for (int j = 0; j < n; ++j)
    if (std::isfinite(prob.upper()(j))) kind.push_back(1), ref.push_back(j);
  for (int j = 0; j < n; ++j)
    if (std::isfinite(prob.lower()(j))) kind.push_back(2), ref.push_back(j);
  const int m = static_cast<int>(kind.size());
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(m, n);
  Eigen::VectorXd h(m), norm(m);
  for (int i = 0; i < m; ++i) {
    if (kind[i] == 0) {
      for (int j = 0; j < n; ++j) G(i, j) = prob.coeff(ref[i], j);
      h(i) = prob.rhs(ref[i]);
    } else if (kind[i] == 1) {
      G(i, ref[i]) = 1.0;
      h(i) = prob.upper()(ref[i]);
    } else {
      G(i, ref[i]) = -1.0;
      h(i) = -prob.lower()(ref[i]);
    }
    norm(i) = G.row(i).norm();
    if (norm(i) == 0.0) {
      if (h(i) < -opt.feasibility_tol) return sol;  // 0 <= negative: infeasible
      norm(i) = 1.0;
    }
    G.row(i) /= norm(i);
    h(i) /= norm(i);
  }
  const int max_iter = opt.max_iterations > 0 ? opt.max_iterations : 50 * (m + n) + 1000;

  Eigen::VectorXd x0(n);
  for (int j = 0; j < n; ++j) x0(j) = std::clamp(0.0, prob.lower()(j), prob.upper()(j));
  auto pins = [&](int dim) {
    std::vector<int> w(dim);
    for (int j = 0; j < dim; ++j) w[j] = m + j;
    return w;
  };
  auto feasible = [&](const Eigen::VectorXd& x) { return ((G * x - h).array() <= opt.feasibility_tol).all(); };

  detail::ActiveSet solver(G, h, prob.objective(), opt);
  bool started = false;

  if (hint && static_cast<int>(hint->size()) == n) {
    std::vector<int> w = *hint;
    for (int& id : w)
      if (id < 0) id = m + (-1 - id);  // pins
    const bool ok = std::all_of(w.begin(), w.end(), [&](int id) { return id >= 0 && id < m + n; });
    if (ok && solver.start(x0, w) && feasible(solver.x())) started = true;
  }

  if (!started && !feasible(x0)) {
    // Phase 1: maximize -t subject to G x - t <= h, t >= 0.
    Eigen::MatrixXd G1(m + 1, n + 1);
    G1.topLeftCorner(m, n) = G;
    G1.col(n).head(m).setConstant(-1.0);
    G1.row(m).setZero();
    G1(m, n) = -1.0;
    Eigen::VectorXd h1(m + 1);
    h1.head(m) = h;
    h1(m) = 0.0;
    Eigen::VectorXd c1 = Eigen::VectorXd::Zero(n + 1);
    c1(n) = -1.0;
    Eigen::VectorXd x1(n + 1);
    x1.head(n) = x0;
    x1(n) = std::max(0.0, (G * x0 - h).maxCoeff());
    LpOptions o1 = opt;
    o1.vertex_cleanup = false;
    detail::ActiveSet phase1(G1, h1, c1, o1);
    std::vector<int> w1(n + 1);
    for (int j = 0; j <= n; ++j) w1[j] = m + 1 + j;
    phase1.start(x1, w1);
    const LpStatus s1 = phase1.run(max_iter, sol.iterations);
    if (s1 == LpStatus::IterationLimit) {
      sol.status = s1;
      return sol;
    }
    if (phase1.x()(n) > opt.feasibility_tol) return sol;  // infeasible
    x0 = phase1.x().head(n);
  }
  if (!started) solver.start(x0, pins(n));

  sol.status = solver.run(max_iter, sol.iterations);
  if (sol.status == LpStatus::Optimal && opt.vertex_cleanup) solver.cleanup();
  sol.x = solver.x();
  sol.objective = prob.objective().dot(sol.x);
  sol.working_set = solver.working();
  for (int& id : sol.working_set)
    if (id >= m) id = -1 - (id - m);
  if (sol.status != LpStatus::Optimal) return sol;
  const Eigen::VectorXd lambda = solver.multipliers();
  for (int q = 0; q < n; ++q) {
    const int id = solver.working()[q];
    if (id >= m) continue;
    const double y = std::max(0.0, lambda(q)) / norm(id);
    if (kind[id] == 0) {
      sol.row_duals(ref[id]) = y;
      sol.active_rows.push_back(ref[id]);
    } else if (kind[id] == 1) {
      sol.upper_duals(ref[id]) = y;
    } else {
      sol.lower_duals(ref[id]) = y;
    }
  }
  std::sort(sol.active_rows.begin(), sol.active_rows.end());
  return sol;
}

/// Full-horizon deterministic storage problem on the forward curve (single storage, no impact):
/// maximize sum_i -F(t_i) u_i with u_i in [-C_W, C_I] and 0 <= q_0 + sum_{k<=i} u_k <= Q_max.
inline LpProblem deterministic_storage_problem(const ForwardModel& model, const StorageSpec& spec, int n_steps) {
  spec.validate();
  if (n_steps < 1) throw std::invalid_argument("deterministic_storage_problem: N >= 1 required");
  LpProblem p(n_steps);
  std::vector<double> row(static_cast<std::size_t>(n_steps), 0.0);
  for (int i = 0; i < n_steps; ++i) {
    p.set_objective(i, -model.forward(i * model.dt));
    p.set_bounds(i, -spec.c_withdraw, spec.c_inject);
  }
  for (int i = 0; i < n_steps; ++i) {
    std::fill(row.begin(), row.end(), 0.0);
    std::fill(row.begin(), row.begin() + i + 1, 1.0);
    p.add_row(row, spec.q_max - spec.q_init);
    for (auto& v : row) v = -v;
    p.add_row(row, spec.q_init);
  }
  return p;
}

inline double deterministic_storage_lp(const ForwardModel& model, const StorageSpec& spec, int n_steps,
                                       std::vector<double>* controls = nullptr) {
  const LpSolution s = solve_lp(deterministic_storage_problem(model, spec, n_steps));
  if (!s.optimal()) throw std::runtime_error(std::string("deterministic_storage_lp: ") + to_string(s.status));
  if (controls) controls->assign(s.x.data(), s.x.data() + s.x.size());
  return s.objective;
}

}  // namespace resopt
