#pragma once

// Reverse-mode automatic differentiation over batched dense matrices.
//
// Node values are (features x batch) matrices: each column is one sample of the minibatch.
// The tape is append-only, so node ids are a topological order and backward is a single
// reverse sweep.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "resopt/rng.hpp"

namespace resopt::ad {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct SliceInfo {
  std::string name;
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

/// Flat parameter vector with named, disjoint, covering slices plus a gradient of equal length.
class ParamStore {
 public:
  int add(std::string name, int rows, int cols) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("ParamStore::add: negative shape");
    SliceInfo s{std::move(name), values_.size(), rows, cols};
    values_.resize(values_.size() + s.size(), 0.0);
    grads_.resize(values_.size(), 0.0);
    slices_.push_back(std::move(s));
    return static_cast<int>(slices_.size()) - 1;
  }

  Eigen::Map<Mat> value(int id) {
    const auto& s = slices_.at(id);
    return {values_.data() + s.offset, s.rows, s.cols};
  }
  Eigen::Map<const Mat> value(int id) const {
    const auto& s = slices_.at(id);
    return {values_.data() + s.offset, s.rows, s.cols};
  }
  Eigen::Map<Mat> grad(int id) {
    const auto& s = slices_.at(id);
    return {grads_.data() + s.offset, s.rows, s.cols};
  }

  int find(const std::string& name) const {
    for (std::size_t i = 0; i < slices_.size(); ++i)
      if (slices_[i].name == name) return static_cast<int>(i);
    return -1;
  }

  void zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& grads() { return grads_; }
  const std::vector<double>& grads() const { return grads_; }
  const std::vector<SliceInfo>& slices() const { return slices_; }
  std::size_t size() const { return values_.size(); }

  /// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)); used for every weight matrix.
  void init_glorot(int id, std::uint64_t seed) {
    const auto& s = slices_.at(id);
    const double limit = std::sqrt(6.0 / (s.rows + s.cols));
    const CounterRng rng(seed);
    for (std::size_t i = 0; i < s.size(); ++i)
      values_[s.offset + i] = limit * (2.0 * rng.uniform(static_cast<std::uint64_t>(id), i) - 1.0);
  }

 private:
  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<SliceInfo> slices_;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

enum class Op {
  Constant,
  Param,
  MatMul,
  AddBias,
  Add,
  Sub,
  Mul,
  MulRow,
  Scale,
  Shift,
  Tanh,
  Relu,
  Elu,
  Sigmoid,
  MinConst,
  MaxConst,
  MinPair,
  GroupMin,
  SumRows,
  SortedSum,
  Square,
  Mean,
  Concat,
  Rows,
  PosGated,
};

class Tape {
 public:
  Tape() { nodes_.reserve(256); }

  const Mat& value(Var v) const { return nodes_.at(v.id).value; }
  double scalar(Var v) const { return nodes_.at(v.id).value(0, 0); }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Mat m) { return push(Op::Constant, std::move(m)); }

  /// Trainable parameter leaf. Repeated requests for the same slice share one node.
  Var param(ParamStore& store, int slice) {
    const auto key = std::make_pair(static_cast<const void*>(&store), slice);
    if (auto it = param_cache_.find(key); it != param_cache_.end()) return Var{it->second};
    Var v = push(Op::Param, Mat(store.value(slice)));
    nodes_.back().store = &store;
    nodes_.back().slice = slice;
    param_cache_.emplace(key, v.id);
    return v;
  }

  /// Frozen parameter: participates in the forward pass, receives no gradient.
  Var frozen(const ParamStore& store, int slice) {
    const auto key = std::make_pair(static_cast<const void*>(&store), -1 - slice);
    if (auto it = param_cache_.find(key); it != param_cache_.end()) return Var{it->second};
    Var v = push(Op::Constant, Mat(store.value(slice)));
    param_cache_.emplace(key, v.id);
    return v;
  }

  Var matmul(Var w, Var x) {
    const Mat& W = value(w);
    const Mat& X = value(x);
    if (W.cols() != X.rows()) throw std::invalid_argument("matmul: shape mismatch");
    return push(Op::MatMul, W * X, w, x);
  }

  Var add_bias(Var x, Var b) {
    const Mat& X = value(x);
    const Mat& B = value(b);
    if (B.cols() != 1 || B.rows() != X.rows()) throw std::invalid_argument("add_bias: shape mismatch");
    Mat out = X;
    out.colwise() += B.col(0);
    return push(Op::AddBias, std::move(out), x, b);
  }

  /// W x + b.
  Var affine(Var w, Var x, Var b) { return add_bias(matmul(w, x), b); }

  Var add(Var x, Var y) { return binary(Op::Add, x, y, value(x) + value(y)); }
  Var sub(Var x, Var y) { return binary(Op::Sub, x, y, value(x) - value(y)); }
  Var mul(Var x, Var y) { return binary(Op::Mul, x, y, value(x).cwiseProduct(value(y))); }

  /// Each row of x multiplied elementwise by the single row s (1 x batch).
  Var mul_row(Var x, Var s) {
    const Mat& X = value(x);
    const Mat& S = value(s);
    if (S.rows() != 1 || S.cols() != X.cols()) throw std::invalid_argument("mul_row: shape mismatch");
    Mat out = X.array().rowwise() * S.row(0).array();
    return push(Op::MulRow, std::move(out), x, s);
  }

  Var scale(Var x, double k) {
    Var v = push(Op::Scale, value(x) * k, x);
    nodes_.back().scalar = k;
    return v;
  }
  Var shift(Var x, double k) { return push(Op::Shift, (value(x).array() + k).matrix(), x); }
  Var neg(Var x) { return scale(x, -1.0); }

  Var tanh(Var x) { return push(Op::Tanh, value(x).array().tanh().matrix(), x); }
  Var relu(Var x) { return push(Op::Relu, value(x).cwiseMax(0.0), x); }
  Var elu(Var x) {
    return push(Op::Elu, value(x).unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); }), x);
  }
  Var sigmoid(Var x) {
    return push(Op::Sigmoid, value(x).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); }), x);
  }

  /// min(x, c_r) with one constant per row. At a tie the gradient follows x (interior branch).
  Var min_const(Var x, const Vec& c) { return clamp_op(Op::MinConst, x, c); }
  Var min_const(Var x, double c) { return min_const(x, Vec::Constant(value(x).rows(), c)); }
  /// max(x, c_r); ties follow x.
  Var max_const(Var x, const Vec& c) { return clamp_op(Op::MaxConst, x, c); }
  Var max_const(Var x, double c) { return max_const(x, Vec::Constant(value(x).rows(), c)); }

  /// Componentwise min of two nodes; ties route to the first argument.
  Var min_pair(Var x, Var y) { return binary(Op::MinPair, x, y, value(x).cwiseMin(value(y))); }

  /// Min over consecutive groups of `group` rows: (r x B) -> (r/group x B).
  Var group_min(Var x, int group) {
    const Mat& X = value(x);
    if (group < 1 || X.rows() % group != 0) throw std::invalid_argument("group_min: rows not divisible by group");
    const Eigen::Index groups = X.rows() / group;
    Mat out(groups, X.cols());
    std::vector<int> arg(static_cast<std::size_t>(groups * X.cols()));
    for (Eigen::Index j = 0; j < X.cols(); ++j)
      for (Eigen::Index g = 0; g < groups; ++g) {
        Eigen::Index best = g * group;
        for (Eigen::Index r = g * group + 1; r < (g + 1) * group; ++r)
          if (X(r, j) < X(best, j)) best = r;
        out(g, j) = X(best, j);
        arg[static_cast<std::size_t>(j * groups + g)] = static_cast<int>(best);
      }
    Var v = push(Op::GroupMin, std::move(out), x);
    nodes_.back().index = std::move(arg);
    nodes_.back().ival = group;
    return v;
  }

  /// Min over all rows of each column: (r x B) -> (1 x B).
  Var col_min(Var x) { return group_min(x, static_cast<int>(value(x).rows())); }

  Var sum_rows(Var x) { return push(Op::SumRows, value(x).colwise().sum(), x); }

  /// Elementwise sum of several equally shaped nodes, accumulated in sorted order per entry so
  /// that the result is bitwise invariant under any permutation of the inputs.
  Var sorted_sum(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("sorted_sum: no inputs");
    const Mat& first = value(xs[0]);
    for (Var x : xs)
      if (value(x).rows() != first.rows() || value(x).cols() != first.cols())
        throw std::invalid_argument("sorted_sum: shape mismatch");
    Mat out(first.rows(), first.cols());
    std::vector<double> buf(xs.size());
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      for (Eigen::Index r = 0; r < out.rows(); ++r) {
        for (std::size_t k = 0; k < xs.size(); ++k) buf[k] = value(xs[k])(r, j);
        std::sort(buf.begin(), buf.end());
        double s = 0.0;
        for (double v : buf) s += v;
        out(r, j) = s;
      }
    Var v = push(Op::SortedSum, std::move(out));
    for (Var x : xs) nodes_.back().inputs.push_back(x.id);
    return v;
  }

  Var square(Var x) { return push(Op::Square, value(x).array().square().matrix(), x); }

  /// Mean over every entry -> 1x1.
  Var mean(Var x) {
    const Mat& X = value(x);
    Mat out(1, 1);
    out(0, 0) = X.mean();
    return push(Op::Mean, std::move(out), x);
  }

  Var concat_rows(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_rows: no inputs");
    Eigen::Index rows = 0;
    const Eigen::Index cols = value(xs[0]).cols();
    for (Var x : xs) {
      if (value(x).cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
      rows += value(x).rows();
    }
    Mat out(rows, cols);
    Eigen::Index r = 0;
    for (Var x : xs) {
      out.middleRows(r, value(x).rows()) = value(x);
      r += value(x).rows();
    }
    Var v = push(Op::Concat, std::move(out));
    for (Var x : xs) nodes_.back().inputs.push_back(x.id);
    return v;
  }

  Var rows(Var x, int start, int count) {
    const Mat& X = value(x);
    if (start < 0 || count < 0 || start + count > X.rows()) throw std::invalid_argument("rows: out of range");
    Var v = push(Op::Rows, X.middleRows(start, count), x);
    nodes_.back().ival = start;
    return v;
  }

  /// out[i,b] = sum_j max(0, W[i,j] * V[j,b]) * Z[j,b]: the sample-dependent, non-negative
  /// gating of the z-path used by input-concave networks.
  Var pos_gated(Var w, Var v, Var z) {
    const Mat& W = value(w);
    const Mat& V = value(v);
    const Mat& Z = value(z);
    if (W.cols() != V.rows() || V.rows() != Z.rows() || V.cols() != Z.cols())
      throw std::invalid_argument("pos_gated: shape mismatch");
    Mat out = Mat::Zero(W.rows(), Z.cols());
    for (Eigen::Index b = 0; b < Z.cols(); ++b)
      for (Eigen::Index j = 0; j < W.cols(); ++j) {
        const double vj = V(j, b), zj = Z(j, b);
        for (Eigen::Index i = 0; i < W.rows(); ++i) {
          const double g = W(i, j) * vj;
          if (g > 0.0) out(i, b) += g * zj;
        }
      }
    Var res = push(Op::PosGated, std::move(out), w, v);
    nodes_.back().c = z.id;
    return res;
  }

  /// Reverse sweep from a scalar node. Parameter gradients are accumulated (+=) into their
  /// ParamStore; call ParamStore::zero_grad between steps.
  void backward(Var out) {
    if (value(out).size() != 1) throw std::invalid_argument("backward: output must be scalar");
    grads_.assign(nodes_.size(), Mat());
    grads_[out.id] = Mat::Ones(1, 1);
    for (int id = out.id; id >= 0; --id) {
      if (grads_[id].size() == 0) continue;
      propagate(id);
    }
  }

  /// Gradient with respect to any node after backward (empty if unreachable).
  const Mat& grad(Var v) const { return grads_.at(v.id); }

 private:
  struct Node {
    Op op = Op::Constant;
    int a = -1, b = -1, c = -1;
    std::vector<int> inputs;
    Mat value;
    double scalar = 0.0;
    int ival = 0;
    Vec cvec;
    std::vector<int> index;
    ParamStore* store = nullptr;
    int slice = -1;
  };

  Var push(Op op, Mat value, Var a = {}, Var b = {}) {
    Node n;
    n.op = op;
    n.a = a.id;
    n.b = b.id;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var binary(Op op, Var x, Var y, Mat out) {
    if (value(x).rows() != value(y).rows() || value(x).cols() != value(y).cols())
      throw std::invalid_argument("elementwise op: shape mismatch");
    return push(op, std::move(out), x, y);
  }

  Var clamp_op(Op op, Var x, const Vec& c) {
    const Mat& X = value(x);
    if (c.size() != X.rows()) throw std::invalid_argument("min/max const: one constant per row required");
    Mat out = X;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      if (op == Op::MinConst)
        out.col(j) = X.col(j).cwiseMin(c);
      else
        out.col(j) = X.col(j).cwiseMax(c);
    }
    Var v = push(op, std::move(out), x);
    nodes_.back().cvec = c;
    return v;
  }

  Mat& acc(int id) {
    Mat& g = grads_[id];
    if (g.size() == 0) g = Mat::Zero(nodes_[id].value.rows(), nodes_[id].value.cols());
    return g;
  }

  void propagate(int id) {
    const Node& n = nodes_[id];
    const Mat& g = grads_[id];
    switch (n.op) {
      case Op::Constant:
        break;
      case Op::Param:
        n.store->grad(n.slice) += g;
        break;
      case Op::MatMul:
        acc(n.a).noalias() += g * nodes_[n.b].value.transpose();
        acc(n.b).noalias() += nodes_[n.a].value.transpose() * g;
        break;
      case Op::AddBias:
        acc(n.a) += g;
        acc(n.b) += g.rowwise().sum();
        break;
      case Op::Add:
        acc(n.a) += g;
        acc(n.b) += g;
        break;
      case Op::Sub:
        acc(n.a) += g;
        acc(n.b) -= g;
        break;
      case Op::Mul:
        acc(n.a) += g.cwiseProduct(nodes_[n.b].value);
        acc(n.b) += g.cwiseProduct(nodes_[n.a].value);
        break;
      case Op::MulRow: {
        const Mat& X = nodes_[n.a].value;
        const Mat& S = nodes_[n.b].value;
        acc(n.a) += (g.array().rowwise() * S.row(0).array()).matrix();
        acc(n.b) += g.cwiseProduct(X).colwise().sum();
        break;
      }
      case Op::Scale:
        acc(n.a) += g * n.scalar;
        break;
      case Op::Shift:
        acc(n.a) += g;
        break;
      case Op::Tanh:
        acc(n.a) += (g.array() * (1.0 - n.value.array().square())).matrix();
        break;
      case Op::Relu:
        acc(n.a) += (g.array() * (nodes_[n.a].value.array() > 0.0).cast<double>()).matrix();
        break;
      case Op::Elu: {
        const Mat& X = nodes_[n.a].value;
        acc(n.a) += g.binaryExpr(X, [](double gv, double x) { return x > 0.0 ? gv : gv * std::exp(x); });
        break;
      }
      case Op::Sigmoid:
        acc(n.a) += (g.array() * n.value.array() * (1.0 - n.value.array())).matrix();
        break;
      case Op::MinConst:
      case Op::MaxConst: {
        const Mat& X = nodes_[n.a].value;
        Mat& ga = acc(n.a);
        for (Eigen::Index j = 0; j < X.cols(); ++j)
          for (Eigen::Index r = 0; r < X.rows(); ++r) {
            const bool pass = n.op == Op::MinConst ? X(r, j) <= n.cvec(r) : X(r, j) >= n.cvec(r);
            if (pass) ga(r, j) += g(r, j);
          }
        break;
      }
      case Op::MinPair: {
        const Mat& X = nodes_[n.a].value;
        const Mat& Y = nodes_[n.b].value;
        Mat& ga = acc(n.a);
        Mat& gb = acc(n.b);
        for (Eigen::Index j = 0; j < X.cols(); ++j)
          for (Eigen::Index r = 0; r < X.rows(); ++r) (X(r, j) <= Y(r, j) ? ga : gb)(r, j) += g(r, j);
        break;
      }
      case Op::GroupMin: {
        Mat& ga = acc(n.a);
        const Eigen::Index groups = n.value.rows();
        for (Eigen::Index j = 0; j < n.value.cols(); ++j)
          for (Eigen::Index gi = 0; gi < groups; ++gi)
            ga(n.index[static_cast<std::size_t>(j * groups + gi)], j) += g(gi, j);
        break;
      }
      case Op::SumRows:
        acc(n.a).rowwise() += g.row(0);
        break;
      case Op::SortedSum:
        for (int in : n.inputs) acc(in) += g;
        break;
      case Op::Square:
        acc(n.a) += 2.0 * g.cwiseProduct(nodes_[n.a].value);
        break;
      case Op::Mean: {
        const Mat& X = nodes_[n.a].value;
        acc(n.a).array() += g(0, 0) / static_cast<double>(X.size());
        break;
      }
      case Op::Concat: {
        Eigen::Index r = 0;
        for (int in : n.inputs) {
          const Eigen::Index h = nodes_[in].value.rows();
          acc(in) += g.middleRows(r, h);
          r += h;
        }
        break;
      }
      case Op::Rows:
        acc(n.a).middleRows(n.ival, g.rows()) += g;
        break;
      case Op::PosGated: {
        const Mat& W = nodes_[n.a].value;
        const Mat& V = nodes_[n.b].value;
        const Mat& Z = nodes_[n.c].value;
        Mat& gw = acc(n.a);
        Mat& gv = acc(n.b);
        Mat& gz = acc(n.c);
        for (Eigen::Index b = 0; b < Z.cols(); ++b)
          for (Eigen::Index j = 0; j < W.cols(); ++j) {
            const double vj = V(j, b), zj = Z(j, b);
            for (Eigen::Index i = 0; i < W.rows(); ++i) {
              const double w = W(i, j);
              if (w * vj > 0.0) {
                const double gi = g(i, b);
                gw(i, j) += gi * vj * zj;
                gv(j, b) += gi * w * zj;
                gz(j, b) += gi * w * vj;
              }
            }
          }
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<Mat> grads_;
  std::map<std::pair<const void*, int>, int> param_cache_;
};

/// Learning rate: constant, or linear decay from `initial` to `final` over `decay_steps`.
struct LearningRateSchedule {
  double initial = 1e-3;
  double final = 1e-3;
  long decay_steps = 0;

  static LearningRateSchedule constant(double lr) { return {lr, lr, 0}; }
  static LearningRateSchedule linear(double from, double to, long steps) { return {from, to, steps}; }

  double at(long step) const {
    if (decay_steps <= 0 || step >= decay_steps) return decay_steps <= 0 ? initial : final;
    const double w = static_cast<double>(step) / static_cast<double>(decay_steps);
    return initial + (final - initial) * w;
  }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  LearningRateSchedule schedule = LearningRateSchedule::constant(1e-3);
};

class Adam {
 public:
  Adam(std::size_t n, AdamConfig config) : config_(config), m_(n, 0.0), v_(n, 0.0) {}

  /// One ADAM update from store.grads(). Non-finite gradients skip the step and are counted.
  bool step(ParamStore& store) {
    auto& x = store.values();
    const auto& g = store.grads();
    if (x.size() != m_.size()) throw std::invalid_argument("Adam: parameter count changed");
    for (double gv : g)
      if (!std::isfinite(gv)) {
        ++skipped_;
        return false;
      }
    const double lr = config_.schedule.at(t_);
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < x.size(); ++i) {
      m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g[i];
      v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mh = m_[i] / c1;
      const double vh = v_[i] / c2;
      x[i] -= lr * mh / (std::sqrt(vh) + config_.epsilon);
    }
    return true;
  }

  long steps() const { return t_; }
  long skipped() const { return skipped_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<double> m_, v_;
  long t_ = 0;
  long skipped_ = 0;
};

}  // namespace resopt::ad
