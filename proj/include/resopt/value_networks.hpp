#pragma once

// Bellman-value approximators that treat the stock y differently from the uncertainty x.
//
//   u_0 = x, u_{i+1} = relu(Wt_i u_i + bt_i)
//   z_0 = 0, z_{i+1} = act_i( gate(Wz_i, Wzu_i u_i + bz_i) z_i
//                             + Wy_i (y o (Wyu_i u_i + by_i)) + Wu_i u_i + b_i ),  i = 0..K
//
// Concave:  gate = [Wz (x) g]^+, hidden act = min(v, 0), identity output.
// Free:     gate = Wz (x) g,     hidden act = relu,       identity output.
// GroupMax: gate = [Wz (x) g]^+, hidden act = group-min (m_y -> m_y/G), output = min over m_y rows.
//
// Concavity in y needs the hidden activation concave and non-decreasing, hence min(v, 0).
// For GroupMax the z-path matrices are m_y x (m_y/G) after the first layer.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "resopt/autodiff.hpp"
#include "resopt/checkpoint.hpp"
#include "resopt/policy_networks.hpp"

namespace resopt {

enum class ValueNetKind { Concave, Free, GroupMax };

inline const char* to_string(ValueNetKind k) {
  switch (k) {
    case ValueNetKind::Concave: return "concave";
    case ValueNetKind::Free: return "free";
    case ValueNetKind::GroupMax: return "groupmax";
  }
  return "?";
}

inline ValueNetKind value_kind_from_string(const std::string& s) {
  for (auto k : {ValueNetKind::Concave, ValueNetKind::Free, ValueNetKind::GroupMax})
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown value network kind '" + s + "'");
}

struct IcnnSpec {
  ValueNetKind kind = ValueNetKind::Concave;
  int x_dim = 1;
  int y_dim = 1;
  int m_x = 10;
  int m_y = 20;
  int layers = 3;  // K
  int group = 2;   // G, GroupMax only

  void validate() const {
    if (x_dim < 1 || y_dim < 1 || m_x < 1 || m_y < 1 || layers < 1)
      throw std::invalid_argument("IcnnSpec: dimensions and K must be >= 1");
    if (kind == ValueNetKind::GroupMax && (group < 1 || m_y % group != 0))
      throw std::invalid_argument("IcnnSpec: m_y must be divisible by the group size");
  }

  /// Width of z_i (input to layer i).
  int z_width(int i) const {
    if (i == 0) return 0;
    return kind == ValueNetKind::GroupMax ? m_y / group : m_y;
  }
  /// Pre-activation width of layer i.
  int out_width(int i) const {
    if (i < layers) return m_y;
    return kind == ValueNetKind::GroupMax ? m_y : 1;
  }
  int u_width(int i) const { return i == 0 ? x_dim : m_x; }

  nlohmann::json to_json() const {
    return {{"kind", to_string(kind)}, {"x_dim", x_dim}, {"y_dim", y_dim}, {"m_x", m_x},
            {"m_y", m_y},             {"layers", layers}, {"group", group}};
  }
  static IcnnSpec from_json(const nlohmann::json& j) {
    IcnnSpec s;
    s.kind = value_kind_from_string(j.at("kind"));
    s.x_dim = j.at("x_dim");
    s.y_dim = j.at("y_dim");
    s.m_x = j.at("m_x");
    s.m_y = j.at("m_y");
    s.layers = j.at("layers");
    s.group = j.value("group", 2);
    return s;
  }
};

struct IcnnLayer {
  int wt = -1, bt = -1;             // u-path (i < K)
  int wz = -1, wzu = -1, bz = -1;   // z-path gate (i > 0)
  int wy = -1, wyu = -1, by = -1;   // y gate
  int wu = -1, b = -1;
};

/// One evaluator for the three input-structured networks; parameters live in a caller's store.
class IcnnNet {
 public:
  IcnnNet() = default;
  IcnnNet(ad::ParamStore& store, const IcnnSpec& spec, const std::string& prefix) : spec_(spec) {
    spec.validate();
    const int k = spec.y_dim;
    for (int i = 0; i <= spec.layers; ++i) {
      const std::string p = prefix + std::to_string(i) + "/";
      const int nu = spec.u_width(i), nz = spec.z_width(i), no = spec.out_width(i);
      IcnnLayer l;
      if (i < spec.layers) {
        l.wt = store.add(p + "Wt", spec.m_x, nu);
        l.bt = store.add(p + "bt", spec.m_x, 1);
      }
      if (nz > 0) {
        l.wz = store.add(p + "Wz", no, nz);
        l.wzu = store.add(p + "Wzu", nz, nu);
        l.bz = store.add(p + "bz", nz, 1);
      }
      l.wy = store.add(p + "Wy", no, k);
      l.wyu = store.add(p + "Wyu", k, nu);
      l.by = store.add(p + "by", k, 1);
      l.wu = store.add(p + "Wu", no, nu);
      l.b = store.add(p + "b", no, 1);
      layers_.push_back(l);
    }
  }

  /// Glorot weights; gate biases bz, by start at 1 so that the gates begin near unity, other
  /// biases at 0.
  void init(ad::ParamStore& store, std::uint64_t seed) const {
    std::uint64_t tag = 0;
    auto w = [&](int id) {
      if (id >= 0) store.init_glorot(id, derive_seed(seed, tag++));
    };
    auto c = [&](int id, double v) {
      if (id >= 0) store.value(id).setConstant(v);
    };
    for (const auto& l : layers_) {
      w(l.wt), w(l.wz), w(l.wzu), w(l.wy), w(l.wyu), w(l.wu);
      c(l.bt, 0.0), c(l.bz, 1.0), c(l.by, 1.0), c(l.b, 0.0);
    }
  }

  /// x: (x_dim x B), y: (y_dim x B) -> (1 x B).
  ad::Var forward(ad::Tape& t, const ParamSource& p, ad::Var x, ad::Var y) const {
    const auto& s = spec_;
    ad::Var u = x, z{};
    for (int i = 0; i <= s.layers; ++i) {
      const auto& l = layers_[i];
      ad::Var gy = t.add_bias(t.matmul(p.get(t, l.wyu), u), p.get(t, l.by));
      ad::Var pre = t.add(t.matmul(p.get(t, l.wy), t.mul(y, gy)), t.affine(p.get(t, l.wu), u, p.get(t, l.b)));
      if (i > 0) {
        ad::Var gz = t.add_bias(t.matmul(p.get(t, l.wzu), u), p.get(t, l.bz));
        ad::Var zt = s.kind == ValueNetKind::Free ? t.matmul(p.get(t, l.wz), t.mul(z, gz))
                                                  : t.pos_gated(p.get(t, l.wz), gz, z);
        pre = t.add(pre, zt);
      }
      if (i < s.layers) {
        switch (s.kind) {
          case ValueNetKind::Concave: z = t.min_const(pre, 0.0); break;
          case ValueNetKind::Free: z = t.relu(pre); break;
          case ValueNetKind::GroupMax: z = t.group_min(pre, s.group); break;
        }
        u = t.relu(t.affine(p.get(t, l.wt), u, p.get(t, l.bt)));
      } else {
        z = s.kind == ValueNetKind::GroupMax ? t.col_min(pre) : pre;
      }
    }
    return z;
  }

  ad::Mat eval(const ad::ParamStore& store, const ad::Mat& x, const ad::Mat& y) const {
    ad::Tape t;
    return t.value(forward(t, ParamSource::frozen(store), t.constant(x), t.constant(y)));
  }

  const IcnnSpec& spec() const { return spec_; }
  const std::vector<IcnnLayer>& layers() const { return layers_; }

 private:
  IcnnSpec spec_;
  std::vector<IcnnLayer> layers_;
};

/// Affine minorant alpha + beta . y.
struct Cut {
  double alpha = 0.0;
  std::vector<double> beta;

  double operator()(const std::vector<double>& y) const {
    double v = alpha;
    for (std::size_t l = 0; l < beta.size(); ++l) v += beta[l] * y[l];
    return v;
  }
};

struct CutSet {
  std::vector<Cut> cuts;
  std::size_t enumerated = 0;  // count before deduplication

  double operator()(const std::vector<double>& y) const {
    if (cuts.empty()) throw std::logic_error("CutSet: empty");
    double v = cuts[0](y);
    for (std::size_t c = 1; c < cuts.size(); ++c) v = std::min(v, cuts[c](y));
    return v;
  }
  std::size_t size() const { return cuts.size(); }
};

inline void write_cuts_csv(std::ostream& os, const CutSet& cs, int stage = -1) {
  const std::size_t k = cs.cuts.empty() ? 0 : cs.cuts[0].beta.size();
  os << (stage >= 0 ? "stage," : "") << "alpha";
  for (std::size_t l = 0; l < k; ++l) os << ",beta_" << l;
  os << '\n';
  os.precision(17);
  for (const auto& c : cs.cuts) {
    if (stage >= 0) os << stage << ',';
    os << c.alpha;
    for (double b : c.beta) os << ',' << b;
    os << '\n';
  }
}

namespace detail {

using Pieces = std::vector<Cut>;

inline bool same_cut(const Cut& a, const Cut& b, double tol) {
  if (std::abs(a.alpha - b.alpha) > tol) return false;
  for (std::size_t l = 0; l < a.beta.size(); ++l)
    if (std::abs(a.beta[l] - b.beta[l]) > tol) return false;
  return true;
}

inline Pieces dedup(const Pieces& in, double tol) {
  Pieces out;
  out.reserve(in.size());
  for (const auto& c : in)
    if (std::none_of(out.begin(), out.end(), [&](const Cut& o) { return same_cut(c, o, tol); })) out.push_back(c);
  return out;
}

}  // namespace detail

inline constexpr std::size_t kDefaultCutCap = 4096;
inline constexpr double kCutDedupTol = 1e-12;

/// Enumerates the affine pieces of a GroupMax network at one fixed x (x_dim values). Each
/// positive combination of mins expands to the Cartesian product of the members' pieces; a
/// group-min or the output min is the union of the members' piece sets.
inline CutSet extract_cuts(const IcnnNet& net, const ad::ParamStore& store, const std::vector<double>& x,
                           std::size_t cap = kDefaultCutCap) {
  const auto& s = net.spec();
  if (s.kind != ValueNetKind::GroupMax) throw std::invalid_argument("extract_cuts: GroupMax network required");
  if (static_cast<int>(x.size()) != s.x_dim) throw std::invalid_argument("extract_cuts: x dimension mismatch");
  const int k = s.y_dim;
  ad::Vec u = Eigen::Map<const ad::Vec>(x.data(), s.x_dim);
  std::vector<detail::Pieces> z;  // piece set per z entry
  CutSet result;
  for (int i = 0; i <= s.layers; ++i) {
    const auto& l = net.layers()[i];
    const ad::Vec gy = store.value(l.wyu) * u + store.value(l.by);
    const ad::Mat wy = store.value(l.wy);
    const ad::Vec au = store.value(l.wu) * u + store.value(l.b);
    ad::Mat coef;
    if (i > 0) {
      const ad::Vec gz = store.value(l.wzu) * u + store.value(l.bz);
      coef = (store.value(l.wz).array().rowwise() * gz.transpose().array()).cwiseMax(0.0);
    }
    const int rows = s.out_width(i);
    std::vector<detail::Pieces> pre(rows);
    for (int r = 0; r < rows; ++r) {
      Cut base{au(r), std::vector<double>(k)};
      for (int d = 0; d < k; ++d) base.beta[d] = wy(r, d) * gy(d);
      detail::Pieces acc{base};
      if (i > 0) {
        std::size_t combos = 1;
        for (std::size_t j = 0; j < z.size(); ++j) {
          combos *= z[j].size();
          if (combos > cap)
            throw std::runtime_error("extract_cuts: more than " + std::to_string(cap) +
                                     " pieces; reduce the number of layers or neurons");
        }
        for (std::size_t j = 0; j < z.size(); ++j) {
          const double c = coef(r, static_cast<Eigen::Index>(j));
          detail::Pieces next;
          next.reserve(acc.size() * z[j].size());
          for (const auto& a : acc)
            for (const auto& q : z[j]) {
              Cut n = a;
              n.alpha += c * q.alpha;
              for (int d = 0; d < k; ++d) n.beta[d] += c * q.beta[d];
              next.push_back(std::move(n));
            }
          acc = std::move(next);
        }
      }
      pre[r] = std::move(acc);
    }
    if (i < s.layers) {
      const int groups = rows / s.group;
      std::vector<detail::Pieces> nz(groups);
      for (int g = 0; g < groups; ++g)
        for (int m = 0; m < s.group; ++m) {
          auto& src = pre[g * s.group + m];
          nz[g].insert(nz[g].end(), src.begin(), src.end());
        }
      z = std::move(nz);
      u = (store.value(l.wt) * u + store.value(l.bt)).cwiseMax(0.0);
    } else {
      detail::Pieces all;
      for (auto& p : pre) all.insert(all.end(), p.begin(), p.end());
      if (all.size() > cap)
        throw std::runtime_error("extract_cuts: more than " + std::to_string(cap) +
                                 " pieces; reduce the number of layers or neurons");
      result.enumerated = all.size();
      result.cuts = detail::dedup(all, kCutDedupTol);
    }
  }
  return result;
}

/// Bellman-value wrapper: V(x, q) = offset + scale * psi(x, q / q_max). The offset and scale
/// normalize regression targets; x is expected already normalized.
class ValueFunction {
 public:
  ValueFunction() = default;
  ValueFunction(const IcnnSpec& spec, double q_max, std::uint64_t seed)
      : net_(params_, spec, "v"), q_max_(q_max) {
    if (!(q_max > 0.0)) throw std::invalid_argument("ValueFunction: q_max must be positive");
    net_.init(params_, seed);
  }
  ValueFunction(const ValueFunction&) = delete;
  ValueFunction& operator=(const ValueFunction&) = delete;

  /// x: normalized features (x_dim x B); q: raw stock (y_dim x B).
  ad::Var forward(ad::Tape& t, const ParamSource& p, ad::Var x, ad::Var q) const {
    return t.shift(t.scale(net_.forward(t, p, x, t.scale(q, 1.0 / q_max_)), scale_), offset_);
  }
  ad::Var forward_trainable(ad::Tape& t, ad::Var x, ad::Var q) { return forward(t, ParamSource::trainable(params_), x, q); }
  ad::Var forward_frozen(ad::Tape& t, ad::Var x, ad::Var q) const { return forward(t, ParamSource::frozen(params_), x, q); }

  ad::Mat eval(const ad::Mat& x, const ad::Mat& q) const {
    ad::Tape t;
    return t.value(forward_frozen(t, t.constant(x), t.constant(q)));
  }

  /// Cuts in raw stock units: alpha + beta . q.
  CutSet cuts(const std::vector<double>& x, std::size_t cap = kDefaultCutCap) const {
    CutSet cs = extract_cuts(net_, params_, x, cap);
    for (auto& c : cs.cuts) {
      c.alpha = offset_ + scale_ * c.alpha;
      for (double& b : c.beta) b *= scale_ / q_max_;
    }
    return cs;
  }

  void set_target_normalization(double offset, double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("ValueFunction: scale must be positive");
    offset_ = offset;
    scale_ = scale;
  }

  nlohmann::json checkpoint() const {
    nlohmann::json arch = net_.spec().to_json();
    arch["q_max"] = q_max_;
    arch["offset"] = offset_;
    arch["scale"] = scale_;
    return params_to_json(params_, arch);
  }
  void load(const nlohmann::json& j) {
    params_from_json(params_, j);
    offset_ = j.at("architecture").at("offset");
    scale_ = j.at("architecture").at("scale");
  }

  const IcnnNet& net() const { return net_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }
  double offset() const { return offset_; }
  double scale() const { return scale_; }
  double q_max() const { return q_max_; }

 private:
  ad::ParamStore params_;
  IcnnNet net_;
  double q_max_ = 1.0;
  double offset_ = 0.0;
  double scale_ = 1.0;
};

}  // namespace resopt
