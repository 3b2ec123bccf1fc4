#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "crdp/model.hpp"
#include "crdp/rng.hpp"
#include "crdp/transport.hpp"

namespace crdp {

// Mixed-radix index helper for flattened tensors.
struct Radix {
  std::vector<int> sizes;
  std::vector<std::size_t> strides;
  std::size_t total = 1;

  Radix() = default;
  explicit Radix(std::vector<int> s) : sizes(std::move(s)) {
    strides.assign(sizes.size(), 1);
    for (std::size_t i = sizes.size(); i-- > 0;) {
      strides[i] = total;
      total *= static_cast<std::size_t>(sizes[i]);
    }
  }

  std::size_t index(const std::vector<int>& digits) const {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) idx += strides[i] * digits[i];
    return idx;
  }

  void decode(std::size_t idx, std::vector<int>& digits) const {
    digits.resize(sizes.size());
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      digits[i] = static_cast<int>(idx / strides[i]);
      idx %= strides[i];
    }
  }
};

// Finite-alphabet first-order Markov source with real scalar values.
struct DiscreteMarkovSource {
  std::vector<std::vector<double>> values;  // per-frame sorted value lists
  std::vector<double> init;                 // pmf over values[0]
  std::vector<std::vector<double>> trans;   // trans[j][a*|X_{j+1}|+b] = P(X_{j+1}=b | X_j=a)

  int T() const { return static_cast<int>(values.size()); }
  int alphabet(int j) const { return static_cast<int>(values[j].size()); }

  double trans_prob(int step, int from, int to) const {
    return trans[step][from * alphabet(step + 1) + to];
  }

  void validate() const {
    if (values.empty()) throw std::invalid_argument("discrete source: no frames");
    if (static_cast<int>(init.size()) != alphabet(0))
      throw std::invalid_argument("discrete source: init pmf size mismatch");
    double s = 0.0;
    for (double p : init) s += p;
    if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument("discrete source: init not normalized");
    for (int j = 0; j + 1 < T(); ++j) {
      for (int a = 0; a < alphabet(j); ++a) {
        double rs = 0.0;
        for (int b = 0; b < alphabet(j + 1); ++b) rs += trans_prob(j, a, b);
        if (std::abs(rs - 1.0) > 1e-12)
          throw std::invalid_argument("discrete source: transition row not normalized");
      }
    }
    for (int j = 0; j < T(); ++j)
      for (int i = 1; i < alphabet(j); ++i)
        if (!(values[j][i] > values[j][i - 1]))
          throw std::invalid_argument("discrete source: values not strictly increasing");
  }

  std::vector<double> marginal(int frame) const {
    std::vector<double> cur = init;
    for (int j = 0; j < frame; ++j) {
      std::vector<double> next(alphabet(j + 1), 0.0);
      for (int a = 0; a < alphabet(j); ++a)
        for (int b = 0; b < alphabet(j + 1); ++b) next[b] += cur[a] * trans_prob(j, a, b);
      cur = std::move(next);
    }
    return cur;
  }

  ScalarPmf marginal_pmf(int frame) const {
    return make_pmf(values[frame], marginal(frame));
  }

  // P(X_{step+1} = . | X_step = from) as a pmf over frame step+1 values.
  ScalarPmf conditional_pmf(int step, int from) const {
    std::vector<double> row(alphabet(step + 1));
    for (int b = 0; b < alphabet(step + 1); ++b) row[b] = trans_prob(step, from, b);
    return make_pmf(values[step + 1], row);
  }

  static DiscreteMarkovSource binary_flip_chain(int frames, double flip,
                                                double lo = -1.0, double hi = 1.0) {
    DiscreteMarkovSource s;
    s.values.assign(frames, {lo, hi});
    s.init = {0.5, 0.5};
    s.trans.assign(frames - 1, {1.0 - flip, flip, flip, 1.0 - flip});
    s.validate();
    return s;
  }
};

// Per-frame stochastic encoders P(M_j | X_j, M_1..M_{j-1}, K) over finite
// message alphabets, with a shared-randomness pmf over K.
struct DiscreteEncoder {
  std::vector<double> k_pmf;
  std::vector<int> msg_sizes;               // |M_j|
  std::vector<std::vector<double>> tables;  // frame j: [x_j][m_1..m_{j-1}][k][m_j]
  std::vector<Radix> ctx_radix;             // radix over (x_j, m_<j, k) per frame

  int T() const { return static_cast<int>(msg_sizes.size()); }
  int K() const { return static_cast<int>(k_pmf.size()); }

  void build_radix(const DiscreteMarkovSource& src) {
    ctx_radix.clear();
    for (int j = 0; j < T(); ++j) {
      std::vector<int> sizes;
      sizes.push_back(src.alphabet(j));
      for (int i = 0; i < j; ++i) sizes.push_back(msg_sizes[i]);
      sizes.push_back(K());
      ctx_radix.emplace_back(std::move(sizes));
    }
  }

  double prob(int j, int x, const std::vector<int>& mprefix, int k, int m) const {
    std::vector<int> digits;
    digits.reserve(j + 2);
    digits.push_back(x);
    for (int i = 0; i < j; ++i) digits.push_back(mprefix[i]);
    digits.push_back(k);
    return tables[j][ctx_radix[j].index(digits) * msg_sizes[j] + m];
  }

  void validate(const DiscreteMarkovSource& src) const {
    double s = 0.0;
    for (double p : k_pmf) s += p;
    if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument("encoder: K pmf not normalized");
    for (int j = 0; j < T(); ++j) {
      std::size_t rows = ctx_radix[j].total;
      for (std::size_t r = 0; r < rows; ++r) {
        double rs = 0.0;
        for (int m = 0; m < msg_sizes[j]; ++m) rs += tables[j][r * msg_sizes[j] + m];
        if (std::abs(rs - 1.0) > 1e-12)
          throw std::invalid_argument("encoder: conditional row not normalized");
      }
    }
    (void)src;
  }

  // M_j = X_j; requires msg alphabet sizes equal to source alphabets.
  static DiscreteEncoder copy_encoder(const DiscreteMarkovSource& src, int shared_k = 1) {
    DiscreteEncoder e;
    e.k_pmf.assign(shared_k, 1.0 / shared_k);
    for (int j = 0; j < src.T(); ++j) e.msg_sizes.push_back(src.alphabet(j));
    e.build_radix(src);
    e.tables.resize(src.T());
    std::vector<int> digits;
    for (int j = 0; j < src.T(); ++j) {
      e.tables[j].assign(e.ctx_radix[j].total * e.msg_sizes[j], 0.0);
      for (std::size_t r = 0; r < e.ctx_radix[j].total; ++r) {
        e.ctx_radix[j].decode(r, digits);
        e.tables[j][r * e.msg_sizes[j] + digits[0]] = 1.0;  // digit 0 is x_j
      }
    }
    return e;
  }

  // Single-letter messages carrying no information.
  static DiscreteEncoder constant_encoder(const DiscreteMarkovSource& src, int shared_k = 1) {
    DiscreteEncoder e;
    e.k_pmf.assign(shared_k, 1.0 / shared_k);
    e.msg_sizes.assign(src.T(), 1);
    e.build_radix(src);
    e.tables.resize(src.T());
    for (int j = 0; j < src.T(); ++j) e.tables[j].assign(e.ctx_radix[j].total, 1.0);
    return e;
  }

  static DiscreteEncoder random_encoder(const DiscreteMarkovSource& src, std::vector<int> msg_sizes,
                                        int shared_k, RngStream& g, double concentration = 1.0) {
    DiscreteEncoder e;
    e.k_pmf.assign(shared_k, 1.0 / shared_k);
    e.msg_sizes = std::move(msg_sizes);
    e.build_radix(src);
    e.tables.resize(src.T());
    for (int j = 0; j < src.T(); ++j) {
      int M = e.msg_sizes[j];
      e.tables[j].assign(e.ctx_radix[j].total * M, 0.0);
      for (std::size_t r = 0; r < e.ctx_radix[j].total; ++r) {
        double s = 0.0;
        for (int m = 0; m < M; ++m) {
          double w = std::pow(g.next_open(), 1.0 / concentration);
          e.tables[j][r * M + m] = w;
          s += w;
        }
        for (int m = 0; m < M; ++m) e.tables[j][r * M + m] /= s;
      }
    }
    return e;
  }
};

// Exact joint pmf over (X_1..X_T, M_1..M_T, K).
struct JointLaw {
  DiscreteMarkovSource src;
  DiscreteEncoder enc;
  Radix radix;  // digits: x_1..x_T, m_1..m_T, k
  std::vector<double> p;

  int T() const { return src.T(); }

  double prob(const std::vector<int>& digits) const { return p[radix.index(digits)]; }

  Radix msg_context_radix(int upto_frame) const {  // (m_1..m_j, k)
    std::vector<int> sizes;
    for (int i = 0; i <= upto_frame; ++i) sizes.push_back(enc.msg_sizes[i]);
    sizes.push_back(enc.K());
    return Radix(std::move(sizes));
  }
};

inline JointLaw joint_law(const DiscreteMarkovSource& src, const DiscreteEncoder& enc,
                          std::size_t cell_cap = 10'000'000) {
  src.validate();
  if (enc.T() != src.T()) throw std::invalid_argument("joint_law: encoder/source frame mismatch");
  enc.validate(src);

  JointLaw jl;
  jl.src = src;
  jl.enc = enc;
  std::vector<int> sizes;
  for (int j = 0; j < src.T(); ++j) sizes.push_back(src.alphabet(j));
  for (int j = 0; j < src.T(); ++j) sizes.push_back(enc.msg_sizes[j]);
  sizes.push_back(enc.K());
  jl.radix = Radix(std::move(sizes));
  if (jl.radix.total > cell_cap) throw std::invalid_argument("joint_law: state space exceeds cap");
  jl.p.assign(jl.radix.total, 0.0);

  const int T = src.T();
  std::vector<int> d;
  std::vector<int> mprefix(T);
  for (std::size_t idx = 0; idx < jl.radix.total; ++idx) {
    jl.radix.decode(idx, d);
    const int k = d[2 * T];
    double pr = enc.k_pmf[k] * src.init[d[0]];
    for (int j = 0; j + 1 < T && pr > 0.0; ++j) pr *= src.trans_prob(j, d[j], d[j + 1]);
    if (pr == 0.0) continue;
    for (int j = 0; j < T && pr > 0.0; ++j) {
      for (int i = 0; i < j; ++i) mprefix[i] = d[T + i];
      pr *= enc.prob(j, d[j], mprefix, k, d[T + j]);
    }
    jl.p[idx] = pr;
  }
  double total = 0.0;
  for (double v : jl.p) total += v;
  if (std::abs(total - 1.0) > 1e-10) throw std::runtime_error("joint_law: mass does not sum to 1");
  return jl;
}

// Stochastic causal reconstruction.  Frame j's conditional pmf may read, in
// addition to (M_1..M_j, K), the realized earlier outputs; that dependence
// stands in for the auxiliary uniform component appended to the shared
// randomness when an optimal coupling has to split mass.
struct DiscreteReconstruction {
  std::vector<std::vector<double>> out_values;  // support per frame
  std::vector<std::vector<double>> tables;      // frame j: [(m_1..m_j,k,v_1..v_{j-1})][v_j]
  std::vector<Radix> ctx_radix;                 // over (m_1..m_j, k, v_1..v_{j-1})

  int T() const { return static_cast<int>(out_values.size()); }

  void init_shapes(const JointLaw& jl, std::vector<std::vector<double>> outs) {
    out_values = std::move(outs);
    const int T = jl.T();
    tables.assign(T, {});
    ctx_radix.clear();
    for (int j = 0; j < T; ++j) {
      std::vector<int> sizes;
      for (int i = 0; i <= j; ++i) sizes.push_back(jl.enc.msg_sizes[i]);
      sizes.push_back(jl.enc.K());
      for (int i = 0; i < j; ++i) sizes.push_back(static_cast<int>(out_values[i].size()));
      ctx_radix.emplace_back(std::move(sizes));
      tables[j].assign(ctx_radix[j].total * out_values[j].size(), 0.0);
    }
  }

  double prob(int j, const std::vector<int>& msgs, int k, const std::vector<int>& vprefix,
              int v) const {
    std::vector<int> digits;
    for (int i = 0; i <= j; ++i) digits.push_back(msgs[i]);
    digits.push_back(k);
    for (int i = 0; i < j; ++i) digits.push_back(vprefix[i]);
    return tables[j][ctx_radix[j].index(digits) * out_values[j].size() + v];
  }
};

// Conditional-mean reconstruction and its exact per-frame MSE.
inline std::pair<DiscreteReconstruction, DistortionTuple> mmse_reconstruction(const JointLaw& jl) {
  const int T = jl.T();
  std::vector<std::vector<double>> ctx_value(T);  // MMSE value per (m_<=j,k) context
  std::vector<std::vector<double>> ctx_prob(T);
  std::vector<double> dist(T, 0.0);

  std::vector<int> d;
  for (int j = 0; j < T; ++j) {
    Radix cr = jl.msg_context_radix(j);
    std::vector<double> mass(cr.total, 0.0), moment(cr.total, 0.0);
    std::vector<int> cdig(j + 2);
    for (std::size_t idx = 0; idx < jl.radix.total; ++idx) {
      double pr = jl.p[idx];
      if (pr == 0.0) continue;
      jl.radix.decode(idx, d);
      for (int i = 0; i <= j; ++i) cdig[i] = d[T + i];
      cdig[j + 1] = d[2 * T];
      std::size_t c = cr.index(cdig);
      mass[c] += pr;
      moment[c] += pr * jl.src.values[j][d[j]];
    }
    ctx_value[j].assign(cr.total, 0.0);
    ctx_prob[j] = mass;
    for (std::size_t c = 0; c < cr.total; ++c)
      if (mass[c] > 0.0) ctx_value[j][c] = moment[c] / mass[c];
    for (std::size_t idx = 0; idx < jl.radix.total; ++idx) {
      double pr = jl.p[idx];
      if (pr == 0.0) continue;
      jl.radix.decode(idx, d);
      for (int i = 0; i <= j; ++i) cdig[i] = d[T + i];
      cdig[j + 1] = d[2 * T];
      double e = jl.src.values[j][d[j]] - ctx_value[j][cr.index(cdig)];
      dist[j] += pr * e * e;
    }
  }

  DiscreteReconstruction rec;
  std::vector<std::vector<double>> outs(T);
  std::vector<std::vector<int>> value_index(T);  // context -> merged value index
  for (int j = 0; j < T; ++j) {
    // merge MMSE values closer than 1e-12 into one output atom
    std::vector<std::size_t> order(ctx_value[j].size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return ctx_value[j][a] < ctx_value[j][b]; });
    value_index[j].assign(ctx_value[j].size(), 0);
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
      std::size_t c = order[oi];
      if (ctx_prob[j][c] == 0.0) {
        value_index[j][c] = -1;
        continue;
      }
      double v = ctx_value[j][c];
      if (outs[j].empty() || v - outs[j].back() > 1e-12) outs[j].push_back(v);
      value_index[j][c] = static_cast<int>(outs[j].size()) - 1;
    }
    if (outs[j].empty()) outs[j].push_back(0.0);
    for (auto& vi : value_index[j])
      if (vi < 0) vi = 0;  // zero-probability context, arbitrary
  }
  rec.init_shapes(jl, outs);
  for (int j = 0; j < T; ++j) {
    Radix cr = jl.msg_context_radix(j);
    std::vector<int> cdig, full;
    for (std::size_t row = 0; row < rec.ctx_radix[j].total; ++row) {
      rec.ctx_radix[j].decode(row, full);
      cdig.assign(full.begin(), full.begin() + j + 2);  // (m_<=j, k) prefix
      std::size_t c = cr.index(cdig);
      rec.tables[j][row * rec.out_values[j].size() + value_index[j][c]] = 1.0;
    }
  }
  return {rec, DistortionTuple(dist)};
}

// Marginal pmf of X_j under the joint law.
inline ScalarPmf marginal_of(const JointLaw& jl, int frame) {
  std::vector<double> mass(jl.src.alphabet(frame), 0.0);
  std::vector<int> d;
  for (std::size_t idx = 0; idx < jl.radix.total; ++idx) {
    if (jl.p[idx] == 0.0) continue;
    jl.radix.decode(idx, d);
    mass[d[frame]] += jl.p[idx];
  }
  return make_pmf(jl.src.values[frame], mass);
}

// Exact joint pmf over reconstruction outputs (v_1..v_T), plus per-frame MSE.
struct ReconEvaluation {
  Radix v_radix;              // over output supports
  std::vector<double> joint;  // P(v_1..v_T)
  std::vector<double> mse;    // E[(X_j - Xhat_j)^2]
};

inline ReconEvaluation evaluate_reconstruction(const JointLaw& jl,
                                               const DiscreteReconstruction& rec) {
  const int T = jl.T();
  ReconEvaluation ev;
  std::vector<int> vsizes;
  for (int j = 0; j < T; ++j) vsizes.push_back(static_cast<int>(rec.out_values[j].size()));
  ev.v_radix = Radix(vsizes);
  ev.joint.assign(ev.v_radix.total, 0.0);
  ev.mse.assign(T, 0.0);

  std::vector<int> d, msgs(T), vdig(T), rdig;
  for (std::size_t idx = 0; idx < jl.radix.total; ++idx) {
    double pr = jl.p[idx];
    if (pr == 0.0) continue;
    jl.radix.decode(idx, d);
    const int k = d[2 * T];
    for (int j = 0; j < T; ++j) msgs[j] = d[T + j];
    // enumerate output tuples with their conditional probabilities
    std::vector<std::pair<double, std::vector<int>>> branches{{1.0, {}}};
    for (int j = 0; j < T; ++j) {
      std::vector<std::pair<double, std::vector<int>>> next;
      for (auto& br : branches) {
        for (int v = 0; v < vsizes[j]; ++v) {
          double q = rec.prob(j, msgs, k, br.second, v);
          if (q <= 0.0) continue;
          auto vp = br.second;
          vp.push_back(v);
          next.emplace_back(br.first * q, std::move(vp));
        }
      }
      branches = std::move(next);
    }
    for (auto& br : branches) {
      double w = pr * br.first;
      ev.joint[ev.v_radix.index(br.second)] += w;
      for (int j = 0; j < T; ++j) {
        double e = jl.src.values[j][d[j]] - rec.out_values[j][br.second[j]];
        ev.mse[j] += w * e * e;
      }
    }
  }
  return ev;
}

inline ScalarPmf reconstruction_marginal(const JointLaw& jl, const DiscreteReconstruction& rec,
                                         int frame) {
  ReconEvaluation ev = evaluate_reconstruction(jl, rec);
  std::vector<double> mass(rec.out_values[frame].size(), 0.0);
  std::vector<int> vdig;
  for (std::size_t i = 0; i < ev.v_radix.total; ++i) {
    if (ev.joint[i] == 0.0) continue;
    ev.v_radix.decode(i, vdig);
    mass[vdig[frame]] += ev.joint[i];
  }
  return make_pmf(rec.out_values[frame], mass);
}

// Exact joint pmf of the source restricted to the first `upto` frames,
// on the same value grids.
inline std::vector<double> source_joint_prefix(const DiscreteMarkovSource& src, int upto) {
  std::vector<int> sizes;
  for (int j = 0; j < upto; ++j) sizes.push_back(src.alphabet(j));
  Radix r(sizes);
  std::vector<double> out(r.total, 0.0);
  std::vector<int> d;
  for (std::size_t idx = 0; idx < r.total; ++idx) {
    r.decode(idx, d);
    double pr = src.init[d[0]];
    for (int j = 0; j + 1 < upto; ++j) pr *= src.trans_prob(j, d[j], d[j + 1]);
    out[idx] = pr;
  }
  return out;
}

}  // namespace crdp
