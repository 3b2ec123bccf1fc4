#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "crdp/discrete.hpp"
#include "crdp/statutil.hpp"
#include "crdp/transport.hpp"

namespace crdp {

namespace realdetail {

// Per-context merged MMSE value index at frame j, read back from a
// conditional-mean reconstruction (rows are deterministic point masses).
inline std::vector<int> ctx_value_index(const JointLaw& jl, const DiscreteReconstruction& mmse,
                                        int j) {
  Radix cr = jl.msg_context_radix(j);
  std::vector<int> out(cr.total, 0);
  std::vector<int> digits;
  const int nv = static_cast<int>(mmse.out_values[j].size());
  for (std::size_t c = 0; c < cr.total; ++c) {
    cr.decode(c, digits);  // (m_1..m_j, k)
    std::vector<int> full = digits;
    for (int i = 0; i < j; ++i) full.push_back(0);  // MMSE rows ignore v-prefix
    std::size_t row = mmse.ctx_radix[j].index(full);
    for (int v = 0; v < nv; ++v)
      if (mmse.tables[j][row * nv + v] > 0.5) {
        out[c] = v;
        break;
      }
  }
  return out;
}

// Mass of each merged MMSE value at frame j.
inline std::vector<double> mmse_value_mass(const JointLaw& jl, const DiscreteReconstruction& mmse,
                                           int j) {
  Radix cr = jl.msg_context_radix(j);
  std::vector<int> vidx = ctx_value_index(jl, mmse, j);
  std::vector<double> mass(mmse.out_values[j].size(), 0.0);
  std::vector<int> d, cdig(j + 2);
  const int T = jl.T();
  for (std::size_t idx = 0; idx < jl.radix.total; ++idx) {
    double pr = jl.p[idx];
    if (pr == 0.0) continue;
    jl.radix.decode(idx, d);
    for (int i = 0; i <= j; ++i) cdig[i] = d[T + i];
    cdig[j + 1] = d[2 * T];
    mass[vidx[cr.index(cdig)]] += pr;
  }
  return mass;
}

struct RowConditional {
  // conditional pmf over target atoms for each row atom of a coupling
  std::vector<std::vector<double>> rows;
};

inline RowConditional row_conditionals(const DiscreteCoupling& c) {
  RowConditional rc;
  rc.rows.assign(c.row_marginal.size(), std::vector<double>(c.col_marginal.size(), 0.0));
  for (const auto& e : c.entries) rc.rows[e.row][e.col] += e.mass;
  for (std::size_t r = 0; r < rc.rows.size(); ++r) {
    double s = 0.0;
    for (double v : rc.rows[r]) s += v;
    if (s > 0.0)
      for (double& v : rc.rows[r]) v /= s;
    else
      rc.rows[r][0] = 1.0;  // zero-mass row, never sampled
  }
  return rc;
}

}  // namespace realdetail

// D_j^0 = MMSE_j + W2^2(P_{Xtilde_j}, P_{X_j}): the exact per-frame distortion
// floor under perfect framewise realism for a fixed encoder.
inline DistortionTuple fmd_threshold(const JointLaw& jl) {
  auto [mmse, dist] = mmse_reconstruction(jl);
  std::vector<double> out(jl.T());
  for (int j = 0; j < jl.T(); ++j) {
    auto mass = realdetail::mmse_value_mass(jl, mmse, j);
    ScalarPmf tilde = make_pmf(mmse.out_values[j], mass);
    ScalarPmf source = jl.src.marginal_pmf(j);
    out[j] = dist.mse[j] + w2sq_discrete_1d(tilde, source);
  }
  return DistortionTuple(out);
}

// Realizes the threshold: per frame, push the MMSE value through the quantile
// coupling of P_{Xtilde_j} with P_{X_j}; rows that split mass become
// stochastic rows (auxiliary shared randomness).
inline DiscreteReconstruction fmd_construct(const JointLaw& jl) {
  auto [mmse, dist] = mmse_reconstruction(jl);
  const int T = jl.T();

  DiscreteReconstruction rec;
  std::vector<std::vector<double>> outs(T);
  std::vector<ScalarPmf> sources(T);
  for (int j = 0; j < T; ++j) {
    sources[j] = jl.src.marginal_pmf(j);
    outs[j] = sources[j].support;
  }
  rec.init_shapes(jl, outs);

  for (int j = 0; j < T; ++j) {
    auto mass = realdetail::mmse_value_mass(jl, mmse, j);
    ScalarPmf tilde = make_pmf(mmse.out_values[j], mass);
    // map merged-value index -> tilde atom index (post zero-drop)
    std::vector<int> tilde_index(mmse.out_values[j].size(), -1);
    {
      std::size_t a = 0;
      for (std::size_t v = 0; v < mmse.out_values[j].size(); ++v) {
        if (mass[v] <= 0.0) continue;
        tilde_index[v] = static_cast<int>(a++);
      }
    }
    auto coupling = monotone_coupling(tilde, sources[j]);
    auto rc = realdetail::row_conditionals(coupling);
    auto vidx = realdetail::ctx_value_index(jl, mmse, j);

    Radix cr = jl.msg_context_radix(j);
    const int nv = static_cast<int>(outs[j].size());
    std::vector<int> full, cdig;
    for (std::size_t row = 0; row < rec.ctx_radix[j].total; ++row) {
      rec.ctx_radix[j].decode(row, full);
      cdig.assign(full.begin(), full.begin() + j + 2);
      int merged = vidx[cr.index(cdig)];
      int ti = tilde_index[merged];
      if (ti < 0) ti = 0;  // zero-probability context
      for (int v = 0; v < nv; ++v) rec.tables[j][row * nv + v] = rc.rows[ti][v];
    }
  }
  return rec;
}

namespace realdetail {

struct JdBuild {
  DiscreteReconstruction rec;
  DistortionTuple threshold;
};

// Sequential joint-realism construction: frame 1 couples marginals; frame j
// couples, for each realized output prefix, the conditional MMSE law against
// the source conditional.  Also returns the per-frame threshold values
//   MMSE_j + sum_prefix P(prefix) W2^2(cond MMSE, cond source).
inline JdBuild jd_build(const JointLaw& jl) {
  auto [mmse, dist] = mmse_reconstruction(jl);
  const int T = jl.T();

  JdBuild out;
  std::vector<std::vector<double>> outs(T);
  std::vector<ScalarPmf> sources(T);
  for (int j = 0; j < T; ++j) {
    sources[j] = jl.src.marginal_pmf(j);
    outs[j] = sources[j].support;
  }
  out.rec.init_shapes(jl, outs);
  std::vector<double> thr(T, 0.0);

  // map construction output index -> source alphabet index per frame
  std::vector<std::vector<int>> src_index(T);
  for (int j = 0; j < T; ++j) {
    src_index[j].resize(outs[j].size());
    for (std::size_t v = 0; v < outs[j].size(); ++v) {
      int found = -1;
      for (int a = 0; a < jl.src.alphabet(j); ++a)
        if (std::abs(jl.src.values[j][a] - outs[j][v]) <= 1e-12) found = a;
      src_index[j][v] = found;
    }
  }

  std::vector<int> d, msgs(T), cdig;
  for (int j = 0; j < T; ++j) {
    auto vidx = realdetail::ctx_value_index(jl, mmse, j);
    Radix cr = jl.msg_context_radix(j);
    const int nmerged = static_cast<int>(mmse.out_values[j].size());
    const int nv = static_cast<int>(outs[j].size());

    // joint mass over (v_1..v_{j-1} prefix, merged MMSE value index)
    std::vector<int> psizes;
    for (int i = 0; i < j; ++i) psizes.push_back(static_cast<int>(outs[i].size()));
    Radix prefix_radix(psizes);
    std::vector<std::vector<double>> prefix_mass(prefix_radix.total,
                                                 std::vector<double>(nmerged, 0.0));

    for (std::size_t idx = 0; idx < jl.radix.total; ++idx) {
      double pr = jl.p[idx];
      if (pr == 0.0) continue;
      jl.radix.decode(idx, d);
      const int k = d[2 * T];
      for (int f = 0; f < T; ++f) msgs[f] = d[T + f];
      cdig.assign(d.begin() + T, d.begin() + T + j + 1);
      cdig.push_back(k);
      int merged = vidx[cr.index(cdig)];
      // branch over already-built output prefixes
      std::vector<std::pair<double, std::vector<int>>> branches{{1.0, {}}};
      for (int f = 0; f < j; ++f) {
        std::vector<std::pair<double, std::vector<int>>> next;
        for (auto& br : branches)
          for (int v = 0; v < static_cast<int>(outs[f].size()); ++v) {
            double q = out.rec.prob(f, msgs, k, br.second, v);
            if (q <= 0.0) continue;
            auto vp = br.second;
            vp.push_back(v);
            next.emplace_back(br.first * q, std::move(vp));
          }
        branches = std::move(next);
      }
      for (auto& br : branches)
        prefix_mass[j == 0 ? 0 : prefix_radix.index(br.second)][merged] += pr * br.first;
    }

    // per prefix: couple conditional MMSE pmf with the source conditional
    std::vector<realdetail::RowConditional> prefix_rows(prefix_radix.total);
    std::vector<std::vector<int>> prefix_tilde_index(prefix_radix.total);
    std::vector<int> pdig;
    for (std::size_t a = 0; a < prefix_radix.total; ++a) {
      double pa = 0.0;
      for (double v : prefix_mass[a]) pa += v;
      prefix_tilde_index[a].assign(nmerged, -1);
      if (pa <= 0.0) continue;  // zero-probability prefix carries zero weight

      std::vector<double> cond(nmerged);
      for (int v = 0; v < nmerged; ++v) cond[v] = prefix_mass[a][v] / pa;
      {
        std::size_t t = 0;
        for (int v = 0; v < nmerged; ++v)
          if (cond[v] > 0.0) prefix_tilde_index[a][v] = static_cast<int>(t++);
      }
      ScalarPmf tilde = make_pmf(mmse.out_values[j], cond);

      ScalarPmf src_cond;
      if (j == 0) {
        src_cond = sources[0];
      } else {
        prefix_radix.decode(a, pdig);
        int prev = src_index[j - 1][pdig[j - 1]];
        if (prev < 0) continue;  // output value outside source support: impossible prefix
        src_cond = jl.src.conditional_pmf(j - 1, prev);
      }
      auto coupling = monotone_coupling(tilde, src_cond);
      thr[j] += pa * coupling.transport_cost();

      // expand conditional rows onto the full frame-j output grid
      realdetail::RowConditional rc = realdetail::row_conditionals(coupling);
      realdetail::RowConditional expanded;
      expanded.rows.assign(rc.rows.size(), std::vector<double>(nv, 0.0));
      for (std::size_t r = 0; r < rc.rows.size(); ++r)
        for (std::size_t c = 0; c < src_cond.support.size(); ++c) {
          // locate the output atom equal to this conditional support value
          int oidx = -1;
          for (int v = 0; v < nv; ++v)
            if (std::abs(outs[j][v] - src_cond.support[c]) <= 1e-12) oidx = v;
          expanded.rows[r][oidx < 0 ? 0 : oidx] += rc.rows[r][c];
        }
      prefix_rows[a] = std::move(expanded);
    }
    thr[j] += dist.mse[j];

    // fill the frame-j table
    std::vector<int> full;
    for (std::size_t row = 0; row < out.rec.ctx_radix[j].total; ++row) {
      out.rec.ctx_radix[j].decode(row, full);
      cdig.assign(full.begin(), full.begin() + j + 2);
      std::vector<int> pfx(full.begin() + j + 2, full.end());
      std::size_t a = j == 0 ? 0 : prefix_radix.index(pfx);
      int merged = vidx[cr.index(cdig)];
      int ti = prefix_rows[a].rows.empty() ? -1 : prefix_tilde_index[a][merged];
      if (ti < 0) {
        out.rec.tables[j][row * nv + 0] = 1.0;  // unreachable context
      } else {
        for (int v = 0; v < nv; ++v) out.rec.tables[j][row * nv + v] = prefix_rows[a].rows[ti][v];
      }
    }
  }
  out.threshold = DistortionTuple(thr);
  return out;
}

}  // namespace realdetail

inline DistortionTuple jd_threshold(const JointLaw& jl) { return realdetail::jd_build(jl).threshold; }

inline DiscreteReconstruction jd_construct(const JointLaw& jl) { return realdetail::jd_build(jl).rec; }

// Encoder family that is nearly uninformative: each frame's message law is a
// mu-mixture of the informative base encoder with its own source-averaged
// marginal, so the posterior of X_j given messages stays within O(mu) of the
// prior.  At mu = 0 the messages are independent of the source.
struct NoisyEncoderSpec {
  double mu = 0.0;
  DiscreteEncoder base;
};

inline DiscreteEncoder make_noisy_encoder(const DiscreteMarkovSource& src,
                                          const DiscreteEncoder& base, double mu) {
  if (mu < 0.0 || mu > 1.0) throw std::invalid_argument("make_noisy_encoder: mu outside [0,1]");
  const int T = src.T();
  DiscreteEncoder mixed = base;

  for (int j = 0; j < T; ++j) {
    // posterior w(x_j | m_<j, k) under the mixed system built so far
    std::vector<int> sizes;
    for (int f = 0; f <= j; ++f) sizes.push_back(src.alphabet(f));
    for (int f = 0; f < j; ++f) sizes.push_back(mixed.msg_sizes[f]);
    Radix partial(sizes);

    std::vector<int> csizes;
    for (int f = 0; f < j; ++f) csizes.push_back(mixed.msg_sizes[f]);
    csizes.push_back(mixed.K());
    Radix ctx(csizes);

    std::vector<std::vector<double>> w(ctx.total, std::vector<double>(src.alphabet(j), 0.0));
    std::vector<int> d, mprefix(j), cdig(j + 1);
    for (int k = 0; k < mixed.K(); ++k) {
      for (std::size_t idx = 0; idx < partial.total; ++idx) {
        partial.decode(idx, d);
        double pr = src.init[d[0]];
        for (int f = 0; f + 1 <= j && pr > 0.0; ++f) pr *= src.trans_prob(f, d[f], d[f + 1]);
        if (pr == 0.0) continue;
        for (int f = 0; f < j && pr > 0.0; ++f) {
          for (int i = 0; i < f; ++i) mprefix[i] = d[j + 1 + i];
          pr *= mixed.prob(f, d[f], mprefix, k, d[j + 1 + f]);
        }
        if (pr == 0.0) continue;
        for (int i = 0; i < j; ++i) cdig[i] = d[j + 1 + i];
        cdig[j] = k;
        w[ctx.index(cdig)][d[j]] += pr;
      }
    }
    for (auto& row : w) {
      double s = 0.0;
      for (double v : row) s += v;
      if (s > 0.0)
        for (double& v : row) v /= s;
      else
        row = src.marginal(j);  // unreachable context
    }

    // lambda(m | ctx) = sum_x w(x|ctx) base(m | x, ctx); mix row-wise
    const int M = mixed.msg_sizes[j];
    std::vector<int> full;
    std::vector<double> table(mixed.ctx_radix[j].total * M, 0.0);
    for (std::size_t r = 0; r < mixed.ctx_radix[j].total; ++r) {
      mixed.ctx_radix[j].decode(r, full);  // (x_j, m_<j, k)
      for (int i = 0; i < j; ++i) cdig[i] = full[1 + i];
      cdig[j] = full[j + 1];
      const auto& wrow = w[ctx.index(cdig)];
      for (int m = 0; m < M; ++m) {
        double lambda = 0.0;
        for (int xx = 0; xx < src.alphabet(j); ++xx) {
          std::vector<int> bdig = full;
          bdig[0] = xx;
          lambda += wrow[xx] * base.tables[j][mixed.ctx_radix[j].index(bdig) * M + m];
        }
        double b = base.tables[j][r * M + m];
        table[r * M + m] = (1.0 - mu) * lambda + mu * b;
      }
    }
    mixed.tables[j] = std::move(table);
  }
  return mixed;
}

struct NoisySweepRow {
  double mu = 0.0;
  std::vector<double> mmse;
  std::vector<double> jd_mse;
  std::vector<double> gap;  // jd_mse - 2 * mmse
};

inline std::vector<NoisySweepRow> noisy_factor_two_sweep(const DiscreteMarkovSource& src,
                                                         const DiscreteEncoder& base,
                                                         const std::vector<double>& mus) {
  std::vector<NoisySweepRow> rows;
  for (double mu : mus) {
    if (!(mu > 0.0 && mu <= 1.0))
      throw std::invalid_argument("noisy_factor_two_sweep: mu must be in (0,1]");
    DiscreteEncoder enc = make_noisy_encoder(src, base, mu);
    JointLaw jl = joint_law(src, enc);
    auto [mmse_rec, mmse_dist] = mmse_reconstruction(jl);
    auto rec = jd_construct(jl);
    auto ev = evaluate_reconstruction(jl, rec);
    NoisySweepRow row;
    row.mu = mu;
    row.mmse = mmse_dist.mse;
    row.jd_mse = ev.mse;
    for (int j = 0; j < src.T(); ++j) row.gap.push_back(ev.mse[j] - 2.0 * mmse_dist.mse[j]);
    rows.push_back(std::move(row));
  }
  return rows;
}

struct GapDecayCheck {
  double slope = 0.0;
  double r_squared = 0.0;
  bool linear = false;
};

// Fits max-over-frames gap ~ c * mu through the origin.
inline GapDecayCheck check_gap_decay(const std::vector<NoisySweepRow>& rows,
                                     double r2_threshold = 0.95) {
  std::vector<double> xs, ys;
  for (const auto& r : rows) {
    double g = 0.0;
    for (double v : r.gap) g = std::max(g, std::abs(v));
    xs.push_back(r.mu);
    ys.push_back(g);
  }
  auto fit = fit_through_origin(xs, ys);
  GapDecayCheck c;
  c.slope = fit.slope;
  c.r_squared = fit.r_squared;
  c.linear = fit.r_squared >= r2_threshold;
  return c;
}

}  // namespace crdp
