#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "crdp/mat.hpp"

namespace crdp {

// Finite scalar distribution with strictly increasing support.
struct ScalarPmf {
  std::vector<double> support;
  std::vector<double> probs;

  std::size_t size() const { return support.size(); }

  double mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < size(); ++i) m += probs[i] * support[i];
    return m;
  }

  double second_moment() const {
    double m = 0.0;
    for (std::size_t i = 0; i < size(); ++i) m += probs[i] * support[i] * support[i];
    return m;
  }

  double variance() const {
    double mu = mean();
    return second_moment() - mu * mu;
  }
};

inline void validate_pmf(const ScalarPmf& p) {
  if (p.support.empty() || p.support.size() != p.probs.size())
    throw std::invalid_argument("pmf: empty or mismatched support/probs");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.support.size(); ++i) {
    if (!(p.probs[i] > 0.0)) throw std::invalid_argument("pmf: non-positive probability");
    if (i > 0 && !(p.support[i] > p.support[i - 1]))
      throw std::invalid_argument("pmf: support not strictly increasing");
    sum += p.probs[i];
  }
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("pmf: probabilities do not sum to 1");
}

// Builds a pmf from unsorted atoms: sorts, merges values closer than
// `merge_tol`, drops zero-mass atoms and renormalizes away rounding dust.
inline ScalarPmf make_pmf(std::vector<double> values, std::vector<double> probs,
                          double merge_tol = 1e-12) {
  if (values.size() != probs.size() || values.empty())
    throw std::invalid_argument("make_pmf: bad input");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  ScalarPmf out;
  for (std::size_t idx : order) {
    double v = values[idx], p = probs[idx];
    if (p <= 0.0) continue;
    if (!out.support.empty() && v - out.support.back() <= merge_tol) {
      // weighted merge keeps the mean of coincident atoms
      double pm = out.probs.back();
      out.support.back() = (out.support.back() * pm + v * p) / (pm + p);
      out.probs.back() = pm + p;
    } else {
      out.support.push_back(v);
      out.probs.push_back(p);
    }
  }
  if (out.support.empty()) throw std::invalid_argument("make_pmf: all mass zero");
  double sum = std::accumulate(out.probs.begin(), out.probs.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("make_pmf: mass not normalized");
  for (double& p : out.probs) p /= sum;
  return out;
}

struct CouplingEntry {
  std::size_t row, col;
  double mass;
};

struct DiscreteCoupling {
  ScalarPmf row_marginal;
  ScalarPmf col_marginal;
  std::vector<CouplingEntry> entries;

  double transport_cost() const {
    double c = 0.0;
    for (const auto& e : entries) {
      double d = row_marginal.support[e.row] - col_marginal.support[e.col];
      c += e.mass * d * d;
    }
    return c;
  }

  double row_sum(std::size_t r) const {
    double s = 0.0;
    for (const auto& e : entries)
      if (e.row == r) s += e.mass;
    return s;
  }
  double col_sum(std::size_t c) const {
    double s = 0.0;
    for (const auto& e : entries)
      if (e.col == c) s += e.mass;
    return s;
  }
};

// Quantile (monotone) coupling: walk both CDFs in lockstep pairing mass in
// order.  Optimal in 1-D for convex costs, so this is the exact W2 plan.
inline DiscreteCoupling monotone_coupling(const ScalarPmf& p, const ScalarPmf& q) {
  validate_pmf(p);
  validate_pmf(q);
  DiscreteCoupling c;
  c.row_marginal = p;
  c.col_marginal = q;
  std::size_t i = 0, j = 0;
  double pi = p.probs[0], qj = q.probs[0];
  while (i < p.size() && j < q.size()) {
    double m = std::min(pi, qj);
    if (m > 0.0) c.entries.push_back({i, j, m});
    pi -= m;
    qj -= m;
    if (pi <= 1e-15) {
      ++i;
      if (i < p.size()) pi = p.probs[i];
    }
    if (qj <= 1e-15) {
      ++j;
      if (j < q.size()) qj = q.probs[j];
    }
  }
  return c;
}

inline double w2sq_discrete_1d(const ScalarPmf& p, const ScalarPmf& q) {
  validate_pmf(p);
  validate_pmf(q);
  double cost = 0.0;
  std::size_t i = 0, j = 0;
  double pi = p.probs[0], qj = q.probs[0];
  while (i < p.size() && j < q.size()) {
    double m = std::min(pi, qj);
    double d = p.support[i] - q.support[j];
    cost += m * d * d;
    pi -= m;
    qj -= m;
    if (pi <= 1e-15) {
      ++i;
      if (i < p.size()) pi = p.probs[i];
    }
    if (qj <= 1e-15) {
      ++j;
      if (j < q.size()) qj = q.probs[j];
    }
  }
  return cost;
}

// W2^2 between zero-mean 1-D Gaussians.
inline double w2sq_gauss_1d(double sigma_p, double sigma_q) {
  if (sigma_p < 0.0 || sigma_q < 0.0)
    throw std::invalid_argument("w2sq_gauss_1d: negative standard deviation");
  double d = sigma_p - sigma_q;
  return d * d;
}

// W2^2 between zero-mean Gaussians:
//   tr(Sp + Sq - 2 (Sp^{1/2} Sq Sp^{1/2})^{1/2}).
// For 2x2 inputs the cross trace has the closed form
//   sqrt(tr(Sp Sq) + 2 sqrt(det Sp det Sq)).
inline double w2sq_gauss_nd(const Mat& cov_p, const Mat& cov_q) {
  if (!cov_p.square() || !cov_q.square() || cov_p.rows() != cov_q.rows())
    throw std::invalid_argument("w2sq_gauss_nd: shape mismatch");
  if (cov_p.max_asymmetry() > 1e-9 || cov_q.max_asymmetry() > 1e-9)
    throw std::invalid_argument("w2sq_gauss_nd: asymmetric input");
  const std::size_t n = cov_p.rows();
  double result;
  if (n == 1) {
    double a = std::max(0.0, cov_p(0, 0)), b = std::max(0.0, cov_q(0, 0));
    if (cov_p(0, 0) < -1e-9 || cov_q(0, 0) < -1e-9)
      throw std::invalid_argument("w2sq_gauss_nd: negative variance");
    double d = std::sqrt(a) - std::sqrt(b);
    return d * d;
  }
  if (n == 2) {
    double dp = cov_p(0, 0) * cov_p(1, 1) - cov_p(0, 1) * cov_p(1, 0);
    double dq = cov_q(0, 0) * cov_q(1, 1) - cov_q(0, 1) * cov_q(1, 0);
    double scale = std::max({1.0, mat_trace(cov_p), mat_trace(cov_q)});
    if (dp < -1e-9 * scale * scale || dq < -1e-9 * scale * scale)
      throw std::invalid_argument("w2sq_gauss_nd: negative determinant");
    dp = std::max(0.0, dp);
    dq = std::max(0.0, dq);
    double tr_pq = mat_trace(mat_mul(cov_p, cov_q));
    double cross = std::sqrt(std::max(0.0, tr_pq + 2.0 * std::sqrt(dp * dq)));
    result = mat_trace(cov_p) + mat_trace(cov_q) - 2.0 * cross;
  } else {
    Mat sp = spd_sqrt(cov_p);
    Mat inner = mat_mul(mat_mul(sp, cov_q), sp);
    inner.symmetrize();
    Mat cross = spd_sqrt(inner);
    result = mat_trace(cov_p) + mat_trace(cov_q) - 2.0 * mat_trace(cross);
  }
  if (result < 0.0 && result > -1e-10 * std::max(1.0, mat_trace(cov_p) + mat_trace(cov_q)))
    result = 0.0;
  return std::max(0.0, result);
}

}  // namespace crdp
