#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "crdp/extremal.hpp"
#include "crdp/gauss_solver.hpp"
#include "crdp/model.hpp"
#include "crdp/transport.hpp"

namespace crdp {

// Per-frame linear map from the MMSE representation to a target
// reconstruction, plus independent additive noise.
struct UniversalTransform {
  std::vector<std::vector<double>> coeffs;  // frame j: weights on Xr_1..Xr_{j+1}
  std::vector<double> noise_var;

  int T() const { return static_cast<int>(coeffs.size()); }
};

struct TransformFailure : std::runtime_error {
  enum class Kind { NegativeNoise, SingularSystem, RatePrecondition };
  Kind kind;
  int frame;
  TransformFailure(Kind k, int f, const std::string& msg)
      : std::runtime_error(msg), kind(k), frame(f) {}
};

// Solves for the transform coefficients frame by frame: frame j matches
// Cov(Xhat_j, Xhat_i) for i < j and Cov(Xhat_j, X_j), then reads the noise
// variance off Var(Xhat_j).  The remaining covariance entries are matched as
// a consequence (verify_transform asserts that).
inline UniversalTransform solve_transform(const MmseRepresentationStats& stats,
                                          const GaussMarkovSource& src,
                                          const TradeoffPoint& target) {
  const int T = stats.T;
  if (src.frames != T || target.law.T() != T)
    throw std::invalid_argument("solve_transform: frame count mismatch");
  for (int j = 0; j < T; ++j) {
    if (!(stats.rates.bits[j] > 0.0))
      throw TransformFailure(TransformFailure::Kind::RatePrecondition, j + 1,
                             "representation rate must be strictly positive");
    if (target.rate.bits[j] > stats.rates.bits[j] + 1e-9)
      throw TransformFailure(TransformFailure::Kind::RatePrecondition, j + 1,
                             "target rate exceeds the representation rate at frame " +
                                 std::to_string(j + 1));
  }

  JointGaussianStats tgt = assemble_joint_stats(src, target.law);
  UniversalTransform tf;
  tf.coeffs.resize(T);
  tf.noise_var.assign(T, 0.0);

  for (int j = 0; j < T; ++j) {
    const int n = j + 1;
    Mat a(n, n);
    std::vector<double> rhs(n);
    // rows i < j: match Cov(Xhat'_j, Xhat'_i) = sum_m t_m sum_l t_{i,l} Crr(m,l)
    for (int i = 0; i < j; ++i) {
      for (int m = 0; m < n; ++m) {
        double val = 0.0;
        for (std::size_t l = 0; l < tf.coeffs[i].size(); ++l)
          val += tf.coeffs[i][l] * stats.xr_xr(m, static_cast<int>(l));
        a(i, m) = val;
      }
      rhs[i] = tgt.xhatxhat(i, j);
    }
    // last row: match Cov(Xhat'_j, X_j)
    for (int m = 0; m < n; ++m) a(j, m) = stats.x_xr(j, m);
    rhs[j] = tgt.xxhat(j, j);

    bool singular = false;
    auto t = solve_linear(a, rhs, &singular);
    if (singular)
      throw TransformFailure(TransformFailure::Kind::SingularSystem, j + 1,
                             "transform system singular at frame " + std::to_string(j + 1));
    double lin = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = 0; q < n; ++q) lin += t[p] * t[q] * stats.xr_xr(p, q);
    double nv = tgt.xhatxhat(j, j) - lin;
    if (nv < -1e-9)
      throw TransformFailure(TransformFailure::Kind::NegativeNoise, j + 1,
                             "target outside the transformable set at frame " +
                                 std::to_string(j + 1));
    tf.coeffs[j] = t;
    tf.noise_var[j] = std::max(0.0, nv);
  }
  return tf;
}

struct TransformReport {
  double max_cov_deviation = 0.0;
  bool noise_ok = true;
  DistortionTuple distortion;   // of the transformed law
  PerceptionTuple perception;   // FMD entries, plus the joint value in jd_w2sq
  std::vector<double> jd_w2sq;  // per frame-prefix joint W2^2 vs the source
};

// Assembles the covariance of (X, transformed Xhat) and compares it entrywise
// against the target law's own covariance.
inline TransformReport verify_transform(const MmseRepresentationStats& stats,
                                        const GaussMarkovSource& src,
                                        const UniversalTransform& tf,
                                        const TradeoffPoint& target) {
  const int T = stats.T;
  Mat cov(2 * T, 2 * T);
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < T; ++j) cov(i, j) = src.cov(i, j);
  for (int j = 0; j < T; ++j) {
    for (int i = 0; i < T; ++i) {
      double c = 0.0;
      for (std::size_t m = 0; m < tf.coeffs[j].size(); ++m)
        c += tf.coeffs[j][m] * stats.x_xr(i, static_cast<int>(m));
      cov(i, T + j) = c;
      cov(T + j, i) = c;
    }
    for (int i = 0; i <= j; ++i) {
      double c = 0.0;
      for (std::size_t m = 0; m < tf.coeffs[j].size(); ++m)
        for (std::size_t l = 0; l < tf.coeffs[i].size(); ++l)
          c += tf.coeffs[j][m] * tf.coeffs[i][l] *
               stats.xr_xr(static_cast<int>(m), static_cast<int>(l));
      if (i == j) c += tf.noise_var[j];
      cov(T + i, T + j) = c;
      cov(T + j, T + i) = c;
    }
  }

  JointGaussianStats tgt = assemble_joint_stats(src, target.law);
  TransformReport rep;
  rep.max_cov_deviation = cov.max_abs_diff(tgt.cov);
  for (double nv : tf.noise_var)
    if (nv < -1e-9) rep.noise_ok = false;

  std::vector<double> d(T), p(T);
  rep.jd_w2sq.resize(T);
  for (int j = 0; j < T; ++j) {
    d[j] = cov(j, j) - 2.0 * cov(j, T + j) + cov(T + j, T + j);
    p[j] = w2sq_gauss_1d(src.sigma[j], std::sqrt(std::max(0.0, cov(T + j, T + j))));
    std::vector<std::size_t> xs(j + 1), hs(j + 1);
    for (int i = 0; i <= j; ++i) {
      xs[i] = i;
      hs[i] = T + i;
    }
    rep.jd_w2sq[j] = w2sq_gauss_nd(cov.submatrix(xs), cov.submatrix(hs));
  }
  rep.distortion = DistortionTuple(d);
  rep.perception = PerceptionTuple(p);
  return rep;
}

// Symmetric example: sigma = 1, rho_j = rho, rates chosen so the MMSE
// distortion is D at every frame; the zero-perception target is the
// 1/sqrt(1-D) scaling of the representation, expressed as a causal law.
struct SymmetricExample {
  RateTuple rates;
  double mmse_distortion = 0.0;
  double zero_plf_distortion = 0.0;  // 2 - 2 sqrt(1-D)
  LinearReconstructionLaw target_law;
  GaussMarkovSource source;
  MmseRepresentationStats stats;
};

inline SymmetricExample symmetric_example(int frames, double rho, double d) {
  if (!(d > 0.0 && d < 1.0)) throw std::invalid_argument("symmetric_example: D must be in (0,1)");
  SymmetricExample ex;
  ex.source = GaussMarkovSource::homogeneous(frames, 1.0, rho);
  std::vector<double> rates(frames);
  rates[0] = 0.5 * std::log2(1.0 / d);
  for (int j = 1; j < frames; ++j)
    rates[j] = 0.5 * std::log2((rho * rho * d + 1.0 - rho * rho) / d);
  ex.rates = RateTuple(rates);
  auto [dmin, stats] = mmse_recursion(ex.source, ex.rates);
  ex.stats = stats;
  ex.mmse_distortion = d;
  ex.zero_plf_distortion = 2.0 - 2.0 * std::sqrt(1.0 - d);

  const double scale = 1.0 / std::sqrt(1.0 - d);
  LinearReconstructionLaw law;
  law.frames.resize(frames);
  // frame 1: Xr_1 = (1-D) X_1 + U_1, so Xhat_1 = sqrt(1-D) X_1 + U_1 scale
  law.frames[0].source_coeff = (1.0 - d) * scale;
  law.frames[0].noise_var = (1.0 - d) * d * scale * scale;
  for (int j = 1; j < frames; ++j) {
    double var_w = rho * rho * d + 1.0 - rho * rho;
    double cw = (var_w - d) / var_w;
    law.frames[j].recon_coeffs.assign(j, 0.0);
    law.frames[j].recon_coeffs[j - 1] = rho * (1.0 - cw);
    law.frames[j].source_coeff = cw * scale;
    double var_u = (var_w - d) * d / var_w;
    law.frames[j].noise_var = var_u * scale * scale;
  }
  ex.target_law = finalize_law(ex.source, law);
  return ex;
}

}  // namespace crdp
