#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "crdp/mat.hpp"
#include "crdp/statutil.hpp"

namespace crdp {

enum class PlfKind { Fmd, Jd };

inline std::string plf_name(PlfKind k) { return k == PlfKind::Fmd ? "fmd" : "jd"; }

// Zero-mean scalar Gauss-Markov source: X_{j+1} = rho_j (sigma_{j+1}/sigma_j) X_j + N_j
// with Var(N_j) = (1 - rho_j^2) sigma_{j+1}^2.
struct GaussMarkovSource {
  int frames = 0;
  std::vector<double> sigma;  // per-frame standard deviations, > 0
  std::vector<double> rho;    // per-step correlations, |rho| <= 1

  GaussMarkovSource() = default;
  GaussMarkovSource(std::vector<double> sigma_in, std::vector<double> rho_in)
      : frames(static_cast<int>(sigma_in.size())), sigma(std::move(sigma_in)), rho(std::move(rho_in)) {
    if (frames < 1) throw std::invalid_argument("source: needs at least one frame");
    if (rho.size() + 1 != sigma.size()) throw std::invalid_argument("source: rho size must be T-1");
    for (double s : sigma)
      if (!(s > 0.0)) throw std::invalid_argument("source: sigma must be positive");
    for (double r : rho)
      if (!(std::abs(r) <= 1.0)) throw std::invalid_argument("source: |rho| must be <= 1");
  }

  static GaussMarkovSource homogeneous(int frames, double sigma_val, double rho_val) {
    return GaussMarkovSource(std::vector<double>(frames, sigma_val),
                             std::vector<double>(frames - 1, rho_val));
  }

  double innovation_variance(int step) const {
    return (1.0 - rho[step] * rho[step]) * sigma[step + 1] * sigma[step + 1];
  }

  // E[X_i X_j] = sigma_i sigma_j prod rho over the steps between them.
  double cov(int i, int j) const {
    if (i > j) std::swap(i, j);
    double r = 1.0;
    for (int k = i; k < j; ++k) r *= rho[k];
    return r * sigma[i] * sigma[j];
  }

  Mat covariance() const {
    Mat c(frames, frames);
    for (int i = 0; i < frames; ++i)
      for (int j = 0; j < frames; ++j) c(i, j) = cov(i, j);
    return c;
  }
};

namespace tupledetail {
inline void check_tuple(const std::vector<double>& v, const char* what) {
  if (v.empty()) throw std::invalid_argument(std::string(what) + ": empty");
  for (double x : v)
    if (!(x >= 0.0)) throw std::invalid_argument(std::string(what) + ": negative entry");
}
}  // namespace tupledetail

// Per-frame tuples; entries may be +inf to mean "unconstrained".
struct RateTuple {
  std::vector<double> bits;
  RateTuple() = default;
  explicit RateTuple(std::vector<double> b) : bits(std::move(b)) {
    tupledetail::check_tuple(bits, "RateTuple");
  }
};

struct DistortionTuple {
  std::vector<double> mse;
  DistortionTuple() = default;
  explicit DistortionTuple(std::vector<double> d) : mse(std::move(d)) {
    tupledetail::check_tuple(mse, "DistortionTuple");
  }
};

struct PerceptionTuple {
  std::vector<double> w2sq;
  PerceptionTuple() = default;
  explicit PerceptionTuple(std::vector<double> p) : w2sq(std::move(p)) {
    tupledetail::check_tuple(w2sq, "PerceptionTuple");
  }
};

// Gaussian causal reconstruction family: frame j is a linear
// combination of earlier reconstructions and the current source plus
// independent Gaussian noise,
//   Xhat_j = sum_i coeff_recon[i] Xhat_i + coeff_source X_j + Z_j.
struct LinearReconstructionLaw {
  struct Frame {
    std::vector<double> recon_coeffs;  // on Xhat_1 .. Xhat_{j-1}
    double source_coeff = 0.0;         // on X_j
    double noise_var = 0.0;            // Var(Z_j) >= 0
    double recon_var = 0.0;            // implied Var(Xhat_j), kept self-consistent
  };
  std::vector<Frame> frames;

  int T() const { return static_cast<int>(frames.size()); }
};

// Joint second-order description of (X_1..X_T, Xhat_1..Xhat_T); all means zero.
struct JointGaussianStats {
  int T = 0;
  Mat cov;  // 2T x 2T, ordered X_1..X_T, Xhat_1..Xhat_T

  double xx(int i, int j) const { return cov(i, j); }
  double xxhat(int i, int j) const { return cov(i, T + j); }
  double xhatxhat(int i, int j) const { return cov(T + i, T + j); }

  Mat source_block() const {
    std::vector<std::size_t> idx(T);
    for (int i = 0; i < T; ++i) idx[i] = i;
    return cov.submatrix(idx);
  }
  Mat recon_block() const {
    std::vector<std::size_t> idx(T);
    for (int i = 0; i < T; ++i) idx[i] = T + i;
    return cov.submatrix(idx);
  }
  Mat recon_block_upto(int j) const {  // Xhat_1..Xhat_j
    std::vector<std::size_t> idx(j);
    for (int i = 0; i < j; ++i) idx[i] = T + i;
    return cov.submatrix(idx);
  }

  double distortion(int j) const { return xx(j, j) - 2.0 * xxhat(j, j) + xhatxhat(j, j); }
};

// Exact covariance of (X, Xhat) by forward substitution through the law.
inline JointGaussianStats assemble_joint_stats(const GaussMarkovSource& source,
                                               const LinearReconstructionLaw& law,
                                               double consistency_tol = 1e-9) {
  const int T = source.frames;
  if (law.T() != T) throw std::invalid_argument("assemble_joint_stats: law/source frame mismatch");
  JointGaussianStats st;
  st.T = T;
  st.cov = Mat(2 * T, 2 * T);
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < T; ++j) st.cov(i, j) = source.cov(i, j);

  for (int j = 0; j < T; ++j) {
    const auto& f = law.frames[j];
    if (static_cast<int>(f.recon_coeffs.size()) != j)
      throw std::invalid_argument("assemble_joint_stats: frame coefficient count mismatch");
    if (f.noise_var < -1e-12) throw std::invalid_argument("assemble_joint_stats: negative noise variance");
    // cross covariances with every already-known variable
    for (int v = 0; v < T + j; ++v) {
      double c = 0.0;
      for (int i = 0; i < j; ++i) c += f.recon_coeffs[i] * st.cov(v, T + i);
      c += f.source_coeff * st.cov(v, j);
      st.cov(v, T + j) = c;
      st.cov(T + j, v) = c;
    }
    // own variance
    double var = std::max(0.0, f.noise_var);
    for (int a = 0; a < j; ++a)
      for (int b = 0; b < j; ++b)
        var += f.recon_coeffs[a] * f.recon_coeffs[b] * st.cov(T + a, T + b);
    for (int a = 0; a < j; ++a) var += 2.0 * f.recon_coeffs[a] * f.source_coeff * st.cov(j, T + a);
    var += f.source_coeff * f.source_coeff * st.cov(j, j);
    if (var < -consistency_tol)
      throw std::invalid_argument("assemble_joint_stats: negative implied variance");
    var = std::max(0.0, var);
    double scale = std::max(1.0, var);
    if (std::abs(var - f.recon_var) > consistency_tol * scale)
      throw std::invalid_argument("assemble_joint_stats: law recon_var inconsistent with coefficients");
    st.cov(T + j, T + j) = var;
  }
  return st;
}

// Convenience builder that fills recon_var from the coefficients so laws are
// self-consistent by construction.
inline LinearReconstructionLaw finalize_law(const GaussMarkovSource& source,
                                            LinearReconstructionLaw law) {
  const int T = source.frames;
  JointGaussianStats st;
  st.T = T;
  st.cov = Mat(2 * T, 2 * T);
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < T; ++j) st.cov(i, j) = source.cov(i, j);
  for (int j = 0; j < T; ++j) {
    auto& f = law.frames[j];
    for (int v = 0; v < T + j; ++v) {
      double c = 0.0;
      for (int i = 0; i < j; ++i) c += f.recon_coeffs[i] * st.cov(v, T + i);
      c += f.source_coeff * st.cov(v, j);
      st.cov(v, T + j) = c;
      st.cov(T + j, v) = c;
    }
    double var = std::max(0.0, f.noise_var);
    for (int a = 0; a < j; ++a)
      for (int b = 0; b < j; ++b)
        var += f.recon_coeffs[a] * f.recon_coeffs[b] * st.cov(T + a, T + b);
    for (int a = 0; a < j; ++a) var += 2.0 * f.recon_coeffs[a] * f.source_coeff * st.cov(j, T + a);
    var += f.source_coeff * f.source_coeff * st.cov(j, j);
    f.recon_var = std::max(0.0, var);
    st.cov(T + j, T + j) = f.recon_var;
  }
  return law;
}

// I(X_j ; Xhat_j | Xhat_1..Xhat_{j-1}) in bits for a law frame: the numerator
// is Var(Xhat_j | Xhat_{<j}) and the denominator Var(Xhat_j | Xhat_{<j}, X_j),
// which for this family is exactly the frame's noise variance.
inline double law_rate_bits(const JointGaussianStats& st, const LinearReconstructionLaw& law, int j) {
  const int T = st.T;
  double var_given_past = st.xhatxhat(j, j);
  if (j > 0) {
    Mat past = st.recon_block_upto(j);
    std::vector<double> cross(j);
    for (int i = 0; i < j; ++i) cross[i] = st.xhatxhat(i, j);
    bool singular = false;
    std::vector<double> w = solve_linear(past, cross, &singular);
    if (!singular) {
      double expl = 0.0;
      for (int i = 0; i < j; ++i) expl += w[i] * cross[i];
      var_given_past -= expl;
    } else {
      // degenerate past block: project on its span via eigendecomposition
      std::vector<double> vals;
      Mat vecs;
      jacobi_eigen(past, vals, vecs);
      double expl = 0.0;
      for (int k = 0; k < j; ++k) {
        if (vals[k] <= 1e-14) continue;
        double proj = 0.0;
        for (int i = 0; i < j; ++i) proj += vecs(i, k) * cross[i];
        expl += proj * proj / vals[k];
      }
      var_given_past -= expl;
    }
  }
  var_given_past = std::max(0.0, var_given_past);
  double noise = std::max(0.0, law.frames[j].noise_var);
  if (noise <= 1e-300) return var_given_past <= 1e-300 ? 0.0 : inf();
  double ratio = var_given_past / noise;
  return ratio <= 1.0 ? 0.0 : 0.5 * std::log2(ratio);
}

}  // namespace crdp
