#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "crdp/gauss_solver.hpp"
#include "crdp/model.hpp"

namespace crdp {

enum class RateRegime { LowLow, InfLow, LowInf };
enum class RegimeKind { Mmse, Fmd, Jd };

inline std::string regime_name(RateRegime r) {
  switch (r) {
    case RateRegime::LowLow: return "low_low";
    case RateRegime::InfLow: return "inf_low";
    default: return "low_inf";
  }
}

inline std::string kind_name(RegimeKind k) {
  switch (k) {
    case RegimeKind::Mmse: return "mmse";
    case RegimeKind::Fmd: return "fmd";
    default: return "jd";
  }
}

struct ExtremalRegime {
  RateRegime rates = RateRegime::LowLow;
  RegimeKind kind = RegimeKind::Mmse;
  double eps = 1e-3;
};

struct ExtremalCell {
  LinearReconstructionLaw law;  // dominant-term coefficients
  double d1 = 0.0, d2 = 0.0;    // closed-form distortions
  std::string error_order;      // size of the ignored correction terms
};

// Dominant-term reconstructions and distortions for the nine extremal-rate
// cells (sigma1 = sigma2 = sigma).  The low-rate first frame always uses
// D1 = 2(1 - sqrt(2 eps ln 2)) sigma^2, uniformly across cells; truncating
// the JD (eps, inf) entry to 2 sigma^2 would leave a sqrt(eps)-sized error
// term and break the linear-in-eps agreement check.
inline ExtremalCell extremal_law(const ExtremalRegime& regime, double sigma, double rho) {
  if (!(regime.eps > 0.0)) throw std::invalid_argument("extremal_law: eps must be positive");
  if (!(sigma > 0.0)) throw std::invalid_argument("extremal_law: sigma must be positive");
  const double s2 = sigma * sigma;
  const double c = 2.0 * regime.eps * std::log(2.0);  // 1 - 2^-2eps to first order
  const double rc = std::sqrt(c);
  const double r2 = rho * rho;

  ExtremalCell cell;
  LinearReconstructionLaw law;
  law.frames.resize(2);
  auto& f1 = law.frames[0];
  auto& f2 = law.frames[1];
  f2.recon_coeffs.resize(1);

  switch (regime.kind) {
    case RegimeKind::Mmse:
      switch (regime.rates) {
        case RateRegime::LowLow:
          f1.source_coeff = c;
          f1.noise_var = c * s2;
          f2.recon_coeffs[0] = rho;
          f2.source_coeff = c;
          f2.noise_var = c * s2;
          cell.d1 = (1.0 - c) * s2;
          cell.d2 = (1.0 - (1.0 + r2) * c) * s2;
          cell.error_order = "O(eps^2)";
          break;
        case RateRegime::InfLow:
          f1.source_coeff = 1.0;
          f2.recon_coeffs[0] = rho - rho * c;
          f2.source_coeff = c;
          f2.noise_var = (1.0 - r2) * c * s2;
          cell.d1 = 0.0;
          cell.d2 = (1.0 - r2 - (1.0 - r2) * c) * s2;
          cell.error_order = "O(eps^2)";
          break;
        case RateRegime::LowInf:
          f1.source_coeff = c;
          f1.noise_var = c * s2;
          f2.recon_coeffs[0] = 0.0;
          f2.source_coeff = 1.0;
          cell.d1 = (1.0 - c) * s2;
          cell.d2 = 0.0;
          cell.error_order = "O(eps^2)";
          break;
      }
      break;
    case RegimeKind::Fmd:
      switch (regime.rates) {
        case RateRegime::LowLow:
          f1.source_coeff = rc;
          f1.noise_var = (1.0 - c) * s2;
          f2.recon_coeffs[0] = rho / std::sqrt(1.0 + r2);
          f2.source_coeff = std::sqrt(c / (1.0 + r2));
          f2.noise_var = (1.0 - r2 / (1.0 + r2) - (1.0 + 2.0 * r2) / (1.0 + r2) * c) * s2;
          cell.d1 = 2.0 * (1.0 - rc) * s2;
          cell.d2 = 2.0 * (1.0 - std::sqrt((1.0 + r2) * c)) * s2;
          cell.error_order = "O(eps)";
          break;
        case RateRegime::InfLow:
          if (rho == 0.0)
            throw std::invalid_argument("extremal_law: the FMD (inf, eps) cell needs rho != 0");
          f1.source_coeff = 1.0;
          f2.recon_coeffs[0] = 1.0 - (1.0 + r2) * c / (2.0 * r2);
          f2.source_coeff = c / rho;
          f2.noise_var = ((1.0 - r2) / r2) * c * s2;
          cell.d1 = 0.0;
          cell.d2 = 2.0 * (1.0 - rho - ((1.0 - r2) / (2.0 * rho)) * c) * s2;
          cell.error_order = "O(eps^2)";
          break;
        case RateRegime::LowInf:
          f1.source_coeff = rc;
          f1.noise_var = (1.0 - c) * s2;
          f2.recon_coeffs[0] = 0.0;
          f2.source_coeff = 1.0;
          cell.d1 = 2.0 * (1.0 - rc) * s2;
          cell.d2 = 0.0;
          cell.error_order = "O(eps^{3/2})";
          break;
      }
      break;
    case RegimeKind::Jd:
      switch (regime.rates) {
        case RateRegime::LowLow:
          f1.source_coeff = rc;
          f1.noise_var = (1.0 - c) * s2;
          f2.recon_coeffs[0] = rho;
          f2.source_coeff = std::sqrt((1.0 - r2) * c);
          f2.noise_var =
              (1.0 - r2 - (1.0 - r2 + 2.0 * r2 * std::sqrt(1.0 - r2)) * c) * s2;
          cell.d1 = 2.0 * (1.0 - rc) * s2;
          cell.d2 = 2.0 * (1.0 - (r2 + std::sqrt(1.0 - r2)) * rc) * s2;
          cell.error_order = "O(eps)";
          break;
        case RateRegime::InfLow:
          f1.source_coeff = 1.0;
          f2.recon_coeffs[0] = rho - rho * rc;
          f2.source_coeff = rc;
          f2.noise_var = (1.0 - r2) * s2;
          cell.d1 = 0.0;
          cell.d2 = 2.0 * (1.0 - r2 - (1.0 - r2) * rc) * s2;
          cell.error_order = "O(eps)";
          break;
        case RateRegime::LowInf:
          f1.source_coeff = rc;
          f1.noise_var = (1.0 - c) * s2;
          f2.recon_coeffs[0] = rho;
          f2.source_coeff = std::sqrt(1.0 - r2);
          f2.noise_var = 0.0;
          cell.d1 = 2.0 * (1.0 - rc) * s2;
          cell.d2 = 2.0 * (1.0 - std::sqrt(1.0 - r2) - r2 * rc) * s2;
          cell.error_order = "O(eps)";
          break;
      }
      break;
  }
  GaussMarkovSource src = GaussMarkovSource::homogeneous(2, sigma, rho);
  cell.law = finalize_law(src, law);
  return cell;
}

struct LowRateDeltas {
  int frame = 1;  // 1-based
  double delta_fmd = 1.0;
  double delta_jd = 1.0;
  double d_fmd = 0.0;
  double d_jd = 0.0;
};

// Low-rate T-frame distortion coefficients.  Delta_FMD is evaluated through
// the finite sum 1 + sum_i 2^{j-1-i} rho^{2(j-i)}, which is exact at the
// rho^2 = 1/2 removable singularity of the ratio form.
inline LowRateDeltas low_rate_deltas(double rho, int frame, double eps, double sigma = 1.0) {
  if (frame < 1) throw std::invalid_argument("low_rate_deltas: frame must be >= 1");
  if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("low_rate_deltas: rho in [0,1]");
  LowRateDeltas row;
  row.frame = frame;
  const double r2 = rho * rho;
  double sum = 0.0;
  for (int i = 1; i <= frame - 1; ++i)
    sum += std::pow(2.0, frame - 1 - i) * std::pow(r2, frame - i);
  row.delta_fmd = std::sqrt(1.0 + sum);
  double geo = 0.0;
  for (int i = 0; i <= frame - 2; ++i) geo += std::pow(r2, i);
  row.delta_jd = std::pow(r2, frame - 1) + (frame >= 2 ? std::sqrt(1.0 - r2) * geo : 0.0);
  const double rc = std::sqrt(2.0 * eps * std::log(2.0));
  row.d_fmd = 2.0 * (1.0 - row.delta_fmd * rc) * sigma * sigma;
  row.d_jd = 2.0 * (1.0 - row.delta_jd * rc) * sigma * sigma;
  return row;
}

// Covariance description of the rate-constrained MMSE representation built by
// the innovation construction: X_j = Xr_j + Z_j with Z_j independent of Xr_j,
// and Xr_{j+1} = rho_j (sigma_{j+1}/sigma_j) Xr_j + What_{j+1}.
struct MmseRepresentationStats {
  int T = 0;
  std::vector<double> dmin;
  RateTuple rates;
  Mat cov;  // 2T x 2T over (X_1..X_T, Xr_1..Xr_T)

  double x_xr(int i, int j) const { return cov(i, T + j); }
  double xr_xr(int i, int j) const { return cov(T + i, T + j); }

  Mat xr_block(int upto) const {
    std::vector<std::size_t> idx(upto);
    for (int i = 0; i < upto; ++i) idx[i] = T + i;
    return cov.submatrix(idx);
  }
};

inline std::pair<DistortionTuple, MmseRepresentationStats> mmse_recursion(
    const GaussMarkovSource& src, const RateTuple& rates) {
  const int T = src.frames;
  if (static_cast<int>(rates.bits.size()) != T)
    throw std::invalid_argument("mmse_recursion: rate tuple length mismatch");

  MmseRepresentationStats st;
  st.T = T;
  st.rates = rates;
  st.cov = Mat(2 * T, 2 * T);
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < T; ++j) st.cov(i, j) = src.cov(i, j);
  st.dmin.resize(T);

  auto shrink = [](double r) { return std::isinf(r) ? 0.0 : std::pow(2.0, -2.0 * r); };

  // frame 1: Xr_1 = c1 X_1 + U_1
  st.dmin[0] = src.sigma[0] * src.sigma[0] * shrink(rates.bits[0]);
  {
    double c1 = (src.sigma[0] * src.sigma[0] - st.dmin[0]) / (src.sigma[0] * src.sigma[0]);
    for (int v = 0; v < T; ++v) {
      st.cov(v, T + 0) = c1 * st.cov(v, 0);
      st.cov(T + 0, v) = st.cov(v, T + 0);
    }
    st.cov(T + 0, T + 0) = src.sigma[0] * src.sigma[0] - st.dmin[0];
  }

  for (int j = 0; j + 1 < T; ++j) {
    double drift = src.rho[j] * src.sigma[j + 1] / src.sigma[j];
    double var_w = drift * drift * st.dmin[j] + src.innovation_variance(j);
    st.dmin[j + 1] = var_w * shrink(rates.bits[j + 1]);
    double cw = var_w > 1e-300 ? (var_w - st.dmin[j + 1]) / var_w : 0.0;
    // Xr_{j+1} = drift Xr_j + cw (X_{j+1} - drift Xr_j) + U
    for (int v = 0; v < T + j + 1; ++v) {
      double e_w = st.cov(v, j + 1) - drift * st.cov(v, T + j);
      double val = drift * st.cov(v, T + j) + cw * e_w;
      st.cov(v, T + j + 1) = val;
      st.cov(T + j + 1, v) = val;
    }
    st.cov(T + j + 1, T + j + 1) =
        src.sigma[j + 1] * src.sigma[j + 1] - st.dmin[j + 1];
  }
  return {DistortionTuple(st.dmin), st};
}

// Exact greedy low-rate chain: frame by frame, maximize E[X_j Xhat_j] subject
// to the per-frame rate eps, Var(Xhat_j) = sigma^2 and, for PLF-JD, the
// Gauss-Markov structure of the output.  Closed form per frame; the running
// covariance of (X, Xhat) is propagated exactly.
struct ChainLowRateResult {
  std::vector<double> distortion;
  std::vector<double> delta;  // implied Delta_j = E[X_j Xhat_j]/(sigma^2 sqrt(2 eps ln 2))
  LinearReconstructionLaw law;
};

inline ChainLowRateResult chain_low_rate(int frames, double rho, double sigma, double eps,
                                         PlfKind plf) {
  GaussMarkovSource src = GaussMarkovSource::homogeneous(frames, sigma, rho);
  const double s2 = sigma * sigma;
  const double gain = 1.0 - std::pow(2.0, -2.0 * eps);

  Mat cov(2 * frames, 2 * frames);
  for (int i = 0; i < frames; ++i)
    for (int j = 0; j < frames; ++j) cov(i, j) = src.cov(i, j);

  LinearReconstructionLaw law;
  law.frames.resize(frames);
  ChainLowRateResult out;

  for (int j = 0; j < frames; ++j) {
    // projection of X_j on Xhat_1..Xhat_j
    std::vector<double> proj(j, 0.0);
    double proj_var = 0.0;
    if (j > 0) {
      std::vector<std::size_t> idx(j);
      for (int i = 0; i < j; ++i) idx[i] = frames + i;
      Mat past = cov.submatrix(idx);
      std::vector<double> cross(j);
      for (int i = 0; i < j; ++i) cross[i] = cov(j, frames + i);
      bool singular = false;
      proj = solve_linear(past, cross, &singular);
      if (singular) proj.assign(j, 0.0);
      for (int i = 0; i < j; ++i) proj_var += proj[i] * cross[i];
    }
    double v = std::max(1e-300, s2 - proj_var);

    auto& f = law.frames[j];
    f.recon_coeffs.assign(j, 0.0);
    if (plf == PlfKind::Fmd || j == 0) {
      double pi = std::sqrt(std::max(0.0, proj_var));
      double s_star = pi > 0.0 ? sigma * pi / std::sqrt(pi * pi + gain * v) : 0.0;
      double beta = std::sqrt((s2 - s_star * s_star) * gain / v);
      double scale = pi > 0.0 ? s_star / pi : 0.0;
      for (int i = 0; i < j; ++i) f.recon_coeffs[i] = (scale - beta) * proj[i];
      f.source_coeff = beta;
    } else {
      // output must stay Gauss-Markov(sigma, rho): Xhat_j = rho Xhat_{j-1} + What
      double var_w = (1.0 - rho * rho) * s2;
      double beta = std::sqrt(var_w * gain / v);
      for (int i = 0; i < j; ++i) f.recon_coeffs[i] = -beta * proj[i];
      f.recon_coeffs[j - 1] += rho;
      f.source_coeff = beta;
    }
    // propagate covariance; noise tops the variance up to sigma^2
    for (int vtx = 0; vtx < frames + j; ++vtx) {
      double c = f.source_coeff * cov(vtx, j);
      for (int i = 0; i < j; ++i) c += f.recon_coeffs[i] * cov(vtx, frames + i);
      cov(vtx, frames + j) = c;
      cov(frames + j, vtx) = c;
    }
    double lin = 0.0;
    for (int a = 0; a < j; ++a)
      for (int b = 0; b < j; ++b)
        lin += f.recon_coeffs[a] * f.recon_coeffs[b] * cov(frames + a, frames + b);
    for (int a = 0; a < j; ++a)
      lin += 2.0 * f.recon_coeffs[a] * f.source_coeff * cov(j, frames + a);
    lin += f.source_coeff * f.source_coeff * cov(j, j);
    f.noise_var = std::max(0.0, s2 - lin);
    f.recon_var = s2;
    cov(frames + j, frames + j) = s2;

    double mixed = cov(j, frames + j);
    out.distortion.push_back(2.0 * s2 - 2.0 * mixed);
    out.delta.push_back(mixed / (s2 * std::sqrt(2.0 * eps * std::log(2.0))));
  }
  out.law = law;
  return out;
}

}  // namespace crdp
