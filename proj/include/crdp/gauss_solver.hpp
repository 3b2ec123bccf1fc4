#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "crdp/model.hpp"
#include "crdp/optim.hpp"
#include "crdp/rng.hpp"
#include "crdp/statutil.hpp"
#include "crdp/transport.hpp"

namespace crdp {

struct SolverConfig {
  int grid = 64;
  int multistarts = 16;
  int refine_iters = 200;
  double obj_tol = 1e-10;
  double feas_tol = 1e-9;
  uint64_t seed = 1;
  bool restrict_sign = true;  // honor the omega1*omega2*rho1 >= 0 search restriction

  void validate() const {
    if (grid < 2 || multistarts < 1 || refine_iters < 1 || obj_tol <= 0.0 || feas_tol <= 0.0)
      throw std::invalid_argument("SolverConfig: fields must be positive");
  }
};

struct Frame1Solution {
  double nu = 0.0;
  double sigma_hat_sq = 0.0;
  double distortion = 0.0;
};

struct Frame2Solution {
  double omega1 = 0.0;
  double omega2 = 0.0;
  double sigma_hat_sq = 0.0;
  double distortion = 0.0;
  std::string status = "ok";  // ok | infeasible
};

// First-step program: minimize sigma1^2 + s^2 - 2 nu sigma1^2 subject to
// nu^2 sigma1^2 <= s^2 (1 - 2^-2R1) and (sigma1 - s)^2 <= P1.  The rate
// constraint is tight in nu, leaving a 1-D problem in s.
inline Frame1Solution solve_frame1(const GaussMarkovSource& src, double r1_bits, double p1,
                                   const SolverConfig& cfg = {}) {
  cfg.validate();
  if (p1 < 0.0) throw std::invalid_argument("solve_frame1: negative perception threshold");
  const double sigma = src.sigma[0];
  const double shrink = std::isinf(r1_bits) ? 1.0 : std::sqrt(1.0 - std::pow(2.0, -2.0 * r1_bits));

  double lo = 0.0, hi = 2.0 * sigma;
  if (!std::isinf(p1)) {
    lo = std::max(0.0, sigma - std::sqrt(p1));
    hi = sigma + std::sqrt(p1);
  }
  auto d1 = [&](double s) { return sigma * sigma + s * s - 2.0 * sigma * s * shrink; };
  double s_golden = golden_min(d1, lo, hi, 1e-14);
  double s_analytic = std::clamp(sigma * shrink, lo, hi);
  // prefer the analytic stationary point on near-ties
  double s = d1(s_analytic) <= d1(s_golden) + 1e-14 * sigma * sigma ? s_analytic : s_golden;

  Frame1Solution out;
  out.sigma_hat_sq = s * s;
  out.nu = sigma > 0.0 ? (s / sigma) * shrink : 0.0;
  out.distortion = d1(s);
  return out;
}

namespace gsdetail {

struct Frame2Problem {
  double sigma1, sigma2, rho;
  double nu, s1sq;     // frame-1 solution
  double r2_bits, p2;  // constraints
  PlfKind plf;
  double feas_tol;

  double a() const { return nu * rho * sigma1 * sigma2; }  // E[Xhat1 X2]

  double e2() const { return std::isinf(r2_bits) ? 0.0 : std::pow(2.0, -2.0 * r2_bits); }

  // multiplier on omega2^2 sigma2^2 in the rate-tight variance
  double kappa() const {
    double e = e2();
    if (e >= 1.0) return inf();  // R2 = 0: no information can flow
    double ratio = s1sq > 1e-300 ? nu * nu * rho * rho * sigma1 * sigma1 / s1sq : 0.0;
    return (1.0 - e * ratio) / (1.0 - e);
  }

  // smallest variance consistent with the rate constraint at the given mix
  double rate_tight_var(double w1, double w2) const {
    double base = w1 * w1 * s1sq + 2.0 * w1 * w2 * a();
    double k = kappa();
    if (std::isinf(k)) return w2 == 0.0 ? base : inf();
    return base + k * w2 * w2 * sigma2 * sigma2;
  }

  double lin_var(double w1, double w2) const {
    return w1 * w1 * s1sq + 2.0 * w1 * w2 * a() + w2 * w2 * sigma2 * sigma2;
  }

  double objective(double w1, double w2, double s2sq) const {
    return sigma2 * sigma2 + s2sq - 2.0 * w1 * a() - 2.0 * w2 * sigma2 * sigma2;
  }

  double jd_w2sq(double w1, double w2, double s2sq) const {
    Mat sx(2, 2), sh(2, 2);
    sx(0, 0) = sigma1 * sigma1;
    sx(1, 1) = sigma2 * sigma2;
    sx(0, 1) = sx(1, 0) = rho * sigma1 * sigma2;
    sh(0, 0) = s1sq;
    sh(1, 1) = s2sq;
    sh(0, 1) = sh(1, 0) = w1 * s1sq + w2 * a();
    return w2sq_gauss_nd(sx, sh);
  }

  // Chooses the cheapest feasible variance for a mix; returns (variance,
  // feasible flag, constraint violation for penalty shaping).
  struct VarPick {
    double s2sq = 0.0;
    bool feasible = false;
    double violation = 0.0;
  };

  VarPick pick_variance(double w1, double w2) const {
    VarPick v;
    double A = rate_tight_var(w1, w2);
    if (std::isinf(A)) {
      v.violation = 1.0 + std::abs(w2);
      return v;
    }
    if (plf == PlfKind::Fmd) {
      if (std::isinf(p2)) {
        v.s2sq = A;
        v.feasible = true;
        return v;
      }
      double smin = std::max(0.0, sigma2 - std::sqrt(p2));
      double smax = sigma2 + std::sqrt(p2);
      double s2sq = std::max(A, smin * smin);
      if (s2sq > smax * smax + feas_tol) {
        v.violation = s2sq - smax * smax;
        return v;
      }
      v.s2sq = s2sq;
      v.feasible = true;
      return v;
    }
    // PLF-JD: find the smallest s2sq >= A with W2^2(joint) <= p2
    if (std::isinf(p2)) {
      v.s2sq = A;
      v.feasible = true;
      return v;
    }
    double gA = jd_w2sq(w1, w2, A);
    if (gA <= p2 + feas_tol) {
      v.s2sq = A;
      v.feasible = true;
      return v;
    }
    double span = sigma2 + std::sqrt(p2) + std::sqrt(std::max(A, 0.0)) + sigma1;
    double hi = std::max(A + 1.0, 4.0 * span * span);
    auto g = [&](double s) { return jd_w2sq(w1, w2, s); };
    // coarse scan to bracket the minimum, then golden within the bracket
    const int scan = 48;
    int best_i = 0;
    double best_g = gA;
    for (int i = 1; i <= scan; ++i) {
      double s = A + (hi - A) * i / scan;
      double val = g(s);
      if (val < best_g) {
        best_g = val;
        best_i = i;
      }
    }
    double blo = A + (hi - A) * std::max(0, best_i - 1) / scan;
    double bhi = A + (hi - A) * std::min(scan, best_i + 1) / scan;
    double s_min = golden_min(g, blo, bhi, 1e-12);
    double g_min = g(s_min);
    if (g_min > p2 + feas_tol) {
      v.violation = g_min - p2;
      return v;
    }
    double s_cross = bisect_first_true([&](double s) { return g(s) <= p2; }, A, s_min, 1e-14);
    v.s2sq = s_cross;
    v.feasible = true;
    return v;
  }

  double penalized(double w1, double w2) const {
    VarPick v = pick_variance(w1, w2);
    if (!v.feasible) return 1e6 * (1.0 + v.violation);
    return objective(w1, w2, v.s2sq);
  }
};

inline Frame2Solution finalize(const Frame2Problem& pb, double w1, double w2) {
  Frame2Solution s;
  auto v = pb.pick_variance(w1, w2);
  if (!v.feasible) {
    s.status = "infeasible";
    return s;
  }
  s.omega1 = w1;
  s.omega2 = w2;
  s.sigma_hat_sq = v.s2sq;
  s.distortion = pb.objective(w1, w2, v.s2sq);
  return s;
}

// Exact stationary point of the unconstrained (P = inf) quadratic program.
inline bool mmse_seed(const Frame2Problem& pb, double& w1, double& w2) {
  double k = pb.kappa();
  if (std::isinf(k)) {
    w1 = pb.s1sq > 1e-300 ? pb.a() / pb.s1sq : 0.0;
    w2 = 0.0;
    return true;
  }
  Mat m(2, 2);
  m(0, 0) = pb.s1sq;
  m(0, 1) = m(1, 0) = pb.a();
  m(1, 1) = k * pb.sigma2 * pb.sigma2;
  bool singular = false;
  auto sol = solve_linear(m, {pb.a(), pb.sigma2 * pb.sigma2}, &singular);
  if (singular) return false;
  w1 = sol[0];
  w2 = sol[1];
  return true;
}

// 0-PLF-JD reduction: sigma_hat_2 = sigma2 and E[Xhat1 Xhat2] = rho sigma1
// sigma2 pin omega1 as a function of omega2; the objective is then linear and
// decreasing in omega2, so the optimum sits where the rate constraint becomes
// active.  Substituting omega1(omega2) gives
//   A(omega2) = cross^2/s1sq + omega2^2 (kappa sigma2^2 - a^2/s1sq),
// and A = sigma2^2 pins omega2 in closed form.
inline bool jd_zero_perception(const Frame2Problem& pb, Frame2Solution& out) {
  const double s2 = pb.sigma2 * pb.sigma2;
  if (std::abs(std::sqrt(pb.s1sq) - pb.sigma1) > 1e-7 * pb.sigma1) {
    out.status = "infeasible";  // joint law cannot match when frame 1 is off-marginal
    return true;
  }
  double k = pb.kappa();
  double aa = pb.a();
  double cross_target = pb.rho * pb.sigma1 * pb.sigma2;
  auto w1_of = [&](double w2) { return (cross_target - w2 * aa) / pb.s1sq; };
  double w2 = 0.0;
  if (!std::isinf(k)) {
    double denom = k * s2 - aa * aa / pb.s1sq;
    double num = s2 - cross_target * cross_target / pb.s1sq;
    if (denom > 0.0 && num > 0.0) w2 = std::sqrt(num / denom);
  }
  double w1 = w1_of(w2);
  out.omega1 = w1;
  out.omega2 = w2;
  out.sigma_hat_sq = s2;
  out.distortion = pb.objective(w1, w2, s2);
  out.status = "ok";
  return true;
}

}  // namespace gsdetail

// Second-step program of the two-frame tradeoff.  The rate constraint is
// imposed at equality (the boundary argument), which leaves a 2-D search over
// the mixing weights; grid + multistart Nelder-Mead with analytic seeds.
inline Frame2Solution solve_frame2(const GaussMarkovSource& src, const Frame1Solution& f1,
                                   double r2_bits, double p2, PlfKind plf,
                                   const SolverConfig& cfg = {}) {
  cfg.validate();
  if (p2 < 0.0) throw std::invalid_argument("solve_frame2: negative perception threshold");
  gsdetail::Frame2Problem pb;
  pb.sigma1 = src.sigma[0];
  pb.sigma2 = src.sigma[1];
  pb.rho = src.rho[0];
  pb.nu = f1.nu;
  pb.s1sq = f1.sigma_hat_sq;
  pb.r2_bits = r2_bits;
  pb.p2 = p2;
  pb.plf = plf;
  pb.feas_tol = cfg.feas_tol;

  // 0-PLF-JD corner cases resolved analytically
  if (plf == PlfKind::Jd && p2 <= cfg.feas_tol * cfg.feas_tol) {
    if (std::abs(pb.rho) == 1.0) {
      Frame2Solution s;
      if (std::abs(std::sqrt(pb.s1sq) - pb.sigma1) > 1e-7 * pb.sigma1) {
        s.status = "infeasible";
        return s;
      }
      s.omega1 = pb.rho * pb.sigma2 / pb.sigma1;
      s.omega2 = 0.0;
      s.sigma_hat_sq = pb.sigma2 * pb.sigma2;
      s.distortion = pb.objective(s.omega1, 0.0, s.sigma_hat_sq);
      return s;
    }
    Frame2Solution s;
    gsdetail::jd_zero_perception(pb, s);
    return s;
  }

  // search box
  double s2cap = pb.sigma2 + (std::isinf(p2) ? pb.sigma2 : std::sqrt(p2) + pb.sigma2);
  double w1cap = pb.s1sq > 1e-12 ? 1.5 * s2cap / std::sqrt(pb.s1sq) : 1.0;
  double w2cap = 2.5;
  double w1lo, w1hi;
  if (!cfg.restrict_sign || pb.rho == 0.0) {
    w1lo = -w1cap;
    w1hi = w1cap;
  } else if (pb.rho > 0.0) {
    w1lo = 0.0;
    w1hi = w1cap;
  } else {
    w1lo = -w1cap;
    w1hi = 0.0;
  }

  struct Cand {
    double w1, w2, f;
  };
  std::vector<Cand> cands;
  auto consider = [&](double w1, double w2) {
    cands.push_back({w1, w2, pb.penalized(w1, w2)});
  };

  const int G = cfg.grid;
  for (int i = 0; i < G; ++i)
    for (int j = 0; j < G; ++j) {
      double w1 = w1lo + (w1hi - w1lo) * (i + 0.5) / G;
      double w2 = 0.0 + w2cap * (j + 0.5) / G;
      consider(w1, w2);
    }
  // analytic seeds
  double mw1, mw2;
  if (gsdetail::mmse_seed(pb, mw1, mw2)) consider(mw1, mw2);
  if (plf == PlfKind::Jd && std::abs(pb.rho) < 1.0 && pb.s1sq > 1e-12) {
    Frame2Solution zp;
    gsdetail::jd_zero_perception(pb, zp);
    if (zp.status == "ok") consider(zp.omega1, zp.omega2);
  }
  if (pb.s1sq > 1e-12) {
    double e2 = pb.e2();
    double w2g = std::sqrt(std::max(0.0, 1.0 - e2));
    consider(pb.rho * pb.sigma2 * pb.sigma1 / pb.s1sq * 0.9, 0.1 * w2g);
    consider(pb.rho / std::sqrt(1.0 + pb.rho * pb.rho) * pb.sigma2 / std::sqrt(pb.s1sq), w2g);
    consider(0.0, w2g);
    consider(pb.rho * pb.sigma2 / pb.sigma1, 0.0);
  }
  RngStream g(cfg.seed, 0xF2A);
  for (int r = 0; r < cfg.multistarts; ++r)
    consider(g.uniform_in(w1lo, w1hi), g.uniform_in(0.0, w2cap));

  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.f < b.f; });
  if (cands.size() > static_cast<std::size_t>(cfg.multistarts + 6))
    cands.resize(cfg.multistarts + 6);

  double bw1 = cands[0].w1, bw2 = cands[0].w2, bf = cands[0].f;
  for (const auto& c : cands) {
    auto res = nelder_mead([&](const std::vector<double>& x) { return pb.penalized(x[0], x[1]); },
                           {c.w1, c.w2}, {(w1hi - w1lo) / 40.0, w2cap / 40.0}, cfg.refine_iters,
                           cfg.obj_tol);
    if (res.f < bf) {
      bf = res.f;
      bw1 = res.x[0];
      bw2 = res.x[1];
    }
    if (c.f < bf) {
      bf = c.f;
      bw1 = c.w1;
      bw2 = c.w2;
    }
  }
  if (bf >= 1e6) {
    Frame2Solution s;
    s.status = "infeasible";
    return s;
  }
  return gsdetail::finalize(pb, bw1, bw2);
}

// Coarse 3-D scan over (omega1, omega2, sigma_hat_2^2) including strictly
// rate-slack interior points; returns the largest objective improvement over
// the boundary solution (positive would contradict the equality reduction).
inline double interior_improvement(const GaussMarkovSource& src, const Frame1Solution& f1,
                                   double r2_bits, double p2, PlfKind plf,
                                   const Frame2Solution& sol, int grid = 16) {
  gsdetail::Frame2Problem pb;
  pb.sigma1 = src.sigma[0];
  pb.sigma2 = src.sigma[1];
  pb.rho = src.rho[0];
  pb.nu = f1.nu;
  pb.s1sq = f1.sigma_hat_sq;
  pb.r2_bits = r2_bits;
  pb.p2 = p2;
  pb.plf = plf;
  pb.feas_tol = 1e-9;
  double w1cap = pb.s1sq > 1e-12 ? 2.0 * pb.sigma2 / std::sqrt(pb.s1sq) : 1.0;
  double best_gain = -inf();
  for (int i = 0; i <= grid; ++i) {
    double w1 = -w1cap + 2.0 * w1cap * i / grid;
    for (int j = 0; j <= grid; ++j) {
      double w2 = 2.0 * j / grid;
      double a = pb.rate_tight_var(w1, w2);
      if (std::isinf(a)) continue;
      double span = 2.0 * pb.sigma2 * pb.sigma2 + a;
      for (int k = 0; k <= grid; ++k) {
        double s2sq = a + span * k / grid;  // k > 0 points have slack rate
        double lin = pb.lin_var(w1, w2);
        if (s2sq < lin - 1e-12) continue;  // noise variance must be >= 0
        if (!std::isinf(p2)) {
          double perc = plf == PlfKind::Fmd
                            ? w2sq_gauss_1d(pb.sigma2, std::sqrt(std::max(0.0, s2sq)))
                            : pb.jd_w2sq(w1, w2, s2sq);
          if (perc > p2 + 1e-9) continue;
        }
        best_gain = std::max(best_gain, sol.distortion - pb.objective(w1, w2, s2sq));
      }
    }
  }
  return best_gain;
}

struct TradeoffPoint {
  RateTuple rate;
  DistortionTuple distortion;
  PerceptionTuple perception;  // achieved W2^2 values
  LinearReconstructionLaw law;
  PlfKind plf = PlfKind::Fmd;
  std::string status = "ok";
  double p_threshold = 0.0;  // the threshold this point was solved for
};

inline LinearReconstructionLaw law_from_solutions(const GaussMarkovSource& src,
                                                  const Frame1Solution& f1,
                                                  const Frame2Solution& f2) {
  LinearReconstructionLaw law;
  law.frames.resize(2);
  law.frames[0].source_coeff = f1.nu;
  law.frames[0].noise_var =
      std::max(0.0, f1.sigma_hat_sq - f1.nu * f1.nu * src.sigma[0] * src.sigma[0]);
  law.frames[1].recon_coeffs = {f2.omega1};
  law.frames[1].source_coeff = f2.omega2;
  double a = f1.nu * src.rho[0] * src.sigma[0] * src.sigma[1];
  double lin = f2.omega1 * f2.omega1 * f1.sigma_hat_sq + 2.0 * f2.omega1 * f2.omega2 * a +
               f2.omega2 * f2.omega2 * src.sigma[1] * src.sigma[1];
  law.frames[1].noise_var = std::max(0.0, f2.sigma_hat_sq - lin);
  return finalize_law(src, law);
}

// Perception achieved by a 2-frame law under each PLF.
inline PerceptionTuple achieved_perception(const GaussMarkovSource& src,
                                           const LinearReconstructionLaw& law, PlfKind plf) {
  auto st = assemble_joint_stats(src, law);
  std::vector<double> p(2);
  p[0] = w2sq_gauss_1d(src.sigma[0], std::sqrt(st.xhatxhat(0, 0)));
  if (plf == PlfKind::Fmd) {
    p[1] = w2sq_gauss_1d(src.sigma[1], std::sqrt(st.xhatxhat(1, 1)));
  } else {
    p[1] = w2sq_gauss_nd(st.source_block(), st.recon_block());
  }
  return PerceptionTuple(p);
}

// One tradeoff point per perception threshold; D is forced monotone
// non-increasing in P, deviations beyond 1e-6 are flagged.
inline std::vector<TradeoffPoint> dp_sweep(const GaussMarkovSource& src, const RateTuple& rate,
                                           PlfKind plf, const std::vector<double>& p_grid,
                                           const SolverConfig& cfg = {}) {
  if (src.frames != 2 || rate.bits.size() != 2)
    throw std::invalid_argument("dp_sweep: the numeric frontier covers T = 2");
  if (p_grid.empty()) throw std::invalid_argument("dp_sweep: empty perception grid");
  std::vector<double> grid = p_grid;
  std::sort(grid.begin(), grid.end());
  std::vector<TradeoffPoint> pts;
  for (double p : grid) {
    TradeoffPoint tp;
    tp.plf = plf;
    tp.p_threshold = p;
    tp.rate = rate;
    auto f1 = solve_frame1(src, rate.bits[0], p, cfg);
    auto f2 = solve_frame2(src, f1, rate.bits[1], p, plf, cfg);
    if (f2.status != "ok") {
      tp.status = f2.status;
      tp.distortion = DistortionTuple({f1.distortion, inf()});
      tp.perception = PerceptionTuple({0.0, 0.0});
      pts.push_back(tp);
      continue;
    }
    tp.law = law_from_solutions(src, f1, f2);
    auto st = assemble_joint_stats(src, tp.law);
    tp.distortion = DistortionTuple({st.distortion(0), st.distortion(1)});
    tp.perception = achieved_perception(src, tp.law, plf);
    pts.push_back(tp);
  }
  // isotonic cleanup: D_j non-increasing as P grows
  for (int j = 0; j < 2; ++j) {
    double best = inf();
    for (auto& tp : pts) {
      if (tp.status != "ok") continue;
      if (tp.distortion.mse[j] > best + 1e-6) tp.status = "monotonicity_violation";
      best = std::min(best, tp.distortion.mse[j]);
    }
  }
  return pts;
}

// Gaussian mutual information usage of a 2-frame law: I(X1;Xhat1) and
// I(X2;Xhat2|Xhat1), both in bits.
inline std::vector<double> law_rates(const GaussMarkovSource& src,
                                     const LinearReconstructionLaw& law) {
  auto st = assemble_joint_stats(src, law);
  std::vector<double> r(law.T());
  for (int j = 0; j < law.T(); ++j) r[j] = law_rate_bits(st, law, j);
  return r;
}

}  // namespace crdp
