#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "crdp/extremal.hpp"
#include "crdp/gauss_solver.hpp"
#include "crdp/montecarlo.hpp"
#include "crdp/oneshot.hpp"
#include "crdp/realism.hpp"
#include "crdp/rng.hpp"
#include "crdp/transport.hpp"
#include "crdp/universal.hpp"

namespace crdp {

struct SelftestResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace selfdetail {

inline DiscreteMarkovSource random_source(RngStream& g, int frames, int max_alpha = 3) {
  DiscreteMarkovSource s;
  s.values.resize(frames);
  for (int j = 0; j < frames; ++j) {
    int n = 2 + static_cast<int>(g.next_double() * (max_alpha - 1));
    double cur = g.uniform_in(-2.0, -1.0);
    for (int i = 0; i < n; ++i) {
      s.values[j].push_back(cur);
      cur += g.uniform_in(0.2, 1.0);
    }
  }
  s.init.resize(s.alphabet(0));
  double sum = 0.0;
  for (auto& p : s.init) {
    p = 0.1 + g.next_double();
    sum += p;
  }
  for (auto& p : s.init) p /= sum;
  for (int j = 0; j + 1 < frames; ++j) {
    std::vector<double> t(s.alphabet(j) * s.alphabet(j + 1));
    for (int a = 0; a < s.alphabet(j); ++a) {
      double rs = 0.0;
      for (int b = 0; b < s.alphabet(j + 1); ++b) {
        t[a * s.alphabet(j + 1) + b] = 0.1 + g.next_double();
        rs += t[a * s.alphabet(j + 1) + b];
      }
      for (int b = 0; b < s.alphabet(j + 1); ++b) t[a * s.alphabet(j + 1) + b] /= rs;
    }
    s.trans.push_back(std::move(t));
  }
  return s;
}

inline ScalarPmf random_pmf(RngStream& g, int max_atoms = 5) {
  int n = 1 + static_cast<int>(g.next_double() * max_atoms);
  std::vector<double> vals(n), probs(n);
  for (int i = 0; i < n; ++i) {
    vals[i] = g.uniform_in(-3.0, 3.0);
    probs[i] = 0.05 + g.next_double();
  }
  double s = 0.0;
  for (double p : probs) s += p;
  for (double& p : probs) p /= s;
  return make_pmf(vals, probs, 1e-9);
}

}  // namespace selfdetail

// Compact re-checks of the module invariants, runnable from the CLI.
inline std::vector<SelftestResult> run_selftest(uint64_t seed = 20240811) {
  std::vector<SelftestResult> results;
  auto check = [&](const std::string& name, std::function<bool(std::string&)> fn) {
    SelftestResult r;
    r.name = name;
    try {
      r.pass = fn(r.detail);
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = e.what();
    }
    results.push_back(std::move(r));
  };

  check("transport: quantile coupling cost equals w2sq on random pairs", [&](std::string& d) {
    RngStream g(seed, 1);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
      auto p = selfdetail::random_pmf(g), q = selfdetail::random_pmf(g);
      double w = w2sq_discrete_1d(p, q);
      worst = std::max(worst, std::abs(monotone_coupling(p, q).transport_cost() - w));
      worst = std::max(worst, std::abs(w - w2sq_discrete_1d(q, p)));
    }
    d = "max deviation " + std::to_string(worst);
    return worst <= 1e-12;
  });

  check("transport: gaussian trace formula rotation invariance", [&](std::string& d) {
    RngStream g(seed, 2);
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
      Mat p(2, 2), q(2, 2);
      double a = g.uniform_in(0.3, 2.0), b = g.uniform_in(0.3, 2.0), r = g.uniform_in(-0.9, 0.9);
      p(0, 0) = a * a;
      p(1, 1) = b * b;
      p(0, 1) = p(1, 0) = r * a * b;
      a = g.uniform_in(0.3, 2.0);
      b = g.uniform_in(0.3, 2.0);
      r = g.uniform_in(-0.9, 0.9);
      q(0, 0) = a * a;
      q(1, 1) = b * b;
      q(0, 1) = q(1, 0) = r * a * b;
      double base = w2sq_gauss_nd(p, q);
      double ang = g.uniform_in(0.0, 6.28);
      Mat rot(2, 2);
      rot(0, 0) = std::cos(ang);
      rot(0, 1) = -std::sin(ang);
      rot(1, 0) = std::sin(ang);
      rot(1, 1) = std::cos(ang);
      Mat rp = mat_mul(mat_mul(rot, p), rot.transpose());
      Mat rq = mat_mul(mat_mul(rot, q), rot.transpose());
      rp.symmetrize();
      rq.symmetrize();
      worst = std::max(worst, std::abs(w2sq_gauss_nd(rp, rq) - base));
    }
    d = "max deviation " + std::to_string(worst);
    return worst <= 1e-9;
  });

  check("discrete: MMSE orthogonality on random systems", [&](std::string& d) {
    RngStream g(seed, 3);
    double worst = 0.0;
    for (int t = 0; t < 25; ++t) {
      auto src = selfdetail::random_source(g, 2);
      auto enc = DiscreteEncoder::random_encoder(src, {2, 2}, 2, g);
      auto jl = joint_law(src, enc);
      auto [rec, dist] = mmse_reconstruction(jl);
      auto construct = fmd_construct(jl);
      auto thr = fmd_threshold(jl);
      auto ev = evaluate_reconstruction(jl, construct);
      for (int j = 0; j < 2; ++j) {
        worst = std::max(worst, std::abs(ev.mse[j] - thr.mse[j]));
        if (thr.mse[j] > 2.0 * dist.mse[j] + 1e-12) worst = std::max(worst, 1.0);
      }
    }
    d = "max construct/threshold gap " + std::to_string(worst);
    return worst <= 1e-10;
  });

  check("realism: jd_construct preserves the joint law", [&](std::string& d) {
    RngStream g(seed, 4);
    double worst = 0.0;
    for (int t = 0; t < 15; ++t) {
      auto src = selfdetail::random_source(g, 2);
      auto enc = DiscreteEncoder::random_encoder(src, {2, 2}, 2, g);
      auto jl = joint_law(src, enc);
      auto rec = jd_construct(jl);
      auto ev = evaluate_reconstruction(jl, rec);
      auto sj = source_joint_prefix(src, 2);
      for (std::size_t i = 0; i < sj.size(); ++i)
        worst = std::max(worst, std::abs(ev.joint[i] - sj[i]));
    }
    d = "max cellwise deviation " + std::to_string(worst);
    return worst <= 1e-10;
  });

  check("gauss_solver: laws reproduce claimed D and respect rates", [&](std::string& d) {
    GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.0, 0.9);
    RateTuple rate({1.0, 1.0});
    double worst = 0.0;
    for (PlfKind plf : {PlfKind::Fmd, PlfKind::Jd}) {
      auto pts = dp_sweep(src, rate, plf, {0.0, 0.05, inf()});
      for (auto& tp : pts) {
        if (tp.status != "ok") return false;
        auto st = assemble_joint_stats(src, tp.law);
        for (int j = 0; j < 2; ++j) {
          worst = std::max(worst, std::abs(st.distortion(j) - tp.distortion.mse[j]));
          worst = std::max(worst, std::max(0.0, law_rates(src, tp.law)[j] - rate.bits[j]));
        }
      }
    }
    d = "max deviation " + std::to_string(worst);
    return worst <= 1e-8;
  });

  check("extremal: recursion agrees with the solver at P = inf", [&](std::string& d) {
    double worst = 0.0;
    for (double rho : {0.5, 0.9, 1.0}) {
      GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.0, rho);
      auto [dmin, st] = mmse_recursion(src, RateTuple({1.0, 1.5}));
      auto f1 = solve_frame1(src, 1.0, inf());
      auto f2 = solve_frame2(src, f1, 1.5, inf(), PlfKind::Fmd);
      worst = std::max(worst, std::abs(f1.distortion - dmin.mse[0]));
      worst = std::max(worst, std::abs(f2.distortion - dmin.mse[1]));
    }
    d = "max deviation " + std::to_string(worst);
    return worst <= 1e-8;
  });

  check("universal: symmetric example scaling", [&](std::string& d) {
    auto ex = symmetric_example(3, 0.8, 0.3);
    TradeoffPoint target;
    target.rate = ex.rates;
    target.law = ex.target_law;
    target.plf = PlfKind::Jd;
    auto tf = solve_transform(ex.stats, ex.source, target);
    auto rep = verify_transform(ex.stats, ex.source, tf, target);
    double scale = 1.0 / std::sqrt(1.0 - 0.3);
    double worst = std::abs(tf.coeffs[2][2] - scale);
    worst = std::max(worst, rep.max_cov_deviation);
    for (int j = 0; j < 3; ++j)
      worst = std::max(worst,
                       std::abs(rep.distortion.mse[j] - ex.zero_plf_distortion));
    d = "max deviation " + std::to_string(worst);
    return worst <= 1e-9;
  });

  check("oneshot: gamma code complete, PFR deterministic round trip", [&](std::string& d) {
    double s = 0.0;
    for (uint64_t k = 1; k < (1ull << 11); ++k) s += std::pow(2.0, -double(elias_gamma_len(k)));
    if (std::abs(s - (1.0 - std::pow(2.0, -11))) > 1e-12) {
      d = "kraft sum off";
      return false;
    }
    auto ch = make_channel({0.5, 0.5}, {{0.8, 0.2}, {0.2, 0.8}});
    for (uint64_t t = 0; t < 500; ++t) {
      auto key = rng_key(seed, 0xFEED, t);
      auto res = pfr_select(ch, static_cast<int>(t % 2), key);
      if (pfr_decode(ch, res.index, key) != res.y) {
        d = "round trip mismatch";
        return false;
      }
    }
    d = "ok";
    return true;
  });

  check("montecarlo: bit-identical across thread counts", [&](std::string& d) {
    GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.0, 0.8);
    LinearReconstructionLaw law;
    law.frames.resize(2);
    law.frames[0].source_coeff = 0.6;
    law.frames[0].noise_var = 0.2;
    law.frames[1].recon_coeffs = {0.5};
    law.frames[1].source_coeff = 0.4;
    law.frames[1].noise_var = 0.1;
    law = finalize_law(src, law);
    auto a = simulate(src, law, 200'000, seed, 1);
    auto b = simulate(src, law, 200'000, seed, 8);
    for (int j = 0; j < 2; ++j)
      if (a.distortion[j] != b.distortion[j]) {
        d = "distortion differs across thread counts";
        return false;
      }
    d = "ok";
    return true;
  });

  return results;
}

}  // namespace crdp
