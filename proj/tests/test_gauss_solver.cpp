#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "crdp/gauss_solver.hpp"
#include "crdp/rng.hpp"

using namespace crdp;

namespace {

double dmin1(double sigma, double r1) { return sigma * sigma * std::pow(2.0, -2.0 * r1); }

double dmin2(const GaussMarkovSource& src, double r1, double r2) {
  double d1 = dmin1(src.sigma[0], r1);
  double ratio = src.sigma[1] * src.sigma[1] / (src.sigma[0] * src.sigma[0]);
  double innov = (1.0 - src.rho[0] * src.rho[0]) * src.sigma[1] * src.sigma[1];
  return (src.rho[0] * src.rho[0] * ratio * d1 + innov) * std::pow(2.0, -2.0 * r2);
}

}  // namespace

TEST_CASE("frame 1 closed forms") {
  GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.3, 0.8);
  double sigma = 1.3;
  SECTION("P = inf gives the MMSE point") {
    for (double r : {0.25, 0.5, 1.0, 2.0, 5.0}) {
      auto f1 = solve_frame1(src, r, inf());
      REQUIRE(f1.distortion == Catch::Approx(dmin1(sigma, r)).margin(1e-12));
    }
  }
  SECTION("P = 0 pins sigma_hat = sigma") {
    for (double r : {0.25, 1.0, 3.0}) {
      auto f1 = solve_frame1(src, r, 0.0);
      double expect = 2.0 * sigma * sigma * (1.0 - std::sqrt(1.0 - std::pow(2.0, -2.0 * r)));
      REQUIRE(f1.sigma_hat_sq == Catch::Approx(sigma * sigma).margin(1e-10));
      REQUIRE(f1.distortion == Catch::Approx(expect).margin(1e-10));
    }
  }
  SECTION("R = inf is lossless for any P") {
    for (double p : {0.0, 0.5, inf()}) {
      auto f1 = solve_frame1(src, inf(), p);
      REQUIRE(f1.nu == Catch::Approx(1.0).margin(1e-12));
      REQUIRE(f1.distortion == Catch::Approx(0.0).margin(1e-12));
    }
  }
  SECTION("negative P rejected") { REQUIRE_THROWS(solve_frame1(src, 1.0, -1.0)); }
}

TEST_CASE("frame 2 at P = inf matches the MMSE recursion") {
  for (double rho : {0.5, 0.9, 1.0}) {
    GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.0, rho);
    for (double r1 : {0.3, 1.0, 2.2}) {
      for (double r2 : {0.4, 1.1, 2.0}) {
        auto f1 = solve_frame1(src, r1, inf());
        auto f2 = solve_frame2(src, f1, r2, inf(), PlfKind::Fmd);
        REQUIRE(f2.status == "ok");
        REQUIRE(f2.distortion == Catch::Approx(dmin2(src, r1, r2)).margin(1e-9));
      }
    }
  }
}

TEST_CASE("frame 2 FMD at P = 0 and low rate approaches the closed form") {
  double rho = 0.8, eps = 1e-3;
  GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.0, rho);
  auto f1 = solve_frame1(src, eps, 0.0);
  auto f2 = solve_frame2(src, f1, eps, 0.0, PlfKind::Fmd);
  REQUIRE(f2.status == "ok");
  double expect = 2.0 * (1.0 - std::sqrt((1.0 + rho * rho) * 2.0 * eps * std::log(2.0)));
  REQUIRE(std::abs(f2.distortion - expect) <= 30.0 * eps);
}

TEST_CASE("frame 2 JD at rho = 1 and P = 0 copies frame 1") {
  GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.0, 1.0);
  for (double r : {0.01, 0.5, 2.0}) {
    auto f1 = solve_frame1(src, r, 0.0);
    auto f2 = solve_frame2(src, f1, 5.0, 0.0, PlfKind::Jd);
    REQUIRE(f2.status == "ok");
    REQUIRE(f2.omega2 == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(f2.distortion == Catch::Approx(f1.distortion).margin(1e-10));
  }
}

TEST_CASE("JD at P = 0 beats nothing: distortion at least the FMD value") {
  GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.0, 0.7);
  for (double r : {0.2, 0.8, 1.5}) {
    auto f1 = solve_frame1(src, r, 0.0);
    auto fmd = solve_frame2(src, f1, r, 0.0, PlfKind::Fmd);
    auto jd = solve_frame2(src, f1, r, 0.0, PlfKind::Jd);
    REQUIRE(fmd.status == "ok");
    REQUIRE(jd.status == "ok");
    REQUIRE(jd.distortion >= fmd.distortion - 1e-9);
  }
}

TEST_CASE("dp_sweep: monotone frontier, self-consistent laws, rate budget respected") {
  GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.0, 0.9);
  RateTuple rate({1.0, 1.0});
  std::vector<double> pgrid = {0.0, 0.01, 0.1, inf()};
  for (PlfKind plf : {PlfKind::Fmd, PlfKind::Jd}) {
    auto pts = dp_sweep(src, rate, plf, pgrid);
    REQUIRE(pts.size() == 4);
    double prev = inf();
    for (auto& tp : pts) {
      REQUIRE(tp.status == "ok");
      REQUIRE(tp.distortion.mse[1] <= prev + 1e-9);
      prev = tp.distortion.mse[1];
      // law reproduces claimed distortion and satisfies the perception budget
      auto st = assemble_joint_stats(src, tp.law);
      REQUIRE(st.distortion(0) == Catch::Approx(tp.distortion.mse[0]).margin(1e-8));
      REQUIRE(st.distortion(1) == Catch::Approx(tp.distortion.mse[1]).margin(1e-8));
      if (!std::isinf(tp.p_threshold)) {
        REQUIRE(tp.perception.w2sq[0] <= tp.p_threshold + 1e-8);
        REQUIRE(tp.perception.w2sq[1] <= tp.p_threshold + 1e-8);
      }
      auto rates = law_rates(src, tp.law);
      REQUIRE(rates[0] <= rate.bits[0] + 1e-8);
      REQUIRE(rates[1] <= rate.bits[1] + 1e-8);
    }
    // factor two against the MMSE endpoint (FMD)
    if (plf == PlfKind::Fmd) {
      double d_at_0 = pts.front().distortion.mse[1];
      double d_at_inf = pts.back().distortion.mse[1];
      REQUIRE(d_at_0 <= 2.0 * d_at_inf + 1e-9);
    }
  }
  SECTION("empty grid rejected") {
    REQUIRE_THROWS(dp_sweep(src, rate, PlfKind::Fmd, {}));
  }
}

TEST_CASE("local optimality: feasible perturbations never improve the objective") {
  GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.0, 0.85);
  RngStream g(31337, 77);
  for (PlfKind plf : {PlfKind::Fmd, PlfKind::Jd}) {
    for (double p : {0.02, 0.2}) {
      auto f1 = solve_frame1(src, 1.0, p);
      auto f2 = solve_frame2(src, f1, 1.0, p, plf);
      REQUIRE(f2.status == "ok");
      gsdetail::Frame2Problem pb;
      pb.sigma1 = src.sigma[0];
      pb.sigma2 = src.sigma[1];
      pb.rho = src.rho[0];
      pb.nu = f1.nu;
      pb.s1sq = f1.sigma_hat_sq;
      pb.r2_bits = 1.0;
      pb.p2 = p;
      pb.plf = plf;
      pb.feas_tol = 1e-9;
      double base = pb.penalized(f2.omega1, f2.omega2);
      for (int t = 0; t < 400; ++t) {
        double w1 = f2.omega1 + g.uniform_in(-0.05, 0.05);
        double w2 = f2.omega2 + g.uniform_in(-0.05, 0.05);
        double val = pb.penalized(w1, w2);
        REQUIRE(val >= base - 1e-9);
      }
    }
  }
}

TEST_CASE("rho = 0: second frame decouples from the first") {
  GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.0, 0.0);
  auto f1 = solve_frame1(src, 1.0, inf());
  auto f2 = solve_frame2(src, f1, 1.0, inf(), PlfKind::Fmd);
  REQUIRE(f2.status == "ok");
  REQUIRE(std::abs(f2.omega1) <= 1e-6);
  REQUIRE(f2.distortion == Catch::Approx(0.25).margin(1e-9));  // sigma^2 2^-2
}

TEST_CASE("rate-equality reduction: no interior point beats the boundary optimum") {
  GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.0, 0.8);
  for (PlfKind plf : {PlfKind::Fmd, PlfKind::Jd}) {
    for (double p : {0.05, 0.5, inf()}) {
      auto f1 = solve_frame1(src, 1.0, p);
      auto f2 = solve_frame2(src, f1, 1.2, p, plf);
      REQUIRE(f2.status == "ok");
      double gain = interior_improvement(src, f1, 1.2, p, plf, f2);
      REQUIRE(gain <= 1e-9);
    }
  }
}

TEST_CASE("diagnostic: dropping the sign restriction does not find a better optimum") {
  GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.0, 0.7);
  SolverConfig restricted, full;
  full.restrict_sign = false;
  for (PlfKind plf : {PlfKind::Fmd, PlfKind::Jd}) {
    for (double p : {0.01, inf()}) {
      auto f1 = solve_frame1(src, 0.8, p);
      auto a = solve_frame2(src, f1, 0.8, p, plf, restricted);
      auto b = solve_frame2(src, f1, 0.8, p, plf, full);
      REQUIRE(a.status == "ok");
      REQUIRE(b.status == "ok");
      REQUIRE(b.distortion >= a.distortion - 1e-8);  // restriction costs nothing here
    }
  }
}
