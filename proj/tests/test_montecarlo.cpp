#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "crdp/extremal.hpp"
#include "crdp/gauss_solver.hpp"
#include "crdp/montecarlo.hpp"

using namespace crdp;

TEST_CASE("identity law simulates to exactly zero distortion") {
  GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.0, 0.9);
  LinearReconstructionLaw law;
  law.frames.resize(2);
  law.frames[0].source_coeff = 1.0;
  law.frames[1].recon_coeffs = {0.0};
  law.frames[1].source_coeff = 1.0;
  law = finalize_law(src, law);
  auto rep = simulate(src, law, 10'000, 5);
  REQUIRE(rep.distortion[0] == 0.0);
  REQUIRE(rep.distortion[1] == 0.0);
}

TEST_CASE("sampler hits the analytic source covariance") {
  SECTION("rho = 0: frames empirically uncorrelated") {
    GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.0, 0.0);
    auto draws = gaussian_sampler(src, 200'000, 11);
    double c01 = 0.0;
    for (auto& x : draws) c01 += x[0] * x[1];
    c01 /= draws.size();
    REQUIRE(std::abs(c01) <= 4.0 / std::sqrt(double(draws.size())));
  }
  SECTION("rho = 1 with equal sigma: X2 equals X1 exactly") {
    GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.3, 1.0);
    auto draws = gaussian_sampler(src, 1000, 13);
    for (auto& x : draws) REQUIRE(x[1] == Catch::Approx(x[0]).margin(1e-12));
  }
  SECTION("rho = 0.9 correlation within 4 SE") {
    GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.0, 0.9);
    const uint64_t n = 1'000'000;
    auto rep = simulate(src, LinearReconstructionLaw{[&] {
                          LinearReconstructionLaw l;
                          l.frames.resize(2);
                          l.frames[0].source_coeff = 1.0;
                          l.frames[1].recon_coeffs = {0.0};
                          l.frames[1].source_coeff = 1.0;
                          return finalize_law(src, l).frames;
                        }()},
                        n, 17);
    double se = std::sqrt((1.0 + 0.81) / double(n));
    REQUIRE(std::abs(rep.source_sample_cov(0, 1) - 0.9) <= 4.0 * se);
  }
}

TEST_CASE("MMSE law at R = (1,1): empirical distortion matches the recursion at 4 SE") {
  GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.0, 0.9);
  RateTuple rates({1.0, 1.0});
  auto [dmin, stats] = mmse_recursion(src, rates);
  auto f1 = solve_frame1(src, 1.0, inf());
  auto f2 = solve_frame2(src, f1, 1.0, inf(), PlfKind::Fmd);
  auto law = law_from_solutions(src, f1, f2);
  auto rep = simulate(src, law, 1'000'000, 29);
  for (int j = 0; j < 2; ++j)
    REQUIRE(std::abs(rep.distortion[j] - dmin.mse[j]) <= 4.0 * rep.distortion_se[j]);
}

TEST_CASE("0-PLF-JD solver law: empirical joint W2^2 small at n = 1e6") {
  GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.0, 0.8);
  auto f1 = solve_frame1(src, 1.0, 0.0);
  auto f2 = solve_frame2(src, f1, 1.0, 0.0, PlfKind::Jd);
  REQUIRE(f2.status == "ok");
  auto law = law_from_solutions(src, f1, f2);
  auto rep = simulate(src, law, 1'000'000, 31);
  REQUIRE(rep.perception_jd[1] <= 0.01);
}

TEST_CASE("bit-identical reports across runs and thread counts") {
  GaussMarkovSource src = GaussMarkovSource::homogeneous(3, 1.0, 0.7);
  LinearReconstructionLaw law;
  law.frames.resize(3);
  law.frames[0].source_coeff = 0.7;
  law.frames[0].noise_var = 0.3;
  law.frames[1].recon_coeffs = {0.4};
  law.frames[1].source_coeff = 0.5;
  law.frames[1].noise_var = 0.2;
  law.frames[2].recon_coeffs = {0.1, 0.3};
  law.frames[2].source_coeff = 0.55;
  law.frames[2].noise_var = 0.1;
  law = finalize_law(src, law);
  auto a = simulate(src, law, 300'000, 123, 1);
  auto b = simulate(src, law, 300'000, 123, 4);
  auto c = simulate(src, law, 300'000, 123, 7);
  for (int j = 0; j < 3; ++j) {
    REQUIRE(a.distortion[j] == b.distortion[j]);
    REQUIRE(a.distortion[j] == c.distortion[j]);
    for (int i = 0; i < 3; ++i) {
      REQUIRE(a.recon_cov(i, j) == b.recon_cov(i, j));
      REQUIRE(a.recon_cov(i, j) == c.recon_cov(i, j));
    }
  }
}

TEST_CASE("random (source, law) pairs close the loop at 4 SE") {
  RngStream g(20240810, 91);
  for (int trial = 0; trial < 6; ++trial) {
    double rho = g.uniform_in(0.0, 0.95);
    GaussMarkovSource src({g.uniform_in(0.5, 1.5), g.uniform_in(0.5, 1.5)}, {rho});
    LinearReconstructionLaw law;
    law.frames.resize(2);
    law.frames[0].source_coeff = g.uniform_in(-1.0, 1.0);
    law.frames[0].noise_var = g.uniform_in(0.0, 0.4);
    law.frames[1].recon_coeffs = {g.uniform_in(-0.8, 0.8)};
    law.frames[1].source_coeff = g.uniform_in(-1.0, 1.0);
    law.frames[1].noise_var = g.uniform_in(0.0, 0.4);
    law = finalize_law(src, law);
    auto st = assemble_joint_stats(src, law);
    auto rep = simulate(src, law, 1'000'000, 1000 + trial);
    for (int j = 0; j < 2; ++j) {
      REQUIRE(std::abs(rep.distortion[j] - st.distortion(j)) <=
              4.0 * rep.distortion_se[j] + 1e-12);
      double sj = std::sqrt(st.xhatxhat(j, j));
      double ana = w2sq_gauss_1d(src.sigma[j], sj);
      REQUIRE(std::abs(std::sqrt(rep.perception_fmd[j]) - std::sqrt(ana)) <=
              4.0 * rep.perception_fmd_se[j] + 1e-12);
    }
  }
}

TEST_CASE("simulate rejects tiny n") {
  GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.0, 0.5);
  LinearReconstructionLaw law;
  law.frames.resize(2);
  law.frames[0].source_coeff = 1.0;
  law.frames[1].recon_coeffs = {0.0};
  law.frames[1].source_coeff = 1.0;
  law = finalize_law(src, law);
  REQUIRE_THROWS(simulate(src, law, 10, 1));
}
