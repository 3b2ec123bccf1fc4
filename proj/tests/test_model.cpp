#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "crdp/model.hpp"
#include "crdp/montecarlo.hpp"
#include "crdp/rng.hpp"

using namespace crdp;

namespace {

LinearReconstructionLaw random_stable_law(const GaussMarkovSource& src, RngStream& g) {
  LinearReconstructionLaw law;
  law.frames.resize(src.frames);
  for (int j = 0; j < src.frames; ++j) {
    auto& f = law.frames[j];
    f.recon_coeffs.resize(j);
    for (int i = 0; i < j; ++i) f.recon_coeffs[i] = g.uniform_in(-0.8, 0.8);
    f.source_coeff = g.uniform_in(-1.0, 1.0);
    f.noise_var = g.uniform_in(0.0, 0.5);
  }
  return finalize_law(src, law);
}

}  // namespace

TEST_CASE("source validation and covariance") {
  REQUIRE_THROWS(GaussMarkovSource({1.0, -1.0}, {0.5}));
  REQUIRE_THROWS(GaussMarkovSource({1.0, 1.0}, {1.5}));
  GaussMarkovSource src({1.0, 2.0, 1.0}, {0.9, -1.0});  // rho = +-1 allowed
  REQUIRE(src.cov(0, 1) == Catch::Approx(1.8));
  REQUIRE(src.cov(0, 2) == Catch::Approx(-0.9));
  REQUIRE(src.innovation_variance(1) == Catch::Approx(0.0));
}

TEST_CASE("identity law reproduces the source block exactly") {
  GaussMarkovSource src({1.0, 1.5, 0.7}, {0.9, 0.4});
  LinearReconstructionLaw law;
  law.frames.resize(3);
  for (int j = 0; j < 3; ++j) {
    law.frames[j].recon_coeffs.assign(j, 0.0);
    law.frames[j].source_coeff = 1.0;
    law.frames[j].noise_var = 0.0;
  }
  law = finalize_law(src, law);
  auto st = assemble_joint_stats(src, law);
  REQUIRE(st.recon_block().max_abs_diff(st.source_block()) == 0.0);
  for (int j = 0; j < 3; ++j) REQUIRE(st.distortion(j) == 0.0);
}

TEST_CASE("low-rate MMSE law at (eps,eps) has E[Xhat2 X2] = (1+rho^2) 2 eps ln2") {
  double eps = 1e-3, rho = 0.9, sigma = 1.0;
  double c = 2.0 * eps * std::log(2.0);
  GaussMarkovSource src = GaussMarkovSource::homogeneous(2, sigma, rho);
  LinearReconstructionLaw law;
  law.frames.resize(2);
  law.frames[0].source_coeff = c;
  law.frames[0].noise_var = c * sigma * sigma;
  law.frames[1].recon_coeffs = {rho};
  law.frames[1].source_coeff = c;
  law.frames[1].noise_var = c * sigma * sigma;
  law = finalize_law(src, law);
  auto st = assemble_joint_stats(src, law);
  REQUIRE(st.xxhat(1, 1) == Catch::Approx((1.0 + rho * rho) * c * sigma * sigma).margin(1e-15));
}

TEST_CASE("random stable law matches Monte-Carlo covariance within 3 SE") {
  RngStream g(42, 7);
  GaussMarkovSource src({1.0, 1.2, 0.8}, {0.7, 0.5});
  LinearReconstructionLaw law = random_stable_law(src, g);
  auto st = assemble_joint_stats(src, law);

  const uint64_t n = 10'000'000;
  auto rep = simulate(src, law, n, 987654321ull);
  // entrywise: SE of a covariance entry ~ sqrt((cii cjj + cij^2)/n)
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) {
      double se = std::sqrt((st.xhatxhat(i, i) * st.xhatxhat(j, j) +
                             st.xhatxhat(i, j) * st.xhatxhat(i, j)) /
                            static_cast<double>(n));
      REQUIRE(std::abs(rep.recon_cov(i, j) - st.xhatxhat(i, j)) <= 3.0 * se + 1e-12);
    }
}

TEST_CASE("doubling noise stddevs quadruples the noise-attributable variance") {
  RngStream g(11, 8);
  for (int trial = 0; trial < 30; ++trial) {
    GaussMarkovSource src({1.0, 1.1}, {0.6});
    LinearReconstructionLaw law = random_stable_law(src, g);
    LinearReconstructionLaw doubled = law;
    for (auto& f : doubled.frames) f.noise_var *= 4.0;
    doubled = finalize_law(src, doubled);
    auto st1 = assemble_joint_stats(src, law);
    auto st4 = assemble_joint_stats(src, doubled);
    LinearReconstructionLaw noiseless = law;
    for (auto& f : noiseless.frames) f.noise_var = 0.0;
    noiseless = finalize_law(src, noiseless);
    auto st0 = assemble_joint_stats(src, noiseless);
    // frame 1 has no feedback, so variance decomposes additively there
    double n1 = st1.xhatxhat(0, 0) - st0.xhatxhat(0, 0);
    double n4 = st4.xhatxhat(0, 0) - st0.xhatxhat(0, 0);
    REQUIRE(n4 == Catch::Approx(4.0 * n1).margin(1e-12));
  }
}

TEST_CASE("source block never depends on the law; correlations bounded") {
  RngStream g(13, 9);
  GaussMarkovSource src({0.9, 1.3, 1.0}, {0.95, 0.2});
  Mat expect = src.covariance();
  for (int trial = 0; trial < 50; ++trial) {
    auto law = random_stable_law(src, g);
    auto st = assemble_joint_stats(src, law);
    REQUIRE(st.source_block().max_abs_diff(expect) == 0.0);
    for (int i = 0; i < 2 * st.T; ++i) {
      REQUIRE(st.cov(i, i) >= 0.0);
      for (int j = 0; j < 2 * st.T; ++j) {
        double denom = std::sqrt(st.cov(i, i) * st.cov(j, j));
        if (denom > 0.0) REQUIRE(std::abs(st.cov(i, j)) / denom <= 1.0 + 1e-12);
      }
    }
    REQUIRE(mat_min_eigenvalue(st.cov) >= -1e-9);
  }
}

TEST_CASE("inconsistent recon_var is rejected") {
  GaussMarkovSource src({1.0, 1.0}, {0.5});
  LinearReconstructionLaw law;
  law.frames.resize(2);
  law.frames[0].source_coeff = 1.0;
  law.frames[0].recon_var = 3.0;  // actual variance is 1
  law.frames[1].recon_coeffs = {0.0};
  law.frames[1].source_coeff = 1.0;
  law.frames[1].recon_var = 1.0;
  REQUIRE_THROWS(assemble_joint_stats(src, law));
}

TEST_CASE("dimension mismatch is rejected") {
  GaussMarkovSource src({1.0, 1.0}, {0.5});
  LinearReconstructionLaw law;
  law.frames.resize(3);
  REQUIRE_THROWS(assemble_joint_stats(src, law));
}
