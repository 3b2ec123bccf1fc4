#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "crdp/universal.hpp"

using namespace crdp;

namespace {

TradeoffPoint make_target(const GaussMarkovSource& src, const RateTuple& r,
                          const LinearReconstructionLaw& law, PlfKind plf) {
  TradeoffPoint tp;
  tp.rate = r;
  tp.law = law;
  tp.plf = plf;
  auto st = assemble_joint_stats(src, law);
  std::vector<double> d(src.frames);
  for (int j = 0; j < src.frames; ++j) d[j] = st.distortion(j);
  tp.distortion = DistortionTuple(d);
  tp.perception = PerceptionTuple(std::vector<double>(src.frames, 0.0));
  return tp;
}

}  // namespace

TEST_CASE("identity transform: the MMSE point maps to itself with zero noise") {
  GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.0, 0.8);
  RateTuple rates({1.0, 0.7});
  auto [dmin, stats] = mmse_recursion(src, rates);

  // the MMSE representation as a causal law (from the innovation construction)
  auto f1 = solve_frame1(src, rates.bits[0], inf());
  auto f2 = solve_frame2(src, f1, rates.bits[1], inf(), PlfKind::Fmd);
  auto law = law_from_solutions(src, f1, f2);
  auto target = make_target(src, rates, law, PlfKind::Fmd);

  auto tf = solve_transform(stats, src, target);
  REQUIRE(tf.coeffs[0][0] == Catch::Approx(1.0).margin(1e-9));
  REQUIRE(tf.coeffs[1][0] == Catch::Approx(0.0).margin(1e-9));
  REQUIRE(tf.coeffs[1][1] == Catch::Approx(1.0).margin(1e-9));
  REQUIRE(tf.noise_var[0] <= 1e-9);
  REQUIRE(tf.noise_var[1] <= 1e-9);
  auto rep = verify_transform(stats, src, tf, target);
  REQUIRE(rep.max_cov_deviation <= 1e-9);
}

TEST_CASE("symmetric example: 1/sqrt(1-D) scaling with zero cross terms") {
  for (double d : {0.2, 0.5}) {
    for (double rho : {0.6, 0.9}) {
      auto ex = symmetric_example(3, rho, d);
      auto target = make_target(ex.source, ex.rates, ex.target_law, PlfKind::Jd);
      auto tf = solve_transform(ex.stats, ex.source, target);
      double scale = 1.0 / std::sqrt(1.0 - d);
      REQUIRE(tf.coeffs[0][0] == Catch::Approx(scale).margin(1e-10));
      REQUIRE(tf.coeffs[1][0] == Catch::Approx(0.0).margin(1e-10));
      REQUIRE(tf.coeffs[1][1] == Catch::Approx(scale).margin(1e-10));
      REQUIRE(tf.coeffs[2][0] == Catch::Approx(0.0).margin(1e-10));
      REQUIRE(tf.coeffs[2][1] == Catch::Approx(0.0).margin(1e-10));
      REQUIRE(tf.coeffs[2][2] == Catch::Approx(scale).margin(1e-10));
      for (int j = 0; j < 3; ++j) REQUIRE(tf.noise_var[j] <= 1e-10);

      auto rep = verify_transform(ex.stats, ex.source, tf, target);
      REQUIRE(rep.max_cov_deviation <= 1e-9);
      double expect_d = 2.0 - 2.0 * std::sqrt(1.0 - d);
      for (int j = 0; j < 3; ++j) {
        REQUIRE(rep.distortion.mse[j] == Catch::Approx(expect_d).margin(1e-10));
        REQUIRE(rep.perception.w2sq[j] <= 1e-10);   // marginal PLF
        REQUIRE(rep.jd_w2sq[j] <= 1e-8);            // joint PLF
      }
    }
  }
}

TEST_CASE("targets along dp_sweep frontiers transform within 1e-8") {
  GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.0, 0.85);
  RateTuple rates({1.2, 0.9});
  auto [dmin, stats] = mmse_recursion(src, rates);
  std::vector<double> pgrid = {0.0, 0.002, 0.02, 0.1, 0.5, inf()};
  for (PlfKind plf : {PlfKind::Fmd, PlfKind::Jd}) {
    auto pts = dp_sweep(src, rates, plf, pgrid);
    for (const auto& tp : pts) {
      REQUIRE(tp.status == "ok");
      auto tf = solve_transform(stats, src, tp);
      for (double nv : tf.noise_var) REQUIRE(nv >= -1e-9);
      auto rep = verify_transform(stats, src, tf, tp);
      REQUIRE(rep.max_cov_deviation <= 1e-8);
      // frontier laws are rate-tight, so the map is essentially noiseless
      for (double nv : tf.noise_var) REQUIRE(nv <= 1e-6);
    }
  }
}

TEST_CASE("rate precondition violations are rejected up front") {
  GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.0, 0.8);
  auto [dmin, stats] = mmse_recursion(src, RateTuple({0.5, 0.5}));
  // target that uses more rate than the representation carries
  auto f1 = solve_frame1(src, 2.0, inf());
  auto f2 = solve_frame2(src, f1, 2.0, inf(), PlfKind::Fmd);
  auto law = law_from_solutions(src, f1, f2);
  auto target = make_target(src, RateTuple({2.0, 2.0}), law, PlfKind::Fmd);
  REQUIRE_THROWS_AS(solve_transform(stats, src, target), TransformFailure);
  // zero representation rate is rejected rather than extrapolated
  auto [d0, stats0] = mmse_recursion(src, RateTuple({0.0, 0.5}));
  REQUIRE_THROWS_AS(solve_transform(stats0, src, target), TransformFailure);
}

TEST_CASE("degraded targets need noise: slack-rate marginal-matching map") {
  GaussMarkovSource src = GaussMarkovSource::homogeneous(1, 1.0, 0.0);
  src = GaussMarkovSource({1.0, 1.0}, {0.8});
  auto [dmin, stats] = mmse_recursion(src, RateTuple({2.0, 2.0}));
  // target solved at lower rate: the transform must degrade by adding noise
  auto f1 = solve_frame1(src, 1.0, inf());
  auto f2 = solve_frame2(src, f1, 1.0, inf(), PlfKind::Fmd);
  auto law = law_from_solutions(src, f1, f2);
  auto target = make_target(src, RateTuple({1.0, 1.0}), law, PlfKind::Fmd);
  auto tf = solve_transform(stats, src, target);
  REQUIRE(tf.noise_var[0] > 1e-4);  // genuine degradation
  // matched moments: distortion and own-frame stats reproduce
  auto rep = verify_transform(stats, src, tf, target);
  for (int j = 0; j < 2; ++j)
    REQUIRE(rep.distortion.mse[j] == Catch::Approx(target.distortion.mse[j]).margin(1e-9));
}
