#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "crdp/realism.hpp"
#include "crdp/rng.hpp"

using namespace crdp;

namespace {

DiscreteMarkovSource random_source(RngStream& g, int frames, int max_alpha = 4) {
  DiscreteMarkovSource s;
  s.values.resize(frames);
  for (int j = 0; j < frames; ++j) {
    int n = 2 + static_cast<int>(g.next_double() * (max_alpha - 1));
    std::vector<double> v;
    double cur = g.uniform_in(-2.0, -1.0);
    for (int i = 0; i < n; ++i) {
      v.push_back(cur);
      cur += g.uniform_in(0.2, 1.0);
    }
    s.values[j] = v;
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
  s.validate();
  return s;
}

DiscreteEncoder b1_encoder(const DiscreteMarkovSource& src) {
  // M1 independent of X1 (constant), M2 = X2
  DiscreteEncoder enc;
  enc.k_pmf = {1.0};
  enc.msg_sizes = {1, src.alphabet(1)};
  enc.build_radix(src);
  enc.tables.resize(2);
  enc.tables[0].assign(enc.ctx_radix[0].total, 1.0);
  enc.tables[1].assign(enc.ctx_radix[1].total * enc.msg_sizes[1], 0.0);
  std::vector<int> digits;
  for (std::size_t r = 0; r < enc.ctx_radix[1].total; ++r) {
    enc.ctx_radix[1].decode(r, digits);
    enc.tables[1][r * enc.msg_sizes[1] + digits[0]] = 1.0;
  }
  return enc;
}

}  // namespace

TEST_CASE("lossless encoder: thresholds vanish, constructions are identity") {
  auto src = DiscreteMarkovSource::binary_flip_chain(2, 0.2);
  auto enc = DiscreteEncoder::copy_encoder(src);
  auto jl = joint_law(src, enc);
  auto thr_f = fmd_threshold(jl);
  auto thr_j = jd_threshold(jl);
  for (int j = 0; j < 2; ++j) {
    REQUIRE(thr_f.mse[j] == Catch::Approx(0.0).margin(1e-14));
    REQUIRE(thr_j.mse[j] == Catch::Approx(0.0).margin(1e-14));
  }
  auto ev = evaluate_reconstruction(jl, fmd_construct(jl));
  for (int j = 0; j < 2; ++j) REQUIRE(ev.mse[j] == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("constant encoder on uniform pm1 source: threshold 2 = 2x MMSE") {
  auto src = DiscreteMarkovSource::binary_flip_chain(1, 0.0);
  src.trans.clear();
  src.values = {{-1.0, 1.0}};
  src.init = {0.5, 0.5};
  src.validate();
  auto enc = DiscreteEncoder::constant_encoder(src);
  auto jl = joint_law(src, enc);
  auto thr = fmd_threshold(jl);
  REQUIRE(thr.mse[0] == Catch::Approx(2.0).margin(1e-12));  // Var + W2^2(delta0, pm1) = 1 + 1
  auto rec = fmd_construct(jl);
  auto ev = evaluate_reconstruction(jl, rec);
  REQUIRE(ev.mse[0] == Catch::Approx(2.0).margin(1e-12));
  auto marg = reconstruction_marginal(jl, rec, 0);
  REQUIRE(marg.probs[0] == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("random systems: fmd_construct achieves MMSE + W2 and the factor-two bound") {
  RngStream g(808, 21);
  for (int trial = 0; trial < 120; ++trial) {
    int T = 2 + (trial % 2);
    auto src = random_source(g, T, 3);
    std::vector<int> msz;
    for (int j = 0; j < T; ++j) msz.push_back(2 + static_cast<int>(g.next_double() * 2));
    auto enc = DiscreteEncoder::random_encoder(src, msz, 2, g);
    auto jl = joint_law(src, enc);
    auto [mmse_rec, mmse] = mmse_reconstruction(jl);
    auto thr = fmd_threshold(jl);
    auto rec = fmd_construct(jl);
    auto ev = evaluate_reconstruction(jl, rec);
    for (int j = 0; j < T; ++j) {
      REQUIRE(ev.mse[j] == Catch::Approx(thr.mse[j]).margin(1e-10));
      REQUIRE(thr.mse[j] <= 2.0 * mmse.mse[j] + 1e-12);
      // marginal preserved
      auto marg = reconstruction_marginal(jl, rec, j);
      auto expect = src.marginal_pmf(j);
      REQUIRE(marg.size() == expect.size());
      for (std::size_t i = 0; i < marg.size(); ++i)
        REQUIRE(marg.probs[i] == Catch::Approx(expect.probs[i]).margin(1e-12));
    }
  }
}

TEST_CASE("blind-then-lossless counterexample: JD threshold breaks factor two") {
  auto src = DiscreteMarkovSource::binary_flip_chain(2, 0.1);
  auto enc = b1_encoder(src);
  auto jl = joint_law(src, enc);
  auto [mmse_rec, mmse] = mmse_reconstruction(jl);
  REQUIRE(mmse.mse[1] == Catch::Approx(0.0).margin(1e-15));
  auto thr = jd_threshold(jl);
  // sum_x1 P(x1) W2^2(P_{X2}, P_{X2|X1=x1}): mass 0.4 moved by distance 2 -> 1.6
  REQUIRE(thr.mse[1] == Catch::Approx(1.6).margin(1e-12));
  REQUIRE(thr.mse[1] > 2.0 * mmse.mse[1]);
  // construction achieves the threshold with an exact joint law
  auto rec = jd_construct(jl);
  auto ev = evaluate_reconstruction(jl, rec);
  REQUIRE(ev.mse[1] == Catch::Approx(thr.mse[1]).margin(1e-10));
  auto sj = source_joint_prefix(src, 2);
  for (std::size_t i = 0; i < ev.joint.size(); ++i)
    REQUIRE(ev.joint[i] == Catch::Approx(sj[i]).margin(1e-10));
}

TEST_CASE("random systems: jd_construct matches threshold and preserves the joint law") {
  RngStream g(909, 22);
  for (int trial = 0; trial < 60; ++trial) {
    int T = 2 + (trial % 2);
    auto src = random_source(g, T, 3);
    std::vector<int> msz(T, 2);
    auto enc = DiscreteEncoder::random_encoder(src, msz, 2, g);
    auto jl = joint_law(src, enc);
    auto thr = jd_threshold(jl);
    auto thr_f = fmd_threshold(jl);
    auto rec = jd_construct(jl);
    auto ev = evaluate_reconstruction(jl, rec);
    auto sj = source_joint_prefix(src, T);
    // output joint equals source joint cellwise
    REQUIRE(ev.joint.size() == sj.size());
    for (std::size_t i = 0; i < sj.size(); ++i)
      REQUIRE(ev.joint[i] == Catch::Approx(sj[i]).margin(1e-10));
    for (int j = 0; j < T; ++j) {
      REQUIRE(ev.mse[j] == Catch::Approx(thr.mse[j]).margin(1e-10));
      REQUIRE(thr.mse[j] >= thr_f.mse[j] - 1e-12);  // JD is the stricter constraint
    }
    // frame-1 thresholds coincide
    REQUIRE(thr.mse[0] == Catch::Approx(thr_f.mse[0]).margin(1e-12));
  }
}

TEST_CASE("exhaustive simplex-grid search certifies the JD frame-2 threshold") {
  // Binary 0.1-flip chain with the B.1 encoder.  Frame-2 reconstructions that
  // preserve the joint law are parametrized by q(v2=+1 | x2, v1); scan a
  // 1/32-step grid and keep the best feasible distortion.
  auto src = DiscreteMarkovSource::binary_flip_chain(2, 0.1);
  auto enc = b1_encoder(src);
  auto jl = joint_law(src, enc);
  auto thr = jd_threshold(jl);

  // frame-1 output is +-1 with probability 1/2 independent of everything.
  // joint-law constraint: P(v1, v2) must equal the source chain.
  double best = 1e9;
  const int steps = 32;
  for (int a = 0; a <= steps; ++a)
    for (int b = 0; b <= steps; ++b)
      for (int c = 0; c <= steps; ++c)
        for (int d = 0; d <= steps; ++d) {
          // q[x2][v1] = P(v2 = +1 | x2, v1)
          double q[2][2] = {{double(a) / steps, double(b) / steps},
                            {double(c) / steps, double(d) / steps}};
          // v1 uniform, independent of (x1, x2); x2 marginal uniform
          // P(v1, v2=+1) = sum_x2 P(x2) * 0.5 * q[x2][v1]
          bool ok = true;
          for (int v1 = 0; v1 < 2 && ok; ++v1) {
            double pv2 = 0.5 * (0.5 * q[0][v1] + 0.5 * q[1][v1]);
            double want = v1 == 0 ? 0.5 * 0.1 : 0.5 * 0.9;  // P(v1, +1): flip 0.1
            if (std::abs(pv2 - want) > 2e-2) ok = false;     // grid-resolution feasibility
          }
          if (!ok) continue;
          double mse = 0.0;
          for (int x2 = 0; x2 < 2; ++x2)
            for (int v1 = 0; v1 < 2; ++v1) {
              double px = 0.5;        // P(x2) uniform
              double pv = 0.5 * px;   // v1 independent uniform
              double xv = src.values[1][x2];
              mse += pv * (q[x2][v1] * (1.0 - xv) * (1.0 - xv) +
                           (1.0 - q[x2][v1]) * (-1.0 - xv) * (-1.0 - xv));
            }
          best = std::min(best, mse);
        }
  // approximate lower-bound certification: nothing on the grid beats the
  // threshold by more than the grid tolerance
  REQUIRE(best >= thr.mse[1] - 0.15);
}

TEST_CASE("noisy encoders: posterior mixes toward the prior and gap decays linearly") {
  auto src = DiscreteMarkovSource::binary_flip_chain(2, 0.15);
  RngStream g(4242, 23);
  auto base = DiscreteEncoder::random_encoder(src, {2, 2}, 2, g, 0.5);

  // mu = 0: messages carry nothing, posterior equals prior
  auto blind = make_noisy_encoder(src, base, 0.0);
  auto jl0 = joint_law(src, blind);
  auto [rec0, mmse0] = mmse_reconstruction(jl0);
  for (int j = 0; j < 2; ++j) {
    ScalarPmf m = src.marginal_pmf(j);
    REQUIRE(mmse0.mse[j] == Catch::Approx(m.variance()).margin(1e-12));
  }
  // zero-mean symmetric source: gap vanishes at mu = 0
  auto thr0 = jd_threshold(jl0);
  for (int j = 0; j < 2; ++j)
    REQUIRE(thr0.mse[j] - 2.0 * mmse0.mse[j] == Catch::Approx(0.0).margin(1e-10));

  auto rows = noisy_factor_two_sweep(src, base, {0.2, 0.1, 0.05, 0.025});
  auto decay = check_gap_decay(rows);
  REQUIRE(decay.linear);

  // the factor-two excess magnitude halves (at least 0.75x) with mu
  auto copy_rows = noisy_factor_two_sweep(src, DiscreteEncoder::copy_encoder(src, 2),
                                          {0.2, 0.1, 0.05, 0.025});
  for (std::size_t i = 0; i + 1 < copy_rows.size(); ++i) {
    double g1 = 0.0, g2 = 0.0;
    for (double v : copy_rows[i].gap) g1 = std::max(g1, std::abs(v));
    for (double v : copy_rows[i + 1].gap) g2 = std::max(g2, std::abs(v));
    REQUIRE(g2 <= 0.75 * g1 + 1e-12);
  }
}
