#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "crdp/model.hpp"
#include "crdp/rng.hpp"
#include "crdp/statutil.hpp"
#include "crdp/transport.hpp"

namespace crdp {

// Trial-indexed streams keep every draw a pure function of (seed, trial), so
// results are bit-identical regardless of how trials are split across threads.
namespace mcdetail {

constexpr uint64_t kSourceStream = 0x101;
constexpr uint64_t kNoiseStream = 0x202;

inline void draw_trajectory(const GaussMarkovSource& src, uint64_t seed, uint64_t trial,
                            std::vector<double>& x) {
  RngStream g(seed, kSourceStream, trial);
  const int T = src.frames;
  x.resize(T);
  x[0] = src.sigma[0] * g.next_normal();
  for (int j = 0; j + 1 < T; ++j) {
    double drift = src.rho[j] * (src.sigma[j + 1] / src.sigma[j]) * x[j];
    double nv = src.innovation_variance(j);
    double z = g.next_normal();  // always drawn, keeps the stream layout fixed
    x[j + 1] = drift + (nv > 0.0 ? std::sqrt(nv) * z : 0.0);
  }
}

inline void push_law(const GaussMarkovSource& src, const LinearReconstructionLaw& law,
                     uint64_t seed, uint64_t trial, const std::vector<double>& x,
                     std::vector<double>& xhat) {
  RngStream g(seed, kNoiseStream, trial);
  const int T = src.frames;
  xhat.resize(T);
  for (int j = 0; j < T; ++j) {
    const auto& f = law.frames[j];
    double v = f.source_coeff * x[j];
    for (int i = 0; i < j; ++i) v += f.recon_coeffs[i] * xhat[i];
    double z = g.next_normal();
    if (f.noise_var > 0.0) v += std::sqrt(f.noise_var) * z;
    xhat[j] = v;
  }
}

// Deterministic block-parallel reduction: blocks are accumulated
// independently and combined in index order.
template <typename Block, typename Combine>
void run_blocks(uint64_t n, uint64_t block_size, int threads, Block block_fn, Combine combine_fn) {
  uint64_t nblocks = (n + block_size - 1) / block_size;
  if (threads <= 1 || nblocks <= 1) {
    for (uint64_t b = 0; b < nblocks; ++b)
      combine_fn(b, block_fn(b * block_size, std::min(n, (b + 1) * block_size)));
    return;
  }
  using Result = decltype(block_fn(uint64_t(0), uint64_t(0)));
  std::vector<Result> results(nblocks);
  std::vector<std::thread> pool;
  std::atomic<uint64_t> next{0};
  int nt = std::min<int>(threads, static_cast<int>(nblocks));
  for (int t = 0; t < nt; ++t)
    pool.emplace_back([&]() {
      for (;;) {
        uint64_t b = next.fetch_add(1);
        if (b >= nblocks) return;
        results[b] = block_fn(b * block_size, std::min(n, (b + 1) * block_size));
      }
    });
  for (auto& th : pool) th.join();
  for (uint64_t b = 0; b < nblocks; ++b) combine_fn(b, results[b]);
}

struct MomentBlock {
  std::vector<double> sum;      // running sums, laid out by the caller
  std::vector<double> sum_sq;   // squares for SE estimates (same layout prefix)
};

}  // namespace mcdetail

struct SimReport {
  uint64_t n = 0;
  uint64_t seed = 0;
  std::vector<double> distortion;        // empirical per-frame MSE
  std::vector<double> distortion_se;     // standard errors
  std::vector<double> perception_fmd;    // (s_j - sigma_j)^2 from sample stddev
  std::vector<double> perception_fmd_se; // via SE of the sample stddev
  std::vector<double> perception_jd;     // plug-in joint W2^2 vs source cov, per frame prefix
  Mat recon_cov;                          // sample covariance of Xhat
  Mat source_sample_cov;                  // sample covariance of X
};

// Samples the source, pushes trajectories through the law and reports
// empirical distortion and plug-in Gaussian perception with standard errors.
inline SimReport simulate(const GaussMarkovSource& src, const LinearReconstructionLaw& law,
                          uint64_t n, uint64_t seed, int threads = 0) {
  if (n < 1000) throw std::invalid_argument("simulate: n must be >= 1e3");
  const int T = src.frames;
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads <= 0) threads = 1;

  const int nd = T;                   // distortion slots
  const int ncov = T * (T + 1) / 2;   // packed upper triangle
  struct Acc {
    std::vector<double> d, d2, xhat_cov, x_cov;
  };
  Acc total;
  total.d.assign(nd, 0.0);
  total.d2.assign(nd, 0.0);
  total.xhat_cov.assign(ncov, 0.0);
  total.x_cov.assign(ncov, 0.0);

  auto block_fn = [&](uint64_t lo, uint64_t hi) {
    Acc a;
    a.d.assign(nd, 0.0);
    a.d2.assign(nd, 0.0);
    a.xhat_cov.assign(ncov, 0.0);
    a.x_cov.assign(ncov, 0.0);
    std::vector<KahanSum> kd(nd), kd2(nd), kc(ncov), kx(ncov);
    std::vector<double> x, xhat;
    for (uint64_t t = lo; t < hi; ++t) {
      mcdetail::draw_trajectory(src, seed, t, x);
      mcdetail::push_law(src, law, seed, t, x, xhat);
      for (int j = 0; j < T; ++j) {
        double e = x[j] - xhat[j];
        kd[j].add(e * e);
        kd2[j].add(e * e * e * e);
      }
      int s = 0;
      for (int i = 0; i < T; ++i)
        for (int j = i; j < T; ++j, ++s) {
          kc[s].add(xhat[i] * xhat[j]);
          kx[s].add(x[i] * x[j]);
        }
    }
    for (int i = 0; i < nd; ++i) {
      a.d[i] = kd[i].value();
      a.d2[i] = kd2[i].value();
    }
    for (int s = 0; s < ncov; ++s) {
      a.xhat_cov[s] = kc[s].value();
      a.x_cov[s] = kx[s].value();
    }
    return a;
  };
  std::vector<KahanSum> td(nd), td2(nd), tc(ncov), tx(ncov);
  mcdetail::run_blocks(n, 1 << 16, threads, block_fn, [&](uint64_t, const Acc& a) {
    for (int i = 0; i < nd; ++i) {
      td[i].add(a.d[i]);
      td2[i].add(a.d2[i]);
    }
    for (int s = 0; s < ncov; ++s) {
      tc[s].add(a.xhat_cov[s]);
      tx[s].add(a.x_cov[s]);
    }
  });

  SimReport rep;
  rep.n = n;
  rep.seed = seed;
  rep.distortion.resize(T);
  rep.distortion_se.resize(T);
  rep.perception_fmd.resize(T);
  rep.perception_fmd_se.resize(T);
  rep.perception_jd.resize(T);
  rep.recon_cov = Mat(T, T);
  rep.source_sample_cov = Mat(T, T);
  double dn = static_cast<double>(n);
  for (int j = 0; j < T; ++j) {
    double m = td[j].value() / dn;
    double m2 = td2[j].value() / dn;
    rep.distortion[j] = m;
    rep.distortion_se[j] = std::sqrt(std::max(0.0, m2 - m * m) / dn);
  }
  int s = 0;
  for (int i = 0; i < T; ++i)
    for (int j = i; j < T; ++j, ++s) {
      rep.recon_cov(i, j) = rep.recon_cov(j, i) = tc[s].value() / dn;
      rep.source_sample_cov(i, j) = rep.source_sample_cov(j, i) = tx[s].value() / dn;
    }
  for (int j = 0; j < T; ++j) {
    double sj = std::sqrt(std::max(0.0, rep.recon_cov(j, j)));
    rep.perception_fmd[j] = w2sq_gauss_1d(src.sigma[j], sj);
    rep.perception_fmd_se[j] = sj / std::sqrt(2.0 * dn);
    std::vector<std::size_t> idx(j + 1);
    for (int i = 0; i <= j; ++i) idx[i] = i;
    Mat sample = rep.recon_cov.submatrix(idx);
    Mat src_cov = src.covariance().submatrix(idx);
    rep.perception_jd[j] = w2sq_gauss_nd(src_cov, sample);
  }
  return rep;
}

// Raw trajectory draws, exposed for tests and oracles.
inline std::vector<std::vector<double>> gaussian_sampler(const GaussMarkovSource& src, uint64_t n,
                                                         uint64_t seed) {
  std::vector<std::vector<double>> out(n);
  std::vector<double> x;
  for (uint64_t t = 0; t < n; ++t) {
    mcdetail::draw_trajectory(src, seed, t, x);
    out[t] = x;
  }
  return out;
}

}  // namespace crdp
