#pragma once

#include <cmath>
#include <cstdint>

namespace crdp {

// Counter-based pseudorandom generator built on the SplitMix64 finalizer.
// output(counter) is a pure function of (key, counter), so encoder/decoder
// pairs and parallel workers regenerate identical streams from the same key
// without exchanging state.
namespace rngdetail {

inline uint64_t mix64(uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace rngdetail

inline uint64_t rng_key(uint64_t seed, uint64_t stream_a = 0, uint64_t stream_b = 0,
                        uint64_t stream_c = 0) {
  uint64_t k = rngdetail::mix64(seed ^ 0x6A09E667F3BCC909ull);
  k = rngdetail::mix64(k ^ rngdetail::mix64(stream_a ^ 0xBB67AE8584CAA73Bull));
  k = rngdetail::mix64(k ^ rngdetail::mix64(stream_b ^ 0x3C6EF372FE94F82Bull));
  k = rngdetail::mix64(k ^ rngdetail::mix64(stream_c ^ 0xA54FF53A5F1D36F1ull));
  return k;
}

class RngStream {
public:
  explicit RngStream(uint64_t key) : key_(key) {}
  RngStream(uint64_t seed, uint64_t stream_a, uint64_t stream_b = 0, uint64_t stream_c = 0)
      : key_(rng_key(seed, stream_a, stream_b, stream_c)) {}

  uint64_t next_u64() { return rngdetail::mix64(key_ + (++ctr_) * 0x9E3779B97F4A7C15ull); }

  // Uniform in [0,1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0,1].
  double next_open() { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

  // Standard normal via Box-Muller (two uniforms per variate).
  double next_normal() {
    double u1 = next_open();
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double next_exponential() { return -std::log(next_open()); }

  // Index into a pmf given as a plain array of probabilities.
  template <typename Vec>
  int next_index(const Vec& probs) {
    double u = next_double();
    double acc = 0.0;
    int last = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      last = static_cast<int>(i);
      if (u < acc) return last;
    }
    return last;
  }

  double uniform_in(double lo, double hi) { return lo + (hi - lo) * next_double(); }

private:
  uint64_t key_;
  uint64_t ctr_ = 0;
};

}  // namespace crdp
