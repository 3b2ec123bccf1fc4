#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <stdexcept>
#include <vector>

#include "crdp/discrete.hpp"
#include "crdp/rng.hpp"
#include "crdp/statutil.hpp"

namespace crdp {

// ---------------------------------------------------------------------------
// bit-level prefix coding

class BitWriter {
public:
  void push(bool bit) {
    if (used_ % 8 == 0) bytes_.push_back(0);
    if (bit) bytes_.back() |= static_cast<uint8_t>(1u << (used_ % 8));
    ++used_;
  }
  std::size_t size_bits() const { return used_; }
  const std::vector<uint8_t>& bytes() const { return bytes_; }

private:
  std::vector<uint8_t> bytes_;
  std::size_t used_ = 0;
};

class BitReader {
public:
  BitReader(const std::vector<uint8_t>& bytes, std::size_t nbits) : bytes_(bytes), nbits_(nbits) {}
  bool pop() {
    if (pos_ >= nbits_) throw std::runtime_error("BitReader: out of bits");
    bool b = (bytes_[pos_ / 8] >> (pos_ % 8)) & 1u;
    ++pos_;
    return b;
  }
  bool exhausted() const { return pos_ >= nbits_; }

private:
  const std::vector<uint8_t>& bytes_;
  std::size_t nbits_;
  std::size_t pos_ = 0;
};

// Elias gamma: floor(log2 k) zeros, then k's binary digits.  Complete prefix
// code over the positive integers (Kraft sum is exactly 1).
inline std::size_t elias_gamma_len(uint64_t k) {
  if (k == 0) throw std::invalid_argument("elias_gamma_len: k must be >= 1");
  std::size_t n = 0;
  while ((k >> (n + 1)) != 0) ++n;
  return 2 * n + 1;
}

inline void elias_gamma_encode(BitWriter& w, uint64_t k) {
  if (k == 0) throw std::invalid_argument("elias_gamma_encode: k must be >= 1");
  int n = 0;
  while ((k >> (n + 1)) != 0) ++n;
  for (int i = 0; i < n; ++i) w.push(false);
  for (int i = n; i >= 0; --i) w.push((k >> i) & 1u);
}

inline uint64_t elias_gamma_decode(BitReader& r) {
  int n = 0;
  while (!r.pop()) ++n;
  uint64_t k = 1;
  for (int i = 0; i < n; ++i) k = (k << 1) | (r.pop() ? 1u : 0u);
  return k;
}

// Huffman expected-length fallback over an empirical index distribution.
// Returns codeword lengths per symbol (escape handling is the caller's
// concern; frequencies of zero get no codeword).
inline std::vector<int> huffman_lengths(const std::vector<double>& freq) {
  struct Node {
    double w;
    int idx;  // >= 0 leaf, < 0 internal
  };
  auto cmp = [](const Node& a, const Node& b) { return a.w > b.w; };
  std::priority_queue<Node, std::vector<Node>, decltype(cmp)> pq(cmp);
  std::vector<std::pair<int, int>> children;  // internal nodes
  int live = 0;
  for (std::size_t i = 0; i < freq.size(); ++i)
    if (freq[i] > 0.0) {
      pq.push({freq[i], static_cast<int>(i)});
      ++live;
    }
  std::vector<int> len(freq.size(), 0);
  if (live == 1) {
    for (std::size_t i = 0; i < freq.size(); ++i)
      if (freq[i] > 0.0) len[i] = 1;
    return len;
  }
  while (pq.size() > 1) {
    Node a = pq.top();
    pq.pop();
    Node b = pq.top();
    pq.pop();
    children.push_back({a.idx, b.idx});
    pq.push({a.w + b.w, -static_cast<int>(children.size())});
  }
  // depth-first assignment of depths
  std::vector<std::pair<int, int>> stack{{pq.top().idx, 0}};
  while (!stack.empty()) {
    auto [idx, depth] = stack.back();
    stack.pop_back();
    if (idx >= 0) {
      len[idx] = depth;
    } else {
      auto [l, r] = children[-idx - 1];
      stack.push_back({l, depth + 1});
      stack.push_back({r, depth + 1});
    }
  }
  return len;
}

inline double kraft_sum(const std::vector<int>& lengths) {
  double s = 0.0;
  for (int l : lengths)
    if (l > 0) s += std::pow(2.0, -l);
  return s;
}

// ---------------------------------------------------------------------------
// channels

struct DiscreteChannel {
  std::vector<double> px;                // input pmf
  std::vector<std::vector<double>> pyx;  // rows: P(Y | X = x)
  std::vector<double> py;                // implied output marginal
  double mi_bits = 0.0;

  int nx() const { return static_cast<int>(px.size()); }
  int ny() const { return static_cast<int>(py.size()); }
};

inline double channel_mutual_information(const std::vector<double>& px,
                                         const std::vector<std::vector<double>>& pyx,
                                         const std::vector<double>& py) {
  double mi = 0.0;
  for (std::size_t x = 0; x < px.size(); ++x)
    for (std::size_t y = 0; y < py.size(); ++y) {
      double joint = px[x] * pyx[x][y];
      if (joint > 0.0 && py[y] > 0.0) mi += joint * std::log2(pyx[x][y] / py[y]);
    }
  return std::max(0.0, mi);
}

inline DiscreteChannel make_channel(std::vector<double> px,
                                    std::vector<std::vector<double>> pyx) {
  DiscreteChannel ch;
  ch.px = std::move(px);
  ch.pyx = std::move(pyx);
  double sx = 0.0;
  for (double p : ch.px) sx += p;
  if (std::abs(sx - 1.0) > 1e-12) throw std::invalid_argument("make_channel: input pmf not normalized");
  std::size_t ny = ch.pyx.empty() ? 0 : ch.pyx[0].size();
  ch.py.assign(ny, 0.0);
  for (std::size_t x = 0; x < ch.px.size(); ++x) {
    if (ch.pyx[x].size() != ny) throw std::invalid_argument("make_channel: ragged rows");
    double rs = 0.0;
    for (std::size_t y = 0; y < ny; ++y) {
      rs += ch.pyx[x][y];
      ch.py[y] += ch.px[x] * ch.pyx[x][y];
    }
    if (std::abs(rs - 1.0) > 1e-12) throw std::invalid_argument("make_channel: row not normalized");
  }
  ch.mi_bits = channel_mutual_information(ch.px, ch.pyx, ch.py);
  return ch;
}

// ---------------------------------------------------------------------------
// Poisson functional representation

struct PfrResult {
  uint64_t index = 0;  // 1-based selected proposal
  int y = 0;           // selected output symbol
  int proposals = 0;   // proposals examined before the race settled
};

// Race construction over a shared proposal stream: proposals Y_i ~ P_Y with
// unit-exponential arrival gaps T_i; the winner minimizes T_i / r_x(Y_i) with
// r_x = dP_{Y|X=x}/dP_Y.  The race stops once T_i exceeds best * r_max, after
// which no later arrival can win.  The winning Y has law exactly P_{Y|X=x}.
inline PfrResult pfr_select(const DiscreteChannel& ch, int x, uint64_t stream_key) {
  const auto& row = ch.pyx[x];
  double r_max = 0.0;
  for (int y = 0; y < ch.ny(); ++y) {
    if (row[y] > 0.0 && !(ch.py[y] > 0.0))
      throw std::invalid_argument("pfr_select: conditional mass on a zero-probability output");
    if (ch.py[y] > 0.0) r_max = std::max(r_max, row[y] / ch.py[y]);
  }
  if (r_max <= 0.0) throw std::invalid_argument("pfr_select: empty conditional row");

  RngStream g(stream_key);
  double t = 0.0;
  double best_score = inf();
  PfrResult res;
  for (uint64_t i = 1;; ++i) {
    t += g.next_exponential();
    int y = g.next_index(ch.py);
    if (t > best_score * r_max) {
      res.proposals = static_cast<int>(i);
      break;
    }
    double r = ch.py[y] > 0.0 ? row[y] / ch.py[y] : 0.0;
    if (r > 0.0) {
      double score = t / r;
      if (score < best_score) {
        best_score = score;
        res.index = i;
        res.y = y;
      }
    }
    if (i > 100'000'000) throw std::runtime_error("pfr_select: race failed to settle");
  }
  return res;
}

// Decoder side: regenerate the proposal stream and read off the chosen entry.
inline int pfr_decode(const DiscreteChannel& ch, uint64_t index, uint64_t stream_key) {
  RngStream g(stream_key);
  int y = 0;
  for (uint64_t i = 1; i <= index; ++i) {
    g.next_exponential();
    y = g.next_index(ch.py);
  }
  return y;
}

struct LengthReport {
  double mi_bits = 0.0;
  double mean_len_bits = 0.0;
  double se_len_bits = 0.0;
  double bound_bits = 0.0;  // one-shot bound I + log2(I + 1) + 5
  uint64_t n_trials = 0;
  bool meets_bound = false;
  double chi_square_p = 1.0;  // pooled over inputs
  double mean_len_huffman = 0.0;
};

inline double one_shot_length_bound(double mi_bits) { return mi_bits + std::log2(mi_bits + 1.0) + 5.0; }

// Runs the PFR coder n times with fresh shared randomness per trial and
// reports the empirical Elias-gamma codeword length against the one-shot
// bound, plus a pooled chi-square check that each conditional output law is
// reproduced exactly.
inline LengthReport encode_length(const DiscreteChannel& ch, uint64_t n, uint64_t seed) {
  if (n < 10'000) throw std::invalid_argument("encode_length: n must be >= 1e4");
  KahanSum len_sum, len_sq;
  std::vector<std::vector<double>> out_counts(ch.nx(), std::vector<double>(ch.ny(), 0.0));
  std::vector<double> index_freq;
  for (uint64_t t = 0; t < n; ++t) {
    RngStream pick(seed, 0x5eed, t);
    int x = pick.next_index(ch.px);
    auto res = pfr_select(ch, x, rng_key(seed, 0xC0DE, t));
    double len = static_cast<double>(elias_gamma_len(res.index));
    len_sum.add(len);
    len_sq.add(len * len);
    out_counts[x][res.y] += 1.0;
    if (index_freq.size() <= res.index) index_freq.resize(res.index + 1, 0.0);
    index_freq[res.index] += 1.0;
  }
  LengthReport rep;
  rep.n_trials = n;
  rep.mi_bits = ch.mi_bits;
  rep.bound_bits = one_shot_length_bound(ch.mi_bits);
  double dn = static_cast<double>(n);
  rep.mean_len_bits = len_sum.value() / dn;
  double var = std::max(0.0, len_sq.value() / dn - rep.mean_len_bits * rep.mean_len_bits);
  rep.se_len_bits = std::sqrt(var / dn);
  rep.meets_bound = rep.mean_len_bits <= rep.bound_bits + 3.0 * rep.se_len_bits;

  double stat = 0.0, dof = 0.0;
  for (int x = 0; x < ch.nx(); ++x) {
    double nx = 0.0;
    for (double c : out_counts[x]) nx += c;
    if (nx < 50.0) continue;
    auto r = chi_square_gof(out_counts[x], ch.pyx[x]);
    stat += r.stat;
    dof += r.dof;
  }
  rep.chi_square_p = dof > 0.0 ? chi_square_tail(stat, dof) : 1.0;

  // per-context Huffman fallback length over the observed index distribution
  auto lens = huffman_lengths(index_freq);
  double hsum = 0.0, htot = 0.0;
  for (std::size_t i = 0; i < index_freq.size(); ++i) {
    hsum += index_freq[i] * lens[i];
    htot += index_freq[i];
  }
  rep.mean_len_huffman = htot > 0.0 ? hsum / htot : 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// causal chaining over a Markov source

// Per-frame representation channels P(Xr_j | X_j, Xr_1..Xr_{j-1}) on finite
// alphabets; the Markov structure of the iRDP region is built into the table
// shapes.
struct ChainSpec {
  DiscreteMarkovSource source;
  std::vector<int> rep_sizes;                 // |Xr_j|
  std::vector<std::vector<double>> channels;  // frame j: [(x_j, xr_1..xr_{j-1})][xr_j]
  std::vector<Radix> ctx_radix;               // over (x_j, xr_<j)

  int T() const { return static_cast<int>(rep_sizes.size()); }

  void build_radix() {
    ctx_radix.clear();
    for (int j = 0; j < T(); ++j) {
      std::vector<int> sizes{source.alphabet(j)};
      for (int i = 0; i < j; ++i) sizes.push_back(rep_sizes[i]);
      ctx_radix.emplace_back(std::move(sizes));
    }
  }

  double prob(int j, int x, const std::vector<int>& rprefix, int r) const {
    std::vector<int> digits{x};
    for (int i = 0; i < j; ++i) digits.push_back(rprefix[i]);
    return channels[j][ctx_radix[j].index(digits) * rep_sizes[j] + r];
  }
};

struct ChainFrameReport {
  double mi_bits = 0.0;  // I(X_j ; Xr_j | Xr_<j)
  double mean_len_bits = 0.0;
  double se_len_bits = 0.0;
  double bound_bits = 0.0;
  bool meets_bound = false;
};

struct ChainReport {
  std::vector<ChainFrameReport> frames;
  bool roundtrip_exact = false;
  uint64_t n_trials = 0;
};

namespace chaindetail {

// Exact joint pmf over (x_1..x_T, xr_1..xr_T).
struct ChainJoint {
  Radix radix;
  std::vector<double> p;
};

inline ChainJoint chain_joint(const ChainSpec& spec) {
  const int T = spec.T();
  std::vector<int> sizes;
  for (int j = 0; j < T; ++j) sizes.push_back(spec.source.alphabet(j));
  for (int j = 0; j < T; ++j) sizes.push_back(spec.rep_sizes[j]);
  ChainJoint cj;
  cj.radix = Radix(sizes);
  cj.p.assign(cj.radix.total, 0.0);
  std::vector<int> d, rprefix(T);
  for (std::size_t idx = 0; idx < cj.radix.total; ++idx) {
    cj.radix.decode(idx, d);
    double pr = spec.source.init[d[0]];
    for (int j = 0; j + 1 < T && pr > 0.0; ++j) pr *= spec.source.trans_prob(j, d[j], d[j + 1]);
    for (int j = 0; j < T && pr > 0.0; ++j) {
      for (int i = 0; i < j; ++i) rprefix[i] = d[T + i];
      pr *= spec.prob(j, d[j], rprefix, d[T + j]);
    }
    cj.p[idx] = pr;
  }
  return cj;
}

// Conditional codebook marginals P(xr_j | xr_<j) and the conditional mutual
// informations, both exact.
struct ChainTables {
  std::vector<std::vector<double>> marginals;  // frame j: [(xr_<j)][xr_j]
  std::vector<Radix> prefix_radix;
  std::vector<double> mi_bits;
};

inline ChainTables chain_tables(const ChainSpec& spec) {
  const int T = spec.T();
  ChainJoint cj = chain_joint(spec);
  ChainTables tb;
  tb.marginals.resize(T);
  tb.mi_bits.assign(T, 0.0);
  std::vector<int> d;
  for (int j = 0; j < T; ++j) {
    std::vector<int> psizes;
    for (int i = 0; i < j; ++i) psizes.push_back(spec.rep_sizes[i]);
    tb.prefix_radix.emplace_back(psizes);
    const auto& pr_radix = tb.prefix_radix[j];
    // mass over (xr_<j, x_j, xr_j)
    std::vector<double> mass(pr_radix.total * spec.source.alphabet(j) * spec.rep_sizes[j], 0.0);
    for (std::size_t idx = 0; idx < cj.radix.total; ++idx) {
      double p = cj.p[idx];
      if (p == 0.0) continue;
      cj.radix.decode(idx, d);
      std::size_t a = 0;
      for (int i = 0; i < j; ++i) a = a * spec.rep_sizes[i] + d[T + i];
      std::size_t cell = (a * spec.source.alphabet(j) + d[j]) * spec.rep_sizes[j] + d[T + j];
      mass[cell] += p;
    }
    tb.marginals[j].assign(pr_radix.total * spec.rep_sizes[j], 0.0);
    for (std::size_t a = 0; a < pr_radix.total; ++a) {
      double pa = 0.0;
      std::vector<double> pxr(spec.rep_sizes[j], 0.0), px(spec.source.alphabet(j), 0.0);
      for (int x = 0; x < spec.source.alphabet(j); ++x)
        for (int r = 0; r < spec.rep_sizes[j]; ++r) {
          double m = mass[(a * spec.source.alphabet(j) + x) * spec.rep_sizes[j] + r];
          pa += m;
          pxr[r] += m;
          px[x] += m;
        }
      if (pa <= 0.0) {
        // unreachable prefix: uniform placeholder, never sampled
        for (int r = 0; r < spec.rep_sizes[j]; ++r)
          tb.marginals[j][a * spec.rep_sizes[j] + r] = 1.0 / spec.rep_sizes[j];
        continue;
      }
      for (int r = 0; r < spec.rep_sizes[j]; ++r)
        tb.marginals[j][a * spec.rep_sizes[j] + r] = pxr[r] / pa;
      for (int x = 0; x < spec.source.alphabet(j); ++x)
        for (int r = 0; r < spec.rep_sizes[j]; ++r) {
          double m = mass[(a * spec.source.alphabet(j) + x) * spec.rep_sizes[j] + r];
          if (m <= 0.0) continue;
          double cond_joint = m / pa;            // P(x, r | prefix)
          double cx = px[x] / pa, cr = pxr[r] / pa;
          tb.mi_bits[j] += pa * cond_joint * std::log2(cond_joint / (cx * cr));
        }
    }
    tb.mi_bits[j] = std::max(0.0, tb.mi_bits[j]);
  }
  return tb;
}

}  // namespace chaindetail

// Encodes n source trajectories frame by frame with context-keyed PFR
// codebooks, decodes them back from the bitstream alone, and reports
// per-frame empirical rates against the one-shot bound.
inline ChainReport causal_chain_encode(const ChainSpec& spec_in, uint64_t n, uint64_t seed) {
  ChainSpec spec = spec_in;
  spec.build_radix();
  spec.source.validate();
  const int T = spec.T();
  auto tables = chaindetail::chain_tables(spec);

  ChainReport rep;
  rep.n_trials = n;
  rep.frames.resize(T);
  for (int j = 0; j < T; ++j) {
    rep.frames[j].mi_bits = tables.mi_bits[j];
    rep.frames[j].bound_bits = one_shot_length_bound(tables.mi_bits[j]);
  }

  std::vector<KahanSum> len_sum(T), len_sq(T);
  bool roundtrip = true;

  std::vector<int> x(T), xr(T), decoded(T), rprefix;
  for (uint64_t t = 0; t < n; ++t) {
    // source trajectory
    RngStream gs(seed, 0x515, t);
    x[0] = gs.next_index(spec.source.init);
    for (int j = 0; j + 1 < T; ++j) {
      std::vector<double> row(spec.source.alphabet(j + 1));
      for (int b = 0; b < spec.source.alphabet(j + 1); ++b)
        row[b] = spec.source.trans_prob(j, x[j], b);
      x[j + 1] = gs.next_index(row);
    }
    BitWriter bits;
    std::vector<std::size_t> ctxs(T);
    for (int j = 0; j < T; ++j) {
      std::size_t a = 0;
      for (int i = 0; i < j; ++i) a = a * spec.rep_sizes[i] + xr[i];
      ctxs[j] = a;
      // per-context channel: rows P(xr_j | x_j, prefix), proposals from the
      // codebook marginal P(xr_j | prefix)
      DiscreteChannel ch;
      ch.px.assign(1, 1.0);  // unused by pfr_select
      ch.pyx.assign(spec.source.alphabet(j), std::vector<double>(spec.rep_sizes[j], 0.0));
      rprefix.assign(xr.begin(), xr.begin() + j);
      for (int xx = 0; xx < spec.source.alphabet(j); ++xx)
        for (int r = 0; r < spec.rep_sizes[j]; ++r) ch.pyx[xx][r] = spec.prob(j, xx, rprefix, r);
      ch.py.assign(spec.rep_sizes[j], 0.0);
      for (int r = 0; r < spec.rep_sizes[j]; ++r)
        ch.py[r] = tables.marginals[j][a * spec.rep_sizes[j] + r];
      auto res = pfr_select(ch, x[j], rng_key(seed, 0xABC0 + j, a, t));
      xr[j] = res.y;
      double len = static_cast<double>(elias_gamma_len(res.index));
      len_sum[j].add(len);
      len_sq[j].add(len * len);
      elias_gamma_encode(bits, res.index);
    }
    // decode from the bitstream and the shared randomness alone
    BitReader reader(bits.bytes(), bits.size_bits());
    for (int j = 0; j < T; ++j) {
      std::size_t a = 0;
      for (int i = 0; i < j; ++i) a = a * spec.rep_sizes[i] + decoded[i];
      uint64_t index = elias_gamma_decode(reader);
      DiscreteChannel ch;
      ch.py.assign(spec.rep_sizes[j], 0.0);
      for (int r = 0; r < spec.rep_sizes[j]; ++r)
        ch.py[r] = tables.marginals[j][a * spec.rep_sizes[j] + r];
      decoded[j] = pfr_decode(ch, index, rng_key(seed, 0xABC0 + j, a, t));
    }
    for (int j = 0; j < T; ++j)
      if (decoded[j] != xr[j]) roundtrip = false;
  }
  rep.roundtrip_exact = roundtrip;
  double dn = static_cast<double>(n);
  for (int j = 0; j < T; ++j) {
    rep.frames[j].mean_len_bits = len_sum[j].value() / dn;
    double var =
        std::max(0.0, len_sq[j].value() / dn - rep.frames[j].mean_len_bits * rep.frames[j].mean_len_bits);
    rep.frames[j].se_len_bits = std::sqrt(var / dn);
    rep.frames[j].meets_bound =
        rep.frames[j].mean_len_bits <= rep.frames[j].bound_bits + 3.0 * rep.frames[j].se_len_bits;
  }
  return rep;
}

}  // namespace crdp
