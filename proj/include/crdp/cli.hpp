#pragma once

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "crdp/extremal.hpp"
#include "crdp/gauss_solver.hpp"
#include "crdp/montecarlo.hpp"
#include "crdp/oneshot.hpp"
#include "crdp/realism.hpp"
#include "crdp/selftest.hpp"
#include "crdp/statutil.hpp"
#include "crdp/universal.hpp"
#include "crdp/version.hpp"

namespace crdp::cli {

using nlohmann::json;

// 17 significant digits, '.' decimal, literal "inf" for infinities.
inline std::string format17(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_real(const std::string& s) {
  if (s == "inf" || s == "+inf" || s == "Inf") return inf();
  std::size_t pos = 0;
  double v = std::stod(s, &pos);
  if (pos != s.size()) throw CLI::ValidationError("not a real number: " + s);
  return v;
}

inline std::vector<double> parse_real_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_real(item));
  }
  return out;
}

// Canonical resolved-config serialization; its FNV-1a hash goes into every
// output so identical (config, seed) runs are recognizable byte-for-byte.
class ResolvedConfig {
public:
  explicit ResolvedConfig(std::string command) : command_(std::move(command)) {}
  void set(const std::string& key, const std::string& v) { kv_[key] = v; }
  void set(const std::string& key, double v) { kv_[key] = format17(v); }
  void set(const std::string& key, int v) { kv_[key] = std::to_string(v); }
  void set(const std::string& key, uint64_t v) { kv_[key] = std::to_string(v); }
  void set(const std::string& key, const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format17(v[i]);
    kv_[key] = s;
  }

  std::string canonical() const {
    std::string s = "command=" + command_ + "\n";
    for (const auto& [k, v] : kv_) s += k + "=" + v + "\n";
    return s;
  }
  std::string hash_hex() const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical())));
    return buf;
  }

private:
  std::string command_;
  std::map<std::string, std::string> kv_;
};

// Flat key=value config files; '#' starts a comment.  Unknown keys are
// rejected; values given on the command line take precedence.
inline std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw CLI::ValidationError("config line " + std::to_string(lineno) + " is not key=value");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto trim = [](std::string s) {
      auto a = s.find_first_not_of(" \t");
      auto b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    key = trim(key);
    val = trim(val);
    if (key.empty()) throw CLI::ValidationError("config line " + std::to_string(lineno) + " has an empty key");
    if (kv.count(key)) throw CLI::ValidationError("duplicate config key: " + key);
    kv[key] = val;
  }
  return kv;
}

inline void apply_config_file(CLI::App* cmd, const std::string& path) {
  if (path.empty()) return;
  auto kv = read_config_file(path);
  for (const auto& [key, val] : kv) {
    CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config")
      throw CLI::ValidationError("unknown config key: " + key);
    if (opt->count() > 0) continue;  // explicit flag wins
    opt->add_result(val);
    opt->run_callback();
  }
}

class OutputFile {
public:
  OutputFile(const std::string& path, std::ostream& fallback) {
    if (path.empty() || path == "-") {
      os_ = &fallback;
    } else {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw CLI::ValidationError("cannot open output file: " + path);
      os_ = file_.get();
    }
  }
  std::ostream& stream() { return *os_; }

private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* os_ = nullptr;
};

inline void csv_header(std::ostream& os, const ResolvedConfig& cfg, uint64_t seed,
                       const std::string& columns) {
  os << "# crdp " << kVersion << "\n";
  os << "# config_hash=" << cfg.hash_hex() << "\n";
  os << "# seed=" << seed << "\n";
  os << columns << "\n";
}

inline json json_envelope(const ResolvedConfig& cfg, uint64_t seed) {
  json j;
  j["artifact_version"] = kVersion;
  j["config_hash"] = cfg.hash_hex();
  j["seed"] = seed;
  return j;
}

// ---------------------------------------------------------------------------
// shared random-system generator used by `verify factor2` and tests

inline DiscreteMarkovSource random_discrete_source(RngStream& g, int frames, int max_alpha) {
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

inline DiscreteEncoder b1_style_encoder(const DiscreteMarkovSource& src) {
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

// ---------------------------------------------------------------------------
// rdp curve

struct CurveOpts {
  double sigma1 = 1.0, sigma2 = 1.0, rho = 0.9;
  std::string r1 = "1", r2 = "1";
  std::string plf = "fmd";
  std::string pgrid = "0,0.01,0.1,inf";
  std::string out = "-";
  int grid = 64, starts = 16, iters = 200;
  uint64_t seed = 1;
};

inline int run_curve(const CurveOpts& o, std::ostream& stdout_, std::ostream& stderr_) {
  auto pvals = parse_real_list(o.pgrid);
  if (pvals.empty()) throw CLI::ValidationError("pgrid must contain at least one threshold");
  double r1 = parse_real(o.r1), r2 = parse_real(o.r2);
  if (r1 < 0.0 || r2 < 0.0) throw CLI::ValidationError("rates must be non-negative");
  for (double p : pvals)
    if (p < 0.0) throw CLI::ValidationError("perception thresholds must be non-negative");
  PlfKind plf;
  if (o.plf == "fmd")
    plf = PlfKind::Fmd;
  else if (o.plf == "jd")
    plf = PlfKind::Jd;
  else
    throw CLI::ValidationError("plf must be fmd or jd");

  ResolvedConfig cfg("rdp.curve");
  cfg.set("sigma1", o.sigma1);
  cfg.set("sigma2", o.sigma2);
  cfg.set("rho", o.rho);
  cfg.set("r1", r1);
  cfg.set("r2", r2);
  cfg.set("plf", o.plf);
  cfg.set("pgrid", pvals);
  cfg.set("grid", o.grid);
  cfg.set("starts", o.starts);
  cfg.set("iters", o.iters);
  cfg.set("seed", o.seed);

  GaussMarkovSource src({o.sigma1, o.sigma2}, {o.rho});
  SolverConfig scfg;
  scfg.grid = o.grid;
  scfg.multistarts = o.starts;
  scfg.refine_iters = o.iters;
  scfg.seed = o.seed;
  auto pts = dp_sweep(src, RateTuple({r1, r2}), plf, pvals, scfg);

  OutputFile of(o.out, stdout_);
  csv_header(of.stream(), cfg, o.seed,
             "frame,R_bits,P_threshold,D,nu,omega1,omega2,sigma_hat_sq,plf,solver_status");
  bool failed = false;
  for (const auto& tp : pts) {
    if (tp.status == "monotonicity_violation") failed = true;
    double nu = tp.status == "ok" ? tp.law.frames[0].source_coeff : 0.0;
    for (int frame = 0; frame < 2; ++frame) {
      double dj = tp.distortion.mse[frame];
      double w1 = 0.0, w2 = 0.0, shat = 0.0;
      if (tp.status == "ok") {
        shat = tp.law.frames[frame].recon_var;
        if (frame == 1) {
          w1 = tp.law.frames[1].recon_coeffs[0];
          w2 = tp.law.frames[1].source_coeff;
        }
      }
      of.stream() << frame + 1 << "," << format17(frame == 0 ? r1 : r2) << ","
                  << format17(tp.p_threshold) << "," << format17(dj) << "," << format17(nu) << ","
                  << format17(w1) << "," << format17(w2) << "," << format17(shat) << "," << o.plf
                  << "," << tp.status << "\n";
    }
  }
  if (failed) {
    json rep = json_envelope(cfg, o.seed);
    rep["failure"] = "dp_sweep produced a non-monotone frontier";
    stderr_ << rep.dump(2) << "\n";
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// rdp extremal

struct ExtremalOpts {
  double rho = 0.9, eps = 1e-3, sigma = 1.0;
  int frames = 4;
  std::string plf = "all";
  std::string out = "-";
  double rinf_proxy = 20.0;
  int grid = 64, starts = 16, iters = 200;
  uint64_t seed = 1;
};

inline int run_extremal(const ExtremalOpts& o, std::ostream& stdout_, std::ostream&) {
  if (!(o.eps > 0.0)) throw CLI::ValidationError("eps must be positive");
  if (o.rho < 0.0 || o.rho > 1.0) throw CLI::ValidationError("rho must be in [0,1]");
  std::vector<RegimeKind> kinds;
  if (o.plf == "all")
    kinds = {RegimeKind::Mmse, RegimeKind::Fmd, RegimeKind::Jd};
  else if (o.plf == "mmse")
    kinds = {RegimeKind::Mmse};
  else if (o.plf == "fmd")
    kinds = {RegimeKind::Fmd};
  else if (o.plf == "jd")
    kinds = {RegimeKind::Jd};
  else
    throw CLI::ValidationError("plf must be one of all|mmse|fmd|jd");

  ResolvedConfig cfg("rdp.extremal");
  cfg.set("rho", o.rho);
  cfg.set("eps", o.eps);
  cfg.set("sigma", o.sigma);
  cfg.set("frames", o.frames);
  cfg.set("plf", o.plf);
  cfg.set("rinf_proxy", o.rinf_proxy);
  cfg.set("seed", o.seed);

  SolverConfig scfg;
  scfg.grid = o.grid;
  scfg.multistarts = o.starts;
  scfg.refine_iters = o.iters;
  scfg.seed = o.seed;
  GaussMarkovSource src2 = GaussMarkovSource::homogeneous(2, o.sigma, o.rho);

  OutputFile of(o.out, stdout_);
  csv_header(of.stream(), cfg, o.seed, "regime,plf,frame,delta,D_closed_form,D_solver,eps");

  // T-frame low-rate rows: closed-form deltas next to the rate-feasible chain
  for (RegimeKind kind : kinds) {
    if (kind == RegimeKind::Mmse) continue;
    PlfKind plf = kind == RegimeKind::Fmd ? PlfKind::Fmd : PlfKind::Jd;
    auto chain = chain_low_rate(o.frames, o.rho, o.sigma, o.eps, plf);
    for (int j = 1; j <= o.frames; ++j) {
      auto row = low_rate_deltas(o.rho, j, o.eps, o.sigma);
      double delta = kind == RegimeKind::Fmd ? row.delta_fmd : row.delta_jd;
      double dcf = kind == RegimeKind::Fmd ? row.d_fmd : row.d_jd;
      of.stream() << "low_low," << kind_name(kind) << "," << j << "," << format17(delta) << ","
                  << format17(dcf) << "," << format17(chain.distortion[j - 1]) << ","
                  << format17(o.eps) << "\n";
    }
  }

  // Table-1 cells at T = 2, solved numerically with R = rinf_proxy for inf
  for (RegimeKind kind : kinds) {
    for (RateRegime rr : {RateRegime::LowLow, RateRegime::InfLow, RateRegime::LowInf}) {
      if (kind == RegimeKind::Fmd && rr == RateRegime::InfLow && o.rho == 0.0) continue;
      auto cell = extremal_law({rr, kind, o.eps}, o.sigma, o.rho);
      double r1 = rr == RateRegime::InfLow ? o.rinf_proxy : o.eps;
      double r2 = rr == RateRegime::LowInf ? o.rinf_proxy : o.eps;
      double p = kind == RegimeKind::Mmse ? inf() : 0.0;
      PlfKind plf = kind == RegimeKind::Jd ? PlfKind::Jd : PlfKind::Fmd;
      auto f1 = solve_frame1(src2, r1, p, scfg);
      auto f2 = solve_frame2(src2, f1, r2, p, plf, scfg);
      double d1s = f1.distortion;
      double d2s = f2.status == "ok" ? f2.distortion : inf();
      of.stream() << regime_name(rr) << "," << kind_name(kind) << ",1,," << format17(cell.d1)
                  << "," << format17(d1s) << "," << format17(o.eps) << "\n";
      of.stream() << regime_name(rr) << "," << kind_name(kind) << ",2,," << format17(cell.d2)
                  << "," << format17(d2s) << "," << format17(o.eps) << "\n";
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// verify factor2

struct Factor2Opts {
  int systems = 500;
  int max_alpha = 4;
  int max_frames = 3;
  uint64_t seed = 7;
  std::string out = "-";
};

struct Factor2Outcome {
  int systems = 0;
  double max_identity_dev = 0.0;   // |construct MSE - (MMSE + W2^2)|
  double max_ratio = 0.0;          // threshold / MMSE
  double max_factor_excess = 0.0;  // threshold - 2*MMSE
  double max_marginal_dev = 0.0;
  bool pass = false;
};

inline Factor2Outcome factor2_check(int systems, int max_alpha, int max_frames, uint64_t seed) {
  RngStream g(seed, 0xFAC2);
  Factor2Outcome oc;
  oc.systems = systems;
  oc.pass = true;
  for (int t = 0; t < systems; ++t) {
    int frames = 2 + (max_frames > 2 ? static_cast<int>(g.next_double() * (max_frames - 1)) : 0);
    auto src = random_discrete_source(g, frames, max_alpha);
    std::vector<int> msz(frames);
    for (int j = 0; j < frames; ++j) msz[j] = 2 + static_cast<int>(g.next_double() * 2);
    int K = 1 + static_cast<int>(g.next_double() * 2);
    auto enc = DiscreteEncoder::random_encoder(src, msz, K, g);
    auto jl = joint_law(src, enc);
    auto [mmse_rec, mmse] = mmse_reconstruction(jl);
    auto thr = fmd_threshold(jl);
    auto rec = fmd_construct(jl);
    auto ev = evaluate_reconstruction(jl, rec);
    for (int j = 0; j < frames; ++j) {
      oc.max_identity_dev = std::max(oc.max_identity_dev, std::abs(ev.mse[j] - thr.mse[j]));
      oc.max_factor_excess =
          std::max(oc.max_factor_excess, thr.mse[j] - 2.0 * mmse.mse[j]);
      if (mmse.mse[j] > 1e-12)
        oc.max_ratio = std::max(oc.max_ratio, thr.mse[j] / mmse.mse[j]);
      auto marg = reconstruction_marginal(jl, rec, j);
      auto expect = src.marginal_pmf(j);
      if (marg.size() == expect.size()) {
        for (std::size_t i = 0; i < marg.size(); ++i)
          oc.max_marginal_dev =
              std::max(oc.max_marginal_dev, std::abs(marg.probs[i] - expect.probs[i]));
      } else {
        oc.max_marginal_dev = 1.0;
      }
    }
  }
  oc.pass = oc.max_identity_dev <= 1e-10 && oc.max_factor_excess <= 1e-12 &&
            oc.max_marginal_dev <= 1e-10;
  return oc;
}

inline int run_factor2(const Factor2Opts& o, std::ostream& stdout_, std::ostream&) {
  ResolvedConfig cfg("verify.factor2");
  cfg.set("systems", o.systems);
  cfg.set("max_alpha", o.max_alpha);
  cfg.set("max_frames", o.max_frames);
  cfg.set("seed", o.seed);
  auto oc = factor2_check(o.systems, o.max_alpha, o.max_frames, o.seed);
  json rep = json_envelope(cfg, o.seed);
  rep["systems"] = oc.systems;
  rep["max_identity_deviation"] = oc.max_identity_dev;
  rep["max_threshold_to_mmse_ratio"] = oc.max_ratio;
  rep["max_factor_two_excess"] = oc.max_factor_excess;
  rep["max_marginal_deviation"] = oc.max_marginal_dev;
  rep["pass"] = oc.pass;
  OutputFile of(o.out, stdout_);
  of.stream() << rep.dump(2) << "\n";
  return oc.pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// verify jd-counterexample

struct JdCounterOpts {
  double flip = 0.1;
  std::string out = "-";
};

inline int run_jd_counterexample(const JdCounterOpts& o, std::ostream& stdout_, std::ostream&) {
  if (!(o.flip > 0.0 && o.flip < 0.5))
    throw CLI::ValidationError("flip must be in (0, 0.5) for a non-degenerate chain");
  ResolvedConfig cfg("verify.jd_counterexample");
  cfg.set("flip", o.flip);

  auto src = DiscreteMarkovSource::binary_flip_chain(2, o.flip);
  auto enc = b1_style_encoder(src);
  auto jl = joint_law(src, enc);
  auto [mmse_rec, mmse] = mmse_reconstruction(jl);
  auto thr = jd_threshold(jl);
  auto rec = jd_construct(jl);
  auto ev = evaluate_reconstruction(jl, rec);
  auto sj = source_joint_prefix(src, 2);
  double joint_dev = 0.0;
  for (std::size_t i = 0; i < sj.size(); ++i)
    joint_dev = std::max(joint_dev, std::abs(ev.joint[i] - sj[i]));
  // expected threshold: sum_x1 P(x1) W2^2(P_X2, P_{X2|X1=x1})
  double expect = 0.0;
  for (int a = 0; a < 2; ++a)
    expect += 0.5 * w2sq_discrete_1d(src.marginal_pmf(1), src.conditional_pmf(0, a));

  bool pass = mmse.mse[1] <= 1e-15 && thr.mse[1] > 0.0 &&
              std::abs(thr.mse[1] - expect) <= 1e-12 && joint_dev <= 1e-10 &&
              std::abs(ev.mse[1] - thr.mse[1]) <= 1e-10;

  json rep = json_envelope(cfg, 0);
  rep["mmse_frame2"] = mmse.mse[1];
  rep["jd_threshold_frame2"] = thr.mse[1];
  rep["expected_threshold_frame2"] = expect;
  rep["construction_mse_frame2"] = ev.mse[1];
  rep["joint_law_max_deviation"] = joint_dev;
  rep["factor_two_violated"] = thr.mse[1] > 2.0 * mmse.mse[1];
  rep["pass"] = pass;
  OutputFile of(o.out, stdout_);
  of.stream() << rep.dump(2) << "\n";
  return pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// verify universal

struct UniversalOpts {
  int targets = 200;
  uint64_t seed = 11;
  std::string out = "-";
  int grid = 48, starts = 12, iters = 200;
};

inline int run_universal(const UniversalOpts& o, std::ostream& stdout_, std::ostream&) {
  ResolvedConfig cfg("verify.universal");
  cfg.set("targets", o.targets);
  cfg.set("seed", o.seed);

  SolverConfig scfg;
  scfg.grid = o.grid;
  scfg.multistarts = o.starts;
  scfg.refine_iters = o.iters;
  scfg.seed = o.seed;

  const std::vector<std::vector<double>> rate_tuples = {{1.0, 1.0}, {1.2, 0.9}, {0.8, 1.4}};
  int sweeps = static_cast<int>(2 * rate_tuples.size());
  int per_sweep = std::max(1, (o.targets + sweeps - 1) / sweeps);
  std::vector<double> pgrid;
  pgrid.push_back(0.0);
  for (int i = 0; i + 2 < per_sweep; ++i)
    pgrid.push_back(1e-3 * std::pow(0.8 / 1e-3, double(i) / std::max(1, per_sweep - 3)));
  pgrid.push_back(inf());

  json rep = json_envelope(cfg, o.seed);
  rep["targets"] = json::array();
  double worst_dev = 0.0, worst_noise = 0.0;
  int count = 0;
  for (const auto& rt : rate_tuples) {
    GaussMarkovSource src = GaussMarkovSource::homogeneous(2, 1.0, 0.85);
    RateTuple rates(rt);
    auto [dmin, stats] = mmse_recursion(src, rates);
    for (PlfKind plf : {PlfKind::Fmd, PlfKind::Jd}) {
      auto pts = dp_sweep(src, rates, plf, pgrid, scfg);
      for (const auto& tp : pts) {
        if (tp.status != "ok") continue;
        auto tf = solve_transform(stats, src, tp);
        auto vrep = verify_transform(stats, src, tf, tp);
        worst_dev = std::max(worst_dev, vrep.max_cov_deviation);
        for (double nv : tf.noise_var) worst_noise = std::min(worst_noise, nv);
        json t;
        t["rates"] = rt;
        t["plf"] = plf_name(plf);
        t["p_threshold"] = tp.p_threshold == inf() ? json("inf") : json(tp.p_threshold);
        t["D"] = tp.distortion.mse;
        t["P"] = tp.perception.w2sq;
        t["coefficients"] = tf.coeffs;
        t["noise_vars"] = tf.noise_var;
        t["max_cov_deviation"] = vrep.max_cov_deviation;
        rep["targets"].push_back(t);
        ++count;
      }
    }
  }

  // symmetric 3-frame scaling case
  auto ex = symmetric_example(3, 0.8, 0.36);
  TradeoffPoint target;
  target.rate = ex.rates;
  target.law = ex.target_law;
  target.plf = PlfKind::Jd;
  auto tf = solve_transform(ex.stats, ex.source, target);
  auto vrep = verify_transform(ex.stats, ex.source, tf, target);
  double scale = 1.0 / std::sqrt(1.0 - ex.mmse_distortion);
  double sym_coeff_dev = 0.0;
  sym_coeff_dev = std::max(sym_coeff_dev, std::abs(tf.coeffs[0][0] - scale));
  sym_coeff_dev = std::max(sym_coeff_dev, std::abs(tf.coeffs[1][1] - scale));
  sym_coeff_dev = std::max(sym_coeff_dev, std::abs(tf.coeffs[2][2] - scale));
  sym_coeff_dev = std::max(sym_coeff_dev, std::abs(tf.coeffs[1][0]));
  sym_coeff_dev = std::max(sym_coeff_dev, std::abs(tf.coeffs[2][0]));
  sym_coeff_dev = std::max(sym_coeff_dev, std::abs(tf.coeffs[2][1]));
  double sym_d_dev = 0.0;
  for (int j = 0; j < 3; ++j)
    sym_d_dev = std::max(sym_d_dev, std::abs(vrep.distortion.mse[j] - ex.zero_plf_distortion));

  bool pass = worst_dev <= 1e-8 && worst_noise >= -1e-9 && sym_coeff_dev <= 1e-10 &&
              sym_d_dev <= 1e-10 && count >= o.targets;
  rep["n_targets"] = count;
  rep["max_cov_deviation"] = worst_dev;
  rep["min_noise_variance"] = worst_noise;
  rep["symmetric_case"] = {{"scaling", scale},
                           {"coefficient_deviation", sym_coeff_dev},
                           {"distortion_deviation", sym_d_dev},
                           {"distortion", ex.zero_plf_distortion}};
  rep["pass"] = pass;
  OutputFile of(o.out, stdout_);
  of.stream() << rep.dump(2) << "\n";
  return pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// oneshot simulate

struct OneshotOpts {
  int channels = 20;
  uint64_t trials = 100'000;
  uint64_t seed = 3;
  std::string out = "-";
  bool chain = false;
};

inline DiscreteChannel random_channel(RngStream& g) {
  int nx = 2 + static_cast<int>(g.next_double() * 3);
  int ny = 2 + static_cast<int>(g.next_double() * 3);
  std::vector<double> px(nx);
  std::vector<std::vector<double>> rows(nx, std::vector<double>(ny));
  double s = 0.0;
  for (auto& p : px) {
    p = 0.15 + g.next_double();
    s += p;
  }
  for (auto& p : px) p /= s;
  if (g.next_double() < 0.5) {
    // diffuse rows: low mutual information
    for (auto& row : rows) {
      double rs = 0.0;
      for (auto& p : row) {
        p = 0.05 + g.next_double();
        rs += p;
      }
      for (auto& p : row) p /= rs;
    }
  } else {
    // sharply peaked rows: mutual information up to log2 min(|X|,|Y|)
    double leak = g.uniform_in(0.01, 0.3);
    for (int x = 0; x < nx; ++x) {
      for (int y = 0; y < ny; ++y) rows[x][y] = leak / ny;
      rows[x][x % ny] += 1.0 - leak;
    }
  }
  return make_channel(px, rows);
}

inline int run_oneshot(const OneshotOpts& o, std::ostream& stdout_, std::ostream& stderr_) {
  if (o.trials < 10'000) throw CLI::ValidationError("trials must be >= 1e4");
  ResolvedConfig cfg("oneshot.simulate");
  cfg.set("channels", o.channels);
  cfg.set("trials", o.trials);
  cfg.set("seed", o.seed);
  cfg.set("chain", o.chain ? "true" : "false");

  OutputFile of(o.out, stdout_);
  csv_header(of.stream(), cfg, o.seed, "frame,I_bits,mean_len_bits,bound_bits,n_trials,seed");
  bool pass = true;
  json failures = json::array();

  if (o.chain) {
    ChainSpec spec;
    spec.source = DiscreteMarkovSource::binary_flip_chain(2, 0.1);
    spec.rep_sizes = {2, 2};
    spec.channels.resize(2);
    spec.build_radix();
    std::vector<int> d;
    for (int j = 0; j < 2; ++j) {
      spec.channels[j].assign(spec.ctx_radix[j].total * 2, 0.0);
      for (std::size_t c = 0; c < spec.ctx_radix[j].total; ++c) {
        spec.ctx_radix[j].decode(c, d);
        int x = d[0];
        double flip = j == 0 ? 0.25 : (d[1] == x ? 0.2 : 0.35);
        spec.channels[j][c * 2 + x] = 1.0 - flip;
        spec.channels[j][c * 2 + (1 - x)] = flip;
      }
    }
    auto rep = causal_chain_encode(spec, o.trials, o.seed);
    if (!rep.roundtrip_exact) {
      pass = false;
      failures.push_back("chain round trip failed");
    }
    for (std::size_t j = 0; j < rep.frames.size(); ++j) {
      const auto& f = rep.frames[j];
      of.stream() << j + 1 << "," << format17(f.mi_bits) << "," << format17(f.mean_len_bits)
                  << "," << format17(f.bound_bits) << "," << o.trials << "," << o.seed << "\n";
      if (!f.meets_bound) {
        pass = false;
        failures.push_back("chain frame exceeds the length bound");
      }
    }
  } else {
    RngStream g(o.seed, 0xC4A);
    for (int c = 0; c < o.channels; ++c) {
      auto ch = random_channel(g);
      auto rep = encode_length(ch, o.trials, rng_key(o.seed, 0xE0C, c));
      of.stream() << 1 << "," << format17(rep.mi_bits) << "," << format17(rep.mean_len_bits)
                  << "," << format17(rep.bound_bits) << "," << o.trials << "," << o.seed << "\n";
      if (!rep.meets_bound) {
        pass = false;
        json f;
        f["channel"] = c;
        f["reason"] = "mean length exceeds the bound";
        f["mean_len_bits"] = rep.mean_len_bits;
        f["bound_bits"] = rep.bound_bits;
        f["mean_len_huffman"] = rep.mean_len_huffman;
        failures.push_back(f);
      }
      if (rep.chi_square_p <= 0.01) {
        pass = false;
        json f;
        f["channel"] = c;
        f["reason"] = "output law chi-square rejected";
        f["p_value"] = rep.chi_square_p;
        failures.push_back(f);
      }
    }
  }
  if (!pass) {
    json rep = json_envelope(cfg, o.seed);
    rep["failures"] = failures;
    stderr_ << rep.dump(2) << "\n";
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// mc check

struct McOpts {
  int pairs = 50;
  uint64_t n = 1'000'000;
  uint64_t seed = 5;
  std::string out = "-";
  int threads = 0;
};

inline int run_mc(const McOpts& o, std::ostream& stdout_, std::ostream&) {
  if (o.n < 1000) throw CLI::ValidationError("n must be >= 1e3");
  ResolvedConfig cfg("mc.check");
  cfg.set("pairs", o.pairs);
  cfg.set("n", o.n);
  cfg.set("seed", o.seed);

  RngStream g(o.seed, 0x3C);
  json rep = json_envelope(cfg, o.seed);
  rep["reports"] = json::array();
  bool pass = true;
  for (int t = 0; t < o.pairs; ++t) {
    int frames = 2 + static_cast<int>(g.next_double() * 2);
    std::vector<double> sigma(frames), rho(frames - 1);
    for (auto& s : sigma) s = g.uniform_in(0.5, 1.5);
    for (auto& r : rho) r = g.uniform_in(-0.95, 0.95);
    GaussMarkovSource src(sigma, rho);
    LinearReconstructionLaw law;
    law.frames.resize(frames);
    for (int j = 0; j < frames; ++j) {
      law.frames[j].recon_coeffs.resize(j);
      for (int i = 0; i < j; ++i) law.frames[j].recon_coeffs[i] = g.uniform_in(-0.8, 0.8);
      law.frames[j].source_coeff = g.uniform_in(-1.0, 1.0);
      law.frames[j].noise_var = g.uniform_in(0.0, 0.4);
    }
    law = finalize_law(src, law);
    auto st = assemble_joint_stats(src, law);
    auto sim = simulate(src, law, o.n, rng_key(o.seed, 0x517, t), o.threads);

    json jr;
    jr["pair"] = t;
    jr["n"] = o.n;
    jr["frames"] = frames;
    jr["empirical_D"] = sim.distortion;
    jr["empirical_D_se"] = sim.distortion_se;
    bool ok = true;
    std::vector<double> analytic_d(frames), analytic_p(frames);
    for (int j = 0; j < frames; ++j) {
      analytic_d[j] = st.distortion(j);
      double sj = std::sqrt(st.xhatxhat(j, j));
      analytic_p[j] = w2sq_gauss_1d(src.sigma[j], sj);
      if (std::abs(sim.distortion[j] - analytic_d[j]) > 4.0 * sim.distortion_se[j] + 1e-12)
        ok = false;
      if (std::abs(std::sqrt(sim.perception_fmd[j]) - std::sqrt(analytic_p[j])) >
          4.0 * sim.perception_fmd_se[j] + 1e-12)
        ok = false;
      // joint perception closure: covariance entries within 4 SE each
      for (int i = 0; i <= j; ++i) {
        double se = std::sqrt((st.xhatxhat(i, i) * st.xhatxhat(j, j) +
                               st.xhatxhat(i, j) * st.xhatxhat(i, j)) /
                              static_cast<double>(o.n));
        if (std::abs(sim.recon_cov(i, j) - st.xhatxhat(i, j)) > 4.0 * se + 1e-12) ok = false;
      }
    }
    jr["analytic_D"] = analytic_d;
    jr["analytic_P_fmd"] = analytic_p;
    jr["empirical_P_fmd"] = sim.perception_fmd;
    jr["empirical_P_jd"] = sim.perception_jd;
    jr["pass"] = ok;
    rep["reports"].push_back(jr);
    if (!ok) pass = false;
  }
  rep["pass"] = pass;
  OutputFile of(o.out, stdout_);
  of.stream() << rep.dump(2) << "\n";
  return pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// selftest

inline int run_selftest_cmd(uint64_t seed, std::ostream& stdout_) {
  auto results = run_selftest(seed);
  bool pass = true;
  for (const auto& r : results) {
    stdout_ << (r.pass ? "[PASS] " : "[FAIL] ") << r.name;
    if (!r.detail.empty()) stdout_ << " (" << r.detail << ")";
    stdout_ << "\n";
    if (!r.pass) pass = false;
  }
  stdout_ << (pass ? "selftest: all checks passed\n" : "selftest: FAILURES present\n");
  return pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// entry point

inline int run(std::vector<std::string> args, std::ostream& stdout_, std::ostream& stderr_) {
  CLI::App app{"causal rate-distortion-perception laboratory"};
  app.require_subcommand(1);

  std::map<CLI::App*, std::string> config_paths;
  auto add_config = [&config_paths](CLI::App* cmd) {
    config_paths[cmd] = std::string();
    cmd->add_option("--config", config_paths[cmd], "flat key=value config file");
  };

  auto* rdp = app.add_subcommand("rdp", "Gaussian RDP frontier computations");
  CurveOpts curve;
  auto* curve_cmd = rdp->add_subcommand("curve", "sweep the DP frontier at fixed rates");
  curve_cmd->add_option("--sigma1", curve.sigma1);
  curve_cmd->add_option("--sigma2", curve.sigma2);
  curve_cmd->add_option("--rho", curve.rho);
  curve_cmd->add_option("--r1", curve.r1);
  curve_cmd->add_option("--r2", curve.r2);
  curve_cmd->add_option("--plf", curve.plf);
  curve_cmd->add_option("--pgrid", curve.pgrid);
  curve_cmd->add_option("--out", curve.out);
  curve_cmd->add_option("--grid", curve.grid);
  curve_cmd->add_option("--starts", curve.starts);
  curve_cmd->add_option("--iters", curve.iters);
  curve_cmd->add_option("--seed", curve.seed);
  add_config(curve_cmd);

  ExtremalOpts ext;
  auto* ext_cmd = rdp->add_subcommand("extremal", "closed-form extremal-rate evaluations");
  ext_cmd->add_option("--rho", ext.rho);
  ext_cmd->add_option("--eps", ext.eps);
  ext_cmd->add_option("--sigma", ext.sigma);
  ext_cmd->add_option("--frames", ext.frames);
  ext_cmd->add_option("--plf", ext.plf);
  ext_cmd->add_option("--out", ext.out);
  ext_cmd->add_option("--rinf-proxy", ext.rinf_proxy);
  ext_cmd->add_option("--grid", ext.grid);
  ext_cmd->add_option("--starts", ext.starts);
  ext_cmd->add_option("--iters", ext.iters);
  ext_cmd->add_option("--seed", ext.seed);
  add_config(ext_cmd);

  auto* verify = app.add_subcommand("verify", "bound and construction verification suites");
  Factor2Opts f2;
  auto* f2_cmd = verify->add_subcommand("factor2", "factor-of-two bound on random systems");
  f2_cmd->add_option("--systems", f2.systems);
  f2_cmd->add_option("--max-alpha", f2.max_alpha);
  f2_cmd->add_option("--max-frames", f2.max_frames);
  f2_cmd->add_option("--seed", f2.seed);
  f2_cmd->add_option("--out", f2.out);
  add_config(f2_cmd);

  JdCounterOpts jc;
  auto* jc_cmd = verify->add_subcommand("jd-counterexample", "joint-distribution counterexample");
  jc_cmd->add_option("--flip", jc.flip);
  jc_cmd->add_option("--out", jc.out);
  add_config(jc_cmd);

  UniversalOpts uv;
  auto* uv_cmd = verify->add_subcommand("universal", "universal representation transforms");
  uv_cmd->add_option("--targets", uv.targets);
  uv_cmd->add_option("--seed", uv.seed);
  uv_cmd->add_option("--out", uv.out);
  uv_cmd->add_option("--grid", uv.grid);
  uv_cmd->add_option("--starts", uv.starts);
  uv_cmd->add_option("--iters", uv.iters);
  add_config(uv_cmd);

  auto* oneshot = app.add_subcommand("oneshot", "one-shot channel-simulation coding");
  OneshotOpts os;
  auto* os_cmd = oneshot->add_subcommand("simulate", "PFR coding against the length bound");
  os_cmd->add_option("--channels", os.channels);
  os_cmd->add_option("--trials", os.trials);
  os_cmd->add_option("--seed", os.seed);
  os_cmd->add_option("--out", os.out);
  os_cmd->add_flag("--chain", os.chain);
  add_config(os_cmd);

  auto* mc = app.add_subcommand("mc", "Monte-Carlo cross checks");
  McOpts mo;
  auto* mc_cmd = mc->add_subcommand("check", "empirical-vs-analytic closure");
  mc_cmd->add_option("--pairs", mo.pairs);
  mc_cmd->add_option("--n", mo.n);
  mc_cmd->add_option("--seed", mo.seed);
  mc_cmd->add_option("--out", mo.out);
  mc_cmd->add_option("--threads", mo.threads);
  add_config(mc_cmd);

  uint64_t selftest_seed = 20240811;
  auto* st_cmd = app.add_subcommand("selftest", "run the property suite");
  st_cmd->add_option("--seed", selftest_seed);

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
    for (auto& [cmd, path] : config_paths)
      if (cmd->parsed()) apply_config_file(cmd, path);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      stdout_ << app.help();
      return 0;
    }
    stderr_ << "config error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (curve_cmd->parsed()) return run_curve(curve, stdout_, stderr_);
    if (ext_cmd->parsed()) return run_extremal(ext, stdout_, stderr_);
    if (f2_cmd->parsed()) return run_factor2(f2, stdout_, stderr_);
    if (jc_cmd->parsed()) return run_jd_counterexample(jc, stdout_, stderr_);
    if (uv_cmd->parsed()) return run_universal(uv, stdout_, stderr_);
    if (os_cmd->parsed()) return run_oneshot(os, stdout_, stderr_);
    if (mc_cmd->parsed()) return run_mc(mo, stdout_, stderr_);
    if (st_cmd->parsed()) return run_selftest_cmd(selftest_seed, stdout_);
  } catch (const CLI::ValidationError& e) {
    stderr_ << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    stderr_ << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    json rep;
    rep["failure"] = e.what();
    stderr_ << rep.dump(2) << "\n";
    return 1;
  }
  stderr_ << "config error: no subcommand selected\n";
  return 2;
}

}  // namespace crdp::cli
