#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace crdp {

// Compensated accumulator; summation order is fixed by the caller, which keeps
// parallel reductions bit-identical when blocks are combined in index order.
class KahanSum {
public:
  void add(double x) {
    double y = x - c_;
    double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }

private:
  double s_ = 0.0, c_ = 0.0;
};

namespace statdetail {

inline double gamma_series_p(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double gamma_cf_q(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace statdetail

// Regularized upper incomplete gamma Q(a, x).
inline double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_q: bad arguments");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - statdetail::gamma_series_p(a, x);
  return statdetail::gamma_cf_q(a, x);
}

// Upper tail of the chi-square distribution: P(X >= stat) with `dof` degrees.
inline double chi_square_tail(double stat, double dof) {
  if (dof <= 0.0) return 1.0;
  return gamma_q(0.5 * dof, 0.5 * std::max(0.0, stat));
}

// Pearson chi-square statistic of observed counts against expected
// probabilities; cells with negligible expectation are pooled away.
struct ChiSquareResult {
  double stat = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
};

inline ChiSquareResult chi_square_gof(const std::vector<double>& counts,
                                      const std::vector<double>& probs) {
  if (counts.size() != probs.size()) throw std::invalid_argument("chi_square_gof: size mismatch");
  double n = 0.0;
  for (double c : counts) n += c;
  ChiSquareResult r;
  int cells = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    double e = n * probs[i];
    if (e < 1e-9) continue;
    double d = counts[i] - e;
    r.stat += d * d / e;
    ++cells;
  }
  r.dof = std::max(0, cells - 1);
  r.p_value = r.dof > 0 ? chi_square_tail(r.stat, r.dof) : 1.0;
  return r;
}

// Least squares fit y = c * x through the origin, plus the R^2 of that fit.
struct OriginFit {
  double slope = 0.0;
  double r_squared = 1.0;
};

inline OriginFit fit_through_origin(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.empty()) throw std::invalid_argument("fit_through_origin: bad input");
  double sxy = 0.0, sxx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += x[i] * y[i];
    sxx += x[i] * x[i];
    sy += y[i];
  }
  OriginFit f;
  f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  double ybar = sy / static_cast<double>(y.size());
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double e = y[i] - f.slope * x[i];
    ss_res += e * e;
    ss_tot += (y[i] - ybar) * (y[i] - ybar);
  }
  f.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return f;
}

inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline bool is_inf(double x) { return std::isinf(x); }
inline double inf() { return std::numeric_limits<double>::infinity(); }

}  // namespace crdp
