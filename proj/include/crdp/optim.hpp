#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace crdp {

struct NmResult {
  std::vector<double> x;
  double f = 0.0;
  int evals = 0;
};

// Nelder-Mead downhill simplex on R^n.  Deterministic given the start point.
template <typename F>
NmResult nelder_mead(F&& f, const std::vector<double>& x0, const std::vector<double>& step,
                     int max_iters = 200, double ftol = 1e-12) {
  const std::size_t n = x0.size();
  struct Vertex {
    std::vector<double> x;
    double f;
  };
  std::vector<Vertex> s(n + 1);
  int evals = 0;
  auto eval = [&](const std::vector<double>& x) {
    ++evals;
    return f(x);
  };
  s[0] = {x0, eval(x0)};
  for (std::size_t i = 0; i < n; ++i) {
    auto x = x0;
    x[i] += step[i] != 0.0 ? step[i] : 1e-3;
    s[i + 1] = {x, eval(x)};
  }
  auto by_f = [](const Vertex& a, const Vertex& b) { return a.f < b.f; };

  for (int it = 0; it < max_iters; ++it) {
    std::sort(s.begin(), s.end(), by_f);
    if (std::abs(s[n].f - s[0].f) <= ftol * (std::abs(s[0].f) + ftol)) break;

    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t d = 0; d < n; ++d) centroid[d] += s[i].x[d] / static_cast<double>(n);

    auto blend = [&](double t) {
      std::vector<double> x(n);
      for (std::size_t d = 0; d < n; ++d) x[d] = centroid[d] + t * (centroid[d] - s[n].x[d]);
      return x;
    };

    auto xr = blend(1.0);
    double fr = eval(xr);
    if (fr < s[0].f) {
      auto xe = blend(2.0);
      double fe = eval(xe);
      if (fe < fr)
        s[n] = {xe, fe};
      else
        s[n] = {xr, fr};
    } else if (fr < s[n - 1].f) {
      s[n] = {xr, fr};
    } else {
      auto xc = blend(fr < s[n].f ? 0.5 : -0.5);
      double fc = eval(xc);
      if (fc < std::min(fr, s[n].f)) {
        s[n] = {xc, fc};
      } else {
        for (std::size_t i = 1; i <= n; ++i) {
          for (std::size_t d = 0; d < n; ++d) s[i].x[d] = s[0].x[d] + 0.5 * (s[i].x[d] - s[0].x[d]);
          s[i].f = eval(s[i].x);
        }
      }
    }
  }
  std::sort(s.begin(), s.end(), by_f);
  return {s[0].x, s[0].f, evals};
}

// Golden-section minimization of a unimodal function on [lo, hi].
template <typename F>
double golden_min(F&& f, double lo, double hi, double xtol = 1e-12, int max_iters = 200) {
  const double invphi = 0.6180339887498948482;
  double a = lo, b = hi;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < max_iters && (b - a) > xtol * (1.0 + std::abs(a) + std::abs(b)); ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  return fc < fd ? c : d;
}

// Bisection for the smallest x in [lo, hi] with pred(x) true; pred must be
// false at lo and true at hi.
template <typename P>
double bisect_first_true(P&& pred, double lo, double hi, double xtol = 1e-13, int iters = 200) {
  for (int i = 0; i < iters && (hi - lo) > xtol * (1.0 + std::abs(hi)); ++i) {
    double mid = 0.5 * (lo + hi);
    if (pred(mid))
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

}  // namespace crdp
