#pragma once

// Bounded scalar minimization by Brent's method: parabolic interpolation
// through the three best points when it stays inside the bracket and shrinks
// fast enough, golden-section steps otherwise. Follows the ALGOL `localmin`
// routine (Brent 1973) in the bounded form popularized by Forsythe, Malcolm
// and Moler's `fmin`; the objective is only evaluated inside [lo, hi].

#include <cmath>
#include <limits>
#include <stdexcept>

#include "lowfpr/data_model.hpp"
#include "lowfpr/error.hpp"

namespace lowfpr {

struct BrentResult {
  double x = 0.0;
  double f = 0.0;
  int iterations = 0;
  int evaluations = 0;
};

template <typename Objective>
BrentResult brent_minimize(Objective&& objective, double lo, double hi,
                           double tol = 1e-8, int max_iters = 200) {
  if (!(lo < hi)) throw std::invalid_argument("brent_minimize: need lo < hi");
  if (!(tol > 0.0)) throw std::invalid_argument("brent_minimize: tol must be positive");

  const double golden = 0.5 * (3.0 - std::sqrt(5.0));
  const double sqrt_eps = std::sqrt(std::numeric_limits<double>::epsilon());

  BrentResult res;
  auto eval = [&](double x) {
    const double fx = objective(x);
    ++res.evaluations;
    if (!std::isfinite(fx)) {
      throw numeric_error("brent_minimize: objective is not finite at x = " +
                          detail::format_double(x));
    }
    return fx;
  };

  double a = lo, b = hi;
  double x = a + golden * (b - a);
  double w = x, v = x;
  double fx = eval(x);
  double fw = fx, fv = fx;
  double d = 0.0, e = 0.0;

  for (; res.iterations < max_iters; ++res.iterations) {
    const double xm = 0.5 * (a + b);
    const double tol1 = sqrt_eps * std::abs(x) + tol / 3.0;
    const double tol2 = 2.0 * tol1;
    if (std::abs(x - xm) <= tol2 - 0.5 * (b - a)) break;

    bool take_golden = true;
    if (std::abs(e) > tol1) {
      double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      r = e;
      e = d;
      if (std::abs(p) < std::abs(0.5 * q * r) && p > q * (a - x) && p < q * (b - x)) {
        d = p / q;
        const double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = xm >= x ? tol1 : -tol1;
        take_golden = false;
      }
    }
    if (take_golden) {
      e = x >= xm ? a - x : b - x;
      d = golden * e;
    }

    const double u = std::abs(d) >= tol1 ? x + d : x + (d > 0.0 ? tol1 : -tol1);
    const double fu = eval(u);

    if (fu <= fx) {
      (u >= x ? a : b) = x;
      v = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      (u < x ? a : b) = u;
      if (fu <= fw || w == x) {
        v = w; fv = fw;
        w = u; fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }
  res.x = x;
  res.f = fx;
  return res;
}

}  // namespace lowfpr
