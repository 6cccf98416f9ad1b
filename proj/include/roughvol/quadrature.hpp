#pragma once

#include <algorithm>
#include <cmath>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace roughvol::quad {

inline constexpr double kDefaultRelTol = 1e-12;

// Adaptive 31-point Gauss-Kronrod on a finite interval.
template <class F>
double adaptive(F&& f, double a, double b, double rel_tol = kDefaultRelTol,
                unsigned max_depth = 18) {
  if (a == b) return 0.0;
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      f, a, b, max_depth, rel_tol, &err);
}

// Same integral in the variable s = ln v, for integrands varying over many
// orders of magnitude on [a, b]. A zero left end is handled on [0, min(b, 1)]
// in the original variable first.
template <class F>
double adaptive_log(F&& f, double a, double b, double rel_tol = kDefaultRelTol) {
  if (a >= b) return 0.0;
  double head = 0.0;
  if (a == 0.0) {
    const double cut = std::min(b, 1.0);
    head = adaptive(f, 0.0, cut, rel_tol);
    a = cut;
    if (a >= b) return head;
  }
  auto g = [&](double s) {
    const double v = std::exp(s);
    return f(v) * v;
  };
  return head + adaptive(g, std::log(a), std::log(b), rel_tol);
}

}  // namespace roughvol::quad
