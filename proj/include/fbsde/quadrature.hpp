#pragma once

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <functional>

namespace fbsde {

/// Fixed-order (32 point) Gauss-Legendre rule on [a, b].
template <class F>
double gauss32(F&& f, double a, double b) {
  return boost::math::quadrature::gauss<double, 32>::integrate(std::forward<F>(f), a, b);
}

struct AdaptiveResult {
  double value = 0.0;
  double error = 0.0;
  bool converged = true;
};

/// Bisecting Gauss-Legendre 32 until the halves agree with the whole within tol.
template <class F>
AdaptiveResult adaptive_gauss32(const F& f, double a, double b, double tol, int max_depth = 24) {
  const double whole = gauss32(f, a, b);
  const double mid = 0.5 * (a + b);
  const double halves = gauss32(f, a, mid) + gauss32(f, mid, b);
  const double err = std::abs(halves - whole);
  if (err <= tol || max_depth == 0) return {halves, err, err <= tol};
  auto left = adaptive_gauss32(f, a, mid, 0.5 * tol, max_depth - 1);
  auto right = adaptive_gauss32(f, mid, b, 0.5 * tol, max_depth - 1);
  return {left.value + right.value, left.error + right.error, left.converged && right.converged};
}

}  // namespace fbsde
