#pragma once

#include <cmath>
#include <utility>

namespace mflsi::detail {

/// Root of f on [lo, hi] given opposite-signed end values. `f` returns
/// (value, derivative); Newton steps that leave the bracket fall back to
/// bisection.
template <class F>
double bracketed_root(F&& f, double lo, double hi, double f_lo, double f_hi, double tol) {
  if (f_lo == 0.0) return lo;
  if (f_hi == 0.0) return hi;
  const bool rising = f_hi > 0;
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 200 && hi - lo > tol; ++it) {
    const auto [value, slope] = f(x);
    if (value == 0.0) return x;
    if ((value > 0) == rising) {
      hi = x;
    } else {
      lo = x;
    }
    const double newton = x - value / slope;
    const bool usable = std::isfinite(newton) && newton > lo && newton < hi;
    if (usable && std::abs(newton - x) < 0.5 * tol) return newton;
    x = usable ? newton : 0.5 * (lo + hi);
  }
  return x;
}

}  // namespace mflsi::detail
