#pragma once

// Independent reference computations. Nothing here calls into the library.

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline double simpson_step(const std::function<double(double)>& f, double a, double b, double fa,
                           double fm, double fb, double whole, double eps, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6 * (fa + 4 * flm + fm);
  const double right = (b - m) / 6 * (fm + 4 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15 * eps)
    return left + right + (left + right - whole) / 15;
  return simpson_step(f, a, m, fa, flm, fm, left, eps / 2, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, eps / 2, depth - 1);
}

/// Adaptive Simpson quadrature; the interval is pre-split into `pieces` so
/// narrow peaks are not missed by the first coarse estimate.
inline double simpson(const std::function<double(double)>& f, double a, double b, double eps = 1e-13,
                      int pieces = 64) {
  double total = 0.0;
  const double h = (b - a) / pieces;
  for (int i = 0; i < pieces; ++i) {
    const double lo = a + i * h, hi = lo + h, mid = 0.5 * (lo + hi);
    const double flo = f(lo), fmid = f(mid), fhi = f(hi);
    total += simpson_step(f, lo, hi, flo, fmid, fhi, h / 6 * (flo + 4 * fmid + fhi), eps / pieces, 40);
  }
  return total;
}

/// Moments of the tilted law ∝ exp(h*obs(x) - V(x)) on [a, b] by Simpson.
struct Moments {
  double log_z_unnorm;
  double mean;
  double var;
};

inline Moments simpson_moments(const std::function<double(double)>& V, double h, double a, double b,
                               const std::function<double(double)>& obs = [](double x) { return x; }) {
  // Shift by the value at the grid maximum to keep exponentials bounded.
  double shift = -1e300;
  for (int i = 0; i <= 4000; ++i) {
    const double x = a + (b - a) * i / 4000.0;
    shift = std::max(shift, h * obs(x) - V(x));
  }
  auto dens = [&](double x) { return std::exp(h * obs(x) - V(x) - shift); };
  const double z = simpson(dens, a, b);
  const double m1 = simpson([&](double x) { return obs(x) * dens(x); }, a, b) / z;
  const double m2 =
      simpson([&](double x) { return (obs(x) - m1) * (obs(x) - m1) * dens(x); }, a, b) / z;
  return {std::log(z) + shift, m1, m2};
}

/// Variance of ∝ exp(-x^4/4) from the Gamma-function identity.
inline double quartic0_variance() { return 2.0 * std::tgamma(0.75) / std::tgamma(0.25); }

/// Modified Bessel function I_0 by its power series.
inline double bessel_i0(double x) {
  double term = 1.0, sum = 1.0;
  const double q = 0.25 * x * x;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  return sum;
}

/// Largest |eigenvalue| of a dense symmetric matrix.
inline double dense_spectral_norm(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace oracle
