#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mflsi/quad1d.hpp"

namespace mflsi {

enum class ModeKind { Cos, Sin, Tanh, Custom };

struct Mode {
  double weight = 0.0;
  ModeKind kind = ModeKind::Cos;
  int k = 1;  // frequency of Cos/Sin modes
  /// Custom modes only; must satisfy |fn| <= 1.
  std::function<double(double)> fn;
  std::function<double(double)> deriv;

  static Mode cos(double weight, int k) { return {weight, ModeKind::Cos, k, {}, {}}; }
  static Mode sin(double weight, int k) { return {weight, ModeKind::Sin, k, {}, {}}; }
  static Mode tanh(double weight) { return {weight, ModeKind::Tanh, 0, {}, {}}; }
  static Mode custom(double weight, std::function<double(double)> f, std::function<double(double)> df) {
    return {weight, ModeKind::Custom, 0, std::move(f), std::move(df)};
  }

  double value(double x) const;
  double derivative(double x) const;
  /// sup |n'| (analytic for the built-in kinds, sampled for Custom).
  double lipschitz() const;
};

/// W^-(x, y) = alpha x y + sum_k w_k n_k(x) n_k(y),
/// W^+(x, y) = sum_k w+_k p_k(x) p_k(y).
/// For a circle kernel w, the interaction is W(x, y) = -w(x - y): cosine
/// coefficients with w_k > 0 favour alignment and go to W^-, the others to W^+.
/// The k = 0 coefficient is a constant and is kept in `offset` only.
struct ModeDecomposition {
  double alpha = 0.0;
  std::vector<Mode> neg;
  std::vector<Mode> pos;
  double offset = 0.0;
  double m_bound = 0.0;
  double l_bound = 0.0;
  double residual = 0.0;

  /// Number of H-orthonormal coordinates: one for alpha > 0, one per neg mode.
  std::size_t dimension() const noexcept { return neg.size() + (alpha > 0 ? 1 : 0); }
  /// g(x) = (sqrt(alpha) x, sqrt(w_k) n_k(x)), so (psi, n(x))_H = zeta . g(x).
  Eigen::VectorXd features(double x) const;
  Eigen::VectorXd feature_derivatives(double x) const;
  /// sqrt(w+_k) p_k(x).
  Eigen::VectorXd pos_features(double x) const;
  /// offset + W^-(x, y) - W^+(x, y); equals w(x - y) for a circle kernel.
  double reconstruct(double x, double y) const;
};

/// H-orthonormal coordinates zeta = (sqrt(alpha) phi, sqrt(w_k) psi_k).
using ModeField = Eigen::VectorXd;

ModeDecomposition fourier_decompose(const std::function<double(double)>& kernel, int K, double tol,
                                    int samples = 4096);
/// coefficients[k] multiplies cos(k theta), k = 0, 1, ...
ModeDecomposition fourier_decompose(const std::vector<double>& coefficients, int K, double tol);

/// The XY decomposition W^-(x, y) = cos(x - y).
ModeDecomposition xy_decomposition();

/// Constant-free limiting non-quadratic part
///   inf_rho { H(rho|alpha) + (1/2T) int W^+ rho rho - (1/T) zeta . int g rho }.
double u_limit(const ModeField& zeta, double T, const ModeDecomposition& decomp, const LineMeasure& measure);

/// |zeta|^2/(2T) + u_limit.
double v_renorm(const ModeField& zeta, double T, const ModeDecomposition& decomp, const LineMeasure& measure);

/// I/T - Cov(g)/T^2 under alpha tilted by exp(zeta . g / T). Unsupported when
/// W^+ is present.
Eigen::MatrixXd hessian_v_renorm(const ModeField& zeta, double T, const ModeDecomposition& decomp,
                                 const LineMeasure& measure);

struct FixedPointResult {
  std::vector<double> x;
  std::vector<double> rho;       // probability weights of the minimiser on x
  std::vector<double> tilted;    // weights of alpha tilted by exp(zeta . g / T) on x
  double log_z_tilted = 0.0;     // log E_alpha[exp(zeta . g / T)]
  Eigen::VectorXd pos_means;     // int sqrt(w+) p rho
  double value = 0.0;
  int iterations = 0;
  double residual = 0.0;
};

/// Damped Gibbs iteration rho <- (1 - s) rho + s q exp(-(1/T) sum w+ m+ p)/Z
/// with s = 0.5, halved whenever the L1 residual grows; stops below 1e-10.
/// Throws FixedPointDiverged after 500 iterations.
FixedPointResult solve_fixed_point(const ModeField& zeta, double T, const ModeDecomposition& decomp,
                                   const LineMeasure& measure);

/// H(rho|q) - log Z_q + (1/2T) sum (int sqrt(w+) p rho)^2 for arbitrary weights
/// rho on the fixed point's grid; minimised by the fixed point.
double bracket_value(const FixedPointResult& fp, const std::vector<double>& rho, double T,
                     const ModeDecomposition& decomp);

struct ConvexityScan {
  double lambda_hat = 0.0;
  ModeField argmin;
  /// One row per scanned point: zeta coordinates then the minimum eigenvalue.
  std::vector<std::vector<double>> rows;
};

/// Minimum Hessian eigenvalue over a tensor grid on [lo, hi]^d, optionally
/// restricted to |zeta| <= radius. Refuses more than 3 neg modes.
ConvexityScan strong_convexity_scan(double T, const ModeDecomposition& decomp, const LineMeasure& measure,
                                    double lo, double hi, int grid, std::optional<double> radius = {});

/// inf_zeta v_renorm, which equals inf F_T.
struct FreeEnergyInfimum {
  double value = 0.0;
  ModeField argmin;
};
FreeEnergyInfimum free_energy_infimum(double T, const ModeDecomposition& decomp, const LineMeasure& measure);

struct UnGap {
  double u_n = 0.0;     // U^N_T(zeta) including (1/N) log Z^N_T
  double u_limit = 0.0; // u_limit(zeta) - inf F_T
  double gap = 0.0;     // u_n - u_limit
  std::size_t evaluations = 0;
};

struct UnOptions {
  int grid = 129;
  double budget = 5e8;
};

/// Tensor-product quadrature of the N-particle renormalised potential, N <= 4.
UnGap un_small_n(const ModeField& zeta, double T, const ModeDecomposition& decomp, const LineMeasure& measure,
                 int N, UnOptions options = {});

struct XyReport {
  double temperature = 0.0;
  double bound = 0.0;
  double measured_min_eig = 0.0;
  bool convex = false;
};

/// Scan of the XY Hessian over |zeta| <= 6 on a 41 x 41 grid.
XyReport xy_check(double T);

std::string to_string(ModeKind kind);

}  // namespace mflsi
