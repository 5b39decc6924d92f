#pragma once

#include <optional>
#include <span>
#include <vector>

#include "mflsi/quad1d.hpp"

namespace mflsi {

/// One-mode renormalised potential
///   V_T(phi) = phi^2/(2T) - log E_alpha[exp(phi x / T)]
/// sampled on a phi grid. The log term is taken against the normalised
/// alpha_V, so V_T(0) = 0.
struct RenormTable {
  double temperature = 0.0;
  std::vector<double> phi_grid;
  std::vector<double> v;
  std::vector<double> dv;
  std::vector<double> ddv;
  /// var_alpha(x); present only when the potential passes check_ghs.
  std::optional<double> t_critical;
  /// min of ddv over the grid, and where it is attained.
  double curvature_floor = 0.0;
  double curvature_floor_at = 0.0;
  std::vector<double> minimizers;
};

/// 801 points on [-W, W], W widened until dv is negative at -W, positive at W
/// and increasing outward at both ends.
std::vector<double> default_phi_grid(const LineMeasure& measure, double T, int points = 801);

RenormTable renorm_potential(const LineMeasure& measure, double T, std::span<const double> phi_grid);

/// var_alpha(x). Throws NotGHS unless the potential passes check_ghs.
double critical_temperature(const LineMeasure& measure);

/// Mean of alpha tilted by exp(phi x / T).
double magnetization_map(const LineMeasure& measure, double T, double phi);

/// phi solving magnetization_map(phi) = m. Throws OutOfRange when no tilt
/// with |phi/T| <= 1e4 reaches m.
double invert_magnetization(const LineMeasure& measure, double T, double m);

struct FreeEnergyTable {
  double temperature = 0.0;
  std::vector<double> m;
  std::vector<double> f;
  std::vector<double> phi;
};

/// F_T(m) = V_T(phi_m) - (phi_m - m)^2/(2T) with phi_m from invert_magnetization.
FreeEnergyTable coarse_free_energy(const LineMeasure& measure, double T, std::span<const double> m_grid);

/// inf over the table's m grid of F_T(m) + (phi - m)^2/(2T).
double legendre_reconstruct(const FreeEnergyTable& table, double phi);

/// Grid infimum of |F'(m)|^2 / (2 (F(m) - F_min)). At the minimiser the 0/0
/// ratio is replaced by its limit, the local curvature F''.
double pl_constant(const FreeEnergyTable& table);

/// 1/gamma_V + 1/(gamma_V^2 T^2 lambda_T), an upper bound on the inverse
/// log-Sobolev constant. Throws NonPositiveCurvature when lambda_T <= 0.
double lsi_bound_quadratic(double T, double lambda_T, double gamma_V);

}  // namespace mflsi
