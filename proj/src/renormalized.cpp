#include "mflsi/renormalized.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mflsi/error.hpp"
#include "root.hpp"

namespace mflsi {

namespace {

constexpr double kRootTol = 1e-10;
constexpr double kMaxTilt = 1e4;

struct Point {
  double v, dv, ddv;
};

Point evaluate(const LineMeasure& measure, double T, double phi) {
  const TiltMoments t = tilt_moments(measure, phi / T, 2);
  return {phi * phi / (2 * T) - t.log_z, (phi - t.mean()) / T, 1 / T - t.variance() / (T * T)};
}

void require_temperature(double T) {
  require(std::isfinite(T) && T > 0, "temperature must be positive and finite");
}

}  // namespace

std::vector<double> default_phi_grid(const LineMeasure& measure, double T, int points) {
  require_temperature(T);
  require(points >= 3, "phi grid needs at least 3 points");
  const double sd = std::sqrt(tilt_moments(measure, 0.0, 2).variance());
  double width = 2.0 * (sd + 1.0);
  for (int attempt = 0; attempt < 60; ++attempt, width *= 1.5) {
    const Point lo = evaluate(measure, T, -width), hi = evaluate(measure, T, width);
    const Point lo_in = evaluate(measure, T, -0.99 * width), hi_in = evaluate(measure, T, 0.99 * width);
    if (lo.dv < 0 && hi.dv > 0 && lo.dv < lo_in.dv && hi.dv > hi_in.dv) break;
  }
  std::vector<double> grid(points);
  for (int i = 0; i < points; ++i) grid[i] = -width + 2.0 * width * i / (points - 1);
  if (points % 2 == 1) grid[points / 2] = 0.0;
  return grid;
}

RenormTable renorm_potential(const LineMeasure& measure, double T, std::span<const double> phi_grid) {
  require_temperature(T);
  require(phi_grid.size() >= 3, "phi grid needs at least 3 points");
  for (std::size_t i = 1; i < phi_grid.size(); ++i)
    require(phi_grid[i] > phi_grid[i - 1], "phi grid must be strictly increasing");

  RenormTable table;
  table.temperature = T;
  table.phi_grid.assign(phi_grid.begin(), phi_grid.end());
  const std::size_t n = phi_grid.size();
  table.v.resize(n);
  table.dv.resize(n);
  table.ddv.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Point p = evaluate(measure, T, phi_grid[i]);
    table.v[i] = p.v;
    table.dv[i] = p.dv;
    table.ddv[i] = p.ddv;
  }
  if (table.dv.front() >= 0 || table.dv.back() <= 0)
    fail(ErrorCode::GridTooNarrow, "dV_T does not point outward at both grid ends; widen the phi grid");

  const auto floor_it = std::min_element(table.ddv.begin(), table.ddv.end());
  table.curvature_floor = *floor_it;
  table.curvature_floor_at = phi_grid[static_cast<std::size_t>(floor_it - table.ddv.begin())];

  auto slope = [&](double phi) {
    const Point p = evaluate(measure, T, phi);
    return std::pair{p.dv, p.ddv};
  };
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (table.dv[i] < 0 && table.dv[i + 1] >= 0)
      table.minimizers.push_back(detail::bracketed_root(slope, phi_grid[i], phi_grid[i + 1],
                                                        table.dv[i], table.dv[i + 1], kRootTol));
  }

  if (measure.domain() == Domain::RealLine && check_ghs(measure.potential(), 256).passed)
    table.t_critical = tilt_moments(measure, 0.0, 2).variance();
  return table;
}

double critical_temperature(const LineMeasure& measure) {
  if (measure.domain() != Domain::RealLine)
    fail(ErrorCode::NotGHS, "critical temperature formula needs a real-line GHS potential");
  const GhsReport report = check_ghs(measure.potential(), 256);
  if (!report.passed) {
    std::string where = report.first_violation ? " at x = " + std::to_string(*report.first_violation) : "";
    fail(ErrorCode::NotGHS, measure.potential().describe() + ": " + report.reason + where);
  }
  return tilt_moments(measure, 0.0, 2).variance();
}

double magnetization_map(const LineMeasure& measure, double T, double phi) {
  require_temperature(T);
  return tilt_moments(measure, phi / T, 2).mean();
}

double invert_magnetization(const LineMeasure& measure, double T, double m) {
  require_temperature(T);
  require(std::isfinite(m), "magnetisation must be finite");
  auto residual = [&](double h) {
    const TiltMoments t = tilt_moments(measure, h, 2);
    return std::pair{t.mean() - m, t.variance()};
  };
  const double f0 = residual(0.0).first;
  if (f0 == 0.0) return 0.0;
  // Grow a bracket away from h = 0 in the direction of m.
  const double dir = f0 < 0 ? 1.0 : -1.0;
  double prev = 0.0, f_prev = f0;
  double h = dir, f = residual(h).first;
  while ((f < 0) == (f0 < 0) && f != 0.0) {
    if (std::abs(h) >= kMaxTilt)
      fail(ErrorCode::OutOfRange, "magnetisation " + std::to_string(m) + " is not attained by any tilt");
    prev = h;
    f_prev = f;
    h *= 2;
    f = residual(h).first;
  }
  const double lo = std::min(prev, h), hi = std::max(prev, h);
  const double f_lo = lo == prev ? f_prev : f, f_hi = hi == prev ? f_prev : f;
  return T * detail::bracketed_root(residual, lo, hi, f_lo, f_hi, kRootTol / T);
}

FreeEnergyTable coarse_free_energy(const LineMeasure& measure, double T, std::span<const double> m_grid) {
  require_temperature(T);
  require(!m_grid.empty(), "m grid is empty");
  for (std::size_t i = 1; i < m_grid.size(); ++i)
    require(m_grid[i] > m_grid[i - 1], "m grid must be strictly increasing");
  FreeEnergyTable table;
  table.temperature = T;
  table.m.assign(m_grid.begin(), m_grid.end());
  table.f.resize(m_grid.size());
  table.phi.resize(m_grid.size());
  for (std::size_t i = 0; i < m_grid.size(); ++i) {
    const double m = m_grid[i];
    const double phi = invert_magnetization(measure, T, m);
    const double v = evaluate(measure, T, phi).v;
    table.phi[i] = phi;
    table.f[i] = v - (phi - m) * (phi - m) / (2 * T);
  }
  return table;
}

double legendre_reconstruct(const FreeEnergyTable& table, double phi) {
  require(!table.m.empty(), "free-energy table is empty");
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < table.m.size(); ++i) {
    const double d = phi - table.m[i];
    best = std::min(best, table.f[i] + d * d / (2 * table.temperature));
  }
  return best;
}

double pl_constant(const FreeEnergyTable& table) {
  const std::size_t n = table.m.size();
  require(n >= 3 && table.f.size() == n, "PL constant needs a table with at least 3 points");
  const auto& m = table.m;
  const auto& f = table.f;

  const std::size_t star = static_cast<std::size_t>(std::min_element(f.begin(), f.end()) - f.begin());
  double max_step = 0.0;
  for (std::size_t i = 1; i < n; ++i) max_step = std::max(max_step, m[i] - m[i - 1]);
  for (std::size_t i = 0; i < n; ++i) {
    const bool local_min = (i == 0 || f[i] <= f[i - 1]) && (i + 1 == n || f[i] <= f[i + 1]);
    if (local_min && f[i] - f[star] <= 1e-8 && std::abs(m[i] - m[star]) > max_step)
      fail(ErrorCode::MultipleMinima, "free energy has several grid minima within 1e-8 of the global one");
  }

  auto slope = [&](std::size_t i) {
    if (i == 0) {
      const double a = m[1] - m[0], b = m[2] - m[1];
      return -(2 * a + b) / (a * (a + b)) * f[0] + (a + b) / (a * b) * f[1] - a / (b * (a + b)) * f[2];
    }
    if (i == n - 1) {
      const double a = m[n - 1] - m[n - 2], b = m[n - 2] - m[n - 3];
      return (2 * a + b) / (a * (a + b)) * f[n - 1] - (a + b) / (a * b) * f[n - 2] + a / (b * (a + b)) * f[n - 3];
    }
    const double a = m[i] - m[i - 1], b = m[i + 1] - m[i];
    return -b / (a * (a + b)) * f[i - 1] + (b - a) / (a * b) * f[i] + a / (b * (a + b)) * f[i + 1];
  };

  double gamma = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    if (i == star) continue;
    const double gap = f[i] - f[star];
    if (gap <= 0) continue;
    const double g = slope(i);
    gamma = std::min(gamma, g * g / (2 * gap));
  }
  if (star > 0 && star + 1 < n) {
    const double a = m[star] - m[star - 1], b = m[star + 1] - m[star];
    const double curvature =
        2 * (f[star - 1] / (a * (a + b)) - f[star] / (a * b) + f[star + 1] / (b * (a + b)));
    gamma = std::min(gamma, curvature);
  }
  return gamma;
}

double lsi_bound_quadratic(double T, double lambda_T, double gamma_V) {
  require_temperature(T);
  require(std::isfinite(gamma_V) && gamma_V > 0, "gamma_V must be positive");
  if (!(lambda_T > 0))
    fail(ErrorCode::NonPositiveCurvature, "curvature floor lambda_T must be positive for the bound to apply");
  return 1 / gamma_V + 1 / (gamma_V * gamma_V * T * T * lambda_T);
}

}  // namespace mflsi
