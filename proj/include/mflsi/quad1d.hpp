#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace mflsi {

enum class Domain { RealLine, Circle };

/// V(x) = x^4/4 - lambda x^2/2.
struct Quartic {
  double lambda = 0.0;
};

/// V(x) = curvature x^2/2.
struct GaussianWell {
  double curvature = 1.0;
};

/// V(x) = sum_k coefficients[k] cos(k x) on [0, 2pi).
struct PeriodicFourier {
  std::vector<double> coefficients;
};

/// Cubic-spline interpolant of (nodes, values). Outside the table the
/// potential continues as the quadratic with the spline's end value, slope
/// and curvature.
struct Tabulated {
  std::vector<double> nodes;
  std::vector<double> values;
};

class CubicSpline;

class PotentialSpec {
 public:
  using Kind = std::variant<Quartic, GaussianWell, PeriodicFourier, Tabulated>;

  static PotentialSpec quartic(double lambda, bool ghs_claimed = false);
  static PotentialSpec gaussian(double curvature, bool ghs_claimed = false);
  static PotentialSpec periodic_fourier(std::vector<double> coefficients);
  static PotentialSpec tabulated(std::vector<double> nodes, std::vector<double> values,
                                 bool ghs_claimed = false);

  const Kind& kind() const noexcept { return kind_; }
  Domain domain() const noexcept;
  bool ghs_claimed() const noexcept { return ghs_claimed_; }

  double value(double x) const;
  double derivative(double x) const;

  /// True when x lies outside a tabulated potential's node range.
  bool extrapolates(double x) const;

  /// Whether the quadratic continuation of a tabulated potential grows on
  /// both sides; always true for the analytic kinds.
  bool confining_tails() const;

  std::string describe() const;

 private:
  PotentialSpec(Kind kind, bool ghs_claimed);

  Kind kind_;
  bool ghs_claimed_ = false;
  std::shared_ptr<const CubicSpline> spline_;
};

/// Probability weights of alpha_V tilted by e^{g(x)} on a quadrature grid.
struct TiltedSample {
  std::vector<double> x;
  std::vector<double> p;
  /// log E_{alpha_V}[e^{g}].
  double log_z = 0.0;

  template <class F>
  double expect(F&& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += p[i] * f(x[i]);
    return s;
  }
};

/// Quadrature representation of alpha_V(dx) ∝ e^{-V(x)} dx.
class LineMeasure {
 public:
  const PotentialSpec& potential() const noexcept { return potential_; }
  Domain domain() const noexcept { return potential_.domain(); }

  std::span<const double> nodes() const noexcept { return nodes_; }
  std::span<const double> weights() const noexcept { return weights_; }
  /// -V at the nodes (unnormalised).
  std::span<const double> log_density() const noexcept { return log_density_; }
  std::pair<double, double> domain_bounds() const noexcept { return {lo_, hi_}; }
  double target_tol() const noexcept { return tol_; }
  /// log of the integral of e^{-V} over the domain.
  double log_norm() const noexcept { return log_norm_; }
  /// Set when a tabulated potential is evaluated beyond its table.
  bool extrapolated() const noexcept { return extrapolated_; }

  /// The scalar observable tilted by `tilt_moments`: x on the real line,
  /// cos(x) on the circle.
  double observable(double x) const;

  /// alpha_V tilted by e^{log_tilt(x)}. On the real line the domain is widened
  /// until the tilted density is negligible at both ends; the resolution is
  /// refined until successive halvings agree to target_tol.
  TiltedSample tilt(const std::function<double(double)>& log_tilt) const;

  /// Plain (untilted) quadrature grid with `points` nodes, weights normalised
  /// to a probability vector. Used for tensor-product quadrature.
  TiltedSample grid(int points) const;

 private:
  friend LineMeasure build_measure(const PotentialSpec& spec, double tol);

  explicit LineMeasure(PotentialSpec spec) : potential_(std::move(spec)) {}

  PotentialSpec potential_;
  std::vector<double> nodes_;
  std::vector<double> weights_;
  std::vector<double> log_density_;
  double lo_ = 0.0;
  double hi_ = 0.0;
  double tol_ = 1e-10;
  double log_norm_ = 0.0;
  int resolution_ = 0;  // panels on the real line, points on the circle
  bool extrapolated_ = false;
};

LineMeasure build_measure(const PotentialSpec& spec, double tol);

struct TiltMoments {
  double log_z = 0.0;
  /// moments[0] = 1, moments[1] = mean, moments[p] = centred p-th moment (p >= 2).
  std::vector<double> moments;

  double mean() const { return moments.at(1); }
  double variance() const { return moments.at(2); }
};

TiltMoments tilt_moments(const LineMeasure& measure, double h, int max_power);

struct GhsReport {
  bool passed = false;
  std::string reason;
  std::optional<double> first_violation;
};

GhsReport check_ghs(const PotentialSpec& spec, int grid_points);

}  // namespace mflsi
