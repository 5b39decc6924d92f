#include "mflsi/quad1d.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/gauss.hpp>

#include "mflsi/error.hpp"

namespace mflsi {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// e^{-40} < 1e-16: the density at a domain end must sit this far below the peak.
constexpr double kTailLogRatio = 40.0;
constexpr int kGaussPoints = 20;

using Gauss = boost::math::quadrature::gauss<double, kGaussPoints>;

void gauss_legendre_panels(double lo, double hi, int panels, std::vector<double>& x,
                           std::vector<double>& w) {
  const auto& abscissa = Gauss::abscissa();
  const auto& weights = Gauss::weights();
  x.clear();
  w.clear();
  x.reserve(static_cast<std::size_t>(panels) * kGaussPoints);
  w.reserve(x.capacity());
  const double width = (hi - lo) / panels;
  for (int k = 0; k < panels; ++k) {
    const double mid = lo + (k + 0.5) * width;
    const double half = 0.5 * width;
    for (std::size_t i = abscissa.size(); i-- > 0;) {
      if (abscissa[i] == 0.0) continue;
      x.push_back(mid - half * abscissa[i]);
      w.push_back(half * weights[i]);
    }
    if (abscissa[0] == 0.0) {
      x.push_back(mid);
      w.push_back(half * weights[0]);
    }
    for (std::size_t i = 0; i < abscissa.size(); ++i) {
      if (abscissa[i] == 0.0) continue;
      x.push_back(mid + half * abscissa[i]);
      w.push_back(half * weights[i]);
    }
  }
}

void trapezoid_circle(int points, std::vector<double>& x, std::vector<double>& w) {
  x.resize(points);
  w.assign(points, kTwoPi / points);
  for (int i = 0; i < points; ++i) x[i] = kTwoPi * i / points;
}

double log_sum_exp(std::span<const double> log_w, std::span<const double> ell) {
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ell.size(); ++i) peak = std::max(peak, log_w[i] + ell[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < ell.size(); ++i) s += std::exp(log_w[i] + ell[i] - peak);
  return peak + std::log(s);
}

// Normalised probability weights and log of the unnormalised integral.
TiltedSample make_sample(std::vector<double> x, const std::vector<double>& w,
                         const std::vector<double>& ell) {
  TiltedSample s;
  double peak = -std::numeric_limits<double>::infinity();
  for (double e : ell) peak = std::max(peak, e);
  s.p.resize(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    s.p[i] = w[i] * std::exp(ell[i] - peak);
    total += s.p[i];
  }
  for (double& v : s.p) v /= total;
  s.log_z = peak + std::log(total);
  s.x = std::move(x);
  return s;
}

struct Stats {
  double log_z;
  double mean;
  double m2;
  double m3;
  double m4;
};

template <class Obs>
Stats sample_stats(const TiltedSample& s, Obs&& obs) {
  Stats st{};
  st.log_z = s.log_z;
  st.mean = s.expect(obs);
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    const double d = obs(s.x[i]) - st.mean;
    const double d2 = d * d;
    st.m2 += s.p[i] * d2;
    st.m3 += s.p[i] * d2 * d;
    st.m4 += s.p[i] * d2 * d2;
  }
  return st;
}

bool stats_agree(const Stats& a, const Stats& b, double tol) {
  const double sd = std::sqrt(std::max(b.m2, std::numeric_limits<double>::min()));
  return std::abs(a.log_z - b.log_z) <= tol && std::abs(a.mean - b.mean) <= tol * sd &&
         std::abs(a.m2 - b.m2) <= tol * b.m2 && std::abs(a.m3 - b.m3) <= tol * sd * b.m2 &&
         std::abs(a.m4 - b.m4) <= tol * b.m2 * b.m2;
}

// Symmetric-ish window on which e^{-V} is negligible outside.
std::pair<double, double> confinement_bounds(const PotentialSpec& spec) {
  if (!spec.confining_tails()) {
    fail(ErrorCode::NonNormalizable, "tabulated potential decreases at infinity: " + spec.describe());
  }
  constexpr int kSamples = 4001;
  std::vector<double> x(kSamples), ell(kSamples);
  for (double half_width = 2.0; half_width <= 1e6; half_width *= 2.0) {
    double peak = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < kSamples; ++i) {
      x[i] = -half_width + 2.0 * half_width * i / (kSamples - 1);
      ell[i] = -spec.value(x[i]);
      peak = std::max(peak, ell[i]);
    }
    const double cut = peak - kTailLogRatio;
    const bool ends_small = ell.front() < cut && ell.back() < cut;
    const bool ends_falling = ell[1] > ell[0] && ell[kSamples - 2] > ell[kSamples - 1];
    if (!ends_small || !ends_falling) continue;
    int first = 0;
    while (ell[first] < cut) ++first;
    int last = kSamples - 1;
    while (ell[last] < cut) --last;
    return {x[std::max(first - 1, 0)], x[std::min(last + 1, kSamples - 1)]};
  }
  fail(ErrorCode::NonNormalizable, "e^{-V} is not integrable: " + spec.describe());
}

}  // namespace

// ---------------------------------------------------------------------------
// CubicSpline

class CubicSpline {
 public:
  CubicSpline(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    std::vector<double> h(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) h[i] = x_[i + 1] - x_[i];

    // Clamped ends; slopes from the quadratic through the three end nodes.
    const double s0 = -(2 * h[0] + h[1]) / (h[0] * (h[0] + h[1])) * y_[0] +
                      (h[0] + h[1]) / (h[0] * h[1]) * y_[1] - h[0] / (h[1] * (h[0] + h[1])) * y_[2];
    const double a = h[n - 2], b = h[n - 3];
    const double sn = (2 * a + b) / (a * (a + b)) * y_[n - 1] - (a + b) / (a * b) * y_[n - 2] +
                      a / (b * (a + b)) * y_[n - 3];

    std::vector<double> lower(n, 0.0), diag(n, 0.0), upper(n, 0.0), rhs(n, 0.0);
    diag[0] = 2 * h[0];
    upper[0] = h[0];
    rhs[0] = 6 * ((y_[1] - y_[0]) / h[0] - s0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      lower[i] = h[i - 1];
      diag[i] = 2 * (h[i - 1] + h[i]);
      upper[i] = h[i];
      rhs[i] = 6 * ((y_[i + 1] - y_[i]) / h[i] - (y_[i] - y_[i - 1]) / h[i - 1]);
    }
    lower[n - 1] = h[n - 2];
    diag[n - 1] = 2 * h[n - 2];
    rhs[n - 1] = 6 * (sn - (y_[n - 1] - y_[n - 2]) / h[n - 2]);

    for (std::size_t i = 1; i < n; ++i) {
      const double m = lower[i] / diag[i - 1];
      diag[i] -= m * upper[i - 1];
      rhs[i] -= m * rhs[i - 1];
    }
    m_.assign(n, 0.0);
    m_[n - 1] = rhs[n - 1] / diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) m_[i] = (rhs[i] - upper[i] * m_[i + 1]) / diag[i];

    left_ = {y_.front(), inner_slope(0, x_.front()), m_.front()};
    right_ = {y_.back(), inner_slope(n - 2, x_.back()), m_.back()};
  }

  double value(double x) const {
    if (x < x_.front()) return extend(left_, x - x_.front());
    if (x > x_.back()) return extend(right_, x - x_.back());
    const std::size_t i = segment(x);
    const double h = x_[i + 1] - x_[i];
    const double l = x_[i + 1] - x, r = x - x_[i];
    return m_[i] * l * l * l / (6 * h) + m_[i + 1] * r * r * r / (6 * h) +
           (y_[i] / h - m_[i] * h / 6) * l + (y_[i + 1] / h - m_[i + 1] * h / 6) * r;
  }

  double derivative(double x) const {
    if (x < x_.front()) return left_.slope + left_.curvature * (x - x_.front());
    if (x > x_.back()) return right_.slope + right_.curvature * (x - x_.back());
    return inner_slope(segment(x), x);
  }

  bool confining() const {
    const bool right_up = right_.curvature > 0 || (right_.curvature == 0 && right_.slope > 0);
    const bool left_up = left_.curvature > 0 || (left_.curvature == 0 && left_.slope < 0);
    return right_up && left_up;
  }

  double front() const { return x_.front(); }
  double back() const { return x_.back(); }

 private:
  struct Tail {
    double value, slope, curvature;
  };

  static double extend(const Tail& t, double dx) {
    return t.value + t.slope * dx + 0.5 * t.curvature * dx * dx;
  }

  std::size_t segment(double x) const {
    auto it = std::upper_bound(x_.begin(), x_.end(), x);
    std::size_t i = static_cast<std::size_t>(it - x_.begin());
    return std::clamp<std::size_t>(i == 0 ? 0 : i - 1, 0, x_.size() - 2);
  }

  double inner_slope(std::size_t i, double x) const {
    const double h = x_[i + 1] - x_[i];
    const double l = x_[i + 1] - x, r = x - x_[i];
    return -m_[i] * l * l / (2 * h) + m_[i + 1] * r * r / (2 * h) - (y_[i] / h - m_[i] * h / 6) +
           (y_[i + 1] / h - m_[i + 1] * h / 6);
  }

  std::vector<double> x_, y_, m_;
  Tail left_{}, right_{};
};

// ---------------------------------------------------------------------------
// PotentialSpec

PotentialSpec::PotentialSpec(Kind kind, bool ghs_claimed)
    : kind_(std::move(kind)), ghs_claimed_(ghs_claimed) {}

PotentialSpec PotentialSpec::quartic(double lambda, bool ghs_claimed) {
  require(std::isfinite(lambda), "quartic lambda must be finite");
  return PotentialSpec(Quartic{lambda}, ghs_claimed);
}

PotentialSpec PotentialSpec::gaussian(double curvature, bool ghs_claimed) {
  require(std::isfinite(curvature) && curvature > 0, "gaussian curvature must be > 0");
  return PotentialSpec(GaussianWell{curvature}, ghs_claimed);
}

PotentialSpec PotentialSpec::periodic_fourier(std::vector<double> coefficients) {
  for (double c : coefficients) require(std::isfinite(c), "fourier coefficients must be finite");
  return PotentialSpec(PeriodicFourier{std::move(coefficients)}, false);
}

PotentialSpec PotentialSpec::tabulated(std::vector<double> nodes, std::vector<double> values,
                                       bool ghs_claimed) {
  require(nodes.size() == values.size(), "tabulated nodes and values differ in length");
  require(nodes.size() >= 4, "tabulated potential needs at least 4 nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    require(std::isfinite(nodes[i]) && std::isfinite(values[i]), "tabulated entries must be finite");
    if (i > 0) require(nodes[i] > nodes[i - 1], "tabulated nodes must be strictly increasing");
  }
  PotentialSpec spec(Tabulated{nodes, values}, ghs_claimed);
  spec.spline_ = std::make_shared<const CubicSpline>(std::move(nodes), std::move(values));
  return spec;
}

Domain PotentialSpec::domain() const noexcept {
  return std::holds_alternative<PeriodicFourier>(kind_) ? Domain::Circle : Domain::RealLine;
}

double PotentialSpec::value(double x) const {
  if (const auto* q = std::get_if<Quartic>(&kind_)) {
    const double x2 = x * x;
    return 0.25 * x2 * x2 - 0.5 * q->lambda * x2;
  }
  if (const auto* g = std::get_if<GaussianWell>(&kind_)) return 0.5 * g->curvature * x * x;
  if (const auto* f = std::get_if<PeriodicFourier>(&kind_)) {
    double v = 0.0;
    for (std::size_t k = 0; k < f->coefficients.size(); ++k)
      v += f->coefficients[k] * std::cos(static_cast<double>(k) * x);
    return v;
  }
  return spline_->value(x);
}

double PotentialSpec::derivative(double x) const {
  if (const auto* q = std::get_if<Quartic>(&kind_)) return x * x * x - q->lambda * x;
  if (const auto* g = std::get_if<GaussianWell>(&kind_)) return g->curvature * x;
  if (const auto* f = std::get_if<PeriodicFourier>(&kind_)) {
    double d = 0.0;
    for (std::size_t k = 1; k < f->coefficients.size(); ++k)
      d -= f->coefficients[k] * static_cast<double>(k) * std::sin(static_cast<double>(k) * x);
    return d;
  }
  return spline_->derivative(x);
}

bool PotentialSpec::extrapolates(double x) const {
  return spline_ && (x < spline_->front() || x > spline_->back());
}

bool PotentialSpec::confining_tails() const { return !spline_ || spline_->confining(); }

std::string PotentialSpec::describe() const {
  std::ostringstream os;
  os.precision(17);
  if (const auto* q = std::get_if<Quartic>(&kind_)) {
    os << "quartic(lambda=" << q->lambda << ")";
  } else if (const auto* g = std::get_if<GaussianWell>(&kind_)) {
    os << "gaussian(curvature=" << g->curvature << ")";
  } else if (const auto* f = std::get_if<PeriodicFourier>(&kind_)) {
    os << "periodic_fourier(" << f->coefficients.size() << " coefficients)";
  } else {
    const auto& t = std::get<Tabulated>(kind_);
    os << "tabulated(" << t.nodes.size() << " nodes on [" << t.nodes.front() << ", "
       << t.nodes.back() << "])";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// LineMeasure

double LineMeasure::observable(double x) const {
  return domain() == Domain::Circle ? std::cos(x) : x;
}

TiltedSample LineMeasure::tilt(const std::function<double(double)>& log_tilt) const {
  std::vector<double> x, w, ell;
  auto evaluate = [&](auto&& build) {
    build();
    ell.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) ell[i] = -potential_.value(x[i]) + log_tilt(x[i]);
  };
  auto sample_at = [&](auto&& build) {
    evaluate(build);
    TiltedSample s = make_sample(x, w, ell);
    s.log_z -= log_norm_;
    return s;
  };
  auto agree = [&](const TiltedSample& a, const TiltedSample& b) {
    auto obs = [this](double v) { return observable(v); };
    const double mean_a = a.expect(obs), mean_b = b.expect(obs);
    const double var_b = b.expect([&](double v) { return (obs(v) - mean_b) * (obs(v) - mean_b); });
    const double sd = std::sqrt(std::max(var_b, std::numeric_limits<double>::min()));
    return std::abs(a.log_z - b.log_z) <= tol_ && std::abs(mean_a - mean_b) <= tol_ * sd;
  };

  if (domain() == Domain::Circle) {
    int points = resolution_;
    TiltedSample coarse = sample_at([&] { trapezoid_circle(points, x, w); });
    for (int refinement = 0; refinement < 10; ++refinement) {
      points *= 2;
      TiltedSample fine = sample_at([&] { trapezoid_circle(points, x, w); });
      if (agree(coarse, fine)) return fine;
      coarse = std::move(fine);
    }
    fail(ErrorCode::GridFailure, "tilted circle quadrature did not converge");
  }

  const double width = (hi_ - lo_) / resolution_;
  double lo = lo_, hi = hi_;
  int panels = resolution_;
  bool covered = false;
  for (int attempt = 0; attempt < 64 && hi - lo < 1e6; ++attempt) {
    panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / width - 1e-9)));
    evaluate([&] { gauss_legendre_panels(lo, hi, panels, x, w); });
    const double peak = *std::max_element(ell.begin(), ell.end());
    const double cut = peak - kTailLogRatio;
    const bool lo_ok = -potential_.value(lo) + log_tilt(lo) < cut;
    const bool hi_ok = -potential_.value(hi) + log_tilt(hi) < cut;
    if (lo_ok && hi_ok) {
      covered = true;
      break;
    }
    const double span = hi - lo;
    if (!lo_ok) lo -= 0.5 * span;
    if (!hi_ok) hi += 0.5 * span;
  }
  if (!covered) fail(ErrorCode::GridFailure, "tilt pushes mass outside any admissible domain");

  TiltedSample coarse = sample_at([&] { gauss_legendre_panels(lo, hi, panels, x, w); });
  for (int refinement = 0; refinement < 8; ++refinement) {
    panels *= 2;
    TiltedSample fine = sample_at([&] { gauss_legendre_panels(lo, hi, panels, x, w); });
    if (agree(coarse, fine)) return fine;
    coarse = std::move(fine);
  }
  fail(ErrorCode::GridFailure, "tilted quadrature did not converge under grid doubling");
}

TiltedSample LineMeasure::grid(int points) const {
  require(points >= 2, "grid needs at least 2 points");
  std::vector<double> x, w;
  if (domain() == Domain::Circle) {
    trapezoid_circle(points, x, w);
  } else {
    const int panels = (points + kGaussPoints - 1) / kGaussPoints;
    gauss_legendre_panels(lo_, hi_, panels, x, w);
  }
  std::vector<double> ell(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) ell[i] = -potential_.value(x[i]);
  TiltedSample s = make_sample(std::move(x), w, ell);
  s.log_z -= log_norm_;
  return s;
}

LineMeasure build_measure(const PotentialSpec& spec, double tol) {
  require(tol > 0 && tol <= 1e-4, "build_measure tolerance must lie in (0, 1e-4]");
  LineMeasure m(spec);
  m.tol_ = tol;

  std::vector<double> x, w, ell;
  auto stats_at = [&](int resolution) {
    if (spec.domain() == Domain::Circle) {
      trapezoid_circle(resolution, x, w);
    } else {
      gauss_legendre_panels(m.lo_, m.hi_, resolution, x, w);
    }
    ell.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) ell[i] = -spec.value(x[i]);
    TiltedSample s = make_sample(x, w, ell);
    return sample_stats(s, [&](double v) { return m.observable(v); });
  };

  int resolution;
  if (spec.domain() == Domain::Circle) {
    m.lo_ = 0.0;
    m.hi_ = kTwoPi;
    resolution = 32;
  } else {
    std::tie(m.lo_, m.hi_) = confinement_bounds(spec);
    m.extrapolated_ = spec.extrapolates(m.lo_) || spec.extrapolates(m.hi_);
    resolution = 8;
  }

  Stats coarse = stats_at(resolution);
  bool converged = false;
  for (int doubling = 0; doubling < 14; ++doubling) {
    resolution *= 2;
    Stats fine = stats_at(resolution);
    if (stats_agree(coarse, fine, tol)) {
      converged = true;
      break;
    }
    coarse = fine;
  }
  if (!converged) fail(ErrorCode::GridFailure, "grid doubling did not converge for " + spec.describe());

  // x, w, ell hold the finer grid of the accepted pair.
  m.resolution_ = resolution;
  m.nodes_ = x;
  m.weights_ = w;
  m.log_density_ = ell;
  std::vector<double> log_w(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) log_w[i] = std::log(w[i]);
  m.log_norm_ = log_sum_exp(log_w, ell);
  return m;
}

TiltMoments tilt_moments(const LineMeasure& measure, double h, int max_power) {
  require(std::isfinite(h), "tilt must be finite");
  require(max_power >= 2, "max_power must be at least 2");
  const TiltedSample s = measure.tilt([&](double x) { return h * measure.observable(x); });
  TiltMoments out;
  out.log_z = s.log_z;
  out.moments.assign(static_cast<std::size_t>(max_power) + 1, 0.0);
  out.moments[0] = 1.0;
  const double mean = s.expect([&](double x) { return measure.observable(x); });
  out.moments[1] = mean;
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    const double d = measure.observable(s.x[i]) - mean;
    double term = d * d;
    for (int p = 2; p <= max_power; ++p) {
      out.moments[p] += s.p[i] * term;
      term *= d;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// GHS check

GhsReport check_ghs(const PotentialSpec& spec, int grid_points) {
  require(spec.domain() == Domain::RealLine, "check_ghs needs a real-line potential");
  require(grid_points >= 64, "check_ghs needs at least 64 grid points");

  GhsReport report;
  auto violation = [&](std::string reason, double x) {
    report.passed = false;
    report.reason = std::move(reason);
    report.first_violation = x;
    return report;
  };

  double radius;
  if (const auto* t = std::get_if<Tabulated>(&spec.kind())) {
    radius = std::min(-t->nodes.front(), t->nodes.back());
    if (radius <= 0) return violation("table does not straddle the origin", 0.0);
    if (!spec.confining_tails()) return violation("quadratic continuation does not grow", t->nodes.back());
  } else {
    const auto bounds = confinement_bounds(spec);
    radius = std::min(-bounds.first, bounds.second);
  }

  const double step = 2.0 * radius / 16384.0;
  std::vector<double> grid(grid_points);
  for (int i = 0; i < grid_points; ++i) grid[i] = radius * i / (grid_points - 1);

  for (double x : grid) {
    const double v = spec.value(x);
    if (std::abs(v - spec.value(-x)) > 1e-10 * std::max(1.0, std::abs(v)))
      return violation("V is not even", x);
  }

  // V'' from central differences of V'; the convexity of V' on [0, inf)
  // means these are nondecreasing.
  auto second = [&](double x) {
    const double lo = std::max(0.0, x - step);
    return (spec.derivative(x + step) - spec.derivative(lo)) / (x + step - lo);
  };
  double previous = second(grid[0]);
  for (int i = 1; i < grid_points; ++i) {
    const double current = second(grid[i]);
    const double slack = 1e-8 * std::max({1.0, std::abs(previous), std::abs(current)});
    if (current < previous - slack) return violation("V' is not convex on [0, inf)", grid[i]);
    previous = current;
  }

  const double v_end = spec.value(radius);
  for (double x : grid) {
    if (x < radius && spec.value(x) >= v_end) return violation("V does not grow towards the domain end", x);
  }
  if (spec.derivative(radius) <= 0) return violation("V does not grow towards the domain end", radius);

  report.passed = true;
  report.reason = "ok";
  return report;
}

}  // namespace mflsi
