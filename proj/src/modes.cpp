#include "mflsi/modes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "mflsi/error.hpp"

namespace mflsi {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kMaxIterations = 500;
constexpr double kFixedPointTol = 1e-10;

void require_temperature(double T) {
  require(std::isfinite(T) && T > 0, "temperature must be positive and finite");
}

void require_field(const ModeField& zeta, const ModeDecomposition& decomp) {
  require(static_cast<std::size_t>(zeta.size()) == decomp.dimension(),
          "field has " + std::to_string(zeta.size()) + " coordinates, decomposition needs " +
              std::to_string(decomp.dimension()));
  require(zeta.allFinite(), "field coordinates must be finite");
}

TiltedSample tilted(const ModeField& zeta, double T, const ModeDecomposition& decomp, const LineMeasure& measure) {
  if (zeta.size() == 0 || zeta.isZero(0.0)) return measure.tilt([](double) { return 0.0; });
  return measure.tilt([&](double x) { return zeta.dot(decomp.features(x)) / T; });
}

double log_sum(std::span<const double> p, std::span<const double> log_f) {
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) peak = std::max(peak, log_f[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * std::exp(log_f[i] - peak);
  return peak + std::log(s);
}

ModeDecomposition from_coefficients(std::vector<double> coef, int K) {
  double largest = 0.0;
  for (std::size_t k = 1; k < coef.size(); ++k) largest = std::max(largest, std::abs(coef[k]));
  ModeDecomposition d;
  d.offset = coef.empty() ? 0.0 : coef[0];
  double l2 = 0.0;
  for (int k = 1; k <= K && k < static_cast<int>(coef.size()); ++k) {
    const double c = coef[k];
    if (std::abs(c) <= 1e-14 * largest || c == 0.0) continue;
    auto& target = c > 0 ? d.neg : d.pos;
    target.push_back(Mode::cos(std::abs(c), k));
    target.push_back(Mode::sin(std::abs(c), k));
    d.m_bound += std::abs(c);
    if (c > 0) l2 += 2.0 * std::abs(c) * k * k;
  }
  d.l_bound = std::sqrt(l2);
  return d;
}

}  // namespace

// ---------------------------------------------------------------------------
// Modes

double Mode::value(double x) const {
  switch (kind) {
    case ModeKind::Cos: return std::cos(k * x);
    case ModeKind::Sin: return std::sin(k * x);
    case ModeKind::Tanh: return std::tanh(x);
    case ModeKind::Custom: return fn(x);
  }
  return 0.0;
}

double Mode::derivative(double x) const {
  switch (kind) {
    case ModeKind::Cos: return -k * std::sin(k * x);
    case ModeKind::Sin: return k * std::cos(k * x);
    case ModeKind::Tanh: {
      const double t = std::tanh(x);
      return 1 - t * t;
    }
    case ModeKind::Custom: return deriv(x);
  }
  return 0.0;
}

double Mode::lipschitz() const {
  switch (kind) {
    case ModeKind::Cos:
    case ModeKind::Sin: return std::abs(k);
    case ModeKind::Tanh: return 1.0;
    case ModeKind::Custom: break;
  }
  double sup = 0.0;
  for (int i = 0; i <= 8192; ++i) sup = std::max(sup, std::abs(deriv(-20.0 + 40.0 * i / 8192)));
  return sup;
}

std::string to_string(ModeKind kind) {
  switch (kind) {
    case ModeKind::Cos: return "cos";
    case ModeKind::Sin: return "sin";
    case ModeKind::Tanh: return "tanh";
    case ModeKind::Custom: return "custom";
  }
  return "custom";
}

Eigen::VectorXd ModeDecomposition::features(double x) const {
  Eigen::VectorXd g(dimension());
  Eigen::Index j = 0;
  if (alpha > 0) g[j++] = std::sqrt(alpha) * x;
  for (const Mode& m : neg) g[j++] = std::sqrt(m.weight) * m.value(x);
  return g;
}

Eigen::VectorXd ModeDecomposition::feature_derivatives(double x) const {
  Eigen::VectorXd g(dimension());
  Eigen::Index j = 0;
  if (alpha > 0) g[j++] = std::sqrt(alpha);
  for (const Mode& m : neg) g[j++] = std::sqrt(m.weight) * m.derivative(x);
  return g;
}

Eigen::VectorXd ModeDecomposition::pos_features(double x) const {
  Eigen::VectorXd p(pos.size());
  for (std::size_t j = 0; j < pos.size(); ++j) p[j] = std::sqrt(pos[j].weight) * pos[j].value(x);
  return p;
}

double ModeDecomposition::reconstruct(double x, double y) const {
  double s = offset + alpha * x * y;
  for (const Mode& m : neg) s += m.weight * m.value(x) * m.value(y);
  for (const Mode& m : pos) s -= m.weight * m.value(x) * m.value(y);
  return s;
}

// ---------------------------------------------------------------------------
// Decomposition

ModeDecomposition fourier_decompose(const std::function<double(double)>& kernel, int K, double tol, int samples) {
  require(K >= 1, "K must be at least 1");
  require(tol > 0, "tolerance must be positive");
  require(samples >= 2 * K + 2, "need more kernel samples than 2K + 1");
  std::vector<double> w(samples);
  for (int i = 0; i < samples; ++i) {
    w[i] = kernel(kTwoPi * i / samples);
    require(std::isfinite(w[i]), "kernel values must be finite");
  }
  // Trapezoid rule is exact for trigonometric polynomials of degree < samples/2.
  std::vector<double> coef(static_cast<std::size_t>(K) + 1, 0.0);
  for (int k = 0; k <= K; ++k) {
    double s = 0.0;
    for (int i = 0; i < samples; ++i) s += w[i] * std::cos(k * kTwoPi * i / samples);
    coef[k] = (k == 0 ? 1.0 : 2.0) * s / samples;
  }
  ModeDecomposition d = from_coefficients(coef, K);
  // Residual on a staggered grid so the check does not reuse the fit nodes.
  double residual = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double theta = kTwoPi * (i + 0.5) / samples;
    residual = std::max(residual, std::abs(kernel(theta) - d.reconstruct(theta, 0.0)));
  }
  d.residual = residual;
  if (residual >= tol)
    fail(ErrorCode::TruncationTooCoarse, "truncation at K = " + std::to_string(K) + " leaves residual " +
                                             std::to_string(residual) + " >= tol");
  return d;
}

ModeDecomposition fourier_decompose(const std::vector<double>& coefficients, int K, double tol) {
  require(K >= 1, "K must be at least 1");
  require(tol > 0, "tolerance must be positive");
  for (double c : coefficients) require(std::isfinite(c), "coefficients must be finite");
  ModeDecomposition d = from_coefficients(coefficients, K);
  double dropped = 0.0;
  for (std::size_t k = static_cast<std::size_t>(K) + 1; k < coefficients.size(); ++k)
    dropped += std::abs(coefficients[k]);
  d.residual = dropped;
  if (dropped >= tol)
    fail(ErrorCode::TruncationTooCoarse, "dropped coefficients sum to " + std::to_string(dropped) + " >= tol");
  return d;
}

ModeDecomposition xy_decomposition() { return fourier_decompose(std::vector<double>{0.0, 1.0}, 1, 1e-12); }

// ---------------------------------------------------------------------------
// Renormalised potential

FixedPointResult solve_fixed_point(const ModeField& zeta, double T, const ModeDecomposition& decomp,
                                   const LineMeasure& measure) {
  require_temperature(T);
  require_field(zeta, decomp);
  const TiltedSample q = tilted(zeta, T, decomp, measure);
  const std::size_t n = q.x.size();
  const std::size_t np = decomp.pos.size();

  FixedPointResult fp;
  fp.x = q.x;
  fp.tilted = q.p;
  fp.log_z_tilted = q.log_z;
  Eigen::MatrixXd p(n, np);
  for (std::size_t i = 0; i < n; ++i) p.row(static_cast<Eigen::Index>(i)) = decomp.pos_features(q.x[i]);

  auto means = [&](const std::vector<double>& rho) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(np));
    for (std::size_t i = 0; i < n; ++i) m += rho[i] * p.row(static_cast<Eigen::Index>(i)).transpose();
    return m;
  };
  auto gibbs = [&](const Eigen::VectorXd& m) {
    std::vector<double> log_f(n), out(n);
    for (std::size_t i = 0; i < n; ++i) log_f[i] = -p.row(static_cast<Eigen::Index>(i)).dot(m) / T;
    const double log_norm = log_sum(q.p, log_f);
    for (std::size_t i = 0; i < n; ++i) out[i] = q.p[i] * std::exp(log_f[i] - log_norm);
    return out;
  };

  std::vector<double> rho = q.p;
  if (np > 0) {
    double step = 0.5;
    double previous = std::numeric_limits<double>::infinity();
    bool converged = false;
    for (int it = 1; it <= kMaxIterations; ++it) {
      const std::vector<double> update = gibbs(means(rho));
      double residual = 0.0;
      for (std::size_t i = 0; i < n; ++i) residual += std::abs(update[i] - rho[i]);
      fp.iterations = it;
      fp.residual = residual;
      if (residual < kFixedPointTol) {
        rho = update;
        converged = true;
        break;
      }
      if (residual > previous) step *= 0.5;
      previous = residual;
      for (std::size_t i = 0; i < n; ++i) rho[i] = (1 - step) * rho[i] + step * update[i];
    }
    if (!converged)
      fail(ErrorCode::FixedPointDiverged,
           "damped iteration did not contract in 500 steps; last L1 residual " + std::to_string(fp.residual));
  }
  fp.rho = std::move(rho);
  fp.pos_means = means(fp.rho);
  fp.value = bracket_value(fp, fp.rho, T, decomp);
  return fp;
}

double bracket_value(const FixedPointResult& fp, const std::vector<double>& rho, double T,
                     const ModeDecomposition& decomp) {
  require(rho.size() == fp.x.size(), "rho must live on the fixed point's grid");
  double entropy = 0.0;
  Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(decomp.pos.size()));
  for (std::size_t i = 0; i < rho.size(); ++i) {
    if (rho[i] > 0) entropy += rho[i] * std::log(rho[i] / fp.tilted[i]);
    if (m.size() > 0) m += rho[i] * decomp.pos_features(fp.x[i]);
  }
  return entropy - fp.log_z_tilted + m.squaredNorm() / (2 * T);
}

double u_limit(const ModeField& zeta, double T, const ModeDecomposition& decomp, const LineMeasure& measure) {
  require_temperature(T);
  require_field(zeta, decomp);
  if (decomp.pos.empty()) return -tilted(zeta, T, decomp, measure).log_z;
  return solve_fixed_point(zeta, T, decomp, measure).value;
}

double v_renorm(const ModeField& zeta, double T, const ModeDecomposition& decomp, const LineMeasure& measure) {
  return zeta.squaredNorm() / (2 * T) + u_limit(zeta, T, decomp, measure);
}

Eigen::MatrixXd hessian_v_renorm(const ModeField& zeta, double T, const ModeDecomposition& decomp,
                                 const LineMeasure& measure) {
  require_temperature(T);
  require_field(zeta, decomp);
  if (!decomp.pos.empty()) fail(ErrorCode::Unsupported, "closed-form Hessian needs W^+ = 0");
  const TiltedSample s = tilted(zeta, T, decomp, measure);
  const auto d = static_cast<Eigen::Index>(decomp.dimension());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    const Eigen::VectorXd g = decomp.features(s.x[i]);
    mean += s.p[i] * g;
    second.noalias() += s.p[i] * g * g.transpose();
  }
  Eigen::MatrixXd cov = second - mean * mean.transpose();
  cov = (0.5 * (cov + cov.transpose())).eval();
  return Eigen::MatrixXd::Identity(d, d) / T - cov / (T * T);
}

// ---------------------------------------------------------------------------
// Scans and infima

ConvexityScan strong_convexity_scan(double T, const ModeDecomposition& decomp, const LineMeasure& measure, double lo,
                                    double hi, int grid, std::optional<double> radius) {
  require_temperature(T);
  if (decomp.dimension() == 0) fail(ErrorCode::NoModes, "decomposition has no attractive modes to scan");
  if (decomp.neg.size() > 3) fail(ErrorCode::TooManyModes, "convexity scan supports at most 3 neg modes");
  require(hi > lo, "scan box must have hi > lo");
  require(grid >= 2, "scan grid needs at least 2 points per axis");
  const auto d = static_cast<int>(decomp.dimension());

  ConvexityScan scan;
  scan.lambda_hat = std::numeric_limits<double>::infinity();
  std::vector<int> index(d, 0);
  ModeField zeta(d);
  while (true) {
    for (int j = 0; j < d; ++j) zeta[j] = lo + (hi - lo) * index[j] / (grid - 1);
    if (!radius || zeta.norm() <= *radius + 1e-12) {
      const Eigen::MatrixXd h = hessian_v_renorm(zeta, T, decomp, measure);
      const double eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h, Eigen::EigenvaluesOnly).eigenvalues()[0];
      std::vector<double> row(zeta.data(), zeta.data() + d);
      row.push_back(eig);
      scan.rows.push_back(std::move(row));
      if (eig < scan.lambda_hat) {
        scan.lambda_hat = eig;
        scan.argmin = zeta;
      }
    }
    int j = 0;
    while (j < d && ++index[j] == grid) index[j++] = 0;
    if (j == d) break;
  }
  return scan;
}

FreeEnergyInfimum free_energy_infimum(double T, const ModeDecomposition& decomp, const LineMeasure& measure) {
  require_temperature(T);
  const auto d = static_cast<Eigen::Index>(decomp.dimension());
  FreeEnergyInfimum best;
  best.argmin = ModeField::Zero(d);
  best.value = v_renorm(best.argmin, T, decomp, measure);
  if (d == 0) return best;

  // grad V = (zeta - E_rho[g]) / T at the minimiser rho of the bracket.
  auto mean_feature = [&](const ModeField& zeta) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(d);
    if (decomp.pos.empty()) {
      const TiltedSample s = tilted(zeta, T, decomp, measure);
      for (std::size_t i = 0; i < s.x.size(); ++i) m += s.p[i] * decomp.features(s.x[i]);
    } else {
      const FixedPointResult fp = solve_fixed_point(zeta, T, decomp, measure);
      for (std::size_t i = 0; i < fp.x.size(); ++i) m += fp.rho[i] * decomp.features(fp.x[i]);
    }
    return m;
  };

  std::vector<ModeField> starts;
  starts.push_back(ModeField::Constant(d, 1e-3));
  for (double s : {0.5, 2.0}) {
    for (Eigen::Index j = 0; j < d; ++j) {
      ModeField e = ModeField::Zero(d);
      e[j] = s;
      starts.push_back(e);
      starts.push_back(-e);
    }
  }

  for (ModeField zeta : starts) {
    double value = v_renorm(zeta, T, decomp, measure);
    for (int it = 0; it < 200; ++it) {
      const Eigen::VectorXd grad = (zeta - mean_feature(zeta)) / T;
      if (grad.norm() < 1e-12) break;
      Eigen::VectorXd direction = -T * grad;
      if (decomp.pos.empty()) {
        const Eigen::MatrixXd h = hessian_v_renorm(zeta, T, decomp, measure);
        Eigen::LLT<Eigen::MatrixXd> llt(h);
        if (llt.info() == Eigen::Success) {
          const Eigen::VectorXd newton = -llt.solve(grad);
          if (newton.dot(grad) < 0) direction = newton;
        }
      }
      double t = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
        const ModeField trial = zeta + t * direction;
        const double v = v_renorm(trial, T, decomp, measure);
        if (v <= value + 1e-4 * t * grad.dot(direction)) {
          zeta = trial;
          value = v;
          moved = true;
          break;
        }
      }
      if (!moved) break;
    }
    if (value < best.value) {
      best.value = value;
      best.argmin = zeta;
    }
  }
  return best;
}

UnGap un_small_n(const ModeField& zeta, double T, const ModeDecomposition& decomp, const LineMeasure& measure, int N,
                 UnOptions options) {
  require_temperature(T);
  require_field(zeta, decomp);
  require(N >= 1 && N <= 4, "un_small_n supports 1 <= N <= 4");
  require(decomp.pos.size() <= 1, "un_small_n supports at most one W^+ mode");
  require(decomp.dimension() <= 16, "un_small_n supports at most 16 coordinates");
  require(options.grid >= 2, "grid must have at least 2 points");

  const TiltedSample base = measure.grid(options.grid);
  const std::size_t n = base.x.size();
  if (std::pow(static_cast<double>(n), N) > options.budget)
    fail(ErrorCode::GridExplosion, std::to_string(n) + "^" + std::to_string(N) + " quadrature points exceed budget");

  const std::size_t d = decomp.dimension();
  const bool has_pos = !decomp.pos.empty();
  std::vector<double> g(n * d), p(n, 0.0), dot(n), norm2(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd gi = decomp.features(base.x[i]);
    for (std::size_t j = 0; j < d; ++j) g[i * d + j] = gi[static_cast<Eigen::Index>(j)];
    dot[i] = zeta.dot(gi) / T;
    norm2[i] = gi.squaredNorm();
    if (has_pos) p[i] = decomp.pos_features(base.x[i])[0];
  }

  const double inv = 1.0 / (2 * T * N);
  // Upper bounds on the exponents keep every term <= 1.
  const double max_norm2 = *std::max_element(norm2.begin(), norm2.end());
  const double max_dot = *std::max_element(dot.begin(), dot.end());
  const double shift_z = N * max_norm2 / (2 * T);
  const double shift_num = N * max_dot;

  double sum_z = 0.0, sum_num = 0.0;
  std::size_t evaluations = 0;
  std::array<double, 16> s{};
  // Recursion over particles with running sums of features.
  auto visit = [&](auto&& self, int depth, double weight, double dot_sum, double p_sum) -> void {
    for (std::size_t i = 0; i < n; ++i) {
      const double w = weight * base.p[i];
      for (std::size_t j = 0; j < d; ++j) s[j] += g[i * d + j];
      const double ds = dot_sum + dot[i];
      const double ps = p_sum + p[i];
      if (depth + 1 == N) {
        double sq = 0.0;
        for (std::size_t j = 0; j < d; ++j) sq += s[j] * s[j];
        const double w_plus = ps * ps * inv;
        sum_z += w * std::exp(sq * inv - w_plus - shift_z);
        if (has_pos) sum_num += w * std::exp(ds - w_plus - shift_num);
        ++evaluations;
      } else {
        self(self, depth + 1, w, ds, ps);
      }
      for (std::size_t j = 0; j < d; ++j) s[j] -= g[i * d + j];
    }
  };
  visit(visit, 0, 1.0, 0.0, 0.0);
  if (!(sum_z > 0) || (has_pos && !(sum_num > 0)))
    fail(ErrorCode::GridFailure, "tensor quadrature underflowed; reduce the field or temperature range");

  const double log_z = std::log(sum_z) + shift_z;
  double log_num;
  if (has_pos) {
    log_num = std::log(sum_num) + shift_num;
  } else {
    log_num = N * log_sum(base.p, dot);
  }

  UnGap out;
  out.u_n = -log_num / N + log_z / N;
  out.u_limit = u_limit(zeta, T, decomp, measure) - free_energy_infimum(T, decomp, measure).value;
  out.gap = out.u_n - out.u_limit;
  out.evaluations = evaluations;
  return out;
}

XyReport xy_check(double T) {
  require_temperature(T);
  static const LineMeasure uniform = build_measure(PotentialSpec::periodic_fourier({0.0}), 1e-10);
  const ModeDecomposition xy = xy_decomposition();
  XyReport r;
  r.temperature = T;
  r.bound = 1 / T - 1 / (2 * T * T);
  r.measured_min_eig = strong_convexity_scan(T, xy, uniform, -6.0, 6.0, 41, 6.0).lambda_hat;
  r.convex = r.measured_min_eig > 0;
  return r;
}

}  // namespace mflsi
