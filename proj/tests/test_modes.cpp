#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "mflsi/error.hpp"
#include "mflsi/modes.hpp"
#include "mflsi/renormalized.hpp"
#include "oracles.hpp"

using namespace mflsi;

namespace {

const LineMeasure& uniform() {
  static const LineMeasure m = build_measure(PotentialSpec::periodic_fourier({0.0}), 1e-10);
  return m;
}

ModeField field(std::initializer_list<double> v) {
  ModeField z(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) z[i++] = x;
  return z;
}

void expect_code(ErrorCode code, const std::function<void()>& f) {
  try {
    f();
    FAIL() << "expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

// Circle-quadrature inner product (1/pi) int w(t) cos(k t) dt on a fine
// midpoint grid, independent of the library's decomposition.
double cosine_coefficient(const std::function<double(double)>& w, int k) {
  const int n = 20000;
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = 2 * std::numbers::pi * (i + 0.5) / n;
    s += w(t) * std::cos(k * t);
  }
  return s * 2 * std::numbers::pi / n / std::numbers::pi;
}

}  // namespace

TEST(FourierDecompose, CosineKernelIsXy) {
  const auto d = fourier_decompose([](double t) { return std::cos(t); }, 1, 1e-10);
  ASSERT_EQ(d.neg.size(), 2u);
  EXPECT_TRUE(d.pos.empty());
  EXPECT_EQ(d.neg[0].kind, ModeKind::Cos);
  EXPECT_EQ(d.neg[1].kind, ModeKind::Sin);
  EXPECT_NEAR(d.neg[0].weight, 1.0, 1e-14);
  EXPECT_NEAR(d.neg[1].weight, 1.0, 1e-14);
  EXPECT_LT(d.residual, 1e-13);
}

TEST(FourierDecompose, ZeroKernel) {
  const auto d = fourier_decompose([](double) { return 0.0; }, 3, 1e-10);
  EXPECT_TRUE(d.neg.empty());
  EXPECT_TRUE(d.pos.empty());
  EXPECT_EQ(d.m_bound, 0.0);
  EXPECT_EQ(d.l_bound, 0.0);
}

TEST(FourierDecompose, MixedSignKernel) {
  auto w = [](double t) { return std::cos(t) - 0.3 * std::cos(2 * t); };
  const auto d = fourier_decompose(w, 2, 1e-10);
  ASSERT_EQ(d.neg.size(), 2u);
  ASSERT_EQ(d.pos.size(), 2u);
  EXPECT_NEAR(d.neg[0].weight, cosine_coefficient(w, 1), 1e-12);
  EXPECT_NEAR(d.pos[0].weight, -cosine_coefficient(w, 2), 1e-12);
  EXPECT_NEAR(d.pos[0].weight, 0.3, 1e-12);
  EXPECT_EQ(d.pos[0].k, 2);
  EXPECT_LT(d.residual, 1e-12);
  EXPECT_NEAR(d.m_bound, 1.3, 1e-12);
}

TEST(FourierDecompose, TruncationTooCoarse) {
  auto w = [](double t) { return std::cos(t) + 0.2 * std::cos(3 * t); };
  expect_code(ErrorCode::TruncationTooCoarse, [&] { fourier_decompose(w, 2, 1e-3); });
  expect_code(ErrorCode::TruncationTooCoarse, [&] { fourier_decompose(std::vector<double>{0, 1, 0, 0.2}, 2, 1e-3); });
  EXPECT_NO_THROW(fourier_decompose(w, 3, 1e-10));
}

TEST(FourierDecompose, SmoothKernelTruncationResidual) {
  // exp(cos t) has coefficients 2 I_k(1), decaying super-exponentially.
  auto w = [](double t) { return std::exp(std::cos(t)); };
  const auto d = fourier_decompose(w, 10, 1e-8);
  EXPECT_NEAR(d.neg[0].weight, 2 * std::cyl_bessel_i(1.0, 1.0), 1e-12);
  EXPECT_NEAR(d.offset, oracle::bessel_i0(1.0), 1e-12);
}

TEST(ULimit, ZeroFieldIsZero) {
  const auto xy = xy_decomposition();
  EXPECT_NEAR(u_limit(field({0, 0}), 1.0, xy, uniform()), 0.0, 1e-14);
  EXPECT_NEAR(v_renorm(field({0, 0}), 1.0, xy, uniform()), 0.0, 1e-14);
}

TEST(ULimit, XyBesselOracle) {
  const auto xy = xy_decomposition();
  for (double z : {0.3, 1.0, 2.5, 6.0})
    EXPECT_NEAR(u_limit(field({z, 0}), 1.0, xy, uniform()), -std::log(oracle::bessel_i0(z)), 1e-8);
  EXPECT_NEAR(v_renorm(field({1, 0}), 1.0, xy, uniform()), 0.5 - std::log(oracle::bessel_i0(1.0)), 1e-8);
  // Rotation invariance.
  EXPECT_NEAR(v_renorm(field({0.6, 0.8}), 1.0, xy, uniform()), 0.5 - std::log(oracle::bessel_i0(1.0)), 1e-10);
}

TEST(ULimit, PositiveModeUniformFixedPoint) {
  ModeDecomposition d;
  d.pos.push_back(Mode::cos(0.5, 1));
  const auto fp = solve_fixed_point(ModeField(0), 1.0, d, uniform());
  for (double r : fp.rho) EXPECT_NEAR(r, 1.0 / fp.rho.size(), 1e-14);
  EXPECT_NEAR(fp.value, 0.0, 1e-14);
  EXPECT_NEAR(u_limit(ModeField(0), 1.0, d, uniform()), 0.0, 1e-14);
}

TEST(ULimit, PositiveModeWithField) {
  // W^- = cos(x - y), W^+ = 0.4 cos(2(x - y)).
  const auto d = fourier_decompose(std::vector<double>{0, 1, -0.4}, 2, 1e-12);
  const ModeField z = field({0.9, -0.3});
  const double T = 0.8;
  const auto fp = solve_fixed_point(z, T, d, uniform());
  EXPECT_LT(fp.residual, 1e-10);
  // Independent check of the self-consistency equation on the grid.
  double max_err = 0.0;
  std::vector<double> logs(fp.x.size());
  for (std::size_t i = 0; i < fp.x.size(); ++i)
    logs[i] = std::log(fp.rho[i] / fp.tilted[i]) + fp.pos_means.dot(d.pos_features(fp.x[i])) / T;
  for (double l : logs) max_err = std::max(max_err, std::abs(l - logs[0]));
  EXPECT_LT(max_err, 1e-8);
  // The repulsive term raises the value above the W^+ = 0 closed form.
  ModeDecomposition no_pos = d;
  no_pos.pos.clear();
  EXPECT_GT(fp.value, u_limit(z, T, no_pos, uniform()));
}

TEST(VRenorm, OneModeRealLineMatchesRenormPotential) {
  const auto m = build_measure(PotentialSpec::quartic(1.0), 1e-10);
  ModeDecomposition d;
  d.alpha = 1.0;
  const double T = 0.9;
  const std::vector<double> grid{-4, -1.3, -0.2, 0.0, 0.7, 2.1, 4};
  const auto table = renorm_potential(m, T, grid);
  for (std::size_t i = 0; i < grid.size(); ++i)
    EXPECT_NEAR(v_renorm(field({grid[i]}), T, d, m), table.v[i], 1e-8);
}

TEST(Hessian, XyAtOrigin) {
  const auto h = hessian_v_renorm(field({0, 0}), 1.0, xy_decomposition(), uniform());
  EXPECT_NEAR(h(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(h(1, 1), 0.5, 1e-12);
  EXPECT_NEAR(h(0, 1), 0.0, 1e-12);
  EXPECT_EQ(h(0, 1), h(1, 0));
}

TEST(Hessian, XyBoundAtT06) {
  const auto xy = xy_decomposition();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int i = 0; i < 30; ++i) {
    const auto h = hessian_v_renorm(field({u(rng), u(rng)}), 0.6, xy, uniform());
    const double eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h).eigenvalues()[0];
    EXPECT_GE(eig, 5.0 / 18.0 - 1e-10);
  }
}

TEST(Hessian, XyCriticalInfimumIsZero) {
  const auto scan = strong_convexity_scan(0.5, xy_decomposition(), uniform(), -3, 3, 13);
  EXPECT_NEAR(scan.lambda_hat, 0.0, 1e-3);
}

TEST(Hessian, UnsupportedWithPositiveModes) {
  const auto d = fourier_decompose(std::vector<double>{0, 1, -0.4}, 2, 1e-12);
  expect_code(ErrorCode::Unsupported, [&] { hessian_v_renorm(field({0, 0}), 1.0, d, uniform()); });
}

TEST(ConvexityScan, XyAboveAndBelowThreshold) {
  const auto xy = xy_decomposition();
  EXPECT_GE(strong_convexity_scan(0.75, xy, uniform(), -6, 6, 21, 6.0).lambda_hat, 4.0 / 9.0 - 1e-6);
  // Below T_c the radial direction at moderate |zeta| goes negative; the
  // oracle is the same covariance evaluated on a refined radial line.
  const auto scan = strong_convexity_scan(0.4, xy, uniform(), -6, 6, 21, 6.0);
  EXPECT_LT(scan.lambda_hat, 0.0);
  double refined = 1e9;
  for (int i = 0; i <= 200; ++i) {
    const auto h = hessian_v_renorm(field({0.03 * i, 0}), 0.4, xy, uniform());
    refined = std::min(refined, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h).eigenvalues()[0]);
  }
  EXPECT_LT(refined, 0.0);
  EXPECT_LE(refined, scan.lambda_hat + 1e-12);
}

TEST(ConvexityScan, Refusals) {
  expect_code(ErrorCode::NoModes, [] { strong_convexity_scan(1.0, ModeDecomposition{}, uniform(), -1, 1, 5); });
  const auto d = fourier_decompose(std::vector<double>{0, 1, 1}, 2, 1e-12);
  expect_code(ErrorCode::TooManyModes, [&] { strong_convexity_scan(1.0, d, uniform(), -1, 1, 3); });
}

TEST(XyCheck, Examples) {
  const auto a = xy_check(1.0);
  EXPECT_DOUBLE_EQ(a.bound, 0.5);
  EXPECT_TRUE(a.convex);
  EXPECT_GE(a.measured_min_eig, a.bound - 1e-6);
  EXPECT_DOUBLE_EQ(xy_check(0.5).bound, 0.0);
  const auto c = xy_check(0.4);
  EXPECT_DOUBLE_EQ(c.bound, -0.625);
  EXPECT_FALSE(c.convex);
  EXPECT_GE(c.measured_min_eig, c.bound - 1e-6);
}

TEST(UnSmallN, XySingleParticle) {
  const auto r = un_small_n(field({0, 0}), 1.0, xy_decomposition(), uniform(), 1);
  EXPECT_NEAR(r.u_n, 0.5, 1e-12);
  EXPECT_NEAR(r.u_limit, 0.0, 1e-10);
}

TEST(UnSmallN, XyTwoParticleClosedForm) {
  // |S|^2 = 2 + 2 cos(x1 - x2), so Z^2 = e^{1/2} I_0(1/2) at T = 1.
  const auto r = un_small_n(field({0.5, 0}), 1.0, xy_decomposition(), uniform(), 2, {.grid = 64});
  EXPECT_NEAR(r.gap, 0.5 * (0.5 + std::log(oracle::bessel_i0(0.5))), 1e-10);
}

TEST(UnSmallN, XyGapDecreasesWithN) {
  const auto xy = xy_decomposition();
  const ModeField z = field({0.5, 0});
  const double g1 = un_small_n(z, 1.0, xy, uniform(), 1, {.grid = 32}).gap;
  const double g2 = un_small_n(z, 1.0, xy, uniform(), 2, {.grid = 32}).gap;
  const double g4 = un_small_n(z, 1.0, xy, uniform(), 4, {.grid = 32}).gap;
  EXPECT_LT(std::abs(g2), std::abs(g1));
  EXPECT_LT(std::abs(g4), std::abs(g2));
}

TEST(UnSmallN, TanhModeMatchesMonteCarlo) {
  const auto m = build_measure(PotentialSpec::gaussian(1.0), 1e-10);
  ModeDecomposition d;
  d.neg.push_back(Mode::tanh(1.0));
  const double T = 1.0;
  const auto r = un_small_n(field({0}), T, d, m, 2, {.grid = 200});
  // U^2 = (1/2) log E[exp((tanh x1 + tanh x2)^2 / 4)] at psi = 0.
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g;
  const int samples = 10'000'000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double t = std::tanh(g(rng)) + std::tanh(g(rng));
    const double e = std::exp(t * t / (2 * T * 2));
    s += e;
    s2 += e * e;
  }
  const double mean = s / samples;
  const double se = std::sqrt((s2 / samples - mean * mean) / samples);
  // Delta method for (1/2) log.
  EXPECT_NEAR(r.u_n, 0.5 * std::log(mean), 3 * 0.5 * se / mean);
}

TEST(UnSmallN, GridExplosion) {
  expect_code(ErrorCode::GridExplosion,
              [] { un_small_n(field({0, 0}), 1.0, xy_decomposition(), uniform(), 4, {.grid = 129, .budget = 1e6}); });
}

TEST(UnSmallN, SinglePositiveModeMatchesDirectSum) {
  const auto d = fourier_decompose(std::vector<double>{0, 1, -0.4}, 2, 1e-12);
  const ModeField z = field({0.3, 0.1});
  const double T = 1.2;
  ModeDecomposition one_pos = d;
  one_pos.pos.resize(1);
  const int n = 24;
  const auto r = un_small_n(z, T, one_pos, uniform(), 2, {.grid = n});
  // Brute-force double sum on the same trapezoid grid.
  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double x = 2 * std::numbers::pi * i / n, y = 2 * std::numbers::pi * j / n;
      const double c = std::cos(x) + std::cos(y), s = std::sin(x) + std::sin(y);
      const double p = std::sqrt(0.4) * (std::cos(2 * x) + std::cos(2 * y));
      num += std::exp((z[0] * c + z[1] * s) / T - p * p / (4 * T));
      den += std::exp((c * c + s * s) / (4 * T) - p * p / (4 * T));
    }
  }
  EXPECT_NEAR(r.u_n, -0.5 * std::log(num / (n * n)) + 0.5 * std::log(den / (n * n)), 1e-12);
}

// Invariants

TEST(ModesProperties, HessianMatchesFiniteDifferences) {
  const auto d = fourier_decompose(std::vector<double>{0, 1, 0.5}, 2, 1e-12);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2, 2);
  const double T = 0.9, h = 1e-4;
  for (int trial = 0; trial < 10; ++trial) {
    ModeField z(4);
    for (int j = 0; j < 4; ++j) z[j] = u(rng);
    const auto H = hessian_v_renorm(z, T, d, uniform());
    EXPECT_LT((H - H.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) {
        ModeField ea = ModeField::Zero(4), eb = ModeField::Zero(4);
        ea[a] = h;
        eb[b] = h;
        const double fd = (v_renorm(z + ea + eb, T, d, uniform()) - v_renorm(z + ea - eb, T, d, uniform()) -
                           v_renorm(z - ea + eb, T, d, uniform()) + v_renorm(z - ea - eb, T, d, uniform())) /
                          (4 * h * h);
        EXPECT_NEAR(fd, H(a, b), 1e-5);
      }
    }
  }
}

TEST(ModesProperties, ConvexityImpliesSecantInequality) {
  const auto xy = xy_decomposition();
  const double T = 0.8;
  const double lambda = strong_convexity_scan(T, xy, uniform(), -4, 4, 17).lambda_hat;
  ASSERT_GT(lambda, 0.0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2, 2), s(0, 1);
  for (int i = 0; i < 100; ++i) {
    const ModeField a = field({u(rng), u(rng)}), b = field({u(rng), u(rng)});
    const double t = s(rng);
    const double lhs = v_renorm(t * a + (1 - t) * b, T, xy, uniform());
    const double rhs = t * v_renorm(a, T, xy, uniform()) + (1 - t) * v_renorm(b, T, xy, uniform()) -
                       0.5 * lambda * t * (1 - t) * (a - b).squaredNorm();
    EXPECT_LE(lhs, rhs + 1e-8);
  }
}

TEST(ModesProperties, LegendreDualityOneCircleMode) {
  ModeDecomposition d;
  d.neg.push_back(Mode::cos(1.0, 1));
  const double T = 0.7;
  std::vector<double> zgrid, vgrid;
  for (int i = 0; i <= 2000; ++i) {
    zgrid.push_back(-8 + 16.0 * i / 2000);
    vgrid.push_back(v_renorm(field({zgrid.back()}), T, d, uniform()));
  }
  // F(M) = sup_zeta { V(zeta) - (zeta - M)^2 / (2T) } on an M grid inside the
  // range reached by the zeta grid, then V(zeta) = inf_M { F(M) + (zeta - M)^2 / (2T) }.
  std::vector<double> mgrid, fgrid;
  for (int i = 0; i <= 1000; ++i) {
    const double M = -0.8 + 1.6 * i / 1000;
    double best = -1e300;
    for (std::size_t j = 0; j < zgrid.size(); ++j)
      best = std::max(best, vgrid[j] - (zgrid[j] - M) * (zgrid[j] - M) / (2 * T));
    mgrid.push_back(M);
    fgrid.push_back(best);
  }
  for (int i = 0; i <= 40; ++i) {
    const double z = -1.5 + 3.0 * i / 40;
    double best = 1e300;
    for (std::size_t j = 0; j < mgrid.size(); ++j)
      best = std::min(best, fgrid[j] + (z - mgrid[j]) * (z - mgrid[j]) / (2 * T));
    EXPECT_NEAR(best, v_renorm(field({z}), T, d, uniform()), 1e-4) << z;
  }
}

TEST(ModesProperties, FixedPointIsMinimiser) {
  const auto d = fourier_decompose(std::vector<double>{0, 1, -0.6}, 2, 1e-12);
  const double T = 0.7;
  const auto fp = solve_fixed_point(field({0.8, 0.4}), T, d, uniform());
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> dir(fp.rho.size());
    double mean = 0.0;
    for (double& v : dir) mean += (v = g(rng));
    mean /= static_cast<double>(dir.size());
    double scale = 1e300;
    for (std::size_t i = 0; i < dir.size(); ++i) {
      dir[i] -= mean;
      if (dir[i] < 0) scale = std::min(scale, -0.5 * fp.rho[i] / dir[i]);
    }
    std::vector<double> rho = fp.rho;
    for (std::size_t i = 0; i < rho.size(); ++i) rho[i] += scale * dir[i];
    EXPECT_GE(bracket_value(fp, rho, T, d), fp.value - 1e-10);
  }
}

TEST(ModesProperties, ReconstructionResidual) {
  auto w = [](double t) { return std::cos(t) - 0.3 * std::cos(2 * t) + 0.05 * std::cos(5 * t); };
  const double tol = 1e-9;
  const auto d = fourier_decompose(w, 5, tol);
  double worst = 0.0;
  for (int i = 0; i <= 100; ++i) {
    for (int j = 0; j <= 100; ++j) {
      const double x = 2 * std::numbers::pi * i / 100, y = 2 * std::numbers::pi * j / 100;
      worst = std::max(worst, std::abs(d.reconstruct(x, y) - w(x - y)));
    }
  }
  EXPECT_LE(worst, tol);
}

TEST(ModesProperties, BoundsAndModeRange) {
  const auto d = fourier_decompose(std::vector<double>{0, 1, 0.5, -0.2}, 3, 1e-12);
  double lsum = 0.0;
  for (const Mode& m : d.neg) {
    double sup_d = 0.0;
    for (int i = 0; i <= 4000; ++i) {
      const double x = 2 * std::numbers::pi * i / 4000;
      EXPECT_LE(std::abs(m.value(x)), 1.0);
      sup_d = std::max(sup_d, std::abs(m.derivative(x)));
    }
    lsum += m.weight * sup_d * sup_d;
  }
  EXPECT_LE(lsum, d.l_bound * d.l_bound + 1e-12);
  for (const Mode& m : d.pos) EXPECT_GE(m.weight, 0.0);
}
