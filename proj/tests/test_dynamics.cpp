#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "mflsi/dynamics.hpp"
#include "mflsi/error.hpp"
#include "mflsi/renormalized.hpp"

using namespace mflsi;

namespace {

void expect_code(ErrorCode code, const std::function<void()>& f) {
  try {
    f();
    FAIL() << "expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

SimConfig gaussian_complete(double T, int n) {
  SimConfig c;
  c.n_particles = n;
  c.temperature = T;
  c.potential = PotentialSpec::gaussian(1.0);
  c.topology = Topology::Complete;
  return c;
}

}  // namespace

TEST(Drift, VanishesAtOriginForEvenPotential) {
  SimConfig c = gaussian_complete(1.5, 7);
  c.potential = PotentialSpec::quartic(1.0);
  std::vector<double> x(7, 0.0), f(7);
  drift(x, c, f);
  for (double v : f) EXPECT_EQ(v, 0.0);
}

TEST(Drift, GaussianCompleteSubstitution) {
  const SimConfig c = gaussian_complete(2.0, 10);
  std::vector<double> x(10, 1.0), f(10);
  drift(x, c, f);
  for (double v : f) EXPECT_NEAR(v, -0.5, 1e-15);
}

TEST(Drift, K4GraphMatchesCompleteOnZeroSum) {
  SimConfig complete = gaussian_complete(1.3, 4);
  SimConfig graph = complete;
  graph.topology = Topology::Graph;
  graph.graph = std::make_shared<GraphInstance>(complete_graph(4));
  std::vector<double> x{0.7, -0.2, 1.1, -1.6}, a(4), b(4);
  drift(x, complete, a);
  drift(x, graph, b);
  // On sum x = 0: (1/(3T)) sum_{j != i} x_j = -x_i/(3T) and (1/(4T)) sum_j x_j = 0,
  // so the graph drift carries the extra -x_i/(3T).
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(b[i], a[i] - x[i] / (3 * 1.3), 1e-14);
}

TEST(Drift, ModesMatchEnergyGradient) {
  SimConfig c;
  c.n_particles = 5;
  c.temperature = 0.8;
  c.potential = PotentialSpec::periodic_fourier({0.0, 0.3});
  c.topology = Topology::Modes;
  c.modes = std::make_shared<ModeDecomposition>(
      fourier_decompose(std::vector<double>{0.0, 1.0, -0.4}, 2, 1e-12));
  // H(x) = sum V(x_i) + (1/(2NT)) sum_ij W(x_i, x_j), W(x, y) = -(cos(x - y) - 0.4 cos 2(x - y)).
  auto energy = [&](const std::vector<double>& x) {
    double e = 0.0;
    for (double v : x) e += 0.3 * std::cos(v);
    for (double a : x)
      for (double b : x) e -= (std::cos(a - b) - 0.4 * std::cos(2 * (a - b))) / (2 * 5 * 0.8);
    return e;
  };
  std::vector<double> x{0.3, 1.9, 4.0, 5.5, 2.2}, f(5);
  drift(x, c, f);
  for (int i = 0; i < 5; ++i) {
    auto hi = x, lo = x;
    hi[i] += 1e-5;
    lo[i] -= 1e-5;
    EXPECT_NEAR(f[i], -(energy(hi) - energy(lo)) / 2e-5, 1e-8) << i;
  }
}

TEST(Simulate, OrnsteinUhlenbeckVariance) {
  SimConfig c = gaussian_complete(1.0, 4);
  c.topology = Topology::None;
  c.dt = 5e-3;
  c.n_steps = 400'000;
  c.burn_in = 2'000;
  c.thinning = 20;
  const SimResult r = simulate(c);
  // Coordinate 0 alone: chi of a single coordinate is its second moment.
  std::vector<double> first;
  for (std::size_t f = 0; f < r.frames(); ++f) first.push_back(r.states[0][f * 4]);
  const Susceptibility s = susceptibility(first, 1);
  // Euler-Maruyama stationary variance is 1 / (1 - dt/2).
  EXPECT_NEAR(s.chi, 1.0, 3 * s.stderr_ + 3e-3);
}

TEST(Simulate, GaussianSusceptibility) {
  SimConfig c = gaussian_complete(2.0, 100);
  c.dt = 2e-3;
  c.n_steps = 100'000;
  c.burn_in = 5'000;
  c.thinning = 10;
  c.seed = 21;
  const EstimatorReport r = estimate(simulate(c, SampleMode::Magnetisation));
  EXPECT_NEAR(r.chi, 2.0, 3 * r.chi_stderr);
  EXPECT_DOUBLE_EQ(r.gap_upper_chi, 1.0 / r.chi);
}

TEST(Simulate, SeedDeterminism) {
  SimConfig c = gaussian_complete(1.5, 20);
  c.potential = PotentialSpec::quartic(0.5);
  c.n_steps = 2'000;
  c.burn_in = 100;
  c.replicas = 3;
  c.seed = 99;
  const SimResult a = simulate(c), b = simulate(c);
  ASSERT_EQ(a.states.size(), 3u);
  for (int r = 0; r < 3; ++r) {
    ASSERT_EQ(a.states[r].size(), b.states[r].size());
    EXPECT_EQ(std::memcmp(a.states[r].data(), b.states[r].data(), a.states[r].size() * sizeof(double)), 0);
  }
  EXPECT_NE(a.states[0], a.states[1]);
  c.seed = 100;
  EXPECT_NE(simulate(c).states[0], a.states[0]);
}

TEST(Simulate, CoupledNoiseAcrossStepSizes) {
  SimConfig coarse = gaussian_complete(2.0, 10);
  coarse.dt = 2e-3;
  coarse.n_steps = 20'000;
  coarse.burn_in = 1'000;
  coarse.thinning = 10;
  coarse.noise_substeps = 2;
  SimConfig fine = coarse;
  fine.dt = 1e-3;
  fine.n_steps *= 2;
  fine.burn_in *= 2;
  fine.thinning *= 2;
  fine.noise_substeps = 1;
  const auto a = simulate(coarse, SampleMode::Magnetisation).magnetisation[0];
  const auto b = simulate(fine, SampleMode::Magnetisation).magnetisation[0];
  ASSERT_EQ(a.size(), b.size());
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  EXPECT_LT(diff, 0.02);
}

TEST(Simulate, CircleStatesAreWrapped) {
  SimConfig c;
  c.n_particles = 6;
  c.temperature = 0.7;
  c.potential = PotentialSpec::periodic_fourier({0.0});
  c.topology = Topology::Modes;
  c.modes = std::make_shared<ModeDecomposition>(xy_decomposition());
  c.n_steps = 5'000;
  c.burn_in = 10;
  c.dt = 1e-2;
  const SimResult r = simulate(c);
  for (double v : r.states[0]) {
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 2 * std::numbers::pi);
  }
  for (double m : r.magnetisation[0]) EXPECT_LE(std::abs(m), 1.0);
}

TEST(Simulate, QuarticMagnetisationNearMinimiser) {
  const LineMeasure m = build_measure(PotentialSpec::quartic(1.0, true), 1e-10);
  const double T = 0.6 * critical_temperature(m);
  const RenormTable tab = renorm_potential(m, T, default_phi_grid(m, T));
  const double m_plus = *std::max_element(tab.minimizers.begin(), tab.minimizers.end());
  SimConfig c;
  c.n_particles = 100;
  c.temperature = T;
  c.potential = PotentialSpec::quartic(1.0);
  c.dt = 2e-3;
  c.n_steps = 100'000;
  c.burn_in = 10'000;
  c.initial = m_plus;
  const EstimatorReport r = estimate(simulate(c, SampleMode::Magnetisation), true);
  EXPECT_NEAR(r.mean_magnetisation, m_plus, 0.05 * m_plus);
}

TEST(Simulate, BlowupAndWarning) {
  SimConfig c = gaussian_complete(1.0, 3);
  c.potential = PotentialSpec::quartic(0.0);
  c.dt = 0.5;
  c.initial = 10.0;
  c.n_steps = 100;
  c.burn_in = 0;
  expect_code(ErrorCode::NumericalBlowup, [&] { simulate(c); });
  c.initial = 0.0;
  c.dt = 0.2;
  c.n_steps = 2;
  try {
    const SimResult r = simulate(c);
    EXPECT_FALSE(r.warnings.empty());
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NumericalBlowup);
  }
}

TEST(Simulate, RejectsBadConfig) {
  SimConfig c = gaussian_complete(1.0, 3);
  c.burn_in = c.n_steps;
  expect_code(ErrorCode::InvalidArgument, [&] { simulate(c); });
  c = gaussian_complete(1.0, 3);
  c.topology = Topology::Graph;
  expect_code(ErrorCode::InvalidArgument, [&] { simulate(c); });
}

TEST(Estimators, Susceptibility) {
  std::vector<double> zeros(200, 0.0);
  const Susceptibility s = susceptibility(zeros, 10);
  EXPECT_EQ(s.chi, 0.0);
  EXPECT_TRUE(s.degenerate);
  expect_code(ErrorCode::InsufficientSamples, [] { susceptibility(std::vector<double>(99, 1.0), 4); });
  std::vector<double> ones(100, 0.5);
  EXPECT_DOUBLE_EQ(susceptibility(ones, 8).chi, 2.0);
  EXPECT_DOUBLE_EQ(susceptibility(ones, 8, true).chi, 0.0);
}

TEST(Estimators, PlateauContracts) {
  std::vector<double> one_well(500, 1.3);
  expect_code(ErrorCode::SingleWellOnly, [&] { plateau_gap_bound(one_well, 50, 1.4, 0.2, 0.0, false); });
  expect_code(ErrorCode::InvalidArgument, [&] { plateau_gap_bound(one_well, 50, 1.0, 0.7); });
  // All samples on the plateaus: no window visits, bound 0 with a positive stderr.
  const PlateauResult p = plateau_gap_bound(one_well, 50, 1.4, 0.2);
  EXPECT_EQ(p.flag, PlateauFlag::NoWindowVisits);
  EXPECT_EQ(p.bound, 0.0);
  EXPECT_GT(p.stderr_, 0.0);
}

TEST(Estimators, PlateauIsSignSymmetricAndScaleFree) {
  std::vector<double> m, neg;
  for (int i = 0; i < 400; ++i) {
    m.push_back(1.0 + 0.4 * std::sin(0.37 * i));
    neg.push_back(-m.back());
  }
  const PlateauResult a = plateau_gap_bound(m, 30, 1.2, 0.3);
  const PlateauResult b = plateau_gap_bound(neg, 30, 1.2, 0.3);
  const PlateauResult c = plateau_gap_bound(m, 30, 1.2, 0.3, 0.5);
  EXPECT_NEAR(a.bound, b.bound, 1e-15 * a.bound);
  EXPECT_EQ(a.bound, c.bound);
  // Window edge 0.9: f = m / 0.9 inside, grad^2 = 1 / (0.81 * 30).
  double win = 0.0, f2 = 0.0;
  for (double v : m) {
    const double f = std::clamp(v / 0.9, -1.0, 1.0);
    f2 += f * f;
    win += std::abs(v) < 0.9 ? 1.0 / (0.81 * 30) : 0.0;
  }
  EXPECT_NEAR(a.bound, win / f2, 1e-12 * a.bound);
}

TEST(Estimators, GaussianControlPlateauIsNotSmall) {
  // Small N so that the mean reaches the artificial plateaus at +-0.9.
  SimConfig c = gaussian_complete(2.0, 4);
  c.dt = 2e-3;
  c.n_steps = 200'000;
  c.burn_in = 5'000;
  const SimResult r = simulate(c, SampleMode::Magnetisation);
  const EstimatorReport e = estimate(r);
  const PlateauResult p = plateau_gap_bound(pooled_magnetisation(r), 4, 1.0, 0.1);
  EXPECT_GT(p.bound, 0.1 * e.gap_upper_chi);
  EXPECT_LT(p.bound, 10 * e.gap_upper_chi);
}

TEST(Covariance, DegenerateSidesVanish) {
  CovariancePair constant_f{[](std::span<const double>) { return 2.0; },
                            [](std::span<const double>, std::span<double> g) { g[0] = 0.0; },
                            [](std::span<const double> x) { return x[0]; }, 1.0, "const F"};
  CovariancePair constant_h{[](std::span<const double> x) { return x[0] * std::exp(-x[0] * x[0] / 4); },
                            [](std::span<const double> x, std::span<double> g) {
                              g[0] = (1 - x[0] * x[0] / 2) * std::exp(-x[0] * x[0] / 4);
                            },
                            [](std::span<const double>) { return 3.0; }, 0.0, "const H"};
  const CovarianceReport r = covariance_check({constant_f, constant_h}, 1, 20'000, 5);
  EXPECT_EQ(r.rows[0].ratio, 0.0);
  EXPECT_EQ(r.rows[1].ratio, 0.0);
  EXPECT_TRUE(r.holds);
}

TEST(Covariance, WindowedCoordinateAgainstCoordinate) {
  CovariancePair p{[](std::span<const double> x) { return x[0] * std::exp(-x[0] * x[0] / 8); },
                   [](std::span<const double> x, std::span<double> g) {
                     g[0] = (1 - x[0] * x[0] / 4) * std::exp(-x[0] * x[0] / 8);
                   },
                   [](std::span<const double> x) { return x[0]; }, 1.0, "x window / x"};
  const CovarianceReport r = covariance_check({p}, 1, 200'000, 17);
  EXPECT_LE(r.rows[0].ratio, 1.0 + 5 * r.rows[0].ratio_stderr);
}

TEST(Covariance, RandomPairsHold) {
  const CovarianceReport r = covariance_bound_check(5, 3, 100'000);
  EXPECT_EQ(r.rows.size(), 10u);
  EXPECT_TRUE(r.holds) << r.worst_ratio;
}

TEST(Output, BinaryAndCsvFrames) {
  SimConfig c = gaussian_complete(1.0, 2);
  c.burn_in = 10;
  c.thinning = 5;
  c.seed = 77;
  std::vector<double> frames{0.25, -1.5, 3.0, 0.1};
  std::ostringstream bin;
  write_binary_frames(bin, c, frames);
  const std::string b = bin.str();
  ASSERT_EQ(b.size(), 8u + 5 * 8 + 4 * 8);
  EXPECT_EQ(b.substr(0, 8), "MFLSIBIN");
  double last;
  std::memcpy(&last, b.data() + b.size() - 8, 8);
  EXPECT_EQ(last, 0.1);
  std::ostringstream csv;
  write_csv_frames(csv, c, frames);
  EXPECT_EQ(csv.str(), "step,x_0,x_1\n15,0.25,-1.5\n20,3,0.10000000000000001\n");
}
