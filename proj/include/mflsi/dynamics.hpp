#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mflsi/graphs.hpp"
#include "mflsi/modes.hpp"
#include "mflsi/quad1d.hpp"

namespace mflsi {

/// None: independent particles. Complete: W(x, y) = -xy. Graph: the coupling
/// (x, A x) / (2 T d_eff). Modes: the interaction of a ModeDecomposition.
enum class Topology { None, Complete, Graph, Modes };

struct SimConfig {
  int n_particles = 100;
  double temperature = 1.0;
  double dt = 1e-3;
  long long n_steps = 10'000;  // total, burn-in included
  long long burn_in = 1'000;
  int thinning = 10;
  int replicas = 1;
  std::uint64_t seed = 0;
  Topology topology = Topology::Complete;
  std::shared_ptr<const GraphInstance> graph;
  std::shared_ptr<const ModeDecomposition> modes;
  PotentialSpec potential = PotentialSpec::gaussian(1.0);
  /// Every coordinate starts here.
  double initial = 0.0;
  /// Each step sums this many unit Brownian increments of length dt/s. A run
  /// with (dt, s = 2) and one with (dt/2, s = 1) share the same noise path.
  int noise_substeps = 1;
};

/// Throws InvalidArgument on inconsistent fields.
void validate(const SimConfig& config);

/// Upper estimate of the drift Lipschitz constant, used by the dt guard.
double stiffness_estimate(const SimConfig& config);

/// Drift of the particle system at `state`.
void drift(std::span<const double> state, const SimConfig& config, std::span<double> out);

enum class SampleMode { States, Magnetisation };

struct SimResult {
  int n = 0;
  /// Per replica: thinned post-burn-in frames, n values each (States mode).
  std::vector<std::vector<double>> states;
  /// Per replica: empirical mean of the observable per thinned frame
  /// (x on the real line, cos x on the circle).
  std::vector<std::vector<double>> magnetisation;
  std::vector<std::string> warnings;

  std::size_t frames(std::size_t replica = 0) const { return magnetisation.at(replica).size(); }
};

/// Euler-Maruyama. Replica r uses its own stream seeded by (seed, r).
/// Throws NumericalBlowup if a coordinate leaves [-1e6, 1e6] or turns non-finite.
SimResult simulate(const SimConfig& config, SampleMode mode = SampleMode::States);

/// Magnetisation series flattened across replicas, in replica order.
std::vector<double> pooled_magnetisation(const SimResult& result);

struct Susceptibility {
  double chi = 0.0;
  double stderr_ = 0.0;
  std::size_t samples = 0;
  bool degenerate = false;  // every sample had zero magnetisation
};

/// chi = mean of N m^2 over the samples (N (m - mean m)^2 when centred), with
/// a 20-batch-means standard error. Needs at least 100 samples.
Susceptibility susceptibility(std::span<const double> magnetisation, int n, bool centred = false);

struct EstimatorReport {
  double chi = 0.0;
  double chi_stderr = 0.0;
  double mean_magnetisation = 0.0;
  double abs_magnetisation = 0.0;
  double gap_upper_chi = 0.0;
  std::optional<double> gap_upper_plateau;
  std::size_t samples_used = 0;
};

EstimatorReport estimate(const SimResult& result, bool centred = false);

enum class PlateauFlag { Ok, NoWindowVisits };

struct PlateauResult {
  double bound = 0.0;
  double stderr_ = 0.0;
  double window_fraction = 0.0;
  std::size_t samples = 0;
  PlateauFlag flag = PlateauFlag::Ok;
};

/// Rayleigh quotient E|grad F|^2 / Var F for F = f(mean x), f = +-1 beyond
/// +-(m_plus - delta) and linear in between. The plateau height e^{rN}
/// cancels in the quotient, so r only enters through its precondition.
/// With `symmetrise` each sample is pooled with its negation, which is exact
/// for even V. Throws SingleWellOnly when one plateau is never visited. With
/// no window visits the bound is 0 and stderr holds a rule-of-three upper
/// estimate.
PlateauResult plateau_gap_bound(std::span<const double> magnetisation, int n, double m_plus, double delta,
                                double r = 0.0, bool symmetrise = true);

struct CovariancePair {
  std::function<double(std::span<const double>)> f;
  std::function<void(std::span<const double>, std::span<double>)> grad_f;
  std::function<double(std::span<const double>)> h;
  double sup_grad_h_sq = 0.0;
  std::string label;
};

struct CovarianceRow {
  std::string label;
  double lhs = 0.0;    // cov(F^2, H)^2
  double rhs = 0.0;    // 4 sup|grad H|^2 E[F^2] E|grad F|^2
  double ratio = 0.0;  // lhs / rhs, 0 when both vanish
  double ratio_stderr = 0.0;
  bool holds = true;   // ratio <= 1 + 5 stderr
};

struct CovarianceReport {
  int n = 0;
  std::size_t samples = 0;
  std::vector<CovarianceRow> rows;
  double worst_ratio = 0.0;
  bool holds = true;
};

/// Monte-Carlo check of cov(F^2, H)^2 <= 4 sup|grad H|^2 E[F^2] E|grad F|^2
/// under the standard Gaussian on R^n (log-Sobolev constant 1).
CovarianceReport covariance_check(const std::vector<CovariancePair>& pairs, int n, std::size_t samples,
                                  std::uint64_t seed);

/// Ten random pairs: Gaussian-windowed quadratics F against coordinate sums
/// and clipped linear H. n <= 20.
CovarianceReport covariance_bound_check(int n, std::uint64_t seed, std::size_t samples = 1'000'000);

/// Global cap on worker threads (0 = hardware concurrency).
void set_max_threads(int threads);
int max_threads();

std::string to_string(Topology topology);

/// Binary frames: header "MFLSIBIN" then int64 n, frames; f64 T, dt; u64 seed;
/// then little-endian f64 frames of n values.
void write_binary_frames(std::ostream& os, const SimConfig& config, std::span<const double> frames);
/// CSV `step,x_0,...` (n <= 64); step counts thinned frames from burn-in.
void write_csv_frames(std::ostream& os, const SimConfig& config, std::span<const double> frames);

}  // namespace mflsi
