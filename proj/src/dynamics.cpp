#include "mflsi/dynamics.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <thread>
#include <tuple>

#include "mflsi/error.hpp"

namespace mflsi {

namespace {

constexpr double kBlowup = 1e6;
constexpr int kBatches = 20;
constexpr std::size_t kMinSamples = 100;

std::atomic<int> g_max_threads{0};

// V' with the analytic kinds inlined; the hot loop calls this N times a step.
struct ConfiningForce {
  enum class Kind { Quartic, Gaussian, Generic } kind = Kind::Generic;
  double a = 0.0;
  const PotentialSpec* spec = nullptr;

  explicit ConfiningForce(const PotentialSpec& p) : spec(&p) {
    if (const auto* q = std::get_if<Quartic>(&p.kind())) {
      kind = Kind::Quartic;
      a = q->lambda;
    } else if (const auto* g = std::get_if<GaussianWell>(&p.kind())) {
      kind = Kind::Gaussian;
      a = g->curvature;
    }
  }

  double operator()(double x) const {
    switch (kind) {
      case Kind::Quartic: return x * x * x - a * x;
      case Kind::Gaussian: return a * x;
      case Kind::Generic: break;
    }
    return spec->derivative(x);
  }
};

std::mt19937_64 replica_stream(std::uint64_t seed, int replica) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(replica), 0x6d666cu};
  return std::mt19937_64(seq);
}

bool on_circle(const SimConfig& c) { return c.potential.domain() == Domain::Circle; }

double observable(double x, bool circle) { return circle ? std::cos(x) : x; }

// Contiguous batch boundaries for `count` items split into kBatches pieces.
std::size_t batch_edge(std::size_t b, std::size_t count) { return b * count / kBatches; }

template <class Stat>
double jackknife_stderr(const std::vector<std::vector<double>>& batch_sums, Stat&& stat) {
  const std::size_t k = batch_sums.size();
  std::vector<double> total(batch_sums[0].size(), 0.0);
  for (const auto& s : batch_sums)
    for (std::size_t j = 0; j < s.size(); ++j) total[j] += s[j];
  std::vector<double> leave(k);
  double mean = 0.0;
  for (std::size_t b = 0; b < k; ++b) {
    std::vector<double> rest = total;
    for (std::size_t j = 0; j < rest.size(); ++j) rest[j] -= batch_sums[b][j];
    leave[b] = stat(rest);
    mean += leave[b] / k;
  }
  double ss = 0.0;
  for (double v : leave) ss += (v - mean) * (v - mean);
  return std::sqrt((k - 1.0) / k * ss);
}

}  // namespace

void set_max_threads(int threads) { g_max_threads = std::max(0, threads); }

int max_threads() {
  const int cap = g_max_threads.load();
  const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return cap > 0 ? std::min(cap, hw) : hw;
}

std::string to_string(Topology topology) {
  switch (topology) {
    case Topology::None: return "none";
    case Topology::Complete: return "complete";
    case Topology::Graph: return "graph";
    case Topology::Modes: return "modes";
  }
  return "unknown";
}

void validate(const SimConfig& c) {
  require(c.n_particles >= 1, "n_particles must be positive");
  require(c.temperature > 0 && std::isfinite(c.temperature), "temperature must be positive");
  require(c.dt > 0 && std::isfinite(c.dt), "dt must be positive");
  require(c.n_steps >= 1, "n_steps must be positive");
  require(c.burn_in >= 0 && c.burn_in < c.n_steps, "burn_in must lie in [0, n_steps)");
  require(c.thinning >= 1, "thinning must be positive");
  require(c.replicas >= 1, "replicas must be positive");
  require(c.noise_substeps >= 1, "noise_substeps must be positive");
  require(std::isfinite(c.initial), "initial state must be finite");
  if (c.topology == Topology::Graph) {
    require(c.graph != nullptr, "graph topology needs a graph");
    require(c.graph->n() == c.n_particles, "graph size differs from n_particles");
    require(c.graph->d_eff() > 0, "graph topology needs d_eff > 0");
  }
  if (c.topology == Topology::Modes) require(c.modes != nullptr, "modes topology needs a mode decomposition");
  if (c.topology == Topology::Complete || c.topology == Topology::Graph)
    require(!on_circle(c), "the linear coupling needs a real-line potential");
}

double stiffness_estimate(const SimConfig& c) {
  double stiff = 0.0;
  const double lo = on_circle(c) ? 0.0 : -3.0 - std::abs(c.initial);
  const double hi = on_circle(c) ? 2 * std::numbers::pi : 3.0 + std::abs(c.initial);
  const int samples = 600;
  const double h = (hi - lo) / samples;
  for (int i = 0; i < samples; ++i) {
    const double x = lo + i * h;
    stiff = std::max(stiff, std::abs(c.potential.derivative(x + h) - c.potential.derivative(x)) / h);
  }
  const double T = c.temperature;
  switch (c.topology) {
    case Topology::None: break;
    case Topology::Complete: stiff += 1.0 / T; break;
    case Topology::Graph: {
      int max_deg = 0;
      for (int v = 0; v < c.graph->n(); ++v) max_deg = std::max(max_deg, c.graph->degree(v));
      stiff += max_deg / (T * c.graph->d_eff());
      break;
    }
    case Topology::Modes: {
      double s = c.modes->alpha;
      for (const auto& m : c.modes->neg) s += std::abs(m.weight) * std::max(1, m.k * m.k);
      for (const auto& m : c.modes->pos) s += std::abs(m.weight) * std::max(1, m.k * m.k);
      stiff += s / T;
      break;
    }
  }
  return stiff;
}

void drift(std::span<const double> x, const SimConfig& c, std::span<double> out) {
  const int n = c.n_particles;
  require(static_cast<int>(x.size()) == n && static_cast<int>(out.size()) == n, "state size differs from n");
  const ConfiningForce force(c.potential);
  for (int i = 0; i < n; ++i) out[i] = -force(x[i]);
  const double T = c.temperature;
  switch (c.topology) {
    case Topology::None: break;
    case Topology::Complete: {
      double s = 0.0;
      for (double v : x) s += v;
      s /= n * T;
      for (double& o : out) o += s;
      break;
    }
    case Topology::Graph: {
      const double scale = 1.0 / (T * c.graph->d_eff());
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j : c.graph->neighbors(i)) s += x[j];
        out[i] += scale * s;
      }
      break;
    }
    case Topology::Modes: {
      const ModeDecomposition& d = *c.modes;
      const double scale = 1.0 / (n * T);
      double sum_x = 0.0;
      for (double v : x) sum_x += v;
      std::vector<double> neg_sum(d.neg.size(), 0.0), pos_sum(d.pos.size(), 0.0);
      for (double v : x) {
        for (std::size_t k = 0; k < d.neg.size(); ++k) neg_sum[k] += d.neg[k].value(v);
        for (std::size_t k = 0; k < d.pos.size(); ++k) pos_sum[k] += d.pos[k].value(v);
      }
      for (int i = 0; i < n; ++i) {
        double s = d.alpha * sum_x;
        for (std::size_t k = 0; k < d.neg.size(); ++k) s += d.neg[k].weight * d.neg[k].derivative(x[i]) * neg_sum[k];
        for (std::size_t k = 0; k < d.pos.size(); ++k) s -= d.pos[k].weight * d.pos[k].derivative(x[i]) * pos_sum[k];
        out[i] += scale * s;
      }
      break;
    }
  }
}

SimResult simulate(const SimConfig& c, SampleMode mode) {
  validate(c);
  SimResult result;
  result.n = c.n_particles;
  result.states.resize(mode == SampleMode::States ? c.replicas : 0);
  result.magnetisation.resize(c.replicas);
  const double stiff = stiffness_estimate(c);
  if (c.dt * stiff >= 0.5) {
    result.warnings.push_back("dt * stiffness = " + std::to_string(c.dt * stiff) +
                              " >= 0.5; the explicit scheme may be unstable");
  }
  const bool circle = on_circle(c);
  const long long frames = (c.n_steps - c.burn_in) / c.thinning;

  auto run = [&](int r) {
    const int n = c.n_particles;
    std::mt19937_64 rng = replica_stream(c.seed, r);
    std::normal_distribution<double> normal;
    std::vector<double> x(n, c.initial), f(n), z(n);
    const double noise = std::sqrt(2.0 * c.dt / c.noise_substeps);
    auto& mag = result.magnetisation[r];
    mag.reserve(static_cast<std::size_t>(frames));
    if (mode == SampleMode::States) result.states[r].reserve(static_cast<std::size_t>(frames * n));
    for (long long t = 1; t <= c.n_steps; ++t) {
      drift(x, c, f);
      std::fill(z.begin(), z.end(), 0.0);
      for (int s = 0; s < c.noise_substeps; ++s)
        for (int i = 0; i < n; ++i) z[i] += normal(rng);
      bool bad = false;
      for (int i = 0; i < n; ++i) {
        double v = x[i] + c.dt * f[i] + noise * z[i];
        if (circle) {
          v -= 2 * std::numbers::pi * std::floor(v / (2 * std::numbers::pi));
        }
        bad |= !(std::abs(v) <= kBlowup);
        x[i] = v;
      }
      if (bad)
        fail(ErrorCode::NumericalBlowup, "replica " + std::to_string(r) + " left [-1e6, 1e6] at step " +
                                             std::to_string(t) + "; reduce dt");
      if (t > c.burn_in && (t - c.burn_in) % c.thinning == 0) {
        double m = 0.0;
        for (double v : x) m += observable(v, circle);
        mag.push_back(m / n);
        if (mode == SampleMode::States) result.states[r].insert(result.states[r].end(), x.begin(), x.end());
      }
    }
  };

  const int workers = std::min(max_threads(), c.replicas);
  std::vector<std::exception_ptr> errors(c.replicas);
  if (workers <= 1) {
    for (int r = 0; r < c.replicas; ++r) run(r);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int r = next++; r < c.replicas; r = next++) {
          try {
            run(r);
          } catch (...) {
            errors[r] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return result;
}

std::vector<double> pooled_magnetisation(const SimResult& result) {
  std::vector<double> out;
  for (const auto& m : result.magnetisation) out.insert(out.end(), m.begin(), m.end());
  return out;
}

Susceptibility susceptibility(std::span<const double> m, int n, bool centred) {
  require(n >= 1, "n must be positive");
  if (m.size() < kMinSamples)
    fail(ErrorCode::InsufficientSamples,
         "susceptibility needs at least 100 samples, got " + std::to_string(m.size()));
  double centre = 0.0;
  if (centred) {
    for (double v : m) centre += v;
    centre /= m.size();
  }
  Susceptibility s;
  s.samples = m.size();
  std::vector<double> batch(kBatches, 0.0);
  double total = 0.0;
  bool all_zero = true;
  for (int b = 0; b < kBatches; ++b) {
    const std::size_t lo = batch_edge(b, m.size()), hi = batch_edge(b + 1, m.size());
    double sum = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const double d = m[i] - centre;
      all_zero &= m[i] == 0.0;
      sum += n * d * d;
    }
    total += sum;
    batch[b] = sum / (hi - lo);
  }
  s.chi = total / m.size();
  s.degenerate = all_zero;
  double mean = 0.0, ss = 0.0;
  for (double v : batch) mean += v / kBatches;
  for (double v : batch) ss += (v - mean) * (v - mean);
  s.stderr_ = std::sqrt(ss / (kBatches - 1) / kBatches);
  return s;
}

EstimatorReport estimate(const SimResult& result, bool centred) {
  const std::vector<double> m = pooled_magnetisation(result);
  const Susceptibility s = susceptibility(m, result.n, centred);
  EstimatorReport r;
  r.chi = s.chi;
  r.chi_stderr = s.stderr_;
  r.samples_used = s.samples;
  for (double v : m) {
    r.mean_magnetisation += v;
    r.abs_magnetisation += std::abs(v);
  }
  r.mean_magnetisation /= m.size();
  r.abs_magnetisation /= m.size();
  r.gap_upper_chi = s.degenerate ? std::numeric_limits<double>::infinity() : 1.0 / s.chi;
  return r;
}

PlateauResult plateau_gap_bound(std::span<const double> m, int n, double m_plus, double delta, double r,
                                bool symmetrise) {
  require(n >= 1, "n must be positive");
  require(m_plus > 0 && delta > 0, "m_plus and delta must be positive");
  require(3 * delta <= 2 * m_plus, "need 3 delta <= 2 m_plus so the wells are separated");
  require(r >= 0 && std::isfinite(r), "r must be finite and nonnegative");
  if (m.size() < kMinSamples)
    fail(ErrorCode::InsufficientSamples,
         "plateau estimator needs at least 100 samples, got " + std::to_string(m.size()));
  const double edge = m_plus - delta;
  const double grad_sq = 1.0 / (edge * edge * n);

  // Per batch: count, sum F, sum F^2, sum |grad F|^2, window visits.
  std::vector<std::vector<double>> sums(kBatches, std::vector<double>(5, 0.0));
  std::size_t plus = 0, minus = 0;
  auto add = [&](std::vector<double>& s, double v) {
    const double f = std::clamp(v / edge, -1.0, 1.0);
    const bool window = std::abs(v) < edge;
    s[0] += 1;
    s[1] += f;
    s[2] += f * f;
    s[3] += window ? grad_sq : 0.0;
    s[4] += window ? 1.0 : 0.0;
    plus += v >= edge;
    minus += v <= -edge;
  };
  for (int b = 0; b < kBatches; ++b) {
    for (std::size_t i = batch_edge(b, m.size()); i < batch_edge(b + 1, m.size()); ++i) {
      add(sums[b], m[i]);
      if (symmetrise) add(sums[b], -m[i]);
    }
  }
  if (plus == 0 || minus == 0)
    fail(ErrorCode::SingleWellOnly, std::string("no sample reached the ") + (plus == 0 ? "upper" : "lower") +
                                        " plateau; the variance of F is not resolved");

  auto quotient = [](const std::vector<double>& s) {
    const double mean = s[1] / s[0];
    const double var = s[2] / s[0] - mean * mean;
    return (s[3] / s[0]) / var;
  };
  std::vector<double> total(5, 0.0);
  for (const auto& s : sums)
    for (int j = 0; j < 5; ++j) total[j] += s[j];

  PlateauResult res;
  res.samples = static_cast<std::size_t>(total[0]);
  res.window_fraction = total[4] / total[0];
  if (total[4] == 0.0) {
    const double mean = total[1] / total[0];
    const double var = total[2] / total[0] - mean * mean;
    res.flag = PlateauFlag::NoWindowVisits;
    res.bound = 0.0;
    res.stderr_ = 3.0 / total[0] * grad_sq / var;
    return res;
  }
  res.bound = quotient(total);
  res.stderr_ = jackknife_stderr(sums, quotient);
  return res;
}

CovarianceReport covariance_check(const std::vector<CovariancePair>& pairs, int n, std::size_t samples,
                                  std::uint64_t seed) {
  require(n >= 1 && n <= 20, "covariance check supports 1 <= n <= 20");
  require(samples >= static_cast<std::size_t>(kBatches) * 10, "too few samples");
  std::mt19937_64 rng = replica_stream(seed, 0);
  std::normal_distribution<double> normal;
  const std::size_t P = pairs.size();
  // Per pair and batch: sum F^2, sum F^2 H, sum H, sum |grad F|^2, sum H^2, sum F^4.
  std::vector<std::vector<std::vector<double>>> sums(
      P, std::vector<std::vector<double>>(kBatches, std::vector<double>(6, 0.0)));
  std::vector<double> x(n), g(n);
  for (std::size_t s = 0; s < samples; ++s) {
    for (double& v : x) v = normal(rng);
    const std::size_t b = s * kBatches / samples;
    for (std::size_t p = 0; p < P; ++p) {
      const double f = pairs[p].f(x);
      pairs[p].grad_f(x, g);
      const double h = pairs[p].h(x);
      double gg = 0.0;
      for (double v : g) gg += v * v;
      auto& acc = sums[p][b];
      acc[0] += f * f;
      acc[1] += f * f * h;
      acc[2] += h;
      acc[3] += gg;
      acc[4] += h * h;
      acc[5] += f * f * f * f;
    }
  }

  CovarianceReport report;
  report.n = n;
  report.samples = samples;
  for (std::size_t p = 0; p < P; ++p) {
    const double sup = pairs[p].sup_grad_h_sq;
    // Counts per batch follow from the batch edges.
    std::vector<double> counts(kBatches, 0.0);
    for (std::size_t s = 0; s < samples; ++s) counts[s * kBatches / samples] += 1;
    for (int b = 0; b < kBatches; ++b) sums[p][b].push_back(counts[b]);
    auto sides = [&](const std::vector<double>& t) {
      const double c = t[6];
      const double ef2 = t[0] / c, cov = t[1] / c - ef2 * t[2] / c;
      return std::pair{cov * cov, 4.0 * sup * ef2 * (t[3] / c)};
    };
    auto ratio = [&](const std::vector<double>& t) {
      const auto [lhs, rhs] = sides(t);
      if (rhs > 0) return lhs / rhs;
      // Both sides vanish analytically when F or H is constant; what remains
      // of the left side is rounding.
      const double c = t[6];
      const double scale = (t[0] / c) * std::sqrt(std::max(t[4] / c, 1.0));
      return lhs <= 1e-20 * scale * scale ? 0.0 : std::numeric_limits<double>::infinity();
    };
    std::vector<double> total(7, 0.0);
    for (const auto& s : sums[p])
      for (int j = 0; j < 7; ++j) total[j] += s[j];
    CovarianceRow row;
    row.label = pairs[p].label;
    std::tie(row.lhs, row.rhs) = sides(total);
    row.ratio = ratio(total);
    row.ratio_stderr = std::isfinite(row.ratio) ? jackknife_stderr(sums[p], ratio) : 0.0;
    row.holds = row.ratio <= 1.0 + 5.0 * row.ratio_stderr;
    report.worst_ratio = std::max(report.worst_ratio, row.ratio);
    report.holds &= row.holds;
    report.rows.push_back(std::move(row));
  }
  return report;
}

CovarianceReport covariance_bound_check(int n, std::uint64_t seed, std::size_t samples) {
  require(n >= 1 && n <= 20, "covariance check supports 1 <= n <= 20");
  std::mt19937_64 rng = replica_stream(seed, 1);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<CovariancePair> pairs;
  for (int p = 0; p < 10; ++p) {
    // F = (c0 + c.x + q x_k^2) exp(-|x - mu|^2 / (2 s2)).
    std::vector<double> c(n), mu(n), a(n);
    for (int i = 0; i < n; ++i) {
      c[i] = normal(rng);
      mu[i] = 0.5 * normal(rng);
      a[i] = normal(rng) / std::sqrt(n);
    }
    const double c0 = normal(rng), q = normal(rng);
    const int k = static_cast<int>(unif(rng) * n) % n;
    const double s2 = (1.0 + 2.0 * unif(rng)) * std::max(1.0, n / 4.0);
    auto poly = [=](std::span<const double> x) {
      double v = c0 + q * x[k] * x[k];
      for (int i = 0; i < n; ++i) v += c[i] * x[i];
      return v;
    };
    auto window = [=](std::span<const double> x) {
      double r2 = 0.0;
      for (int i = 0; i < n; ++i) r2 += (x[i] - mu[i]) * (x[i] - mu[i]);
      return std::exp(-r2 / (2 * s2));
    };
    CovariancePair pair;
    pair.f = [=](std::span<const double> x) { return poly(x) * window(x); };
    pair.grad_f = [=](std::span<const double> x, std::span<double> g) {
      const double w = window(x), pv = poly(x);
      for (int i = 0; i < n; ++i) g[i] = (c[i] - pv * (x[i] - mu[i]) / s2) * w;
      g[k] += 2 * q * x[k] * w;
    };
    double a2 = 0.0;
    for (double v : a) a2 += v * v;
    pair.sup_grad_h_sq = a2;
    if (p % 2 == 0) {
      pair.h = [=](std::span<const double> x) {
        double v = 0.0;
        for (int i = 0; i < n; ++i) v += a[i] * x[i];
        return v;
      };
      pair.label = "windowed-quadratic/coordinate-sum";
    } else {
      const double clip = 0.5 + 1.5 * unif(rng);
      pair.h = [=](std::span<const double> x) {
        double v = 0.0;
        for (int i = 0; i < n; ++i) v += a[i] * x[i];
        return std::clamp(v, -clip, clip);
      };
      pair.label = "windowed-quadratic/clipped-linear";
    }
    pairs.push_back(std::move(pair));
  }
  return covariance_check(pairs, n, samples, seed);
}

namespace {

void write_le(std::ostream& os, const void* p, std::size_t bytes) {
  unsigned char buf[8];
  std::memcpy(buf, p, bytes);
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + bytes);
  os.write(reinterpret_cast<const char*>(buf), static_cast<std::streamsize>(bytes));
}

}  // namespace

void write_binary_frames(std::ostream& os, const SimConfig& c, std::span<const double> frames) {
  const std::int64_t n = c.n_particles;
  require(frames.size() % static_cast<std::size_t>(n) == 0, "frame buffer is not a multiple of n");
  const std::int64_t count = static_cast<std::int64_t>(frames.size()) / n;
  os.write("MFLSIBIN", 8);
  write_le(os, &n, 8);
  write_le(os, &count, 8);
  write_le(os, &c.temperature, 8);
  write_le(os, &c.dt, 8);
  write_le(os, &c.seed, 8);
  for (double v : frames) write_le(os, &v, 8);
}

void write_csv_frames(std::ostream& os, const SimConfig& c, std::span<const double> frames) {
  const int n = c.n_particles;
  require(n <= 64, "CSV frames are limited to n <= 64; use the binary format");
  require(frames.size() % static_cast<std::size_t>(n) == 0, "frame buffer is not a multiple of n");
  os << "step";
  for (int i = 0; i < n; ++i) os << ",x_" << i;
  os << '\n';
  char buf[32];
  for (std::size_t f = 0; f * n < frames.size(); ++f) {
    os << c.burn_in + static_cast<long long>(f + 1) * c.thinning;
    for (int i = 0; i < n; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", frames[f * n + i]);
      os << ',' << buf;
    }
    os << '\n';
  }
}

}  // namespace mflsi
