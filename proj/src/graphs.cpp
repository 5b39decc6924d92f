#include "mflsi/graphs.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <Eigen/Dense>

#include "mflsi/error.hpp"

namespace mflsi {

namespace {

constexpr int kMaxRestarts = 10'000;
constexpr int kMaxApplications = 100'000;
constexpr int kKrylovDim = 80;

std::uint64_t edge_key(int a, int b, int n) {
  if (a > b) std::swap(a, b);
  return static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(n) + static_cast<std::uint64_t>(b);
}

}  // namespace

GraphInstance::GraphInstance(int n, std::vector<std::pair<int, int>> edges, GraphKind kind, double d_eff,
                             std::uint64_t seed)
    : n_(n), edges_(std::move(edges)), kind_(kind), d_eff_(d_eff), seed_(seed) {
  require(n >= 1, "graph needs at least one vertex");
  require(std::isfinite(d_eff) && d_eff >= 0, "d_eff must be finite and nonnegative");
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(edges_.size() * 2);
  std::vector<int> deg(n, 0);
  for (auto& [a, b] : edges_) {
    require(a >= 0 && a < n && b >= 0 && b < n, "edge endpoint out of range");
    require(a != b, "self-loop at vertex " + std::to_string(a));
    if (a > b) std::swap(a, b);
    require(seen.insert(edge_key(a, b, n)).second,
            "multi-edge between " + std::to_string(a) + " and " + std::to_string(b));
    ++deg[a];
    ++deg[b];
  }
  offsets_.assign(static_cast<std::size_t>(n) + 1, 0);
  for (int v = 0; v < n; ++v) offsets_[v + 1] = offsets_[v] + deg[v];
  neighbors_.resize(static_cast<std::size_t>(offsets_[n]));
  std::vector<int> fill(offsets_.begin(), offsets_.end() - 1);
  for (const auto& [a, b] : edges_) {
    neighbors_[fill[a]++] = b;
    neighbors_[fill[b]++] = a;
  }
  for (int v = 0; v < n; ++v) std::sort(neighbors_.begin() + offsets_[v], neighbors_.begin() + offsets_[v + 1]);
  if (kind_ == GraphKind::Regular) {
    for (int v = 0; v < n; ++v)
      require(deg[v] == d_eff_, "vertex " + std::to_string(v) + " has degree " + std::to_string(deg[v]) +
                                    " in a regular graph of degree " + std::to_string(d_eff_));
  }
}

void GraphInstance::adjacency_apply(std::span<const double> x, std::span<double> y) const {
  for (int v = 0; v < n_; ++v) {
    double s = 0.0;
    for (int i = offsets_[v]; i < offsets_[v + 1]; ++i) s += x[neighbors_[i]];
    y[v] = s;
  }
}

void GraphInstance::b_apply(std::span<const double> x, std::span<double> y) const {
  adjacency_apply(x, y);
  const double shift = d_eff_ * std::accumulate(x.begin(), x.end(), 0.0) / n_;
  for (double& v : y) v -= shift;
}

// ---------------------------------------------------------------------------
// Generators

GraphInstance gen_rrg(int n, int d, std::uint64_t seed) {
  if (n < 1 || d < 0 || d >= n || (static_cast<long long>(n) * d) % 2 != 0)
    fail(ErrorCode::InfeasibleDegree, "no simple " + std::to_string(d) + "-regular graph on " + std::to_string(n) +
                                          " vertices (need 0 <= d < n and n d even)");
  std::mt19937_64 rng(seed);
  if (d == 0) return GraphInstance(n, {}, GraphKind::Regular, 0.0, seed);

  // Stubs are paired at random; colliding pairs (loops, repeats) are returned
  // to a pool and re-paired only with partners that can still form a new edge.
  auto attempt = [&](std::unordered_set<std::uint64_t>& edges) {
    std::vector<int> stubs;
    stubs.reserve(static_cast<std::size_t>(n) * d);
    for (int r = 0; r < d; ++r)
      for (int v = 0; v < n; ++v) stubs.push_back(v);
    while (!stubs.empty()) {
      std::shuffle(stubs.begin(), stubs.end(), rng);
      std::unordered_map<int, int> leftover;
      for (std::size_t i = 0; i + 1 < stubs.size(); i += 2) {
        const int a = stubs[i], b = stubs[i + 1];
        if (a != b && edges.insert(edge_key(a, b, n)).second) continue;
        ++leftover[a];
        ++leftover[b];
      }
      if (leftover.empty()) return true;
      bool suitable = false;
      for (auto it = leftover.begin(); it != leftover.end() && !suitable; ++it) {
        for (auto jt = std::next(it); jt != leftover.end(); ++jt) {
          if (!edges.contains(edge_key(it->first, jt->first, n))) {
            suitable = true;
            break;
          }
        }
      }
      if (!suitable) return false;
      stubs.clear();
      std::vector<std::pair<int, int>> ordered(leftover.begin(), leftover.end());
      std::sort(ordered.begin(), ordered.end());
      for (const auto& [v, count] : ordered)
        for (int c = 0; c < count; ++c) stubs.push_back(v);
    }
    return true;
  };

  for (int restart = 0; restart < kMaxRestarts; ++restart) {
    std::unordered_set<std::uint64_t> edges;
    edges.reserve(static_cast<std::size_t>(n) * d);
    if (!attempt(edges)) continue;
    std::vector<std::pair<int, int>> list;
    list.reserve(edges.size());
    for (std::uint64_t key : edges)
      list.emplace_back(static_cast<int>(key / static_cast<std::uint64_t>(n)),
                        static_cast<int>(key % static_cast<std::uint64_t>(n)));
    std::sort(list.begin(), list.end());
    return GraphInstance(n, std::move(list), GraphKind::Regular, d, seed);
  }
  fail(ErrorCode::RestartBudgetExceeded, "pairing model failed 10^4 times for n = " + std::to_string(n) +
                                             ", d = " + std::to_string(d));
}

GraphInstance gen_er(int n, double d_mean, std::uint64_t seed) {
  require(n >= 2, "Erdos-Renyi graph needs at least 2 vertices");
  require(std::isfinite(d_mean) && d_mean >= 0 && d_mean <= n - 1, "d_mean must lie in [0, n - 1]");
  const double p = d_mean / (n - 1);
  std::vector<std::pair<int, int>> edges;
  if (p >= 1.0) {
    for (int v = 1; v < n; ++v)
      for (int w = 0; w < v; ++w) edges.emplace_back(w, v);
  } else if (p > 0.0) {
    // Batagelj-Brandes: jump over absent pairs with geometric gaps.
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double log_q = std::log1p(-p);
    long long v = 1, w = -1;
    while (v < n) {
      w += 1 + static_cast<long long>(std::floor(std::log1p(-unif(rng)) / log_q));
      while (w >= v && v < n) {
        w -= v;
        ++v;
      }
      if (v < n) edges.emplace_back(static_cast<int>(w), static_cast<int>(v));
    }
  }
  return GraphInstance(n, std::move(edges), GraphKind::ErdosRenyi, d_mean, seed);
}

GraphInstance complete_graph(int n) {
  require(n >= 1, "complete graph needs at least one vertex");
  std::vector<std::pair<int, int>> edges;
  for (int v = 1; v < n; ++v)
    for (int w = 0; w < v; ++w) edges.emplace_back(w, v);
  return GraphInstance(n, std::move(edges), GraphKind::Regular, n - 1, 0);
}

// ---------------------------------------------------------------------------
// Spectra

SpectralReport top_eigenvalue(const SymmetricOperator& op, int n, std::uint64_t seed) {
  require(n >= 1, "operator dimension must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd start(n);
  for (int i = 0; i < n; ++i) start[i] = normal(rng);
  start.normalize();

  const int m_max = std::min(n, kKrylovDim);
  Eigen::MatrixXd basis(n, m_max + 1);
  Eigen::VectorXd w(n);
  auto apply = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    op(std::span<const double>(in.data(), static_cast<std::size_t>(n)),
       std::span<double>(out.data(), static_cast<std::size_t>(n)));
  };

  SpectralReport report;
  while (report.iterations < kMaxApplications) {
    basis.col(0) = start;
    std::vector<double> alpha, beta;
    int m = 0;
    bool invariant = false;
    double scale = 0.0;
    for (int j = 0; j < m_max; ++j) {
      Eigen::VectorXd v = basis.col(j);
      apply(v, w);
      ++report.iterations;
      const double a = v.dot(w);
      alpha.push_back(a);
      scale = std::max({scale, std::abs(a), w.norm()});
      // Two passes of classical Gram-Schmidt against the whole basis.
      for (int pass = 0; pass < 2; ++pass) {
        const Eigen::VectorXd c = basis.leftCols(j + 1).transpose() * w;
        w.noalias() -= basis.leftCols(j + 1) * c;
      }
      const double b = w.norm();
      m = j + 1;
      if (b <= 1e-13 * std::max(scale, 1e-300) || j + 1 == m_max) {
        invariant = b <= 1e-13 * std::max(scale, 1e-300);
        beta.push_back(b);
        break;
      }
      beta.push_back(b);
      basis.col(j + 1) = w / b;
    }

    Eigen::VectorXd diag = Eigen::Map<Eigen::VectorXd>(alpha.data(), m);
    Eigen::VectorXd sub = m > 1 ? Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(beta.data(), m - 1))
                                : Eigen::VectorXd(0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
    tri.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    Eigen::Index k = 0;
    tri.eigenvalues().cwiseAbs().maxCoeff(&k);
    const double theta = tri.eigenvalues()[k];
    Eigen::VectorXd ritz = basis.leftCols(m) * tri.eigenvectors().col(k);
    ritz.normalize();

    apply(ritz, w);
    ++report.iterations;
    const double residual = (w - theta * ritz).norm();
    report.top_singular = std::abs(theta);
    report.residual = residual;
    if (residual <= 1e-10 * std::abs(theta) || (invariant && residual <= 1e-12 * std::max(scale, 1.0)))
      return report;
    start = ritz;
  }
  fail(ErrorCode::NoConvergence, "Lanczos did not converge within 10^5 operator applications");
}

SpectralReport spectral_report(const GraphInstance& g, std::uint64_t seed) {
  SpectralReport r = top_eigenvalue([&](auto x, auto y) { g.b_apply(x, y); }, g.n(), seed);
  r.epsilon = r.top_singular > 0 ? r.top_singular / g.d_eff() : 0.0;
  return r;
}

SpectralReport er_deviation(const GraphInstance& g, std::uint64_t seed) {
  require(g.n() >= 2, "deviation needs at least 2 vertices");
  const double p = g.d_eff() / (g.n() - 1);
  SpectralReport r = top_eigenvalue(
      [&](std::span<const double> x, std::span<double> y) {
        g.adjacency_apply(x, y);
        const double s = p * std::accumulate(x.begin(), x.end(), 0.0);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += p * x[i] - s;
      },
      g.n(), seed);
  r.epsilon = r.top_singular > 0 && g.d_eff() > 0 ? r.top_singular / g.d_eff() : 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Serialisation

std::string to_string(GraphKind kind) { return kind == GraphKind::Regular ? "regular" : "erdos_renyi"; }

void write_edge_list(std::ostream& os, const GraphInstance& g) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", g.d_eff());
  os << g.n() << ' ' << buf << ' ' << to_string(g.kind()) << ' ' << g.seed() << '\n';
  for (const auto& [a, b] : g.edges()) os << a << ' ' << b << '\n';
}

GraphInstance read_edge_list(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) fail(ErrorCode::Io, "edge list is empty");
  std::istringstream hs(header);
  int n = 0;
  double d_eff = 0.0;
  std::string kind;
  std::uint64_t seed = 0;
  if (!(hs >> n >> d_eff >> kind >> seed)) fail(ErrorCode::Io, "malformed edge-list header: " + header);
  GraphKind k;
  if (kind == "regular") {
    k = GraphKind::Regular;
  } else if (kind == "erdos_renyi") {
    k = GraphKind::ErdosRenyi;
  } else {
    fail(ErrorCode::Io, "unknown graph kind '" + kind + "'");
  }
  std::vector<std::pair<int, int>> edges;
  int a, b;
  while (is >> a >> b) edges.emplace_back(a, b);
  if (!is.eof()) fail(ErrorCode::Io, "malformed edge line after " + std::to_string(edges.size()) + " edges");
  return GraphInstance(n, std::move(edges), k, d_eff, seed);
}

}  // namespace mflsi
