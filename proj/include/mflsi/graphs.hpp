#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mflsi {

enum class GraphKind { Regular, ErdosRenyi };

/// Simple undirected graph with a CSR adjacency.
class GraphInstance {
 public:
  /// Validates the edge list: indices in range, no self-loops, no multi-edges.
  GraphInstance(int n, std::vector<std::pair<int, int>> edges, GraphKind kind, double d_eff, std::uint64_t seed);

  int n() const noexcept { return n_; }
  const std::vector<std::pair<int, int>>& edges() const noexcept { return edges_; }
  GraphKind kind() const noexcept { return kind_; }
  /// Exact degree for regular graphs, target mean degree for Erdos-Renyi.
  double d_eff() const noexcept { return d_eff_; }
  std::uint64_t seed() const noexcept { return seed_; }

  int degree(int v) const { return offsets_[v + 1] - offsets_[v]; }
  std::span<const int> neighbors(int v) const {
    return {neighbors_.data() + offsets_[v], static_cast<std::size_t>(degree(v))};
  }

  /// y = A x.
  void adjacency_apply(std::span<const double> x, std::span<double> y) const;
  /// y = (A - d_eff P) x with P = 11^T / n.
  void b_apply(std::span<const double> x, std::span<double> y) const;

 private:
  int n_;
  std::vector<std::pair<int, int>> edges_;
  GraphKind kind_;
  double d_eff_;
  std::uint64_t seed_;
  std::vector<int> offsets_;
  std::vector<int> neighbors_;
};

/// Uniform-ish d-regular simple graph (pairing model with Steger-Wormald
/// re-pairing of colliding stubs; full restarts capped at 10^4).
GraphInstance gen_rrg(int n, int d, std::uint64_t seed);

/// G(n, p) with p = d_mean / (n - 1), by geometric edge skipping.
GraphInstance gen_er(int n, double d_mean, std::uint64_t seed);

/// K_n as a regular graph with d = n - 1.
GraphInstance complete_graph(int n);

struct SpectralReport {
  double epsilon = 0.0;
  double top_singular = 0.0;
  int iterations = 0;  // operator applications
  double residual = 0.0;
};

using SymmetricOperator = std::function<void(std::span<const double>, std::span<double>)>;

/// Largest |eigenvalue| of a symmetric operator by restarted Lanczos with full
/// reorthogonalisation. Converged when |Bv - theta v| <= 1e-10 |theta|; throws
/// NoConvergence after 10^5 applications.
SpectralReport top_eigenvalue(const SymmetricOperator& op, int n, std::uint64_t seed);

/// ||A - d_eff P|| and epsilon = ||.|| / d_eff (0 when the norm vanishes).
SpectralReport spectral_report(const GraphInstance& g, std::uint64_t seed = 0x5eed);

/// ||A - E A|| with E A = p (J - I), p = d_eff / (n - 1).
SpectralReport er_deviation(const GraphInstance& g, std::uint64_t seed = 0x5eed);

std::string to_string(GraphKind kind);

/// Edge list: first line `n d_eff kind seed`, then `i j` per line, 0-indexed.
void write_edge_list(std::ostream& os, const GraphInstance& g);
GraphInstance read_edge_list(std::istream& is);

}  // namespace mflsi
