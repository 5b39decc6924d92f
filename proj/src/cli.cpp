#include "mflsi/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "io.hpp"
#include "mflsi/dynamics.hpp"
#include "mflsi/error.hpp"
#include "mflsi/graphs.hpp"
#include "mflsi/modes.hpp"
#include "mflsi/quad1d.hpp"
#include "mflsi/renormalized.hpp"

#ifndef MFLSI_VERSION
#define MFLSI_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;

namespace mflsi {

std::string version() { return MFLSI_VERSION; }

namespace {

using io::Json;

// Resolved option values of one subcommand, in registration order.
class Registry {
 public:
  template <class T>
  CLI::Option* option(CLI::App* app, const std::string& name, T& var, const std::string& desc) {
    entries_.emplace_back(name, [&var] { return to_json(var); });
    return app->add_option("--" + name, var, desc)->capture_default_str();
  }
  CLI::Option* flag(CLI::App* app, const std::string& name, bool& var, const std::string& desc) {
    entries_.emplace_back(name, [&var] { return Json(var); });
    return app->add_flag("--" + name, var, desc);
  }
  Json resolved() const {
    Json j = Json::object();
    for (const auto& [name, get] : entries_) j[name] = get();
    return j;
  }

 private:
  template <class T>
  static Json to_json(const T& v) {
    return Json(v);
  }
  template <class T>
  static Json to_json(const std::optional<T>& v) {
    return v ? Json(*v) : Json(nullptr);
  }
  std::vector<std::pair<std::string, std::function<Json()>>> entries_;
};

struct Context {
  fs::path out_dir;
  std::uint64_t seed = 0;
  std::ostream& out;
  std::vector<std::string> outputs;

  void csv(const std::string& name, const std::vector<std::string>& header,
           const std::vector<std::vector<double>>& rows) {
    io::write_csv(out_dir / name, header, rows);
    outputs.push_back(name);
  }
  void json(const std::string& name, const Json& value) {
    io::write_json(out_dir / name, value);
    outputs.push_back(name);
  }
  void text(const std::string& name, const std::string& value) {
    io::write_text(out_dir / name, value);
    outputs.push_back(name);
  }
};

struct PotentialArgs {
  std::string kind = "gaussian";
  double lambda = 0.0;
  double curvature = 1.0;
  std::vector<double> coeffs{0.0};
  std::string file;
  double tol = 1e-10;
};

void add_potential(CLI::App* app, Registry& reg, PotentialArgs& p, const std::string& default_kind) {
  p.kind = default_kind;
  if (default_kind == "periodic") p.coeffs = {0.0};
  reg.option(app, "potential", p.kind, "quartic | gaussian | periodic | tabulated")
      ->check(CLI::IsMember({"quartic", "gaussian", "periodic", "tabulated"}));
  reg.option(app, "lambda", p.lambda, "quartic: V = x^4/4 - lambda x^2/2");
  reg.option(app, "curvature", p.curvature, "gaussian: V = c x^2/2");
  reg.option(app, "coeffs", p.coeffs, "periodic: V = sum_k c_k cos(k x)");
  reg.option(app, "file", p.file, "tabulated: CSV with columns x,V");
  reg.option(app, "tol", p.tol, "quadrature tolerance");
}

PotentialSpec make_potential(const PotentialArgs& p) {
  if (p.kind == "quartic") return PotentialSpec::quartic(p.lambda);
  if (p.kind == "gaussian") return PotentialSpec::gaussian(p.curvature);
  if (p.kind == "periodic") return PotentialSpec::periodic_fourier(p.coeffs);
  require(!p.file.empty(), "tabulated potential needs --file");
  const io::CsvTable t = io::read_csv(p.file);
  const std::size_t cx = t.column("x"), cv = t.column("V");
  std::vector<double> x, v;
  for (const auto& row : t.rows) {
    x.push_back(row[cx]);
    v.push_back(row[cv]);
  }
  return PotentialSpec::tabulated(std::move(x), std::move(v));
}

ModeField to_field(const std::vector<double>& v) { return Eigen::Map<const ModeField>(v.data(), v.size()); }

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(10);
  ss << v;
  return ss.str();
}

Json spectral_json(const SpectralReport& r) {
  return {{"epsilon", r.epsilon}, {"top_singular", r.top_singular}, {"iterations", r.iterations},
          {"residual", r.residual}};
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

struct Command {
  CLI::App* app = nullptr;
  Registry reg;
  PotentialArgs pot;
  std::function<void(Context&)> body;
};

int exit_code(ErrorClass c) {
  switch (c) {
    case ErrorClass::Precondition: return 2;
    case ErrorClass::Numerical: return 3;
    case ErrorClass::Io: return 4;
  }
  return 1;
}

// Rebuilds an argument list from a sidecar's resolved configuration.
std::vector<std::string> replay_args(const Json& sidecar) {
  if (!sidecar.contains("command") || !sidecar.contains("config"))
    fail(ErrorCode::Io, "sidecar lacks command or config");
  std::vector<std::string> args{sidecar["command"].get<std::string>()};
  for (const auto& [key, value] : sidecar["config"].items()) {
    if (value.is_null()) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back("--" + key);
      continue;
    }
    auto scalar = [](const Json& v) {
      if (v.is_string()) return v.get<std::string>();
      if (v.is_number_float()) return io::format_double(v.get<double>());
      return v.dump();
    };
    if (value.is_array()) {
      if (value.empty()) continue;
      args.push_back("--" + key);
      for (const auto& v : value) args.push_back(scalar(v));
    } else {
      args.push_back("--" + key);
      args.push_back(scalar(value));
    }
  }
  args.push_back("--seed");
  args.push_back(std::to_string(sidecar.value("seed", std::uint64_t{0})));
  return args;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mean-field Langevin numerics: renormalised potentials, mode decompositions, graph spectra "
               "and particle simulations",
               "mflsi"};
  app.set_version_flag("--version", version());
  app.require_subcommand(0, 1);
  app.fallthrough();

  std::string out_dir = ".";
  std::uint64_t seed = 0;
  int threads = 0;
  std::string replay;
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--seed", seed, "random seed")->capture_default_str();
  app.add_option("--threads", threads, "worker thread cap (0 = all cores)")->capture_default_str();
  app.add_option("--replay", replay, "re-run the command recorded in a sidecar.json");
  app.set_config("--config", "", "INI file with one [subcommand] section");

  std::map<std::string, std::unique_ptr<Command>> commands;
  auto command = [&](const std::string& name, const std::string& desc) -> Command& {
    auto c = std::make_unique<Command>();
    c->app = app.add_subcommand(name, desc);
    auto& ref = *c;
    commands[name] = std::move(c);
    return ref;
  };

  double T = 1.0;
  int points = 801;

  {
    Command& c = command("tc", "critical temperature T_c = var(alpha_V) for a GHS potential");
    add_potential(c.app, c.reg, c.pot, "quartic");
    c.body = [&, cp = &c](Context& ctx) {
      const PotentialSpec spec = make_potential(cp->pot);
      const LineMeasure m = build_measure(spec, cp->pot.tol);
      const double tc = critical_temperature(m);
      ctx.json("tc.json", {{"potential", spec.describe()}, {"t_critical", tc}});
      ctx.out << "T_c = " << fmt(tc) << "\n";
    };
  }
  {
    Command& c = command("scan-vt", "renormalised potential V_T on a phi grid");
    add_potential(c.app, c.reg, c.pot, "quartic");
    c.reg.option(c.app, "T", T, "temperature")->required();
    c.reg.option(c.app, "points", points, "grid points");
    c.body = [&, cp = &c](Context& ctx) {
      const LineMeasure m = build_measure(make_potential(cp->pot), cp->pot.tol);
      const RenormTable t = renorm_potential(m, T, default_phi_grid(m, T, points));
      std::vector<std::vector<double>> rows;
      for (std::size_t i = 0; i < t.phi_grid.size(); ++i) rows.push_back({t.phi_grid[i], t.v[i], t.dv[i], t.ddv[i]});
      ctx.csv("vt.csv", {"phi", "v", "dv", "ddv"}, rows);
      ctx.json("vt.json", {{"temperature", T},
                           {"t_critical", optional_json(t.t_critical)},
                           {"curvature_floor", t.curvature_floor},
                           {"curvature_floor_at", t.curvature_floor_at},
                           {"minimizers", t.minimizers}});
      ctx.out << "curvature floor " << fmt(t.curvature_floor) << " at phi = " << fmt(t.curvature_floor_at) << ", "
              << t.minimizers.size() << " minimiser(s)\n";
    };
  }
  std::optional<double> m_max;
  auto free_energy_table = [&](const LineMeasure& m) {
    double top = 0.0;
    if (m_max) {
      top = *m_max;
    } else {
      const auto phis = default_phi_grid(m, T);
      top = 0.95 * std::min(magnetization_map(m, T, phis.back()), -magnetization_map(m, T, phis.front()));
    }
    require(top > 0, "--m-max must be positive");
    std::vector<double> grid(points);
    for (int i = 0; i < points; ++i) grid[i] = -top + 2 * top * i / (points - 1);
    return coarse_free_energy(m, T, grid);
  };
  {
    Command& c = command("free-energy", "coarse-grained free energy F_T(m)");
    add_potential(c.app, c.reg, c.pot, "quartic");
    c.reg.option(c.app, "T", T, "temperature")->required();
    c.reg.option(c.app, "points", points, "grid points")->check(CLI::Range(3, 1 << 20));
    c.reg.option(c.app, "m-max", m_max, "half-width of the m grid (default: 95% of the reachable mean)");
    c.body = [&, cp = &c](Context& ctx) {
      const LineMeasure m = build_measure(make_potential(cp->pot), cp->pot.tol);
      const FreeEnergyTable t = free_energy_table(m);
      std::vector<std::vector<double>> rows;
      for (std::size_t i = 0; i < t.m.size(); ++i) rows.push_back({t.m[i], t.f[i], t.phi[i]});
      ctx.csv("free_energy.csv", {"m", "f", "phi"}, rows);
      const auto it = std::min_element(t.f.begin(), t.f.end());
      ctx.out << "min F_T = " << fmt(*it) << " at m = " << fmt(t.m[it - t.f.begin()]) << "\n";
    };
  }
  {
    Command& c = command("pl", "Polyak-Lojasiewicz constant of F_T");
    add_potential(c.app, c.reg, c.pot, "quartic");
    c.reg.option(c.app, "T", T, "temperature")->required();
    c.reg.option(c.app, "points", points, "grid points")->check(CLI::Range(3, 1 << 20));
    c.reg.option(c.app, "m-max", m_max, "half-width of the m grid");
    c.body = [&, cp = &c](Context& ctx) {
      const LineMeasure m = build_measure(make_potential(cp->pot), cp->pot.tol);
      const double pl = pl_constant(free_energy_table(m));
      ctx.json("pl.json", {{"temperature", T}, {"pl_constant", pl}});
      ctx.out << "PL constant = " << fmt(pl) << "\n";
    };
  }

  std::vector<double> kernel{0.0, 1.0};
  int K = 8;
  double mode_tol = 1e-8;
  auto add_kernel = [&](Command& c) {
    c.reg.option(c.app, "kernel-coeffs", kernel, "w(theta) = sum_k w_k cos(k theta); interaction W = -w(x - y)");
    c.reg.option(c.app, "K", K, "highest retained frequency");
    c.reg.option(c.app, "mode-tol", mode_tol, "truncation tolerance");
  };
  {
    Command& c = command("modes-decompose", "Fourier mode decomposition of a circle interaction");
    add_kernel(c);
    c.body = [&, cp = &c](Context& ctx) {
      const ModeDecomposition d = fourier_decompose(kernel, K, mode_tol);
      std::vector<std::vector<double>> rows;
      auto emit = [&](const std::vector<Mode>& modes, double part) {
        for (const Mode& md : modes)
          rows.push_back({part, static_cast<double>(md.k), md.kind == ModeKind::Sin ? 1.0 : 0.0, md.weight});
      };
      emit(d.neg, 0.0);
      emit(d.pos, 1.0);
      ctx.csv("modes.csv", {"positive_part", "k", "is_sin", "weight"}, rows);
      ctx.json("modes.json", {{"alpha", d.alpha},
                              {"offset", d.offset},
                              {"m_bound", d.m_bound},
                              {"l_bound", d.l_bound},
                              {"residual", d.residual},
                              {"neg_modes", d.neg.size()},
                              {"pos_modes", d.pos.size()}});
      ctx.out << d.neg.size() << " attractive and " << d.pos.size() << " repulsive modes, residual "
              << fmt(d.residual) << "\n";
    };
  }
  double lo = -6.0, hi = 6.0;
  int grid = 41;
  std::optional<double> radius;
  {
    Command& c = command("scan-convexity", "minimum Hessian eigenvalue of the renormalised potential");
    add_potential(c.app, c.reg, c.pot, "periodic");
    add_kernel(c);
    c.reg.option(c.app, "T", T, "temperature")->required();
    c.reg.option(c.app, "lo", lo, "lower box edge");
    c.reg.option(c.app, "hi", hi, "upper box edge");
    c.reg.option(c.app, "grid", grid, "points per axis");
    c.reg.option(c.app, "radius", radius, "restrict to |zeta| <= radius");
    c.body = [&, cp = &c](Context& ctx) {
      const LineMeasure m = build_measure(make_potential(cp->pot), cp->pot.tol);
      const ModeDecomposition d = fourier_decompose(kernel, K, mode_tol);
      const ConvexityScan s = strong_convexity_scan(T, d, m, lo, hi, grid, radius);
      std::vector<std::string> header;
      for (std::size_t j = 0; j < d.dimension(); ++j) header.push_back("zeta_" + std::to_string(j));
      header.push_back("min_eig");
      ctx.csv("convexity.csv", header, s.rows);
      ctx.json("convexity.json", {{"temperature", T}, {"lambda_hat", s.lambda_hat}, {"argmin", to_vector(s.argmin)}});
      ctx.out << "lambda_hat = " << fmt(s.lambda_hat) << (s.lambda_hat > 0 ? " (convex)" : " (not convex)") << "\n";
    };
  }
  {
    Command& c = command("xy-check", "XY-model convexity check against 1/T - 1/(2T^2)");
    c.reg.option(c.app, "T", T, "temperature")->required();
    c.body = [&, cp = &c](Context& ctx) {
      const XyReport r = xy_check(T);
      ctx.json("xy.json", {{"temperature", r.temperature},
                           {"bound", r.bound},
                           {"measured_min_eig", r.measured_min_eig},
                           {"convex", r.convex}});
      ctx.out << "bound " << fmt(r.bound) << ", measured " << fmt(r.measured_min_eig)
              << (r.convex ? ", convex" : ", not convex") << "\n";
    };
  }
  std::vector<double> zeta{0.5, 0.0};
  std::vector<int> ns{1, 2, 4};
  int un_grid = 129;
  {
    Command& c = command("un-gap", "finite-N renormalised potential against its limit");
    add_potential(c.app, c.reg, c.pot, "periodic");
    add_kernel(c);
    c.reg.option(c.app, "T", T, "temperature")->required();
    c.reg.option(c.app, "zeta", zeta, "field in H-orthonormal coordinates");
    c.reg.option(c.app, "N", ns, "particle numbers (1 to 4)");
    c.reg.option(c.app, "grid", un_grid, "quadrature points per particle");
    c.body = [&, cp = &c](Context& ctx) {
      const LineMeasure m = build_measure(make_potential(cp->pot), cp->pot.tol);
      const ModeDecomposition d = fourier_decompose(kernel, K, mode_tol);
      std::vector<std::vector<double>> rows;
      for (int n : ns) {
        const UnGap g = un_small_n(to_field(zeta), T, d, m, n, {un_grid, 5e8});
        rows.push_back({static_cast<double>(n), g.u_n, g.u_limit, g.gap});
        ctx.out << "N = " << n << ": gap " << fmt(g.gap) << "\n";
      }
      ctx.csv("un_gap.csv", {"N", "u_n", "u_limit", "gap"}, rows);
    };
  }

  std::string graph_kind = "regular";
  int graph_n = 1000;
  double graph_d = 10;
  std::string graph_file;
  auto add_graph = [&](Command& c) {
    c.reg.option(c.app, "kind", graph_kind, "regular | er")->check(CLI::IsMember({"regular", "er"}));
    c.reg.option(c.app, "n", graph_n, "vertices");
    c.reg.option(c.app, "d", graph_d, "degree (regular) or mean degree (er)");
  };
  auto make_graph = [&](std::uint64_t s) {
    if (graph_kind == "regular") {
      require(graph_d == std::floor(graph_d), "regular graphs need an integer degree");
      return gen_rrg(graph_n, static_cast<int>(graph_d), s);
    }
    return gen_er(graph_n, graph_d, s);
  };
  auto load_graph = [&](const std::string& path) {
    std::ifstream is(path);
    if (!is) fail(ErrorCode::Io, "cannot open graph file " + path);
    return read_edge_list(is);
  };
  {
    Command& c = command("graph-gen", "random regular or Erdos-Renyi graph as an edge list");
    add_graph(c);
    c.body = [&, cp = &c](Context& ctx) {
      const GraphInstance g = make_graph(ctx.seed);
      std::ostringstream ss;
      write_edge_list(ss, g);
      ctx.text("graph.txt", ss.str());
      ctx.out << g.n() << " vertices, " << g.edges().size() << " edges\n";
    };
  }
  {
    Command& c = command("graph-spectrum", "spectral deviation of B = A - d P");
    add_graph(c);
    c.reg.option(c.app, "graph", graph_file, "edge-list file (overrides generation)");
    c.body = [&, cp = &c](Context& ctx) {
      const GraphInstance g = graph_file.empty() ? make_graph(ctx.seed) : load_graph(graph_file);
      const SpectralReport r = spectral_report(g, ctx.seed);
      Json j = {{"n", g.n()}, {"kind", to_string(g.kind())}, {"d_eff", g.d_eff()}, {"b", spectral_json(r)}};
      if (g.kind() == GraphKind::ErdosRenyi) j["a_minus_ea"] = spectral_json(er_deviation(g, ctx.seed));
      ctx.json("spectrum.json", j);
      ctx.out << "epsilon = " << fmt(r.epsilon) << ", ||B|| / sqrt(d) = " << fmt(r.top_singular / std::sqrt(g.d_eff()))
              << "\n";
    };
  }

  SimConfig sim;
  std::string topology = "complete", format = "none";
  {
    Command& c = command("simulate", "Euler-Maruyama simulation of the particle system");
    add_potential(c.app, c.reg, c.pot, "gaussian");
    add_kernel(c);
    c.reg.option(c.app, "n", sim.n_particles, "particles");
    c.reg.option(c.app, "T", sim.temperature, "temperature");
    c.reg.option(c.app, "dt", sim.dt, "time step");
    c.reg.option(c.app, "steps", sim.n_steps, "total steps including burn-in");
    c.reg.option(c.app, "burn-in", sim.burn_in, "discarded steps");
    c.reg.option(c.app, "thinning", sim.thinning, "keep every k-th step");
    c.reg.option(c.app, "replicas", sim.replicas, "independent replicas");
    c.reg.option(c.app, "initial", sim.initial, "initial value of every coordinate");
    c.reg.option(c.app, "substeps", sim.noise_substeps, "Brownian increments summed per step");
    c.reg.option(c.app, "topology", topology, "none | complete | graph | modes")
        ->check(CLI::IsMember({"none", "complete", "graph", "modes"}));
    c.reg.option(c.app, "graph", graph_file, "edge-list file for the graph topology");
    c.reg.option(c.app, "format", format, "state output: none | csv | binary")
        ->check(CLI::IsMember({"none", "csv", "binary"}));
    c.body = [&, cp = &c](Context& ctx) {
      sim.seed = ctx.seed;
      sim.potential = make_potential(cp->pot);
      if (topology == "none") sim.topology = Topology::None;
      if (topology == "complete") sim.topology = Topology::Complete;
      if (topology == "graph") {
        require(!graph_file.empty(), "graph topology needs --graph");
        sim.topology = Topology::Graph;
        sim.graph = std::make_shared<GraphInstance>(load_graph(graph_file));
      }
      if (topology == "modes") {
        sim.topology = Topology::Modes;
        sim.modes = std::make_shared<ModeDecomposition>(fourier_decompose(kernel, K, mode_tol));
      }
      if (format == "csv") require(sim.n_particles <= 64, "CSV frames need n <= 64; use --format binary");
      const SimResult r = simulate(sim, format == "none" ? SampleMode::Magnetisation : SampleMode::States);
      std::vector<std::vector<double>> rows;
      for (std::size_t rep = 0; rep < r.magnetisation.size(); ++rep)
        for (std::size_t f = 0; f < r.magnetisation[rep].size(); ++f)
          rows.push_back({static_cast<double>(rep), static_cast<double>(f), r.magnetisation[rep][f]});
      ctx.csv("magnetisation.csv", {"replica", "frame", "m"}, rows);
      for (std::size_t rep = 0; rep < r.states.size(); ++rep) {
        std::ostringstream ss;
        const std::string name = "frames_" + std::to_string(rep) + (format == "csv" ? ".csv" : ".bin");
        if (format == "csv")
          write_csv_frames(ss, sim, r.states[rep]);
        else
          write_binary_frames(ss, sim, r.states[rep]);
        ctx.text(name, ss.str());
      }
      ctx.json("simulate.json", {{"n", r.n}, {"frames_per_replica", r.frames()}, {"warnings", r.warnings}});
      for (const auto& w : r.warnings) ctx.out << "warning: " << w << "\n";
      ctx.out << r.magnetisation.size() << " replica(s) x " << r.frames() << " frames\n";
    };
  }

  std::string input;
  bool centred = false;
  auto load_m = [&]() {
    const io::CsvTable t = io::read_csv(input);
    const std::size_t col = t.column("m");
    std::vector<double> m;
    for (const auto& row : t.rows) m.push_back(row[col]);
    return m;
  };
  {
    Command& c = command("estimate", "susceptibility and gap bound from a magnetisation series");
    c.reg.option(c.app, "input", input, "magnetisation.csv from simulate")->required();
    c.reg.option(c.app, "n", sim.n_particles, "particles")->required();
    c.reg.flag(c.app, "centred", centred, "subtract the sample mean (broken-symmetry runs)");
    c.body = [&, cp = &c](Context& ctx) {
      SimResult r;
      r.n = sim.n_particles;
      r.magnetisation.push_back(load_m());
      const EstimatorReport e = estimate(r, centred);
      ctx.json("estimate.json", {{"chi", e.chi},
                                 {"chi_stderr", e.chi_stderr},
                                 {"mean_magnetisation", e.mean_magnetisation},
                                 {"abs_magnetisation", e.abs_magnetisation},
                                 {"gap_upper_chi", e.gap_upper_chi},
                                 {"samples_used", e.samples_used}});
      ctx.out << "chi = " << fmt(e.chi) << " +- " << fmt(e.chi_stderr) << ", gap <= " << fmt(e.gap_upper_chi) << "\n";
    };
  }
  double m_plus = 1.0, delta = 0.1, r_exp = 0.0;
  bool no_symmetrise = false;
  {
    Command& c = command("plateau-bound", "plateau test-function bound on the spectral gap");
    c.reg.option(c.app, "input", input, "magnetisation.csv from simulate")->required();
    c.reg.option(c.app, "n", sim.n_particles, "particles")->required();
    c.reg.option(c.app, "m-plus", m_plus, "positive well location")->required();
    c.reg.option(c.app, "delta", delta, "plateau margin");
    c.reg.option(c.app, "r", r_exp, "plateau height exponent");
    c.reg.flag(c.app, "no-symmetrise", no_symmetrise, "do not pool samples with their negations");
    c.body = [&, cp = &c](Context& ctx) {
      const PlateauResult p = plateau_gap_bound(load_m(), sim.n_particles, m_plus, delta, r_exp, !no_symmetrise);
      ctx.json("plateau.json", {{"bound", p.bound},
                                {"stderr", p.stderr_},
                                {"window_fraction", p.window_fraction},
                                {"samples", p.samples},
                                {"flag", p.flag == PlateauFlag::Ok ? "ok" : "no_window_visits"}});
      ctx.out << "gap <= " << fmt(p.bound) << " +- " << fmt(p.stderr_)
              << (p.flag == PlateauFlag::NoWindowVisits ? " (no window visits)" : "") << "\n";
    };
  }
  int cov_n = 5;
  long long cov_samples = 1'000'000;
  {
    Command& c = command("cov-check", "Monte-Carlo check of the covariance bound on Gaussian measures");
    c.reg.option(c.app, "n", cov_n, "dimension (<= 20)");
    c.reg.option(c.app, "samples", cov_samples, "Monte-Carlo samples")->check(CLI::PositiveNumber);
    c.body = [&, cp = &c](Context& ctx) {
      const CovarianceReport r = covariance_bound_check(cov_n, ctx.seed, static_cast<std::size_t>(cov_samples));
      std::vector<std::vector<double>> rows;
      for (std::size_t i = 0; i < r.rows.size(); ++i) {
        const auto& row = r.rows[i];
        rows.push_back({static_cast<double>(i), row.lhs, row.rhs, row.ratio, row.ratio_stderr, row.holds ? 1.0 : 0.0});
      }
      ctx.csv("cov.csv", {"pair", "lhs", "rhs", "ratio", "ratio_stderr", "holds"}, rows);
      ctx.json("cov.json", {{"n", r.n}, {"samples", r.samples}, {"worst_ratio", r.worst_ratio}, {"holds", r.holds}});
      ctx.out << "worst ratio " << fmt(r.worst_ratio) << (r.holds ? " (holds)" : " (violated)") << "\n";
    };
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    if (!replay.empty()) {
      const Json sidecar = io::read_json(replay);
      std::vector<std::string> again = replay_args(sidecar);
      again.push_back("--out");
      again.push_back(out_dir);
      if (threads > 0) {
        again.push_back("--threads");
        again.push_back(std::to_string(threads));
      }
      return run_cli(again, out, err);
    }
    CLI::App* chosen = nullptr;
    for (auto* sub : app.get_subcommands()) chosen = sub;
    if (chosen == nullptr) {
      err << app.help();
      return 2;
    }
    set_max_threads(threads);
    Command& cmd = *commands.at(chosen->get_name());
    Context ctx{out_dir, seed, out, {}};
    io::ensure_directory(ctx.out_dir);
    cmd.body(ctx);
    Json sidecar = {{"version", version()},
                    {"command", chosen->get_name()},
                    {"config", cmd.reg.resolved()},
                    {"seed", seed},
                    {"outputs", ctx.outputs}};
    io::write_json(ctx.out_dir / "sidecar.json", sidecar);
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.error_class());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace mflsi
