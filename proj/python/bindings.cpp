#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "mflsi/cli.hpp"
#include "mflsi/dynamics.hpp"
#include "mflsi/error.hpp"
#include "mflsi/graphs.hpp"
#include "mflsi/modes.hpp"
#include "mflsi/quad1d.hpp"
#include "mflsi/renormalized.hpp"

namespace py = pybind11;
using namespace mflsi;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Mean-field Langevin numerics";
  m.attr("__version__") = version();

  py::register_exception<Error>(m, "MflsiError", PyExc_RuntimeError);
  m.def("error_code", [](const std::string& what) { return what.substr(0, what.find(':')); },
        "Error code name from an MflsiError message");

  py::class_<PotentialSpec>(m, "PotentialSpec")
      .def_static("quartic", &PotentialSpec::quartic, py::arg("lam"), py::arg("ghs_claimed") = false)
      .def_static("gaussian", &PotentialSpec::gaussian, py::arg("curvature"), py::arg("ghs_claimed") = false)
      .def_static("periodic_fourier", &PotentialSpec::periodic_fourier, py::arg("coefficients"))
      .def_static("tabulated", &PotentialSpec::tabulated, py::arg("nodes"), py::arg("values"),
                  py::arg("ghs_claimed") = false)
      .def("value", &PotentialSpec::value)
      .def("derivative", &PotentialSpec::derivative)
      .def("__repr__", &PotentialSpec::describe);

  py::class_<LineMeasure>(m, "LineMeasure")
      .def_property_readonly("log_norm", &LineMeasure::log_norm)
      .def_property_readonly("domain_bounds", &LineMeasure::domain_bounds);
  m.def("build_measure", &build_measure, py::arg("spec"), py::arg("tol") = 1e-10);
  m.def("tilt_moments", [](const LineMeasure& lm, double h) {
    const TiltMoments t = tilt_moments(lm, h, 2);
    return py::make_tuple(t.log_z, t.mean(), t.variance());
  });

  m.def("critical_temperature", &critical_temperature);
  py::class_<RenormTable>(m, "RenormTable")
      .def_readonly("temperature", &RenormTable::temperature)
      .def_readonly("phi", &RenormTable::phi_grid)
      .def_readonly("v", &RenormTable::v)
      .def_readonly("dv", &RenormTable::dv)
      .def_readonly("ddv", &RenormTable::ddv)
      .def_readonly("t_critical", &RenormTable::t_critical)
      .def_readonly("curvature_floor", &RenormTable::curvature_floor)
      .def_readonly("minimizers", &RenormTable::minimizers);
  m.def("renorm_potential", [](const LineMeasure& lm, double T, int points) {
    return renorm_potential(lm, T, default_phi_grid(lm, T, points));
  }, py::arg("measure"), py::arg("T"), py::arg("points") = 801);

  py::class_<XyReport>(m, "XyReport")
      .def_readonly("temperature", &XyReport::temperature)
      .def_readonly("bound", &XyReport::bound)
      .def_readonly("measured_min_eig", &XyReport::measured_min_eig)
      .def_readonly("convex", &XyReport::convex);
  m.def("xy_check", &xy_check, py::arg("T"));

  py::class_<SpectralReport>(m, "SpectralReport")
      .def_readonly("epsilon", &SpectralReport::epsilon)
      .def_readonly("top_singular", &SpectralReport::top_singular)
      .def_readonly("iterations", &SpectralReport::iterations)
      .def_readonly("residual", &SpectralReport::residual);
  py::class_<GraphInstance>(m, "GraphInstance")
      .def_property_readonly("n", &GraphInstance::n)
      .def_property_readonly("edges", &GraphInstance::edges)
      .def_property_readonly("d_eff", &GraphInstance::d_eff);
  m.def("gen_rrg", &gen_rrg, py::arg("n"), py::arg("d"), py::arg("seed"));
  m.def("gen_er", &gen_er, py::arg("n"), py::arg("d_mean"), py::arg("seed"));
  m.def("spectral_report", &spectral_report, py::arg("graph"), py::arg("seed") = 0x5eed);

  m.def("simulate_magnetisation",
        [](int n, double T, double dt, long long steps, long long burn_in, int thinning, std::uint64_t seed,
           const PotentialSpec& potential) {
          SimConfig c;
          c.n_particles = n;
          c.temperature = T;
          c.dt = dt;
          c.n_steps = steps;
          c.burn_in = burn_in;
          c.thinning = thinning;
          c.seed = seed;
          c.potential = potential;
          py::gil_scoped_release release;
          return simulate(c, SampleMode::Magnetisation).magnetisation[0];
        },
        py::arg("n"), py::arg("T"), py::arg("dt"), py::arg("steps"), py::arg("burn_in"), py::arg("thinning"),
        py::arg("seed"), py::arg("potential"));
  m.def("susceptibility", [](const std::vector<double>& mag, int n) {
    const Susceptibility s = susceptibility(mag, n);
    return py::make_tuple(s.chi, s.stderr_);
  });

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return py::make_tuple(code, out.str(), err.str());
  });
}
