#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "feller/errors.hpp"
#include "feller/heat1d.hpp"
#include "feller/ou_model.hpp"
#include "feller/perturbation.hpp"
#include "feller/sde_mc.hpp"

namespace py = pybind11;
using namespace feller;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Ornstein-Uhlenbeck semigroups with bounded drift perturbations";

  py::register_exception<Error>(m, "FellerError", PyExc_RuntimeError);

  py::class_<OUModel>(m, "OUModel")
      .def(py::init<Mat, Mat>(), py::arg("A"), py::arg("G"))
      .def_static("scalar", &OUModel::scalar, py::arg("a"), py::arg("g"))
      .def_readonly("A", &OUModel::A)
      .def_readonly("G", &OUModel::G)
      .def_property_readonly("dim", &OUModel::dim);

  m.def("flow", &flow, py::arg("model"), py::arg("t"));
  m.def("gramian", [](const OUModel& model, double t) { return gramian(model, t); },
        py::arg("model"), py::arg("t"));
  m.def("sf_norm", &sf_norm, py::arg("model"), py::arg("t"), py::arg("tol") = kRankTol);
  m.def("kalman_index", &kalman_index, py::arg("model"), py::arg("tol") = kRankTol);
  m.def("stationary_covariance", &stationary_covariance, py::arg("model"));

  py::class_<ScalingFit>(m, "ScalingFit")
      .def_readonly("kalman_index", &ScalingFit::kalman_index)
      .def_readonly("slope", &ScalingFit::slope)
      .def_readonly("intercept", &ScalingFit::intercept)
      .def_readonly("r2", &ScalingFit::r2);
  m.def(
      "sf_scaling_fit",
      [](const OUModel& model, const std::vector<double>& ts) { return sf_scaling_fit(model, ts); },
      py::arg("model"), py::arg("t_grid"));

  py::class_<Grid, std::shared_ptr<Grid>>(m, "Grid")
      .def_property_readonly("dim", &Grid::dim)
      .def_property_readonly("size", &Grid::size)
      .def_property_readonly("nodes", &Grid::nodes)
      .def("nearest_node", &Grid::nearest_node);
  m.def(
      "build_grid",
      [](std::vector<double> lo, std::vector<double> hi, std::vector<int> counts) {
        return std::const_pointer_cast<Grid>(build_grid(lo, hi, counts));
      },
      py::arg("lo"), py::arg("hi"), py::arg("counts"));

  py::class_<DriftField>(m, "DriftField")
      .def_static("zero", &DriftField::zero, py::arg("dim"))
      .def_static("constant", &DriftField::constant, py::arg("c"))
      .def_static("clipped_linear", &DriftField::clipped_linear, py::arg("K"), py::arg("clip"))
      .def_static("sign", &DriftField::sign, py::arg("scale"), py::arg("dim") = 1)
      .def_static("mollified_sign", &DriftField::mollified_sign, py::arg("n"), py::arg("scale"),
                  py::arg("dim") = 1)
      .def("__call__", &DriftField::operator())
      .def_property_readonly("sup", &DriftField::sup)
      .def_property_readonly("label", &DriftField::label);

  py::class_<T0Choice>(m, "T0Choice")
      .def_readonly("t0", &T0Choice::t0)
      .def_readonly("rho", &T0Choice::rho);
  m.def("choose_t0", &choose_t0, py::arg("model"), py::arg("drift"), py::arg("target_rho") = 0.5,
        py::arg("q") = 16, py::arg("t_max") = 1.0);

  py::class_<IterationReport>(m, "IterationReport")
      .def_readonly("rho", &IterationReport::rho)
      .def_readonly("iterations", &IterationReport::iterations)
      .def_readonly("final_change", &IterationReport::final_change)
      .def_readonly("residual", &IterationReport::residual);

  py::class_<PerturbedSemigroup>(m, "PerturbedSemigroup")
      .def_property_readonly("t0", &PerturbedSemigroup::t0)
      .def_property_readonly("report", &PerturbedSemigroup::report)
      .def(
          "apply",
          [](const PerturbedSemigroup& ps, double t, const Vec& values) {
            if (values.size() != ps.grid()->size()) throw GridMismatch("values size differs");
            GridFunction f{ps.grid(), values, values.cwiseAbs().maxCoeff()};
            return ps.apply(t, f).values;
          },
          py::arg("t"), py::arg("values"))
      .def("leak", &PerturbedSemigroup::leak, py::arg("t"));

  m.def(
      "solve_perturbed",
      [](const OUModel& model, const DriftField& drift, std::shared_ptr<Grid> grid, double t0,
         double tol, int nodes) {
        SolveOptions opts;
        opts.tol = tol;
        opts.nodes = nodes;
        py::gil_scoped_release release;
        return solve_perturbed(model, drift, grid, t0, opts);
      },
      py::arg("model"), py::arg("drift"), py::arg("grid"), py::arg("t0"), py::arg("tol") = 1e-10,
      py::arg("nodes") = 16);

  py::class_<MCEstimate>(m, "MCEstimate")
      .def_readonly("mean", &MCEstimate::mean)
      .def_readonly("std_error", &MCEstimate::std_error)
      .def_readonly("n_paths", &MCEstimate::n_paths);
  m.def(
      "mc_transition",
      [](const OUModel& model, const DriftField& drift, const Vec& x, double t,
         const std::function<double(const Vec&)>& f, double dt, std::size_t n_paths,
         std::uint64_t seed) {
        return mc_transition(model, drift, x, t, f, MCConfig{dt, n_paths, seed});
      },
      py::arg("model"), py::arg("drift"), py::arg("x"), py::arg("t"), py::arg("f"),
      py::arg("dt") = 1e-3, py::arg("n_paths") = 100000, py::arg("seed") = 0);

  py::class_<SpectralHeatModel>(m, "SpectralHeatModel")
      .def(py::init<int, double, double>(), py::arg("N"), py::arg("a") = 1.0,
           py::arg("alpha") = 0.0)
      .def_readonly("N", &SpectralHeatModel::N)
      .def("eigenvalues", &SpectralHeatModel::eigenvalues);
  m.def("heat_sf_norm", &heat_sf_norm, py::arg("model"), py::arg("t"));
  m.def("heat_invariant", &heat_invariant, py::arg("model"));
  py::class_<HypCheck>(m, "HypCheck")
      .def_readonly("i1", &HypCheck::i1)
      .def_readonly("i2", &HypCheck::i2)
      .def_readonly("i1_doubled", &HypCheck::i1_doubled)
      .def_readonly("stable_under_n", &HypCheck::stable_under_n);
  m.def("hyp_check", &hyp_check, py::arg("model"), py::arg("horizon"));
}
