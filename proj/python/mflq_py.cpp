#include <sstream>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mflq/cli.hpp"
#include "mflq/error.hpp"
#include "mflq/montecarlo.hpp"
#include "mflq/problem_io.hpp"
#include "mflq/turnpike.hpp"

namespace py = pybind11;
using namespace mflq;

namespace {

// Node values of a trajectory as a (nodes, rows, cols) array.
py::array_t<double> nodes_array(const Trajectory& tr) {
  const auto N = static_cast<py::ssize_t>(tr.size());
  const auto r = tr.empty() ? 0 : tr.front().rows();
  const auto c = tr.empty() ? 0 : tr.front().cols();
  py::array_t<double> out({N, static_cast<py::ssize_t>(r), static_cast<py::ssize_t>(c)});
  auto v = out.mutable_unchecked<3>();
  for (py::ssize_t j = 0; j < N; ++j)
    for (Index a = 0; a < r; ++a)
      for (Index b = 0; b < c; ++b) v(j, a, b) = tr.node(static_cast<std::size_t>(j))(a, b);
  return out;
}

py::array_t<double> node_times(const Trajectory& tr) {
  py::array_t<double> out(static_cast<py::ssize_t>(tr.size()));
  auto v = out.mutable_unchecked<1>();
  for (std::size_t j = 0; j < tr.size(); ++j) v(static_cast<py::ssize_t>(j)) = tr.time(j);
  return out;
}

PeriodicOptions options(const std::string& method, const std::string& route) {
  PeriodicOptions o;
  if (method == "kleinman") o.method = PeriodicMethod::kKleinman;
  else if (method == "extension") o.method = PeriodicMethod::kHorizonExtension;
  else if (method == "both") o.method = PeriodicMethod::kBoth;
  else throw Error(ErrorKind::kInput, "method must be kleinman, extension or both");
  if (route == "shifted") o.route = KleinmanRoute::kShifted;
  else if (route == "direct") o.route = KleinmanRoute::kDirect;
  else throw Error(ErrorKind::kInput, "route must be shifted or direct");
  return o;
}

py::dict fit_dict(const DecayFit& f) {
  py::dict d;
  d["K"] = f.K;
  d["lambda"] = f.lambda;
  d["r_squared"] = f.r_squared;
  return d;
}

struct Problem {
  ProblemData data;
  MeanFieldSystem sys;
};

Problem make_problem(ProblemSpec spec) {
  Problem p{build_problem(spec), {}};
  p.sys = make_system(p.data);
  return p;
}

Feedback optimal_feedback(const FiniteHorizonSolution& fin) {
  return {fin.Theta, fin.Theta_hat, fin.phi};
}

}  // namespace

PYBIND11_MODULE(_mflq, m) {
  py::register_exception<Error>(m, "MflqError", PyExc_RuntimeError);

  py::class_<Problem>(m, "Problem")
      .def_static("load", [](const std::string& path) { return make_problem(load_problem_spec(path)); },
                  py::arg("path"))
      .def_static("from_json",
                  [](const std::string& text) { return make_problem(parse_problem_spec(text)); },
                  py::arg("text"))
      .def_property_readonly("n", [](const Problem& p) { return p.data.n; })
      .def_property_readonly("m", [](const Problem& p) { return p.data.m; })
      .def_property_readonly("tau", [](const Problem& p) { return p.data.tau; })
      .def_property_readonly("grid_steps", [](const Problem& p) { return p.data.steps; });

  m.def("validate", [](const std::string& path) {
    const ProblemData data = load_problem(path);
    const ValidationReport rep = validate_assumptions(data);
    py::dict d;
    d["ok"] = rep.a1_bounded && rep.a2_ok;
    d["delta_R"] = rep.delta_R;
    d["delta_R_hat"] = rep.delta_R_hat;
    d["margin_M"] = rep.margin_M;
    d["margin_M_hat"] = rep.margin_M_hat;
    d["failures"] = rep.failures;
    return d;
  }, py::arg("path"));

  m.def("solve_finite_horizon", [](const Problem& p, double T) {
    const auto fin = solve_finite_horizon(p.sys, T);
    py::dict d;
    d["T"] = fin.T;
    d["t"] = node_times(fin.P);
    d["P"] = nodes_array(fin.P);
    d["Pi"] = nodes_array(fin.Pi);
    d["Theta"] = nodes_array(fin.Theta);
    d["Theta_hat"] = nodes_array(fin.Theta_hat);
    d["varphi"] = nodes_array(fin.varphi);
    d["phi"] = nodes_array(fin.phi);
    return d;
  }, py::arg("problem"), py::arg("T"));

  m.def("solve_periodic", [](const Problem& p, const std::string& method, const std::string& route) {
    const auto per = solve_periodic_lq(p.sys, options(method, route));
    py::dict d;
    d["t"] = node_times(per.riccati.P.traj);
    d["P"] = nodes_array(per.riccati.P.traj);
    d["Pi"] = nodes_array(per.riccati.Pi.traj);
    d["residual_P"] = per.riccati.P.residual;
    d["residual_Pi"] = per.riccati.Pi.residual;
    d["closed_loop_radius"] = per.riccati.P.closed_loop_radius;
    d["method"] = per.riccati.P.method;
    d["mu_star"] = nodes_array(per.law.mu_star);
    d["Sigma_star"] = nodes_array(per.law.Sigma_star);
    d["eta"] = nodes_array(per.law.eta);
    d["v_star"] = nodes_array(per.law.v_star);
    d["optimality_residual"] = per.optimality_residual;
    d["cost"] = per.cost;
    return d;
  }, py::arg("problem"), py::arg("method") = "both", py::arg("route") = "shifted");

  m.def("turnpike", [](const Problem& p, double T, const Eigen::VectorXd& x) {
    if (x.size() != p.data.n) throw Error(ErrorKind::kInput, "x has the wrong dimension");
    const auto per = solve_periodic_lq(p.sys);
    const auto rep = run_turnpike(p.sys, per, T, x);
    py::dict curves;
    const auto& c = rep.curves;
    curves["t"] = c.t;
    curves["gap_P"] = c.gap_P;
    curves["gap_Pi"] = c.gap_Pi;
    curves["gap_Theta"] = c.gap_Theta;
    curves["gap_Theta_hat"] = c.gap_Theta_hat;
    curves["gap_varphi"] = c.gap_varphi;
    curves["gap_phi"] = c.gap_phi;
    curves["gap_state"] = c.gap_state;
    curves["gap_control"] = c.gap_control;
    curves["w2_state"] = c.w2_state;
    py::dict fits;
    for (const GapFit& f : rep.fits) {
      py::dict e;
      e["verdict"] = std::string(to_string(f.verdict));
      e["fit"] = f.fit ? py::object(fit_dict(*f.fit)) : py::none();
      if (f.two_sided) {
        e["left"] = f.left ? py::object(fit_dict(*f.left)) : py::none();
        e["right"] = f.right ? py::object(fit_dict(*f.right)) : py::none();
      }
      fits[py::str(f.name)] = e;
    }
    py::dict d;
    d["T"] = rep.T;
    d["curves"] = curves;
    d["fits"] = fits;
    d["middle_third_ratio"] = rep.middle_third_ratio;
    d["gap_state0_identity"] = rep.gap_state0_identity;
    d["coupling_violation"] = rep.coupling_violation;
    d["all_pass"] = rep.all_pass();
    return d;
  }, py::arg("problem"), py::arg("T"), py::arg("x"));

  m.def("simulate", [](const Problem& p, double T, const Eigen::VectorXd& x, int particles,
                       std::uint64_t seed, int substeps) {
    if (x.size() != p.data.n) throw Error(ErrorKind::kInput, "x has the wrong dimension");
    const auto fin = solve_finite_horizon(p.sys, T);
    const Feedback fb = optimal_feedback(fin);
    SampledMoments mc;
    {
      py::gil_scoped_release release;
      mc = simulate_closed_loop(p.sys, fb, x, particles, seed, substeps);
    }
    const auto ode = closed_loop_moments(p.sys, fb, x);
    const auto cv = cross_validate(mc, ode.mean);
    py::dict d;
    d["t"] = mc.t;
    d["mean"] = mc.mean;
    d["ode_mean"] = nodes_array(ode.mean);
    d["z_max"] = cv.z_max;
    d["fraction_over_3"] = cv.fraction_over_3;
    d["pass"] = cv.pass;
    return d;
  }, py::arg("problem"), py::arg("T"), py::arg("x"), py::arg("particles") = 10000,
     py::arg("seed") = 1, py::arg("substeps") = 4);

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"));
}
