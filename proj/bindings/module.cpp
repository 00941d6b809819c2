#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gpgrad/config.hpp"
#include "gpgrad/spectral.hpp"
#include "gpgrad/statefile.hpp"

namespace py = pybind11;
using namespace gpgrad;

namespace {

State state_from_array(const std::shared_ptr<const Mesh>& mesh, const Vec& coeffs) {
  if (coeffs.size() != mesh->num_dofs())
    throw DimensionError("state coefficients must have length 2 * interior nodes");
  return State(coeffs, mesh);
}

py::dict trace_to_dict(const Trace& trace) {
  const size_t n = trace.records.size();
  Vec energy(n), residual(n), tau(n), gamma(n), energy_error(n), h1_error(n), identity_gap(n);
  for (size_t i = 0; i < n; ++i) {
    const IterationRecord& r = trace.records[i];
    energy[static_cast<Index>(i)] = r.energy;
    residual[static_cast<Index>(i)] = r.residual;
    tau[static_cast<Index>(i)] = r.tau;
    gamma[static_cast<Index>(i)] = r.gamma;
    energy_error[static_cast<Index>(i)] = r.energy_error;
    h1_error[static_cast<Index>(i)] = r.h1_error;
    identity_gap[static_cast<Index>(i)] = r.energy_identity_gap;
  }
  py::dict d;
  d["energy"] = energy;
  d["residual"] = residual;
  d["tau"] = tau;
  d["gamma"] = gamma;
  d["energy_error"] = energy_error;
  d["h1_error"] = h1_error;
  d["identity_gap"] = identity_gap;
  d["final_lambda"] = trace.final_lambda;
  switch (trace.stop_reason) {
    case StopReason::tol_reached: d["stop_reason"] = "tol_reached"; break;
    case StopReason::max_iters: d["stop_reason"] = "max_iters"; break;
    case StopReason::diverged: d["stop_reason"] = "diverged"; break;
  }
  return d;
}

}  // namespace

PYBIND11_MODULE(_gpgrad, m) {
  m.doc() = "finite-element ground states of rotating Bose-Einstein condensates";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<PolicyError>(m, "PolicyError");

  py::class_<Mesh, std::shared_ptr<Mesh>>(m, "Mesh")
      .def_readonly("Lx", &Mesh::Lx)
      .def_readonly("Ly", &Mesh::Ly)
      .def_readonly("n", &Mesh::n)
      .def_property_readonly("num_interior", &Mesh::num_interior)
      .def_property_readonly("num_dofs", &Mesh::num_dofs)
      .def_property_readonly("interior_coords", [](const Mesh& mesh) {
        Mat coords(mesh.num_interior(), 2);
        for (int k = 0; k < mesh.num_interior(); ++k) {
          coords(k, 0) = mesh.node_coords[mesh.interior_nodes[k]][0];
          coords(k, 1) = mesh.node_coords[mesh.interior_nodes[k]][1];
        }
        return coords;
      });

  py::class_<State>(m, "State")
      .def_property_readonly("coeffs", [](const State& s) { return s.coeffs; })
      .def_property_readonly("mesh", [](const State& s) { return std::const_pointer_cast<Mesh>(s.mesh); });

  py::class_<ModelParams>(m, "ModelParams")
      .def(py::init([](double beta, double omega, const std::string& potential, double K) {
             ModelParams p;
             p.beta = beta;
             p.omega = omega;
             p.potential = make_potential(potential);
             p.trap_margin_K = K;
             return p;
           }),
           py::arg("beta"), py::arg("omega"), py::arg("potential") = "zero",
           py::arg("K") = 0.01);

  py::class_<FormSet>(m, "FormSet")
      .def_readonly("admissibility_ok", &FormSet::admissibility_ok)
      .def_property_readonly("S", [](const FormSet& f) { return f.S; })
      .def_property_readonly("M", [](const FormSet& f) { return f.M; });

  m.def("build_mesh", [](double Lx, double Ly, int n) {
    return std::const_pointer_cast<Mesh>(build_mesh(Lx, Ly, n));
  }, py::arg("Lx"), py::arg("Ly"), py::arg("n"));

  m.def("interpolate",
        [](const std::shared_ptr<Mesh>& mesh, const PointFunction& f) {
          return interpolate(mesh, f);
        },
        py::arg("mesh"), py::arg("f"));

  m.def("state_from_array",
        [](const std::shared_ptr<Mesh>& mesh, const Vec& coeffs) {
          return state_from_array(mesh, coeffs);
        },
        py::arg("mesh"), py::arg("coeffs"));

  m.def("builtin_initial",
        [](const std::shared_ptr<Mesh>& mesh, const std::string& profile) {
          RunConfig cfg;
          cfg.initial.profile = profile;
          return make_initial(cfg, mesh);
        },
        py::arg("mesh"), py::arg("profile") = "vortex_gauss");

  m.def("assemble",
        [](const std::shared_ptr<Mesh>& mesh, const ModelParams& params, bool strict) {
          return assemble_base(mesh, params, strict);
        },
        py::arg("mesh"), py::arg("params"), py::arg("strict_admissibility") = false);

  m.def("energy", &energy, py::arg("forms"), py::arg("u"));
  m.def("mass", &mass, py::arg("forms"), py::arg("u"));
  m.def("normalized", &normalized, py::arg("forms"), py::arg("u"));
  m.def("gauge_rotate", &gauge_rotate, py::arg("u"), py::arg("omega"));

  m.def("gp_residual",
        [](const FormSet& forms, const State& u) {
          const GpResidual r = gp_residual(forms, u, LinearSolvePlan{});
          return py::make_tuple(r.lambda, r.res_l2);
        },
        py::arg("forms"), py::arg("u"));

  m.def("solve",
        [](const FormSet& forms, const State& u0, const std::string& mode, double tau,
           double residual_tol, double energy_tol, int max_iters, bool retain_states) {
          StepPolicy policy = (mode == "fixed") ? StepPolicy::fixed(tau) : StepPolicy::adaptive();
          StopRule stop;
          stop.residual_tol = residual_tol;
          stop.energy_tol = energy_tol;
          stop.max_iters = max_iters;
          SolverOptions opts;
          opts.retain_states = retain_states;
          const Trace trace = run(forms, u0, policy, stop, std::nullopt, opts);
          py::dict d = trace_to_dict(trace);
          d["state"] = trace.final_state;
          return d;
        },
        py::arg("forms"), py::arg("u0"), py::arg("mode") = "adaptive", py::arg("tau") = 1.0,
        py::arg("residual_tol") = 1e-9, py::arg("energy_tol") = 1e-13,
        py::arg("max_iters") = 50000, py::arg("retain_states") = false);

  m.def("hessian_spectrum",
        [](const FormSet& forms, const State& u, int k) {
          const EigenList e = hessian_spectrum(forms, u, k);
          return e.values;
        },
        py::arg("forms"), py::arg("u"), py::arg("k") = 6);

  m.def("a_u_spectrum",
        [](const FormSet& forms, const State& u, int k) {
          const LinearizedSpectrum s = a_u_spectrum(forms, u, k);
          return py::make_tuple(s.values, s.lambda_index, s.lambda);
        },
        py::arg("forms"), py::arg("u"), py::arg("k") = 25);

  m.def("weighted_evp",
        [](const FormSet& forms, const State& u, int k) {
          return weighted_evp(forms, u, k).mu;
        },
        py::arg("forms"), py::arg("u"), py::arg("k") = 5);

  m.def("delta1", [](const FormSet& forms) { return delta1(forms); }, py::arg("forms"));
  m.def("rho_star", &rho_star, py::arg("mu_list"), py::arg("tau"));

  m.def("save_state", &save_state, py::arg("path"), py::arg("u"));
  m.def("load_state",
        [](const std::string& path, const std::shared_ptr<Mesh>& mesh) {
          return load_state(path, mesh);
        },
        py::arg("path"), py::arg("mesh"));
}
