#include "safedensity/config.hpp"
#include "safedensity/controller.hpp"
#include "safedensity/density.hpp"
#include "safedensity/errors.hpp"
#include "safedensity/harness.hpp"
#include "safedensity/solver.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace safedensity;

namespace {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

std::vector<Vec2> to_points(const Points &m) {
  std::vector<Vec2> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    out[static_cast<std::size_t>(i)] = m.row(i).transpose();
  return out;
}

Vector series(const RunLog &log, double (*f)(const StepRecord &)) {
  Vector v(static_cast<Eigen::Index>(log.steps.size()));
  for (std::size_t k = 0; k < log.steps.size(); ++k)
    v(static_cast<Eigen::Index>(k)) = f(log.steps[k]);
  return v;
}

// steps x robots array of one per-robot quantity.
Eigen::MatrixXd per_robot(const RunLog &log, double (*f)(const RobotRecord &)) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(log.steps.size()), log.n_robots);
  for (std::size_t k = 0; k < log.steps.size(); ++k)
    for (int i = 0; i < log.n_robots; ++i)
      m(static_cast<Eigen::Index>(k), i) = f(log.steps[k].robots[static_cast<std::size_t>(i)]);
  return m;
}

py::dict summary_dict(const RunSummary &s) {
  py::dict d;
  d["seed"] = s.seed;
  d["initial_V"] = s.V0;
  d["final_V"] = s.final_V;
  d["min_h_s"] = s.min_h_s;
  d["min_E"] = s.min_battery;
  d["violation_steps"] = s.violation_steps;
  d["max_violation"] = s.max_violation;
  d["planner_failures"] = s.planner_failures;
  d["solver_fallbacks"] = s.solver_fallbacks;
  d["energy_clamps"] = s.energy_clamps;
  d["cbf_relaxations"] = s.cbf_relaxations;
  d["aborted"] = s.aborted;
  return d;
}

} // namespace

PYBIND11_MODULE(_safedensity, m) {
  m.doc() = "Safe density control of robot teams";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ModelError>(m, "ModelError", PyExc_ValueError);
  py::register_exception<InfeasibleError>(m, "InfeasibleError", PyExc_RuntimeError);

  py::enum_<Boundary>(m, "Boundary")
      .value("Periodic", Boundary::Periodic)
      .value("Neumann", Boundary::Neumann);

  py::class_<Grid>(m, "Grid")
      .def(py::init([](int nx, int ny, double spacing, Boundary b) {
             return Grid(nx, ny, spacing, Vec2::Zero(), b);
           }),
           py::arg("nx"), py::arg("ny"), py::arg("spacing"), py::arg("boundary") = Boundary::Periodic)
      .def_property_readonly("nx", &Grid::nx)
      .def_property_readonly("ny", &Grid::ny)
      .def_property_readonly("size", &Grid::size)
      .def_property_readonly("spacing", &Grid::spacing)
      .def_property_readonly("boundary", &Grid::boundary);

  m.def(
      "team_density",
      [](const Grid &g, const Points &pos, double sigma) {
        const auto xs = to_points(pos);
        const DensityField f = evaluate_kernels(g, xs, LocalizationModel::isotropic(sigma));
        return f.team.size() ? f.team : Vector::Zero(g.size());
      },
      py::arg("grid"), py::arg("positions"), py::arg("sigma") = kDefaultKernelSigma,
      "Sum of unit-peak Gaussian kernels at the cell centres, flattened row by row (y major).");
  m.def("default_epsilon", [](const Grid &g, double sigma) {
    return default_epsilon(g, LocalizationModel::isotropic(sigma));
  }, py::arg("grid"), py::arg("sigma") = kDefaultKernelSigma);

  py::enum_<SolveStatus>(m, "SolveStatus")
      .value("Optimal", SolveStatus::Optimal)
      .value("MaxIterations", SolveStatus::MaxIterations);

  py::class_<RobotConstraint>(m, "RobotConstraint")
      .def(py::init<>())
      .def_readwrite("u_max", &RobotConstraint::u_max)
      .def_readwrite("dir", &RobotConstraint::dir)
      .def_readwrite("kappa", &RobotConstraint::kappa)
      .def_readwrite("c1", &RobotConstraint::c1)
      .def_readwrite("beta", &RobotConstraint::beta)
      .def_readwrite("fixed", &RobotConstraint::fixed)
      .def("violation", &RobotConstraint::violation)
      .def("project", &RobotConstraint::project);

  py::class_<ConvexProgram>(m, "ConvexProgram")
      .def(py::init<>())
      .def_readwrite("n_robots", &ConvexProgram::n_robots)
      .def_readwrite("gamma", &ConvexProgram::gamma)
      .def_readwrite("clf_g", &ConvexProgram::clf_g)
      .def_readwrite("clf_b", &ConvexProgram::clf_b)
      .def_readwrite("cbf_a", &ConvexProgram::cbf_a)
      .def_readwrite("cbf_b", &ConvexProgram::cbf_b)
      .def_readwrite("robots", &ConvexProgram::robots)
      .def("validate", &ConvexProgram::validate)
      .def("objective", &ConvexProgram::objective)
      .def("violation", &ConvexProgram::violation);

  py::class_<Solution>(m, "Solution")
      .def_readonly("u", &Solution::u)
      .def_readonly("s", &Solution::s)
      .def_readonly("status", &Solution::status)
      .def_readonly("objective", &Solution::objective)
      .def_readonly("kkt_residual", &Solution::kkt_residual)
      .def_readonly("iterations", &Solution::iterations)
      .def_readonly("lambda_clf", &Solution::lambda_clf)
      .def_readonly("lambda_cbf", &Solution::lambda_cbf);

  m.def(
      "solve",
      [](const ConvexProgram &p, double tol, int max_iter) {
        return solve(p, nullptr, SolverOptions{tol, max_iter});
      },
      py::arg("program"), py::arg("tol") = 1e-7, py::arg("max_iter") = 5000);

  py::class_<ScenarioConfig>(m, "ScenarioConfig")
      .def_static("reference", &reference_scenario)
      .def_static("from_text",
                  [](const std::string &t) { return config_from_key_values(parse_key_values(t)); })
      .def_static("load", [](const std::string &p) { return load_config(p); })
      .def("to_text", [](const ScenarioConfig &c) { return to_text(c); })
      .def("validate", &ScenarioConfig::validate)
      .def("noise_off", &ScenarioConfig::noise_off)
      .def("steps", &ScenarioConfig::steps)
      .def_property_readonly("n_robots", [](const ScenarioConfig &c) { return c.robots.size(); })
      .def_readwrite("dt", &ScenarioConfig::dt)
      .def_readwrite("duration", &ScenarioConfig::duration)
      .def_readwrite("seed", &ScenarioConfig::seed)
      .def_readwrite("noise_c", &ScenarioConfig::noise_c)
      .def_readwrite("measurement_std", &ScenarioConfig::measurement_std)
      .def_readwrite("u_max", &ScenarioConfig::u_max);

  py::class_<RunLog>(m, "RunLog")
      .def_readonly("seed", &RunLog::seed)
      .def_readonly("n_robots", &RunLog::n_robots)
      .def_readonly("aborted", &RunLog::aborted)
      .def_readonly("abort_reason", &RunLog::abort_reason)
      .def_property_readonly("t", [](const RunLog &l) { return series(l, [](const StepRecord &s) { return s.t; }); })
      .def_property_readonly("V", [](const RunLog &l) { return series(l, [](const StepRecord &s) { return s.V; }); })
      .def_property_readonly("h_s", [](const RunLog &l) { return series(l, [](const StepRecord &s) { return s.h_s; }); })
      .def_property_readonly("slack", [](const RunLog &l) { return series(l, [](const StepRecord &s) { return s.s; }); })
      .def_property_readonly("x", [](const RunLog &l) { return per_robot(l, [](const RobotRecord &r) { return r.position.x(); }); })
      .def_property_readonly("y", [](const RunLog &l) { return per_robot(l, [](const RobotRecord &r) { return r.position.y(); }); })
      .def_property_readonly("battery", [](const RunLog &l) { return per_robot(l, [](const RobotRecord &r) { return r.battery; }); })
      .def_property_readonly("events", [](const RunLog &l) {
        py::list out;
        for (const auto &e : l.events)
          out.append(py::make_tuple(e.step, e.t, to_string(e.kind), e.robot, e.value));
        return out;
      })
      .def_property_readonly("final_V", &RunLog::final_V)
      .def("feasible", &RunLog::feasible)
      .def("clean", &RunLog::clean)
      .def("summary", [](const RunLog &l) { return summary_dict(summarize(l)); })
      .def("export", [](const RunLog &l, const ScenarioConfig &c, const std::string &dir, int stride) {
        export_run(l, c, dir, stride);
      }, py::arg("config"), py::arg("dir"), py::arg("stride") = 0);

  m.def("run_episode", &run_episode, py::arg("config"), py::arg("seed"),
        py::call_guard<py::gil_scoped_release>());
  m.def(
      "run_batch",
      [](const ScenarioConfig &c, int runs, std::uint64_t seed, unsigned threads) {
        BatchResult b;
        {
          py::gil_scoped_release release;
          b = run_batch(c, runs, seed, threads);
        }
        py::list summaries;
        for (const auto &r : b.runs)
          summaries.append(summary_dict(r));
        py::dict d;
        d["runs"] = summaries;
        d["t"] = b.t;
        d["max_V"] = b.max_V;
        d["min_h_s"] = b.min_h_s;
        d["min_E"] = b.min_E;
        d["energy_feasible_runs"] = b.energy_feasible_runs();
        d["worst_violation"] = b.worst_violation();
        d["clean"] = b.clean();
        return d;
      },
      py::arg("config"), py::arg("runs"), py::arg("seed"), py::arg("threads") = 0);
}
