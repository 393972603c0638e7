#include "stochmap/commands.hpp"
#include "stochmap/core.hpp"
#include "stochmap/environment.hpp"
#include "stochmap/scenario.hpp"

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace stochmap;

namespace {

py::dict report_dict(const RunReport& r) {
  py::list checks;
  for (const auto& c : r.checks) {
    py::dict d;
    d["name"] = c.name;
    d["value"] = c.value;
    d["relation"] = c.relation;
    d["tolerance"] = c.tolerance;
    d["pass"] = c.pass;
    d["physics"] = c.physics;
    checks.append(d);
  }
  py::dict out;
  out["command"] = r.command;
  out["scenario"] = r.scenario;
  out["exit_code"] = r.exit_code;
  out["message"] = r.message;
  out["checks"] = checks;
  out["artifacts"] = r.artifacts;
  return out;
}

RunOptions options(int threads, std::optional<std::uint64_t> seed) {
  RunOptions o;
  o.threads = threads;
  o.seed_override = seed;
  return o;
}

}  // namespace

PYBIND11_MODULE(_stochmap, m) {
  m.doc() = "Stochastic unravelling of open-system dynamics";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<TimeGrid>(m, "TimeGrid")
      .def(py::init<double, int>(), py::arg("t_max"), py::arg("n_steps"))
      .def_property_readonly("t_max", &TimeGrid::t_max)
      .def_property_readonly("n_steps", &TimeGrid::n_steps)
      .def_property_readonly("nodes", &TimeGrid::nodes)
      .def_property_readonly("dt", &TimeGrid::dt)
      .def("time", &TimeGrid::time)
      .def("weight", py::overload_cast<int>(&TimeGrid::weight, py::const_));

  py::class_<BosonicMode>(m, "BosonicMode")
      .def(py::init([](double w, int levels, double temperature) { return BosonicMode{w, levels, temperature}; }),
           py::arg("frequency") = 1.0, py::arg("levels") = 8, py::arg("temperature") = 0.0)
      .def_readwrite("frequency", &BosonicMode::frequency)
      .def_readwrite("levels", &BosonicMode::levels)
      .def_readwrite("temperature", &BosonicMode::temperature);

  py::class_<ScenarioConfig>(m, "Scenario")
      .def_readonly("name", &ScenarioConfig::name)
      .def_readonly("t_max", &ScenarioConfig::t_max)
      .def_readonly("n_steps", &ScenarioConfig::n_steps)
      .def_readonly("quadratic", &ScenarioConfig::quadratic)
      .def_readwrite("n_traj", &ScenarioConfig::n_traj)
      .def_readwrite("master_seed", &ScenarioConfig::master_seed)
      .def_readwrite("depth", &ScenarioConfig::depth)
      .def_readwrite("expand_order", &ScenarioConfig::expand_order)
      .def_property_readonly("dimension", [](const ScenarioConfig& c) { return c.family.dim(); })
      .def_property_readonly("labels", [](const ScenarioConfig& c) { return c.family.labels(); })
      .def_property_readonly("h0", [](const ScenarioConfig& c) { return c.family.h0(); })
      .def("operator", [](const ScenarioConfig& c, int a) { return c.family.op(a); })
      .def_property_readonly("psi0", [](const ScenarioConfig& c) { return c.psi0; })
      .def_property_readonly("grid", &ScenarioConfig::grid);

  m.def("load_scenario", &load_scenario, py::arg("path"));
  m.def("parse_scenario", &parse_scenario, py::arg("text"), py::arg("source_dir") = ".");
  m.def("commands", &command_names);
  m.def(
      "run_command",
      [](const std::string& command, const ScenarioConfig& cfg, const std::string& out_dir, int threads,
         std::optional<std::uint64_t> seed) {
        RunOptions o = options(threads, seed);
        RunReport r;
        {
          py::gil_scoped_release release;
          r = run_command(command, cfg, o, out_dir);
        }
        return report_dict(r);
      },
      py::arg("command"), py::arg("scenario"), py::arg("out_dir"), py::arg("threads") = 1,
      py::arg("seed_override") = py::none());
  m.def(
      "run",
      [](const std::string& command, const std::string& config, std::optional<std::string> out_dir, int threads) {
        RunOptions o = options(threads, std::nullopt);
        o.out_dir = out_dir;
        py::gil_scoped_release release;
        return run(command, config, o);
      },
      py::arg("command"), py::arg("config"), py::arg("out_dir") = py::none(), py::arg("threads") = 1);

  m.def("named_operator", &named_operator, py::arg("name"), py::arg("dim"));
  m.def("pauli_x", &pauli_x);
  m.def("pauli_y", &pauli_y);
  m.def("pauli_z", &pauli_z);
  m.def("annihilation", &annihilation, py::arg("levels"));
  m.def("expm", &expm);
  m.def("trace_distance", &trace_distance);
  m.def("choi_of_superop", &choi_of_superop);
  m.def("cptp_of_superop", [](const Mat& superop) {
    CptpReport r = cptp_report(superop);
    return py::make_tuple(r.min_eig, r.max_trace_deviation);
  });
  m.def("bosonic_correlation", &bosonic_correlation, py::arg("modes"), py::arg("couplings"), py::arg("a"),
        py::arg("b"), py::arg("t"), py::arg("s"));

  m.attr("EXIT_OK") = static_cast<int>(kExitOk);
  m.attr("EXIT_CONFIG") = static_cast<int>(kExitConfig);
  m.attr("EXIT_CONVERGENCE") = static_cast<int>(kExitConvergence);
  m.attr("EXIT_PHYSICS") = static_cast<int>(kExitPhysics);
}
