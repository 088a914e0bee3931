#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "memsim/crossbar.hpp"
#include "memsim/cs.hpp"
#include "memsim/devices.hpp"
#include "memsim/errors.hpp"
#include "memsim/harness.hpp"
#include "memsim/reservoir.hpp"
#include "memsim/snn.hpp"

namespace py = pybind11;
using namespace memsim;

namespace {

ProgrammingMode make_mode(const std::string& mode, double tol, int max_iter) {
  if (mode == "single_shot") return ProgrammingMode::single_shot();
  if (mode == "iterative") return ProgrammingMode::iterative(tol, max_iter);
  throw DomainError("programming mode must be 'iterative' or 'single_shot'");
}

std::string run_json(const std::string& experiment, std::uint64_t seed, const std::string& overrides,
                     const std::string& output_dir) {
  auto cfg = harness::default_config(experiment, seed, harness::json::parse(overrides));
  harness::ExperimentResult r;
  if (output_dir.empty()) {
    r = harness::execute(cfg);
  } else {
    cfg.output_dir = output_dir;
    r = harness::run_experiment(cfg);
  }
  harness::json metrics = harness::json::object();
  for (const auto& [k, v] : r.records.front().metrics()) metrics[k] = v;
  harness::json out = {{"metrics", metrics}, {"report", r.report}, {"warnings", cfg.warnings}};
  return out.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "memristive in-memory computing simulator";
  m.attr("__version__") = harness::version();

  auto base = py::register_exception<Error>(m, "MemsimError", PyExc_RuntimeError);
  py::register_exception<ClockError>(m, "ClockError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<RangeError>(m, "RangeError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<SingularSystemError>(m, "SingularSystemError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  py::class_<Rng>(m, "Rng").def(py::init<std::uint64_t>(), py::arg("seed"));
  m.def("derive_seed", py::overload_cast<std::uint64_t, std::string_view>(&derive_seed), py::arg("parent"),
        py::arg("task"));

  py::class_<DeviceParams>(m, "DeviceParams")
      .def(py::init<>())
      .def_static("ideal", &DeviceParams::ideal)
      .def_readwrite("g_min", &DeviceParams::g_min)
      .def_readwrite("g_max", &DeviceParams::g_max)
      .def_readwrite("set_step_fraction", &DeviceParams::set_step_fraction)
      .def_readwrite("prog_noise_rel", &DeviceParams::prog_noise_rel)
      .def_readwrite("read_noise_rel", &DeviceParams::read_noise_rel)
      .def_readwrite("drift_nu", &DeviceParams::drift_nu)
      .def_readwrite("drift_t0", &DeviceParams::drift_t0)
      .def_readwrite("drift_nu_cv", &DeviceParams::drift_nu_cv)
      .def_readwrite("kappa_reset", &DeviceParams::kappa_reset)
      .def("validate", &DeviceParams::validate);

  py::class_<DeviceState>(m, "DeviceState")
      .def(py::init<>())
      .def_static("at_floor", &DeviceState::at_floor, py::arg("params"), py::arg("t") = 0.0)
      .def_readwrite("g_programmed", &DeviceState::g_programmed)
      .def_readwrite("t_last_program", &DeviceState::t_last_program);

  m.def(
      "apply_pulse",
      [](const DeviceParams& p, const DeviceState& s, bool set, int count, double amplitude, double now,
         Rng& rng) {
        return apply_pulse(p, s, Pulse{set ? Polarity::Set : Polarity::Reset, count, amplitude}, now, rng);
      },
      py::arg("params"), py::arg("state"), py::arg("set") = true, py::arg("count") = 1,
      py::arg("amplitude") = 1.0, py::arg("now") = 0.0, py::arg("rng"));
  m.def("read", &memsim::read, py::arg("params"), py::arg("state"), py::arg("now"), py::arg("rng"));
  m.def("drifted_conductance", &drifted_conductance, py::arg("params"), py::arg("state"), py::arg("now"));
  m.def(
      "program_iterative",
      [](const DeviceParams& p, const DeviceState& s, double target, double tol, int max_iter, double now,
         Rng& rng) {
        auto r = program_iterative(p, s, target, tol, max_iter, now, rng);
        return py::make_tuple(r.state, r.achieved, r.iterations);
      },
      py::arg("params"), py::arg("state"), py::arg("g_target"), py::arg("tol"), py::arg("max_iter"),
      py::arg("now"), py::arg("rng"));

  py::class_<TiledMatrix>(m, "Crossbar")
      .def(py::init<int, int, int, const DeviceParams&, double, double>(), py::arg("rows"), py::arg("cols"),
           py::arg("tile_dim") = 256, py::arg("params") = DeviceParams::ideal(), py::arg("w_max") = 1.0,
           py::arg("v_read") = 0.2)
      .def(
          "program",
          [](TiledMatrix& t, const Eigen::MatrixXd& a, Rng& rng, const std::string& mode, double tol,
             int max_iter, double now) { t.program(a, make_mode(mode, tol, max_iter), now, rng); },
          py::arg("matrix"), py::arg("rng"), py::arg("mode") = "iterative", py::arg("tol") = 0.005,
          py::arg("max_iter") = 100, py::arg("now") = 0.0)
      .def("mvm", &TiledMatrix::mvm, py::arg("x"), py::arg("rng"))
      .def("mvm_transpose", &TiledMatrix::mvm_transpose, py::arg("y"), py::arg("rng"))
      .def("multiply", &TiledMatrix::multiply, py::arg("x"), py::arg("rng"))
      .def("advance_time", &TiledMatrix::advance_time, py::arg("dt"))
      .def("decoded_weights", &TiledMatrix::decoded_weights)
      .def_property_readonly("shape", [](const TiledMatrix& t) { return py::make_tuple(t.n_rows(), t.n_cols()); })
      .def_property_readonly("now", &TiledMatrix::now);

  m.def(
      "amp_recover",
      [](const Eigen::MatrixXd& a, const Eigen::VectorXd& y, int iters, double lam, Rng& rng,
         std::optional<Eigen::VectorXd> x_true, const DeviceParams& device, int sparsity_k) {
        cs::ProblemOptions o;
        o.device = device;
        auto p = cs::make_problem(a, sparsity_k, o, rng);
        auto tr = cs::amp_recover(p, y, iters, cs::LambdaSchedule::constant(lam), rng, x_true);
        return py::make_tuple(tr.estimates.back(), tr.nmse_db);
      },
      py::arg("measurement"), py::arg("y"), py::arg("iters"), py::arg("lam") = 1.5, py::arg("rng"),
      py::arg("x_true") = py::none(), py::arg("device") = DeviceParams::ideal(), py::arg("sparsity_k") = 0);
  m.def("gaussian_matrix", &cs::gaussian_matrix, py::arg("m"), py::arg("n"), py::arg("rng"));
  m.def("sparse_signal", &cs::sparse_signal, py::arg("n"), py::arg("k"), py::arg("rng"));
  m.def("nmse_db", &cs::nmse_db, py::arg("x_true"), py::arg("x_hat"));

  m.def(
      "snn_efficiency_favorable",
      [](double c_add, double c_mul, double p, double ratio) {
        auto v = snn::snn_efficiency_favorable({c_add, c_mul, p, ratio});
        return py::make_tuple(v.favorable, v.margin);
      },
      py::arg("c_add"), py::arg("c_mul"), py::arg("p"), py::arg("ratio_t_dt"));

  m.def(
      "narma10",
      [](int length, std::uint64_t seed) {
        auto n = reservoir::narma10(length, seed);
        return py::make_tuple(n.input, n.target);
      },
      py::arg("length"), py::arg("seed"));

  m.def("_run", &run_json, py::arg("experiment"), py::arg("seed"), py::arg("overrides") = "{}",
        py::arg("output_dir") = "");
  m.def("_registry", [] {
    py::list out;
    for (const auto& e : harness::registry()) {
      py::dict d;
      d["name"] = e.name;
      d["module"] = e.module;
      d["figure"] = e.figure;
      d["description"] = e.description;
      out.append(d);
    }
    return out;
  });
}
