#include <optional>
#include <string>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sosctl/errors.hpp"
#include "sosctl/pipeline.hpp"

namespace py = pybind11;
using sosctl::io::json;

namespace {

// Synthesis session over one problem: moments and initialization are
// computed once, then every mode reuses them.
class Session {
 public:
  Session(const std::string& config, const std::string& moment_cache) {
    json cfg = json::parse(config.empty() ? "{}" : config);
    if (!moment_cache.empty()) cfg["moment_cache"] = moment_cache;
    ws_.emplace(sosctl::prepare(sosctl::io::problem_from_json(cfg), sosctl::io::settings_from_json(cfg)));
  }

  const sosctl::InitResult& init() const { return ws_->init; }
  bool moments_loaded() const { return ws_->moments_loaded; }

  std::string synthesize(const std::string& mode, std::optional<int> N) {
    sosctl::Workspace& ws = *ws_;
    const int saved = ws.settings.opt.N;
    if (N) ws.settings.opt.N = *N;
    sosctl::SynthResult r;
    try {
      r = sosctl::synthesize(ws, sosctl::mode_from_string(mode));
    } catch (...) {
      ws.settings.opt.N = saved;
      throw;
    }
    ws.settings.opt.N = saved;
    json history = json::array();
    for (const auto& h : r.state.history) {
      history.push_back({{"iter", h.iter},
                         {"g", h.g},
                         {"alpha", h.alpha},
                         {"min_eig_P", h.min_eig_P},
                         {"min_eig_T", h.min_eig_T},
                         {"wolfe", h.wolfe},
                         {"p_pd", h.p_pd},
                         {"t_pd", h.t_pd}});
    }
    return json{{"controller", sosctl::io::to_json(r.controller)},
                {"summary", r.summary},
                {"history", history}}
        .dump();
  }

  std::string simulate(const std::string& controller, std::optional<double> T) const {
    sosctl::SimConfig cfg = ws_->settings.sim;
    if (T) cfg.T = *T;
    cfg.validate();
    const auto c = sosctl::io::controller_from_json(json::parse(controller));
    return sosctl::simulate_controller(ws_->problem, c, cfg).summary.dump();
  }

 private:
  std::optional<sosctl::Workspace> ws_;
};

sosctl::io::ControllerFile controller_from_string(const std::string& s) {
  return sosctl::io::controller_from_json(json::parse(s));
}

}  // namespace

PYBIND11_MODULE(_sosctl, m) {
  m.doc() = "Stabilizing suboptimal controller synthesis for polytopic polynomial systems";

  auto base = py::register_exception<sosctl::Error>(m, "SosctlError", PyExc_RuntimeError);
  py::register_exception<sosctl::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<sosctl::Infeasible>(m, "Infeasible", base.ptr());
  py::register_exception<sosctl::InfeasiblePoint>(m, "InfeasiblePoint", base.ptr());
  py::register_exception<sosctl::DimensionMismatch>(m, "DimensionMismatch", base.ptr());
  py::register_exception<sosctl::AsymmetricInput>(m, "AsymmetricInput", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const json::exception& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def("vec", [](const Eigen::MatrixXd& a) { return sosctl::poly::vec(a); }, "Column-major stacking.");
  m.def("vech", [](const Eigen::MatrixXd& a) { return sosctl::poly::vech(a); },
        "Lower triangle of a symmetric matrix, column by column.");
  m.def("inv_vec", [](const Eigen::VectorXd& v, int rows, int cols) { return sosctl::poly::inv_vec(v, rows, cols); },
        py::arg("v"), py::arg("rows"), py::arg("cols"));
  m.def("inv_vech", [](const Eigen::VectorXd& v) { return sosctl::poly::inv_vech(v); });

  m.def("benchmark_drift",
        [](const Eigen::VectorXd& x, const Eigen::VectorXd& theta) {
          return sosctl::benchmark_system().drift(x, theta);
        },
        py::arg("x"), py::arg("theta"));
  m.def("benchmark_weights",
        [](const Eigen::VectorXd& theta) { return sosctl::benchmark_system().weights(theta); },
        py::arg("theta"));

  py::class_<sosctl::io::ControllerFile>(m, "Controller")
      .def(py::init(&controller_from_string), py::arg("json"))
      .def("__call__", [](const sosctl::io::ControllerFile& c, const Eigen::VectorXd& x) { return c.controller()(x); },
           py::arg("x"))
      .def("to_json", [](const sosctl::io::ControllerFile& c) { return sosctl::io::to_json(c).dump(); })
      .def_readonly("mode", &sosctl::io::ControllerFile::mode)
      .def_readonly("dx", &sosctl::io::ControllerFile::dx)
      .def_readonly("du", &sosctl::io::ControllerFile::du)
      .def_readonly("W", &sosctl::io::ControllerFile::W)
      .def_property_readonly("w", &sosctl::io::ControllerFile::w)
      .def_property_readonly("has_certificate",
                             [](const sosctl::io::ControllerFile& c) { return c.certificate.has_value(); });

  py::class_<Session>(m, "_Session")
      .def(py::init<const std::string&, const std::string&>(), py::arg("config") = "",
           py::arg("moment_cache") = "", py::call_guard<py::gil_scoped_release>())
      .def_property_readonly("eps1", [](const Session& s) { return s.init().eps1; })
      .def_property_readonly("eps2", [](const Session& s) { return s.init().eps2; })
      .def_property_readonly("w0", [](const Session& s) { return s.init().w0; })
      .def_property_readonly("P0", [](const Session& s) { return s.init().P0; })
      .def_property_readonly("r0", [](const Session& s) { return s.init().r0; })
      .def_property_readonly("moments_loaded", &Session::moments_loaded)
      .def("synthesize", &Session::synthesize, py::arg("mode"), py::arg("N") = py::none(),
           py::call_guard<py::gil_scoped_release>())
      .def("simulate", &Session::simulate, py::arg("controller"), py::arg("T") = py::none(),
           py::call_guard<py::gil_scoped_release>());
}
