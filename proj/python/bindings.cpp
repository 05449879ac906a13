#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "labguard/audit.hpp"
#include "labguard/cbf.hpp"
#include "labguard/error.hpp"
#include "labguard/harness.hpp"
#include "labguard/metrics.hpp"
#include "labguard/scenario.hpp"

namespace py = pybind11;
using namespace labguard;

// JSON crosses the boundary as text; the Python side decodes it.

namespace {

Scenario scenario_from(const std::string& doc_or_path, bool is_path) {
  return is_path ? load_scenario(doc_or_path) : parse_scenario(Json::parse(doc_or_path));
}

std::vector<std::string> names(const LayoutPtr& layout) {
  std::vector<std::string> out;
  for (const auto& d : layout->dims()) out.push_back(d.name);
  return out;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_list(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

std::string report_json(const ChainReport& r) {
  Json j{{"intact", r.intact}, {"length", r.length}, {"reason", r.reason}};
  j["first_break"] = r.first_break ? Json(*r.first_break) : Json();
  return j.dump();
}

// Filter bound to one scenario's plant, safe set and input box.
class SafetyFilter {
 public:
  explicit SafetyFilter(const Scenario& s) : a_(assemble(s)) {}

  std::vector<std::string> state_names() const { return names(a_.model.state_layout()); }
  std::vector<std::string> input_names() const { return names(a_.model.input_layout()); }
  std::vector<double> initial_state() const { return to_list(a_.x0.values()); }

  std::string filter(const std::vector<double>& x, const std::vector<double>& u_ai) const {
    const FilterResult r = filter_control(a_.model, *a_.odd.safe_set(), state(x),
                                          ControlInput(a_.model.input_layout(), to_vector(u_ai)), a_.bounds,
                                          a_.filter);
    return Json{{"u_star", to_list(r.u_star.values())},
                {"correction_norm", r.correction_norm},
                {"active", r.active_labels},
                {"feasible", r.status == FilterStatus::Ok}}
        .dump();
  }

  std::string margin(const std::vector<double>& x) const {
    const Margin m = normalized_margin(*a_.odd.safe_set(), state(x));
    return Json{{"value", m.value}, {"label", m.label}}.dump();
  }

 private:
  StateVector state(const std::vector<double>& x) const {
    if (x.size() != a_.model.state_layout()->size()) throw DimensionMismatch("state has the wrong length");
    return StateVector(a_.model.state_layout(), to_vector(x));
  }

  Assembly a_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  // Registered base first: pybind11 tries translators newest first.
  auto base = py::register_exception<Error>(m, "LabguardError", PyExc_RuntimeError);
  py::register_exception<ScenarioInvalid>(m, "ScenarioInvalid", base.ptr());

  m.def(
      "run",
      [](const std::string& doc_or_path, bool is_path, std::optional<std::uint64_t> seed) {
        const Scenario s = scenario_from(doc_or_path, is_path);
        RunResult r;
        {
          py::gil_scoped_release release;
          RunOptions opts;
          opts.seed = seed;
          r = run_scenario(s, opts);
        }
        Json out{{"status", r.status},
                 {"metrics", r.metrics.to_json()},
                 {"audit", Json::parse(report_json(r.audit_report))},
                 {"exit_code", exit_code_for(r)}};
        return py::make_tuple(out.dump(), events_jsonl(r.events), py::bytes(r.audit.serialize()));
      },
      py::arg("doc_or_path"), py::arg("is_path"), py::arg("seed") = std::nullopt);

  m.def("validate", [](const std::string& doc_or_path, bool is_path) {
    const Scenario s = scenario_from(doc_or_path, is_path);
    assemble(s);
    return s.name;
  });

  m.def("metrics_from_events", [](const std::string& jsonl) {
    const auto events = parse_events_jsonl(jsonl);
    return compute_metrics(events, labels_from_events(events)).to_json().dump();
  });

  m.def("verify_audit_bytes", [](const py::bytes& data) { return report_json(verify_serialized(data)); });
  m.def("verify_audit_file", [](const std::string& path) { return report_json(verify_file(path)); });

  py::class_<SafetyFilter>(m, "_SafetyFilter")
      .def(py::init([](const std::string& doc_or_path, bool is_path) {
        return SafetyFilter(scenario_from(doc_or_path, is_path));
      }))
      .def_property_readonly("state_names", &SafetyFilter::state_names)
      .def_property_readonly("input_names", &SafetyFilter::input_names)
      .def_property_readonly("initial_state", &SafetyFilter::initial_state)
      .def("filter", &SafetyFilter::filter)
      .def("margin", &SafetyFilter::margin);
}
