#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "misim/error.hpp"
#include "misim/metrics.hpp"
#include "misim/models.hpp"
#include "misim/msm.hpp"
#include "misim/runner.hpp"
#include "misim/scenario.hpp"
#include "misim/trial.hpp"

namespace py = pybind11;
using namespace misim;

namespace {

py::dict scenario_dict(const scenario::ScenarioSpec& s) {
  py::dict d;
  d["id"] = s.id;
  d["cv_between"] = s.cv_between;
  d["cv_within"] = s.cv_within;
  d["outlier"] = scenario::to_string(s.outlier);
  d["size"] = scenario::to_string(s.size);
  d["target_has_os"] = s.target_has_os;
  d["nuisance_cv"] = s.nuisance_cv ? py::cast(*s.nuisance_cv) : py::none();
  return d;
}

py::dict outcome_dict(const metrics::ReplicateOutcome& o) {
  py::dict d;
  d["scenario_id"] = o.scenario_id;
  d["replicate"] = o.replicate;
  d["model_id"] = o.model_id;
  d["status"] = metrics::to_string(o.status);
  d["mean"] = o.mean;
  d["sd"] = o.sd;
  d["q025"] = o.q025;
  d["q975"] = o.q975;
  d["truth"] = o.truth;
  d["option1"] = o.option1;
  d["option2"] = o.option2;
  d["message"] = o.message;
  return d;
}

runner::RunConfig config_from(const py::dict& overrides) {
  runner::RunConfig c;
  if (!overrides.empty()) {
    const std::string text = py::module_::import("json").attr("dumps")(overrides).cast<std::string>();
    c.merge_json(nlohmann::json::parse(text));
  }
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-indication synthesis simulation engine";

  // Translators run newest first, so the base class goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NotEstimable>(m, "NotEstimable", PyExc_ValueError);

  m.def(
      "lhr_os",
      [](double t, double m_, double lambda01, double delta) {
        return msm::lhr_os({lambda01, msm::kLambda02, delta, m_}, t);
      },
      py::arg("t"), py::arg("m") = msm::kMeanM, py::arg("lambda01") = msm::kMeanLambda01,
      py::arg("delta") = msm::kMeanDelta);

  m.def(
      "estimand",
      [](double m_, double lambda01, double delta) {
        const msm::MsmParams p{lambda01, msm::kLambda02, delta, m_};
        p.validate();
        msm::EstimandSpec spec;
        spec.followup = msm::solve_followup(p);
        py::dict d;
        d["followup"] = spec.followup;
        d["estimand"] = msm::true_estimand(p, spec);
        d["lhr_pfs"] = msm::lhr_pfs(p);
        d["n_total"] = trial::design_study(p).n_total;
        return d;
      },
      py::arg("m") = msm::kMeanM, py::arg("lambda01") = msm::kMeanLambda01,
      py::arg("delta") = msm::kMeanDelta, "Follow-up, true OS estimand and design size.");

  m.def(
      "calibrate",
      [](double median_pfs, double median_os) {
        msm::CalibrationRow row;
        row.median_pfs = median_pfs;
        row.median_os = median_os;
        const auto c = msm::calibrate_from_medians(row);
        return py::make_tuple(c.lambda01, c.lambda12, c.delta);
      },
      py::arg("median_pfs"), py::arg("median_os"),
      "(lambda01, lambda12, delta) from control-arm medians in months.");

  py::class_<trial::DesignTargets>(m, "DesignTargets")
      .def(py::init<>())
      .def_readwrite("alpha", &trial::DesignTargets::alpha)
      .def_readwrite("power", &trial::DesignTargets::power)
      .def_readwrite("hr_alt", &trial::DesignTargets::hr_alt);
  m.def("lachin_foulkes_n", &trial::lachin_foulkes_n, py::arg("control_rate"),
        py::arg("followup"), py::arg("targets") = trial::DesignTargets{});

  m.def("scenario_grid", [] {
    py::list out;
    for (const auto& s : scenario::scenario_grid()) out.append(scenario_dict(s));
    return out;
  });
  m.def(
      "select_scenarios",
      [](const std::string& filter, const std::string& preset) {
        py::list out;
        for (const auto& s : runner::select_scenarios(filter, preset)) out.append(scenario_dict(s));
        return out;
      },
      py::arg("filter") = "all", py::arg("preset") = "grid");

  m.def("model_ids", [] {
    std::vector<std::string> ids;
    for (const auto& s : models::all_models()) ids.push_back(s.id());
    return ids;
  });

  m.def(
      "simulate_dataset",
      [](int scenario_id, int replicate, std::uint64_t seed) {
        const auto specs = runner::select_scenarios(std::to_string(scenario_id), "grid");
        runner::RunConfig c;
        c.seed = seed;
        const auto d = runner::unit_dataset(specs.at(0), replicate, c);
        py::list studies;
        for (const auto& s : d.studies) {
          py::dict row;
          row["indication"] = s.result.indication;
          row["study"] = s.result.study;
          row["is_target"] = s.is_target;
          row["lhr_pfs"] = s.result.lhr_pfs;
          row["se_pfs"] = s.result.se_pfs;
          row["lhr_os"] = s.result.lhr_os ? py::cast(*s.result.lhr_os) : py::none();
          row["se_os"] = s.result.se_os ? py::cast(*s.result.se_os) : py::none();
          studies.append(row);
        }
        py::dict out;
        out["scenario_id"] = d.scenario_id;
        out["replicate"] = d.replicate;
        out["truth"] = d.truth;
        out["m_j"] = d.m_j;
        out["studies"] = studies;
        return out;
      },
      py::arg("scenario_id"), py::arg("replicate") = 0,
      py::arg("seed") = runner::RunConfig{}.seed);

  m.def(
      "run_unit",
      [](int scenario_id, int replicate, const py::dict& config) {
        const auto c = config_from(config);
        const auto specs = runner::select_scenarios(std::to_string(scenario_id), c.preset);
        const auto selected = runner::select_models(c.models);
        std::vector<metrics::ReplicateOutcome> rows;
        {
          py::gil_scoped_release release;
          rows = runner::run_unit(specs.at(0), replicate, c, selected);
        }
        py::list out;
        for (const auto& o : rows) out.append(outcome_dict(o));
        return out;
      },
      py::arg("scenario_id"), py::arg("replicate") = 0, py::arg("config") = py::dict(),
      "Fit the configured models to one simulated dataset.");

  m.def(
      "run",
      [](const py::dict& config) {
        const auto c = config_from(config);
        runner::RunSummary s;
        {
          py::gil_scoped_release release;
          s = runner::run(c);
        }
        py::dict d;
        d["units_total"] = s.units_total;
        d["units_run"] = s.units_run;
        d["units_resumed"] = s.units_resumed;
        d["rows"] = s.rows;
        d["failed"] = s.failed;
        d["not_estimable"] = s.not_estimable;
        d["exit_code"] = static_cast<int>(s.exit_code);
        return d;
      },
      py::arg("config"), "Full pipeline; writes outcomes.csv, metrics.csv, manifest.json.");

  m.def(
      "aggregate",
      [](const std::string& outcomes_csv) {
        std::istringstream in(outcomes_csv);
        const auto outcomes = metrics::read_outcomes_csv(in);
        const auto report = metrics::aggregate(outcomes, [](int sid) {
          return scenario::data_seed_id(
              scenario::scenario_grid().at(static_cast<std::size_t>(sid)));
        });
        std::ostringstream out;
        metrics::write_metrics_csv(out, report);
        return out.str();
      },
      py::arg("outcomes_csv"), "metrics.csv text from outcomes.csv text.");

  m.attr("__version__") = runner::kVersion;
}
