// Python bindings for the edgefleet core. Instants cross the boundary as
// RFC 3339 strings; feature matrices as (n, 6) float64 arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "edgefleet/error.hpp"
#include "edgefleet/messages.hpp"
#include "edgefleet/models.hpp"
#include "edgefleet/pipeline.hpp"
#include "edgefleet/registry.hpp"
#include "edgefleet/scenario.hpp"
#include "edgefleet/simulator.hpp"
#include "edgefleet/supervision.hpp"
#include "edgefleet/transport.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace edgefleet;

namespace {

using Matrix = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<Features> to_rows(const Matrix& x) {
  if (x.ndim() != 2 || x.shape(1) != static_cast<py::ssize_t>(kFeatureCount))
    throw Error(ErrorCode::kLengthMismatch, "expected an (n, 6) feature matrix");
  std::vector<Features> rows(static_cast<std::size_t>(x.shape(0)));
  auto view = x.unchecked<2>();
  for (py::ssize_t i = 0; i < x.shape(0); ++i)
    for (py::ssize_t j = 0; j < x.shape(1); ++j) rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = view(i, j);
  return rows;
}

std::vector<double> to_vector(const py::array_t<double, py::array::c_style | py::array::forcecast>& y) {
  if (y.ndim() != 1) throw Error(ErrorCode::kLengthMismatch, "expected a 1-d target array");
  return {y.data(), y.data() + y.size()};
}

Matrix from_rows(const std::vector<Features>& rows) {
  Matrix out({static_cast<py::ssize_t>(rows.size()), static_cast<py::ssize_t>(kFeatureCount)});
  auto view = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < kFeatureCount; ++j) view(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(j)) = rows[i][j];
  return out;
}

py::array_t<double> to_array(const std::vector<double>& values) {
  return py::array_t<double>(static_cast<py::ssize_t>(values.size()), values.data());
}

Instant instant(const std::string& text) { return parse_rfc3339(text); }

py::dict reading_dict(const SensorReading& r) {
  py::dict d;
  for (const auto& [k, v] : to_field_map(r)) d[py::str(k)] = v;
  return d;
}

py::dict audit_dict(const AuditRecord& r) {
  py::dict d;
  d["seq"] = r.seq;
  d["at"] = format_rfc3339(r.at);
  d["event"] = std::string(to_string(r.event));
  d["device_id"] = r.device_id;
  d["room"] = r.room;
  d["model_version"] = r.model_version ? py::cast(r.model_version->value) : py::none();
  py::dict detail;
  for (const auto& [k, v] : r.detail) detail[py::str(k)] = v;
  d["detail"] = detail;
  return d;
}

/// Readings of one room from a CSV, cleaned and turned into labelled examples.
std::vector<LabeledExample> examples_from_csv(const fs::path& path, const std::string& room) {
  std::vector<SensorReading> readings;
  for (auto& r : read_readings_csv(path))
    if (r.room == room) readings.push_back(std::move(r));
  return build_training_set(clean(std::move(readings)));
}

}  // namespace

PYBIND11_MODULE(_edgefleet, m) {
  m.doc() = "Edge fleet model lifecycle: training, registry, drift loop and scenarios";

  static py::exception<Error> error_type(m, "EdgefleetError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type.ptr())(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  m.attr("DRIFT_THRESHOLD") = kDriftThreshold;
  m.attr("AQI_ALERT_THRESHOLD") = kAqiAlertThreshold;
  m.attr("FEATURE_NAMES") = std::vector<std::string>(kFeatureNames.begin(), kFeatureNames.end());

  py::enum_<Algorithm>(m, "Algorithm")
      .value("MLR", Algorithm::kMlr)
      .value("SVR", Algorithm::kSvr)
      .value("ELM", Algorithm::kElm)
      .value("RFR", Algorithm::kRfr);
  m.def("parse_algorithm", &parse_algorithm, py::arg("name"));

  // --- models -----------------------------------------------------------------

  py::class_<ModelArtifact>(m, "ModelArtifact")
      .def_property_readonly("version", [](const ModelArtifact& a) { return a.version.value; })
      .def_readonly("algorithm", &ModelArtifact::algorithm)
      .def_readonly("room", &ModelArtifact::room)
      .def_readonly("cv_rmse", &ModelArtifact::cv_rmse)
      .def_readonly("test_rmse", &ModelArtifact::test_rmse)
      .def_property_readonly("trained_at", [](const ModelArtifact& a) { return format_rfc3339(a.trained_at); })
      .def_property_readonly("window_start", [](const ModelArtifact& a) { return format_rfc3339(a.window_start); })
      .def_property_readonly("window_end", [](const ModelArtifact& a) { return format_rfc3339(a.window_end); })
      .def("predict",
           [](const ModelArtifact& a, const Matrix& x) {
             const auto rows = to_rows(x);
             std::vector<double> out;
             out.reserve(rows.size());
             for (const auto& row : rows) out.push_back(predict(a, row));
             return to_array(out);
           },
           py::arg("features"), "Forecast for raw (unscaled) feature rows.")
      .def("to_bytes", [](const ModelArtifact& a) { return py::bytes(serialize(a)); })
      .def_static("from_bytes", [](const py::bytes& b) { return deserialize(std::string(b)); })
      .def("validate", &validate_artifact)
      .def("__repr__", [](const ModelArtifact& a) {
        std::ostringstream s;
        s << "<ModelArtifact v" << a.version.value << " " << to_string(a.algorithm) << " room=" << a.room << ">";
        return s.str();
      });

  m.def(
      "fit_scaler",
      [](const Matrix& x) {
        const ScalerParams p = fit_scaler(std::span<const Features>(to_rows(x)));
        return py::make_tuple(std::vector<double>(p.means.begin(), p.means.end()),
                              std::vector<double>(p.std_devs.begin(), p.std_devs.end()));
      },
      py::arg("features"), "Per-feature (means, population std devs).");
  m.def(
      "standardize",
      [](const Matrix& x) {
        const auto rows = to_rows(x);
        return from_rows(apply_scaler(fit_scaler(std::span<const Features>(rows)), rows));
      },
      py::arg("features"), "Fit a scaler on the matrix and return the transformed matrix.");

  m.def(
      "cross_validate",
      [](Algorithm algorithm, const Matrix& x, const py::array_t<double, py::array::c_style | py::array::forcecast>& y,
         std::size_t k, std::uint64_t seed) {
        const auto rows = to_rows(x);
        const auto targets = to_vector(y);
        const CvResult r = cross_validate(algorithm, rows, targets, k, seed);
        py::dict d;
        d["cv_rmse"] = r.cv_rmse;
        d["fold_rmses"] = r.fold_rmses;
        d["folds"] = r.folds;
        return d;
      },
      py::arg("algorithm"), py::arg("features"), py::arg("targets"), py::arg("k") = 10, py::arg("seed") = 0);

  m.def(
      "train_csv",
      [](const fs::path& csv, const std::string& room, const std::string& algo, std::size_t folds,
         std::uint64_t seed) {
        const auto examples = examples_from_csv(csv, room);
        std::vector<Algorithm> algorithms;
        if (algo == "best") {
          algorithms.assign(kAllAlgorithms.begin(), kAllAlgorithms.end());
        } else {
          algorithms.push_back(parse_algorithm(algo));
        }
        std::vector<AlgorithmEvaluation> evaluations;
        for (Algorithm a : algorithms) evaluations.push_back(evaluate_algorithm(a, examples, folds, seed));
        const std::size_t best = select_best(evaluations);
        py::list table;
        for (std::size_t i = 0; i < evaluations.size(); ++i) {
          py::dict row;
          row["room"] = room;
          row["algorithm"] = std::string(to_string(evaluations[i].algorithm));
          row["cv_rmse"] = evaluations[i].cv_rmse;
          row["test_rmse"] = evaluations[i].test_rmse;
          row["selected"] = i == best;
          table.append(row);
        }
        ModelArtifact artifact = fit_artifact(evaluations[best].algorithm, examples, room, Instant{}, seed);
        artifact.trained_at = artifact.window_end;
        artifact.cv_rmse = evaluations[best].cv_rmse;
        artifact.test_rmse = evaluations[best].test_rmse;
        return py::make_tuple(table, artifact);
      },
      py::arg("csv"), py::arg("room"), py::arg("algo") = "best", py::arg("folds") = 10, py::arg("seed") = 42,
      "Evaluate algorithms on a reading CSV; returns (metrics rows, fitted artifact of the selected one).");

  // --- pipeline and generator ----------------------------------------------------

  m.def(
      "read_readings",
      [](const fs::path& path) {
        py::list out;
        for (const auto& r : read_readings_csv(path)) out.append(reading_dict(r));
        return out;
      },
      py::arg("path"));
  m.def(
      "generate_room",
      [](const std::string& room, std::uint64_t seed, const std::string& start, double days) {
        const auto series = generate_room_series(default_profile(room), seed, instant(start),
                                                 Duration(static_cast<std::int64_t>(days * 86'400'000.0)));
        std::vector<double> aqi;
        aqi.reserve(series.size());
        for (const auto& r : series) aqi.push_back(r.air_quality_static);
        return to_array(aqi);
      },
      py::arg("room"), py::arg("seed") = 42, py::arg("start") = "2020-03-15T00:00:00Z", py::arg("days") = 90.0,
      "AQI series of a default room profile at the 5-minute cadence.");

  m.def("drift_triggered", &drift_triggered, py::arg("daily_rmse"), py::arg("n_evaluated"),
        py::arg("threshold") = kDriftThreshold, py::arg("min_samples") = kMinDriftSamples);
  m.def(
      "air_quality_alarm",
      [](double forecast, double threshold) { return air_quality_alarm(forecast, "", Instant{}, threshold).has_value(); },
      py::arg("forecast"), py::arg("threshold") = kAqiAlertThreshold);

  // --- transport -------------------------------------------------------------------

  m.def("topic_matches", [](const std::string& pattern, const std::string& topic) {
    return Topic(pattern).matches(Topic(topic));
  });

  // --- scenarios, audit and reports ----------------------------------------------------

  py::class_<ScenarioConfig>(m, "ScenarioConfig")
      .def_static(
          "parse",
          [](const std::string& text) {
            std::istringstream in(text);
            return parse_scenario_config(in);
          },
          py::arg("text"))
      .def_static("default", &default_scenario, py::arg("seed") = 42)
      .def_static("load", [](const fs::path& p) { return load_scenario_config(p); })
      .def("add_default_shifts", [](ScenarioConfig& c) { add_default_shifts(c); })
      .def_readwrite("duration_days", &ScenarioConfig::duration_days)
      .def_readwrite("history_days", &ScenarioConfig::history_days)
      .def_readwrite("drift_threshold", &ScenarioConfig::drift_threshold)
      .def_property_readonly("rooms",
                             [](const ScenarioConfig& c) {
                               std::vector<std::string> rooms;
                               for (const auto& r : c.rooms) rooms.push_back(r.profile.room);
                               return rooms;
                             })
      .def("render", &render_scenario_config);

  m.def(
      "run_scenario",
      [](const ScenarioConfig& config, const fs::path& out_dir) {
        ScenarioResult r;
        {
          py::gil_scoped_release release;
          r = run_scenario(config, out_dir);
        }
        py::dict d;
        d["period"] = py::make_tuple(format_rfc3339(r.period.start), format_rfc3339(r.period.end));
        d["prediction_rows"] = r.prediction_rows;
        d["traceability_violations"] = r.traceability_violations;
        d["alarms"] = r.alarms.size();
        py::list drift;
        for (const auto& e : r.report.drift_events) {
          py::dict row;
          row["at"] = format_rfc3339(e.at);
          row["device"] = e.device_id;
          row["room"] = e.room;
          row["drift_rmse"] = e.drift_rmse;
          row["retrain_rmse"] = e.retrain_rmse ? py::cast(*e.retrain_rmse) : py::none();
          drift.append(row);
        }
        d["drift_events"] = drift;
        py::list retrains;
        for (const auto& e : r.retrains) {
          py::dict row;
          row["at"] = format_rfc3339(e.at);
          row["device"] = e.device_id;
          row["new_version"] = e.new_version.value;
          row["algorithm"] = std::string(to_string(e.algorithm));
          retrains.append(row);
        }
        d["retrains"] = retrains;
        return d;
      },
      py::arg("config"), py::arg("out_dir"));

  m.def(
      "audit",
      [](const fs::path& run, std::optional<std::string> room, std::optional<std::string> device,
         std::optional<std::string> event) {
        AuditFilter filter;
        filter.room = room;
        filter.device_id = device;
        if (event) filter.event = parse_audit_event(*event);
        py::list out;
        for (const auto& r : read_audit_csv(RunLayout{run}.audit_csv()))
          if (filter.matches(r)) out.append(audit_dict(r));
        return out;
      },
      py::arg("run"), py::arg("room") = py::none(), py::arg("device") = py::none(), py::arg("event") = py::none());
  m.def(
      "model_at",
      [](const fs::path& run, const std::string& room, const std::string& at) -> std::optional<std::uint64_t> {
        const auto records = read_audit_csv(RunLayout{run}.audit_csv());
        const auto v = model_at(records, room, instant(at));
        if (!v) return std::nullopt;
        return v->value;
      },
      py::arg("run"), py::arg("room"), py::arg("at"), "Model version live in `room` at instant `at`.");
  m.def(
      "report",
      [](const fs::path& run, bool emit_plot_data) {
        const RunLayout layout{run};
        const FleetData data = load_fleet_data(layout);
        const FleetReport report = build_fleet_report(data, run_period(layout).value_or(data_period(data)));
        write_fleet_report(report, data, layout.report_dir(), emit_plot_data);
        return render_summary(report);
      },
      py::arg("run"), py::arg("emit_plot_data") = false, "Rebuild report/ for a run and return the summary text.");
}
