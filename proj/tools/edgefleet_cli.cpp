// edgefleet: offline training, scenario runs, audit queries and reports.
//
// Exit codes: 0 success, 2 input error, 3 insufficient data, 4 internal failure.
// Failures print a single "error: <Code>: <message>" line on stderr.

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "CLI11.hpp"
#include "edgefleet/error.hpp"
#include "edgefleet/models.hpp"
#include "edgefleet/pipeline.hpp"
#include "edgefleet/registry.hpp"
#include "edgefleet/scenario.hpp"
#include "edgefleet/supervision.hpp"
#include "edgefleet/text.hpp"

namespace fs = std::filesystem;
using namespace edgefleet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitInsufficient = 3;
constexpr int kExitInternal = 4;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInsufficientData:
    case ErrorCode::kEmptyInput:
      return kExitInsufficient;
    case ErrorCode::kSingularSystem:
    case ErrorCode::kBrokerClosed:
    case ErrorCode::kWildcardInPublish:
    case ErrorCode::kInvalidTopic:
    case ErrorCode::kUnknownModelVersion:
      return kExitInternal;
    default:
      return kExitInput;
  }
}

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("EDGEFLEET_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  const auto parsed = parse_int(raw);
  if (!parsed || *parsed < 0) throw Error(ErrorCode::kInvalidArgument, "EDGEFLEET_SEED is not a non-negative integer");
  return static_cast<std::uint64_t>(*parsed);
}

std::string lower(std::string_view text) {
  std::string out(text);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// Accepts an RFC 3339 instant or a bare date (midnight UTC).
Instant parse_instant_arg(const std::string& text) {
  if (text.size() == 10) return parse_rfc3339(text + "T00:00:00Z");
  return parse_rfc3339(text);
}

void require_run_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kStorageFailure, "run directory not found: " + dir.string());
  if (!fs::exists(RunLayout{dir}.audit_csv()))
    throw Error(ErrorCode::kStorageFailure, "no audit log under " + dir.string());
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string room;
  std::string algo = "best";
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t folds = 10;
};

int cmd_train(const TrainArgs& args) {
  const std::uint64_t seed = args.seed ? *args.seed : env_seed().value_or(42);
  std::vector<Algorithm> algorithms;
  const std::string algo = lower(args.algo);
  if (algo == "best") {
    algorithms.assign(kAllAlgorithms.begin(), kAllAlgorithms.end());
  } else {
    algorithms.push_back(parse_algorithm(algo));
  }
  if (args.folds < 2) throw Error(ErrorCode::kInvalidArgument, "--folds must be at least 2");

  std::vector<SensorReading> readings;
  for (auto& r : read_readings_csv(fs::path(args.data))) {
    if (r.room == args.room) readings.push_back(std::move(r));
  }
  if (readings.empty()) throw Error(ErrorCode::kInsufficientData, "no readings for room " + args.room);
  const auto examples = build_training_set(clean(std::move(readings)));
  if (examples.size() < args.folds)
    throw Error(ErrorCode::kInsufficientData, std::to_string(examples.size()) + " examples for " +
                                                  std::to_string(args.folds) + " folds");

  std::vector<AlgorithmEvaluation> evaluations;
  for (Algorithm a : algorithms) evaluations.push_back(evaluate_algorithm(a, examples, args.folds, seed));
  const std::size_t best = select_best(evaluations);

  fs::create_directories(args.out);
  std::ostringstream table;
  table << "room,algorithm,cv_rmse,test_rmse,selected\n";
  for (std::size_t i = 0; i < evaluations.size(); ++i) {
    const auto& e = evaluations[i];
    ModelArtifact artifact = fit_artifact(e.algorithm, examples, args.room, Instant{}, seed);
    artifact.trained_at = artifact.window_end;  // keeps the file a pure function of the inputs
    artifact.cv_rmse = e.cv_rmse;
    artifact.test_rmse = e.test_rmse;
    const fs::path file = fs::path(args.out) / (args.room + "_" + lower(to_string(e.algorithm)) + ".mdl");
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    out << serialize(artifact);
    if (!out) throw Error(ErrorCode::kStorageFailure, "cannot write " + file.string());
    table << join_csv({args.room, std::string(to_string(e.algorithm)), format_double(e.cv_rmse),
                       format_double(e.test_rmse), i == best ? "yes" : "no"})
          << "\n";
  }
  std::cout << table.str();
  return kExitOk;
}

// --- simulate ----------------------------------------------------------------

int cmd_simulate(const std::string& config_path, const std::string& out_dir) {
  const ScenarioConfig config = load_scenario_config(config_path, env_seed());
  const ScenarioResult result = run_scenario(config, out_dir);
  std::cout << "period: " << format_rfc3339(result.period.start) << ".." << format_rfc3339(result.period.end) << "\n"
            << "prediction_rows: " << result.prediction_rows << "\n"
            << "drift_events: " << result.report.total_drift << "\n"
            << "retrains: " << result.retrains.size() << "\n"
            << "alarms: " << result.alarms.size() << "\n"
            << "traceability_violations: " << result.traceability_violations << "\n";
  return result.traceability_violations == 0 ? kExitOk : kExitInternal;
}

// --- report ------------------------------------------------------------------

int cmd_report(const std::string& run_dir, const std::string& period_arg, bool emit_plot_data) {
  require_run_dir(run_dir);
  const RunLayout layout{run_dir};
  const FleetData data = load_fleet_data(layout);
  Period period;
  if (!period_arg.empty()) {
    const auto dots = period_arg.find("..");
    if (dots == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "--period expects <from>..<to>");
    period.start = parse_instant_arg(period_arg.substr(0, dots));
    period.end = parse_instant_arg(period_arg.substr(dots + 2));
    if (period.end <= period.start) throw Error(ErrorCode::kInvalidArgument, "--period is empty");
  } else {
    period = run_period(layout).value_or(data_period(data));
  }
  const FleetReport report = build_fleet_report(data, period);
  write_fleet_report(report, data, layout.report_dir(), emit_plot_data);
  std::cout << render_summary(report);
  return kExitOk;
}

// --- audit -------------------------------------------------------------------

struct AuditArgs {
  std::string run;
  std::string room;
  std::string device;
  std::string at;
  std::string event;
};

int cmd_audit(const AuditArgs& args) {
  require_run_dir(args.run);
  const auto records = read_audit_csv(RunLayout{args.run}.audit_csv());

  if (!args.at.empty()) {
    const Instant at = parse_instant_arg(args.at);
    std::vector<std::string> rooms;
    for (const auto& r : records) {
      if (r.event != AuditEvent::kDeploy) continue;
      if (!args.room.empty() && r.room != args.room) continue;
      if (!args.device.empty() && r.device_id != args.device) continue;
      if (std::find(rooms.begin(), rooms.end(), r.room) == rooms.end()) rooms.push_back(r.room);
    }
    std::sort(rooms.begin(), rooms.end());
    std::cout << "room,model_version\n";
    for (const auto& room : rooms) {
      const auto version = model_at(records, room, at);
      std::cout << join_csv({room, version ? std::to_string(version->value) : ""}) << "\n";
    }
    return kExitOk;
  }

  AuditFilter filter;
  if (!args.room.empty()) filter.room = args.room;
  if (!args.device.empty()) filter.device_id = args.device;
  if (!args.event.empty()) filter.event = parse_audit_event(args.event);
  std::cout << join_csv(audit_header()) << "\n";
  for (const auto& r : records) {
    if (filter.matches(r)) std::cout << format_audit_row(r) << "\n";
  }
  return kExitOk;
}

// --- inspect-model -----------------------------------------------------------

int cmd_inspect(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::kStorageFailure, "cannot open " + file);
  std::ostringstream bytes;
  bytes << in.rdbuf();
  const ModelArtifact a = deserialize(bytes.str());
  validate_artifact(a);

  std::cout << "version: " << a.version.value << "\n"
            << "algorithm: " << to_string(a.algorithm) << "\n"
            << "room: " << a.room << "\n"
            << "trained_at: " << format_rfc3339(a.trained_at) << "\n"
            << "window: " << format_rfc3339(a.window_start) << ".." << format_rfc3339(a.window_end) << "\n"
            << "cv_rmse: " << format_double(a.cv_rmse) << "\n"
            << "test_rmse: " << format_double(a.test_rmse) << "\n";
  std::cout << "scaler_means:";
  for (double m : a.scaler.means) std::cout << " " << format_double(m);
  std::cout << "\nscaler_std_devs:";
  for (double s : a.scaler.std_devs) std::cout << " " << format_double(s);
  std::cout << "\n";
  std::visit(
      [](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LinearParams> || std::is_same_v<T, SvrParams>) {
          std::cout << "weights:";
          for (double w : p.weights) std::cout << " " << format_double(w);
          std::cout << "\nintercept: " << format_double(p.intercept) << "\n";
        } else if constexpr (std::is_same_v<T, ElmParams>) {
          std::cout << "hidden: " << p.hidden << "\nactivation: " << p.activation << "\n";
        } else {
          std::size_t nodes = 0;
          for (const auto& t : p.trees) nodes += t.nodes.size();
          std::cout << "trees: " << p.trees.size() << "\nnodes: " << nodes << "\nmax_depth: " << p.max_depth << "\n";
        }
      },
      a.params);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edge fleet model lifecycle tool", "edgefleet"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train models offline from a reading CSV");
  train_cmd->add_option("--data", train.data, "Reading CSV")->required();
  train_cmd->add_option("--room", train.room, "Room to train on")->required();
  train_cmd->add_option("--algo", train.algo, "mlr, svr, elm, rfr or best")->required();
  train_cmd->add_option("--out", train.out, "Directory for .mdl files")->required();
  train_cmd->add_option("--seed", train.seed, "Training seed");
  train_cmd->add_option("--folds", train.folds, "Cross-validation folds")->capture_default_str();

  std::string sim_config, sim_out;
  auto* sim_cmd = app.add_subcommand("simulate", "Run a fleet scenario");
  sim_cmd->add_option("--config", sim_config, "Scenario config file")->required();
  sim_cmd->add_option("--out", sim_out, "Run directory (must not hold a run)")->required();

  std::string report_run, report_period;
  bool emit_plot_data = false;
  auto* report_cmd = app.add_subcommand("report", "Build the fleet report of a run");
  report_cmd->add_option("--run", report_run, "Run directory")->required();
  report_cmd->add_option("--period", report_period, "<from>..<to>, end exclusive");
  report_cmd->add_flag("--emit-plot-data", emit_plot_data, "Also write chartable series");

  AuditArgs audit;
  auto* audit_cmd = app.add_subcommand("audit", "Query the audit trail of a run");
  audit_cmd->add_option("--run", audit.run, "Run directory")->required();
  audit_cmd->add_option("--room", audit.room, "Room filter");
  audit_cmd->add_option("--device", audit.device, "Device filter");
  audit_cmd->add_option("--at", audit.at, "Print the model live per room at this instant");
  audit_cmd->add_option("--event", audit.event, "Event filter");

  std::string model_file;
  auto* inspect_cmd = app.add_subcommand("inspect-model", "Print a model artifact");
  inspect_cmd->add_option("--file", model_file, "Artifact file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string message = e.what();
    std::replace(message.begin(), message.end(), '\n', ' ');
    std::cerr << "error: InvalidArgument: " << message << "\n";
    return kExitInput;
  }

  try {
    if (*train_cmd) return cmd_train(train);
    if (*sim_cmd) return cmd_simulate(sim_config, sim_out);
    if (*report_cmd) return cmd_report(report_run, report_period, emit_plot_data);
    if (*audit_cmd) return cmd_audit(audit);
    if (*inspect_cmd) return cmd_inspect(model_file);
  } catch (const Error& e) {
    std::string message = e.what();
    std::replace(message.begin(), message.end(), '\n', ' ');
    std::cerr << "error: " << message << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
