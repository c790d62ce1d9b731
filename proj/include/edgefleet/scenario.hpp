#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "edgefleet/messages.hpp"
#include "edgefleet/models.hpp"
#include "edgefleet/registry.hpp"
#include "edgefleet/simulator.hpp"
#include "edgefleet/supervision.hpp"

namespace edgefleet {

struct RoomSetup {
  RoomProfile profile;
  std::string device_id;
};

struct ScenarioSeeds {
  std::uint64_t generator = 0;
  std::uint64_t training = 0;
  std::uint64_t telemetry = 0;
  std::uint64_t corruption = 0;
};

struct ScenarioConfig {
  std::vector<RoomSetup> rooms;
  Instant start = Instant(std::chrono::sys_days(std::chrono::year(2020) / 3 / 15));
  int duration_days = 45;
  int history_days = 90;
  double drift_threshold = kDriftThreshold;
  std::size_t min_drift_samples = kMinDriftSamples;
  double aqi_alert_threshold = kAqiAlertThreshold;
  int retrain_window_days = 14;
  std::size_t retrain_min_examples = 100;
  std::size_t cv_folds = 10;
  Duration daily_trigger_offset{0};  // time of day, from midnight UTC
  Duration telemetry_interval = kTelemetryInterval;
  int silence_intervals = kSilenceIntervals;
  Duration deploy_latency = std::chrono::seconds(60);
  double corrupt_rate = 0.001;  // live readings with a non-finite humidity
  double time_acceleration = 0.0;  // simulated seconds per wall second; 0 = unpaced
  bool parallel_training = false;
  ScenarioSeeds seeds;
  TrainConfig training;
};

/// The three-room experiment: A10, A29 and A30 with their default profiles
/// and one device each. No regime shifts.
ScenarioConfig default_scenario(std::uint64_t seed = 42);

/// Adds one regime shift per room at the given day offsets into the live run
/// (AQI -40, humidity -10: a ventilation upgrade). The defaults land on weekdays for the default
/// start date, so the first retrain window holds a working day of the new
/// regime.
void add_default_shifts(ScenarioConfig& config, const std::vector<double>& day_offsets = {16, 23, 30});

/// Line-oriented `key = value` grammar; `#` starts a comment; `[room <id>]`
/// opens a room section that starts from that room's default profile.
/// Seeds not set in the file derive from `default_seed` (42 when absent).
/// Throws kConfigError with the line number.
ScenarioConfig parse_scenario_config(std::istream& in, std::optional<std::uint64_t> default_seed = std::nullopt);
ScenarioConfig load_scenario_config(const std::filesystem::path& path,
                                    std::optional<std::uint64_t> default_seed = std::nullopt);
/// Canonical rendering; parse_scenario_config(render(c)) reproduces c.
std::string render_scenario_config(const ScenarioConfig& config);
/// Throws kConfigError.
void validate(const ScenarioConfig& config);

Instant scenario_end(const ScenarioConfig& config);

struct RetrainEvent {
  Instant at{};
  std::string device_id;
  std::string room;
  double drift_rmse = 0.0;
  std::optional<ModelVersion> old_version;
  ModelVersion new_version;
  Algorithm algorithm = Algorithm::kMlr;
  double new_cv_rmse = 0.0;
};

struct DeviceStats {
  std::string device_id;
  std::string room;
  std::uint64_t published = 0;
  std::uint64_t processed = 0;
  std::uint64_t dropped = 0;
  std::uint64_t duplicates = 0;
};

struct ScenarioResult {
  RunLayout layout;
  Period period;
  std::map<std::string, std::vector<std::pair<Instant, ModelVersion>>> timelines;  // by room
  std::vector<DriftReport> drift_reports;
  std::vector<RetrainEvent> retrains;
  std::vector<Alarm> alarms;
  std::vector<DeviceStats> devices;
  FleetReport report;
  std::size_t prediction_rows = 0;
  std::size_t traceability_violations = 0;
};

/// Runs the full experiment into `out_dir` (data/, registry/, logs/,
/// report/, plus scenario.cfg). Deterministic in the config. Refuses a
/// directory that already holds a run.
ScenarioResult run_scenario(const ScenarioConfig& config, const std::filesystem::path& out_dir);

/// Period covered by the live part of a run, read from its scenario.cfg.
std::optional<Period> run_period(const RunLayout& layout);

}  // namespace edgefleet
