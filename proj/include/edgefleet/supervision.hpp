#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edgefleet/pipeline.hpp"
#include "edgefleet/registry.hpp"

namespace edgefleet {

inline constexpr double kAqiAlertThreshold = 100.0;
inline constexpr Duration kTelemetryInterval = std::chrono::minutes(1);
inline constexpr int kSilenceIntervals = 3;

using Vec3 = std::array<double, 3>;

struct TelemetryRecord {
  std::string device_id;
  Instant at{};
  Vec3 accelerometer{};
  Vec3 gyroscope{};
  double humidity = 0.0;
  Vec3 magnetometer{};
  double pressure = 0.0;
  double temperature = 0.0;
  std::uint64_t dropped_readings = 0;
  std::uint64_t inference_count = 0;

  bool operator==(const TelemetryRecord&) const = default;
};

std::string encode_telemetry(const TelemetryRecord& record);
TelemetryRecord decode_telemetry(std::string_view bytes);

std::vector<std::string> telemetry_header();
std::string format_telemetry_row(const TelemetryRecord& record);
TelemetryRecord parse_telemetry_row(const std::vector<std::string>& cells);
void write_telemetry_csv(const std::filesystem::path& path, std::span<const TelemetryRecord> records);
std::vector<TelemetryRecord> read_telemetry_csv(const std::filesystem::path& path);

enum class AlarmKind { kAirQuality, kModelDrift, kDeployFailure, kDeviceSilence, kTelemetryAnomaly };
std::string_view to_string(AlarmKind kind);
AlarmKind parse_alarm_kind(std::string_view text);

struct Alarm {
  Instant at{};
  AlarmKind kind = AlarmKind::kAirQuality;
  std::string room;
  std::string device_id;
  double value = 0.0;
  double threshold = 0.0;

  bool operator==(const Alarm&) const = default;
};

/// Pure threshold rule: an alarm iff forecast > threshold (strict).
std::optional<Alarm> air_quality_alarm(double forecast, const std::string& room, Instant at,
                                       double threshold = kAqiAlertThreshold);

/// Alarm as an audit record (event `alarm`, kind/value/threshold in detail).
AuditRecord alarm_record(const Alarm& alarm, std::optional<ModelVersion> version = std::nullopt);

/// Collects alarms and per-device telemetry. When given a registry, every
/// alarm is also appended to its audit log. Thread-safe.
class Supervisor {
 public:
  explicit Supervisor(Registry* audit = nullptr, Duration telemetry_interval = kTelemetryInterval,
                      int silence_intervals = kSilenceIntervals, double aqi_threshold = kAqiAlertThreshold);

  void register_device(const std::string& device_id, const std::string& room);
  bool has_device(const std::string& device_id) const;

  std::optional<Alarm> check_air_quality_alarm(double forecast, const std::string& room, Instant at,
                                               const std::string& device_id = {},
                                               std::optional<ModelVersion> version = std::nullopt);

  /// Records an alarm and audits it.
  void raise(const Alarm& alarm, std::optional<ModelVersion> version = std::nullopt);

  enum class IngestResult { kAccepted, kRejected };

  /// Stores the record. A counter that goes backwards rejects the record and
  /// raises a telemetry_anomaly alarm. A gap wider than silence_intervals
  /// intervals raises device_silence, unless a sweep already did.
  /// Throws kUnknownDevice.
  IngestResult ingest_telemetry(const TelemetryRecord& record);

  /// Raises device_silence for every device whose last telemetry (or
  /// registration) is more than silence_intervals intervals before `now`.
  std::vector<Alarm> sweep_silence(Instant now);

  std::vector<Alarm> alarms() const;
  std::vector<TelemetryRecord> telemetry(const std::string& device_id) const;
  std::vector<std::string> devices() const;

 private:
  struct DeviceState {
    std::string room;
    std::vector<TelemetryRecord> series;
    std::optional<Instant> last_seen;
    Instant registered_at{};
    bool silence_reported = false;
  };

  void raise_locked(const Alarm& alarm, std::optional<ModelVersion> version);

  Registry* audit_;
  Duration interval_;
  int silence_intervals_;
  double aqi_threshold_;
  mutable std::mutex mutex_;
  std::map<std::string, DeviceState> devices_;
  std::vector<Alarm> alarms_;
};

// --- fleet reporting --------------------------------------------------------

/// Files of a scenario run directory.
struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path data_dir() const { return root / "data"; }
  std::filesystem::path registry_dir() const { return root / "registry"; }
  std::filesystem::path logs_dir() const { return root / "logs"; }
  std::filesystem::path report_dir() const { return root / "report"; }
  std::filesystem::path audit_csv() const { return registry_dir() / "audit.csv"; }
  std::filesystem::path prediction_log(const std::string& device) const;
  std::filesystem::path telemetry_log(const std::string& device) const;
};

struct Period {
  Instant start{};
  Instant end{};  // exclusive

  bool contains(Instant t) const { return t >= start && t < end; }
};

struct FleetData {
  std::vector<AuditRecord> audit;
  std::map<std::string, std::vector<PredictionRow>> predictions;  // by device
  std::map<std::string, std::vector<TelemetryRecord>> telemetry;  // by device
  std::map<std::string, std::string> device_rooms;
};

/// Reads audit, prediction and telemetry logs from a run directory. Devices
/// are discovered from the audit deploy records.
FleetData load_fleet_data(const RunLayout& layout);

/// Whole span covered by the data: first audit/prediction instant to just
/// past the last one.
Period data_period(const FleetData& data);

struct ChannelSummary {
  std::size_t count = 0;
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

struct DailyRmsePoint {
  Instant at{};
  double rmse = 0.0;
  std::size_t n_evaluated = 0;
  bool triggered = false;
  std::optional<ModelVersion> model_version;
};

struct DriftEvent {
  Instant at{};
  std::string device_id;
  std::string room;
  double drift_rmse = 0.0;
  std::optional<ModelVersion> deployed_version;
  std::optional<Algorithm> deployed_algorithm;
  std::optional<double> retrain_rmse;  // next daily RMSE under the new model
};

struct DeviceReport {
  std::string device_id;
  std::string room;
  std::vector<std::pair<Instant, ModelVersion>> model_timeline;  // live at start, then deploys
  std::vector<DailyRmsePoint> daily_rmse;
  std::size_t drift_count = 0;
  std::size_t retrain_count = 0;
  std::map<std::string, std::size_t> alarm_counts;  // by alarm kind
  std::map<std::string, ChannelSummary> telemetry;  // by channel
  std::size_t readings_logged = 0;
  std::size_t readings_expected = 0;
  double uptime = 0.0;  // logged rows / expected rows
};

struct FleetReport {
  Period period;
  std::vector<DeviceReport> devices;
  std::vector<DriftEvent> drift_events;
  std::size_t total_drift = 0;
  std::size_t total_retrain = 0;
  std::size_t total_alarms = 0;
};

/// Deterministic aggregation of a data snapshot over `period`.
FleetReport build_fleet_report(const FleetData& data, const Period& period,
                               Duration sampling_interval = kSamplingInterval);

std::string render_summary(const FleetReport& report);
std::vector<std::string> drift_events_header();
std::string render_drift_events(const FleetReport& report);

/// Writes summary.txt, drift_events.csv and device_<id>_telemetry.csv into
/// `dir`; with `emit_plot_data`, also daily_rmse.csv and
/// predictions_<id>.csv series for charting.
void write_fleet_report(const FleetReport& report, const FleetData& data, const std::filesystem::path& dir,
                        bool emit_plot_data = false);

}  // namespace edgefleet
