#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "edgefleet/messages.hpp"
#include "edgefleet/models.hpp"
#include "edgefleet/pipeline.hpp"
#include "edgefleet/registry.hpp"
#include "edgefleet/supervision.hpp"
#include "edgefleet/transport.hpp"

namespace edgefleet {

struct AgentConfig {
  std::string device_id;
  std::string room;
  std::filesystem::path log_path;
  Duration drift_window = kDay;
  double drift_threshold = kDriftThreshold;
  std::size_t min_drift_samples = kMinDriftSamples;
  /// Sensor history kept on the device; must cover the retrain window.
  Duration retention = std::chrono::days(15);
  std::uint64_t seed = 0;  // telemetry noise
};

struct AgentCounters {
  std::uint64_t received = 0;
  std::uint64_t inferences = 0;
  std::uint64_t dropped = 0;     // failed cleaning, no model, wrong room, storage errors
  std::uint64_t duplicates = 0;  // repeated (room, timestamp), ignored
};

/// Per-device runtime: streaming inference (process1_step) and the daily
/// drift check (process2_evaluate) over one shared model slot. Inference and
/// swaps take the same lock, so every logged row carries exactly one version.
class EdgeAgent {
 public:
  /// `supervisor` and `bus` may be null.
  EdgeAgent(AgentConfig config, Registry& registry, Supervisor* supervisor = nullptr, MessageBus* bus = nullptr);

  EdgeAgent(const EdgeAgent&) = delete;
  EdgeAgent& operator=(const EdgeAgent&) = delete;

  const std::string& device_id() const { return config_.device_id; }
  const std::string& room() const { return config_.room; }

  /// Preloads sensor history (e.g. the pre-deployment window) without
  /// running inference.
  void seed_history(std::span<const SensorReading> readings);

  /// Returns the logged row, or nullopt when the reading was a duplicate or
  /// was dropped.
  std::optional<PredictionRow> process1_step(const SensorReading& reading, Instant now);

  /// Daily RMSE of matured forecasts whose reading falls in
  /// (now - drift_window, now]. Audited as a `drift` record and published on
  /// the device's drift topic.
  DriftReport process2_evaluate(Instant now);

  /// Verifies and installs `artifact`, then audits the deploy. On failure the
  /// current model is kept, a deploy_failed record and a deploy_failure alarm
  /// are written, and kArtifactVerificationFailed is thrown.
  void swap_model(const ModelArtifact& artifact, Instant at);

  /// Fetches `version` from the registry and swaps to it. Returns false
  /// (after auditing the failure) instead of throwing.
  bool deploy_version(ModelVersion version, Instant at);

  /// Applies a control payload. Throws kDecodeError on unknown commands.
  void handle_control(std::string_view payload, Instant at);

  /// Labeled examples from stored history with timestamps in (now - window, now].
  std::vector<LabeledExample> recent_examples(Instant now, Duration window) const;

  TelemetryRecord make_telemetry(Instant now);

  std::shared_ptr<const ModelArtifact> current_model() const;
  std::optional<ModelVersion> current_version() const;
  AgentCounters counters() const;
  std::size_t log_rows() const;

 private:
  struct Forecast {
    double value = 0.0;
    ModelVersion version;
  };

  void reject_swap(ModelVersion version, Instant at, const std::string& reason);
  void store_history(const SensorReading& reading);
  void prune(Instant now);

  AgentConfig config_;
  Registry& registry_;
  Supervisor* supervisor_;
  MessageBus* bus_;

  mutable std::mutex mutex_;
  std::shared_ptr<const ModelArtifact> model_;
  PredictionLog log_;
  std::map<Instant, SensorReading> history_;  // cleaned readings
  std::map<Instant, Forecast> forecasts_;
  std::set<Instant> seen_;
  AgentCounters counters_;
  std::optional<SensorReading> last_reading_;
  std::optional<Instant> last_drift_check_;
  std::mt19937_64 rng_;
};

}  // namespace edgefleet
