#include "edgefleet/edge_agent.hpp"

#include <cmath>

#include "edgefleet/error.hpp"

namespace edgefleet {

EdgeAgent::EdgeAgent(AgentConfig config, Registry& registry, Supervisor* supervisor, MessageBus* bus)
    : config_(std::move(config)),
      registry_(registry),
      supervisor_(supervisor),
      bus_(bus),
      log_(config_.log_path, [&registry](ModelVersion v, Instant at) { return registry.registered_by(v, at); }),
      rng_(config_.seed) {
  if (config_.device_id.empty() || config_.room.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "agent needs a device id and a room");
  }
  if (config_.retention < config_.drift_window) {
    throw Error(ErrorCode::kInvalidArgument, "history retention shorter than the drift window");
  }
}

void EdgeAgent::seed_history(std::span<const SensorReading> readings) {
  std::lock_guard lock(mutex_);
  for (const auto& r : readings) {
    if (r.room == config_.room && passes_cleaning(r)) history_.emplace(r.timestamp, r);
  }
  if (!history_.empty()) {
    last_reading_ = history_.rbegin()->second;
    prune(history_.rbegin()->first);
  }
}

void EdgeAgent::store_history(const SensorReading& reading) {
  history_.emplace(reading.timestamp, reading);
  last_reading_ = reading;
}

void EdgeAgent::prune(Instant now) {
  const Instant cutoff = now - config_.retention;
  history_.erase(history_.begin(), history_.lower_bound(cutoff));
  forecasts_.erase(forecasts_.begin(), forecasts_.lower_bound(cutoff));
  seen_.erase(seen_.begin(), seen_.lower_bound(cutoff));
}

std::optional<PredictionRow> EdgeAgent::process1_step(const SensorReading& reading, Instant now) {
  std::optional<Alarm> pending_alarm;
  PredictionRow row;
  {
    std::lock_guard lock(mutex_);
    if (seen_.count(reading.timestamp) != 0 && reading.room == config_.room) {
      ++counters_.duplicates;
      return std::nullopt;
    }
    ++counters_.received;
    if (reading.room != config_.room || !passes_cleaning(reading) || !model_) {
      ++counters_.dropped;
      if (reading.room == config_.room) seen_.insert(reading.timestamp);
      return std::nullopt;
    }
    seen_.insert(reading.timestamp);

    row.reading = reading;
    row.predicted_future_aq = predict(*model_, extract_features(reading));
    row.model_version = model_->version;
    row.predicted_at = now;
    try {
      log_.append(row);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kStorageFailure) throw;
      ++counters_.dropped;
      return std::nullopt;
    }
    ++counters_.inferences;
    forecasts_[reading.timestamp] = {row.predicted_future_aq, row.model_version};
    store_history(reading);
  }
  if (supervisor_ != nullptr) {
    supervisor_->check_air_quality_alarm(row.predicted_future_aq, config_.room, now, config_.device_id,
                                         row.model_version);
  }
  return row;
}

DriftReport EdgeAgent::process2_evaluate(Instant now) {
  DriftReport report;
  report.device_id = config_.device_id;
  report.room = config_.room;
  report.evaluated_at = now;
  report.window_start = now - config_.drift_window;
  report.window_end = now;
  {
    std::lock_guard lock(mutex_);
    if (model_) report.model_version = model_->version;

    double sum_sq = 0.0;
    std::size_t n = 0;
    for (auto it = forecasts_.upper_bound(report.window_start); it != forecasts_.end() && it->first <= now; ++it) {
      auto h = history_.find(it->first);
      if (h == history_.end()) continue;
      bool matured = true;
      for (std::size_t step = 0; step < kLabelShift; ++step) {
        auto next = std::next(h);
        if (next == history_.end() || next->first > now || next->first - h->first > kMaxLabelGap) {
          matured = false;
          break;
        }
        h = next;
      }
      if (!matured) continue;
      const double err = it->second.value - h->second.air_quality_static;
      sum_sq += err * err;
      ++n;
    }
    report.n_evaluated = n;
    report.daily_rmse = n == 0 ? std::nan("") : std::sqrt(sum_sq / static_cast<double>(n));
    report.triggered =
        drift_triggered(report.daily_rmse, n, config_.drift_threshold, config_.min_drift_samples);
    last_drift_check_ = now;
    prune(now);
  }

  AuditRecord record;
  record.at = now;
  record.event = AuditEvent::kDrift;
  record.device_id = config_.device_id;
  record.room = config_.room;
  if (report.model_version.value != 0) record.model_version = report.model_version;
  record.detail = {{"rmse", std::isnan(report.daily_rmse) ? std::string("insufficient") : format_double(report.daily_rmse)},
                   {"n_evaluated", std::to_string(report.n_evaluated)},
                   {"triggered", report.triggered ? "true" : "false"},
                   {"threshold", format_double(config_.drift_threshold)},
                   {"window_start", format_rfc3339(report.window_start)},
                   {"window_end", format_rfc3339(report.window_end)}};
  registry_.append_audit(std::move(record));

  if (report.triggered && supervisor_ != nullptr) {
    supervisor_->raise({now, AlarmKind::kModelDrift, config_.room, config_.device_id, report.daily_rmse,
                        config_.drift_threshold},
                       report.model_version.value != 0 ? std::optional(report.model_version) : std::nullopt);
  }
  if (bus_ != nullptr) bus_->publish(topics::device_drift(config_.device_id), encode_drift(report), now);
  return report;
}

void EdgeAgent::reject_swap(ModelVersion version, Instant at, const std::string& reason) {
  registry_.record_deploy_failed(version, config_.device_id, config_.room, at, reason);
  if (supervisor_ != nullptr) {
    supervisor_->raise({at, AlarmKind::kDeployFailure, config_.room, config_.device_id,
                        static_cast<double>(version.value), 0.0},
                       version);
  }
}

void EdgeAgent::swap_model(const ModelArtifact& artifact, Instant at) {
  std::string problem;
  if (artifact.room != config_.room) {
    problem = "artifact is for room " + artifact.room + ", device serves " + config_.room;
  } else if (artifact.version.value == 0 || !registry_.registered_by(artifact.version, at)) {
    problem = "artifact version " + std::to_string(artifact.version.value) + " is not registered";
  } else {
    try {
      validate_artifact(artifact);
    } catch (const Error& e) {
      problem = e.what();
    }
  }
  if (!problem.empty()) {
    reject_swap(artifact.version, at, problem);
    throw Error(ErrorCode::kArtifactVerificationFailed, problem);
  }

  auto next = std::make_shared<const ModelArtifact>(artifact);
  {
    std::lock_guard lock(mutex_);
    model_ = std::move(next);
    // Audit inside the lock: no row can be stamped with the new version
    // before its deploy record exists.
    registry_.record_deploy(artifact.version, config_.device_id, at);
  }
}

bool EdgeAgent::deploy_version(ModelVersion version, Instant at) {
  ModelArtifact artifact;
  try {
    artifact = registry_.fetch_artifact(version);
  } catch (const Error& e) {
    reject_swap(version, at, e.what());
    return false;
  }
  try {
    swap_model(artifact, at);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kArtifactVerificationFailed) throw;
    return false;
  }
  return true;
}

void EdgeAgent::handle_control(std::string_view payload, Instant at) {
  const ControlCommand command = decode_control(payload);
  if (command.command != "deploy") {
    throw Error(ErrorCode::kDecodeError, "unknown control command '" + command.command + "'");
  }
  deploy_version(command.model_version, at);
}

std::vector<LabeledExample> EdgeAgent::recent_examples(Instant now, Duration window) const {
  std::vector<SensorReading> series;
  {
    std::lock_guard lock(mutex_);
    for (auto it = history_.upper_bound(now - window); it != history_.end() && it->first <= now; ++it) {
      series.push_back(it->second);
    }
  }
  try {
    return build_training_set(series);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kInsufficientData) throw;
    return {};
  }
}

TelemetryRecord EdgeAgent::make_telemetry(Instant now) {
  std::lock_guard lock(mutex_);
  std::normal_distribution<double> noise(0.0, 1.0);
  TelemetryRecord t;
  t.device_id = config_.device_id;
  t.at = now;
  t.accelerometer = {0.02 * noise(rng_), 0.02 * noise(rng_), 9.81 + 0.02 * noise(rng_)};
  t.gyroscope = {0.01 * noise(rng_), 0.01 * noise(rng_), 0.01 * noise(rng_)};
  t.magnetometer = {22.0 + 0.5 * noise(rng_), 5.0 + 0.5 * noise(rng_), -40.0 + 0.5 * noise(rng_)};
  // The board sits in the room, a little warmer and drier than the sensor.
  const double humidity = last_reading_ ? last_reading_->humidity : 40.0;
  const double pressure = last_reading_ ? last_reading_->pressure : 1013.0;
  const double temperature = last_reading_ ? last_reading_->temperature : 21.0;
  t.humidity = humidity - 2.0 + 0.2 * noise(rng_);
  t.pressure = pressure + 0.05 * noise(rng_);
  t.temperature = temperature + 4.0 + 0.1 * noise(rng_);
  t.dropped_readings = counters_.dropped;
  t.inference_count = counters_.inferences;
  return t;
}

std::shared_ptr<const ModelArtifact> EdgeAgent::current_model() const {
  std::lock_guard lock(mutex_);
  return model_;
}

std::optional<ModelVersion> EdgeAgent::current_version() const {
  std::lock_guard lock(mutex_);
  if (!model_) return std::nullopt;
  return model_->version;
}

AgentCounters EdgeAgent::counters() const {
  std::lock_guard lock(mutex_);
  return counters_;
}

std::size_t EdgeAgent::log_rows() const {
  std::lock_guard lock(mutex_);
  return log_.rows_written();
}

}  // namespace edgefleet
