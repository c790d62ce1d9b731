#include "edgefleet/supervision.hpp"

#include <algorithm>
#include <cctype>
#include <iterator>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "edgefleet/error.hpp"
#include "edgefleet/transport.hpp"

namespace edgefleet {

namespace fs = std::filesystem;

namespace {

// Scalar telemetry columns after device_id and at, in file order.
constexpr std::array<const char*, 12> kTelemetryChannels = {
    "accel_x", "accel_y", "accel_z", "gyro_x", "gyro_y", "gyro_z",
    "humidity", "mag_x", "mag_y", "mag_z", "pressure", "temperature"};

std::array<double, 12> channel_values(const TelemetryRecord& r) {
  return {r.accelerometer[0], r.accelerometer[1], r.accelerometer[2], r.gyroscope[0],
          r.gyroscope[1],     r.gyroscope[2],     r.humidity,         r.magnetometer[0],
          r.magnetometer[1],  r.magnetometer[2],  r.pressure,         r.temperature};
}

FieldMap telemetry_fields(const TelemetryRecord& r) {
  FieldMap f{{"device_id", r.device_id}, {"at", format_rfc3339(r.at)}};
  const auto values = channel_values(r);
  for (std::size_t i = 0; i < values.size(); ++i) f.emplace_back(kTelemetryChannels[i], format_double(values[i]));
  f.emplace_back("dropped_readings", std::to_string(r.dropped_readings));
  f.emplace_back("inference_count", std::to_string(r.inference_count));
  return f;
}

template <typename Lookup>
TelemetryRecord telemetry_from(Lookup&& get, ErrorCode code) {
  auto number = [&](const char* key) {
    const auto v = parse_double(get(key));
    if (!v) throw Error(code, std::string("telemetry field '") + key + "' is not a number");
    return *v;
  };
  auto counter = [&](const char* key) {
    const auto v = parse_int(get(key));
    if (!v || *v < 0) throw Error(code, std::string("telemetry counter '") + key + "' is invalid");
    return static_cast<std::uint64_t>(*v);
  };
  TelemetryRecord r;
  r.device_id = get("device_id");
  try {
    r.at = parse_rfc3339(get("at"));
  } catch (const Error& e) {
    throw Error(code, e.what());
  }
  r.accelerometer = {number("accel_x"), number("accel_y"), number("accel_z")};
  r.gyroscope = {number("gyro_x"), number("gyro_y"), number("gyro_z")};
  r.humidity = number("humidity");
  r.magnetometer = {number("mag_x"), number("mag_y"), number("mag_z")};
  r.pressure = number("pressure");
  r.temperature = number("temperature");
  r.dropped_readings = counter("dropped_readings");
  r.inference_count = counter("inference_count");
  return r;
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

const std::string& detail_or(const AuditRecord& r, std::string_view key, const std::string& fallback) {
  const std::string* v = find_field(r.detail, key);
  return v ? *v : fallback;
}

double detail_double(const AuditRecord& r, std::string_view key) {
  const std::string* v = find_field(r.detail, key);
  if (v == nullptr) return std::nan("");
  return parse_double(*v).value_or(std::nan(""));
}

bool is_triggered_drift(const AuditRecord& r) {
  return r.event == AuditEvent::kDrift && detail_or(r, "triggered", "") == "true";
}

bool is_registered_retrain(const AuditRecord& r) {
  return r.event == AuditEvent::kRetrain && detail_or(r, "outcome", "") == "registered";
}

}  // namespace

std::string encode_telemetry(const TelemetryRecord& record) {
  return encode_payload({"telemetry", telemetry_fields(record)});
}

TelemetryRecord decode_telemetry(std::string_view bytes) {
  const Payload p = decode_payload(bytes);
  if (p.type != "telemetry") throw Error(ErrorCode::kDecodeError, "expected a telemetry payload");
  return telemetry_from([&](const char* key) -> const std::string& { return payload_field(p, key); },
                        ErrorCode::kDecodeError);
}

std::vector<std::string> telemetry_header() {
  std::vector<std::string> h;
  for (const auto& [key, _] : telemetry_fields(TelemetryRecord{})) h.push_back(key);
  return h;
}

std::string format_telemetry_row(const TelemetryRecord& record) {
  std::vector<std::string> cells;
  for (auto& [_, value] : telemetry_fields(record)) cells.push_back(std::move(value));
  return join_csv(cells);
}

TelemetryRecord parse_telemetry_row(const std::vector<std::string>& cells) {
  const auto header = telemetry_header();
  if (cells.size() != header.size()) {
    throw Error(ErrorCode::kMalformedField, "telemetry row has " + std::to_string(cells.size()) + " cells");
  }
  return telemetry_from(
      [&](const char* key) -> const std::string& {
        const auto it = std::find(header.begin(), header.end(), key);
        return cells[static_cast<std::size_t>(it - header.begin())];
      },
      ErrorCode::kMalformedField);
}

void write_telemetry_csv(const fs::path& path, std::span<const TelemetryRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kStorageFailure, "cannot write " + path.string());
  out << join_csv(telemetry_header()) << '\n';
  for (const auto& r : records) out << format_telemetry_row(r) << '\n';
  if (!out) throw Error(ErrorCode::kStorageFailure, "write failed on " + path.string());
}

std::vector<TelemetryRecord> read_telemetry_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kStorageFailure, "cannot open " + path.string());
  std::vector<TelemetryRecord> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(parse_telemetry_row(split_csv_line(line)));
  }
  return out;
}

std::string_view to_string(AlarmKind kind) {
  switch (kind) {
    case AlarmKind::kAirQuality: return "air_quality";
    case AlarmKind::kModelDrift: return "model_drift";
    case AlarmKind::kDeployFailure: return "deploy_failure";
    case AlarmKind::kDeviceSilence: return "device_silence";
    case AlarmKind::kTelemetryAnomaly: return "telemetry_anomaly";
  }
  return "unknown";
}

AlarmKind parse_alarm_kind(std::string_view text) {
  for (auto k : {AlarmKind::kAirQuality, AlarmKind::kModelDrift, AlarmKind::kDeployFailure,
                 AlarmKind::kDeviceSilence, AlarmKind::kTelemetryAnomaly}) {
    if (to_string(k) == text) return k;
  }
  throw Error(ErrorCode::kMalformedField, "unknown alarm kind '" + std::string(text) + "'");
}

std::optional<Alarm> air_quality_alarm(double forecast, const std::string& room, Instant at, double threshold) {
  if (!(forecast > threshold)) return std::nullopt;
  return Alarm{at, AlarmKind::kAirQuality, room, {}, forecast, threshold};
}

AuditRecord alarm_record(const Alarm& alarm, std::optional<ModelVersion> version) {
  AuditRecord r;
  r.at = alarm.at;
  r.event = AuditEvent::kAlarm;
  r.device_id = alarm.device_id;
  r.room = alarm.room;
  r.model_version = version;
  r.detail = {{"kind", std::string(to_string(alarm.kind))},
              {"value", format_double(alarm.value)},
              {"threshold", format_double(alarm.threshold)}};
  return r;
}

// --- Supervisor --------------------------------------------------------------

Supervisor::Supervisor(Registry* audit, Duration telemetry_interval, int silence_intervals, double aqi_threshold)
    : audit_(audit), interval_(telemetry_interval), silence_intervals_(silence_intervals),
      aqi_threshold_(aqi_threshold) {
  if (interval_ <= Duration::zero() || silence_intervals_ <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "telemetry interval and silence count must be positive");
  }
}

void Supervisor::register_device(const std::string& device_id, const std::string& room) {
  std::lock_guard lock(mutex_);
  devices_[device_id].room = room;
}

bool Supervisor::has_device(const std::string& device_id) const {
  std::lock_guard lock(mutex_);
  return devices_.count(device_id) != 0;
}

void Supervisor::raise_locked(const Alarm& alarm, std::optional<ModelVersion> version) {
  alarms_.push_back(alarm);
  if (audit_ != nullptr) audit_->append_audit(alarm_record(alarm, version));
}

void Supervisor::raise(const Alarm& alarm, std::optional<ModelVersion> version) {
  std::lock_guard lock(mutex_);
  raise_locked(alarm, version);
}

std::optional<Alarm> Supervisor::check_air_quality_alarm(double forecast, const std::string& room, Instant at,
                                                         const std::string& device_id,
                                                         std::optional<ModelVersion> version) {
  auto alarm = air_quality_alarm(forecast, room, at, aqi_threshold_);
  if (alarm) {
    alarm->device_id = device_id;
    raise(*alarm, version);
  }
  return alarm;
}

Supervisor::IngestResult Supervisor::ingest_telemetry(const TelemetryRecord& record) {
  std::lock_guard lock(mutex_);
  auto it = devices_.find(record.device_id);
  if (it == devices_.end()) throw Error(ErrorCode::kUnknownDevice, "unknown device '" + record.device_id + "'");
  DeviceState& dev = it->second;

  if (!dev.series.empty()) {
    const TelemetryRecord& prev = dev.series.back();
    const bool regressed = record.inference_count < prev.inference_count ||
                           record.dropped_readings < prev.dropped_readings || record.at < prev.at;
    if (regressed) {
      const double value = static_cast<double>(record.inference_count);
      raise_locked({record.at, AlarmKind::kTelemetryAnomaly, dev.room, record.device_id, value,
                    static_cast<double>(prev.inference_count)},
                   std::nullopt);
      return IngestResult::kRejected;
    }
  }

  if (dev.last_seen && !dev.silence_reported) {
    const Duration gap = record.at - *dev.last_seen;
    if (gap > interval_ * silence_intervals_) {
      raise_locked({record.at, AlarmKind::kDeviceSilence, dev.room, record.device_id,
                    static_cast<double>(gap.count()) / static_cast<double>(interval_.count()),
                    static_cast<double>(silence_intervals_)},
                   std::nullopt);
    }
  }
  dev.last_seen = record.at;
  dev.silence_reported = false;
  dev.series.push_back(record);
  return IngestResult::kAccepted;
}

std::vector<Alarm> Supervisor::sweep_silence(Instant now) {
  std::lock_guard lock(mutex_);
  std::vector<Alarm> raised;
  for (auto& [id, dev] : devices_) {
    if (!dev.last_seen || dev.silence_reported) continue;
    const Duration gap = now - *dev.last_seen;
    if (gap > interval_ * silence_intervals_) {
      Alarm alarm{now, AlarmKind::kDeviceSilence, dev.room, id,
                  static_cast<double>(gap.count()) / static_cast<double>(interval_.count()),
                  static_cast<double>(silence_intervals_)};
      raise_locked(alarm, std::nullopt);
      raised.push_back(alarm);
      dev.silence_reported = true;
    }
  }
  return raised;
}

std::vector<Alarm> Supervisor::alarms() const {
  std::lock_guard lock(mutex_);
  return alarms_;
}

std::vector<TelemetryRecord> Supervisor::telemetry(const std::string& device_id) const {
  std::lock_guard lock(mutex_);
  auto it = devices_.find(device_id);
  if (it == devices_.end()) throw Error(ErrorCode::kUnknownDevice, "unknown device '" + device_id + "'");
  return it->second.series;
}

std::vector<std::string> Supervisor::devices() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, _] : devices_) out.push_back(id);
  return out;
}

// --- fleet reporting ---------------------------------------------------------

fs::path RunLayout::prediction_log(const std::string& device) const {
  return logs_dir() / (device + "_predictions.csv");
}

fs::path RunLayout::telemetry_log(const std::string& device) const {
  return logs_dir() / (device + "_telemetry.csv");
}

FleetData load_fleet_data(const RunLayout& layout) {
  FleetData data;
  data.audit = read_audit_csv(layout.audit_csv());
  for (const auto& r : data.audit) {
    if (r.event == AuditEvent::kDeploy && !r.device_id.empty()) data.device_rooms.emplace(r.device_id, r.room);
  }
  for (const auto& [device, _] : data.device_rooms) {
    const fs::path log = layout.prediction_log(device);
    if (fs::exists(log)) data.predictions[device] = read_prediction_log(log);
    const fs::path tel = layout.telemetry_log(device);
    if (fs::exists(tel)) data.telemetry[device] = read_telemetry_csv(tel);
  }
  return data;
}

Period data_period(const FleetData& data) {
  std::optional<Instant> lo;
  std::optional<Instant> hi;
  auto see = [&](Instant t) {
    if (!lo || t < *lo) lo = t;
    if (!hi || t > *hi) hi = t;
  };
  for (const auto& r : data.audit) see(r.at);
  for (const auto& [_, rows] : data.predictions) {
    for (const auto& row : rows) see(row.reading.timestamp);
  }
  if (!lo) return {};
  return {*lo, *hi + Duration(1)};
}

FleetReport build_fleet_report(const FleetData& data, const Period& period, Duration sampling_interval) {
  FleetReport report;
  report.period = period;
  const bool empty_period = period.end <= period.start;

  for (const auto& [device, room] : data.device_rooms) {
    DeviceReport dev;
    dev.device_id = device;
    dev.room = room;

    if (!empty_period) {
      if (auto live = model_at(data.audit, room, period.start)) dev.model_timeline.emplace_back(period.start, *live);
      for (const auto& r : data.audit) {
        if (!period.contains(r.at)) continue;
        if (r.event == AuditEvent::kDeploy && r.room == room && r.model_version && r.at != period.start) {
          dev.model_timeline.emplace_back(r.at, *r.model_version);
        }
        if (r.device_id != device) continue;
        if (r.event == AuditEvent::kDrift) {
          dev.daily_rmse.push_back({r.at, detail_double(r, "rmse"),
                                    static_cast<std::size_t>(parse_int(detail_or(r, "n_evaluated", "0")).value_or(0)),
                                    is_triggered_drift(r), r.model_version});
          if (is_triggered_drift(r)) ++dev.drift_count;
        } else if (is_registered_retrain(r)) {
          ++dev.retrain_count;
        } else if (r.event == AuditEvent::kAlarm) {
          ++dev.alarm_counts[detail_or(r, "kind", "unknown")];
        }
      }

      std::vector<std::vector<double>> channels(12);
      if (auto it = data.telemetry.find(device); it != data.telemetry.end()) {
        for (const auto& t : it->second) {
          if (!period.contains(t.at)) continue;
          const auto values = channel_values(t);
          for (std::size_t i = 0; i < values.size(); ++i) channels[i].push_back(values[i]);
        }
      }
      for (std::size_t i = 0; i < channels.size(); ++i) {
        ChannelSummary s;
        s.count = channels[i].size();
        if (s.count > 0) {
          s.min = *std::min_element(channels[i].begin(), channels[i].end());
          s.max = *std::max_element(channels[i].begin(), channels[i].end());
          double sum = 0.0;
          for (double v : channels[i]) sum += v;
          s.mean = sum / static_cast<double>(s.count);
        }
        dev.telemetry[kTelemetryChannels[i]] = s;
      }

      if (auto it = data.predictions.find(device); it != data.predictions.end()) {
        dev.readings_logged = static_cast<std::size_t>(std::count_if(
            it->second.begin(), it->second.end(),
            [&](const PredictionRow& row) { return period.contains(row.reading.timestamp); }));
      }
      const auto span = (period.end - period.start).count();
      const auto step = sampling_interval.count();
      dev.readings_expected = static_cast<std::size_t>((span + step - 1) / step);
      dev.uptime = dev.readings_expected == 0
                       ? 0.0
                       : static_cast<double>(dev.readings_logged) / static_cast<double>(dev.readings_expected);
    }

    report.total_drift += dev.drift_count;
    report.total_retrain += dev.retrain_count;
    for (const auto& [_, n] : dev.alarm_counts) report.total_alarms += n;
    report.devices.push_back(std::move(dev));
  }

  if (empty_period) return report;

  // Pair each triggered drift with the retrain it caused and the first daily
  // evaluation made under the retrained model.
  for (std::size_t i = 0; i < data.audit.size(); ++i) {
    const AuditRecord& drift = data.audit[i];
    if (!is_triggered_drift(drift) || !period.contains(drift.at)) continue;
    DriftEvent ev;
    ev.at = drift.at;
    ev.device_id = drift.device_id;
    ev.room = drift.room;
    ev.drift_rmse = detail_double(drift, "rmse");
    for (std::size_t j = i + 1; j < data.audit.size(); ++j) {
      const AuditRecord& r = data.audit[j];
      if (r.device_id != drift.device_id) continue;
      if (r.event == AuditEvent::kDrift) break;
      if (r.event == AuditEvent::kRetrain) {
        if (is_registered_retrain(r) && r.model_version) {
          ev.deployed_version = r.model_version;
          if (const std::string* algo = find_field(r.detail, "algorithm")) ev.deployed_algorithm = parse_algorithm(*algo);
        }
        break;
      }
    }
    if (ev.deployed_version) {
      for (std::size_t j = i + 1; j < data.audit.size(); ++j) {
        const AuditRecord& r = data.audit[j];
        if (r.event != AuditEvent::kDrift || r.device_id != drift.device_id) continue;
        if (r.model_version == ev.deployed_version && !std::isnan(detail_double(r, "rmse"))) {
          ev.retrain_rmse = detail_double(r, "rmse");
          break;
        }
        if (r.model_version && *r.model_version > *ev.deployed_version) break;
      }
    }
    report.drift_events.push_back(std::move(ev));
  }
  return report;
}

std::vector<std::string> drift_events_header() {
  return {"s_no", "date", "device", "deployed_model", "drift_rmse", "retrain_rmse"};
}

std::string render_drift_events(const FleetReport& report) {
  std::string out = join_csv(drift_events_header()) + "\n";
  std::size_t s_no = 0;
  for (const auto& ev : report.drift_events) {
    std::string model;
    if (ev.deployed_version) {
      model = (ev.deployed_algorithm ? upper(to_string(*ev.deployed_algorithm)) + " " : std::string()) + "v" +
              std::to_string(ev.deployed_version->value);
    }
    out += join_csv({std::to_string(++s_no), format_date(ev.at), ev.device_id, model, format_double(ev.drift_rmse),
                     ev.retrain_rmse ? format_double(*ev.retrain_rmse) : std::string()});
    out += '\n';
  }
  return out;
}

std::string render_summary(const FleetReport& report) {
  std::ostringstream out;
  out << "fleet report\n";
  out << "period: " << format_rfc3339(report.period.start) << " .. " << format_rfc3339(report.period.end) << '\n';
  out << "devices: " << report.devices.size() << '\n';
  out << "triggered drift events: " << report.total_drift << '\n';
  out << "retrains: " << report.total_retrain << '\n';
  out << "alarms: " << report.total_alarms << '\n';
  for (const auto& dev : report.devices) {
    out << '\n' << "device " << dev.device_id << " (room " << dev.room << ")\n";
    out << "  readings logged: " << dev.readings_logged << " of " << dev.readings_expected
        << " expected, uptime " << format_double(dev.uptime) << '\n';
    out << "  drift events: " << dev.drift_count << ", retrains: " << dev.retrain_count << '\n';
    out << "  alarms:";
    if (dev.alarm_counts.empty()) out << " none";
    for (const auto& [kind, n] : dev.alarm_counts) out << ' ' << kind << '=' << n;
    out << '\n';
    out << "  model timeline:\n";
    for (const auto& [at, v] : dev.model_timeline) out << "    " << format_rfc3339(at) << " v" << v.value << '\n';
    out << "  daily rmse:\n";
    for (const auto& p : dev.daily_rmse) {
      out << "    " << format_date(p.at) << ' ' << format_double(p.rmse) << " n=" << p.n_evaluated
          << (p.triggered ? " drift" : "") << '\n';
    }
    out << "  telemetry (min / mean / max):\n";
    for (const char* channel : kTelemetryChannels) {
      auto it = dev.telemetry.find(channel);
      if (it == dev.telemetry.end() || it->second.count == 0) continue;
      out << "    " << channel << ": " << format_double(it->second.min) << " / " << format_double(it->second.mean)
          << " / " << format_double(it->second.max) << '\n';
    }
  }
  return out.str();
}

void write_fleet_report(const FleetReport& report, const FleetData& data, const fs::path& dir, bool emit_plot_data) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kStorageFailure, "cannot create " + dir.string() + ": " + ec.message());

  auto write_text = [](const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error(ErrorCode::kStorageFailure, "cannot write " + path.string());
  };
  write_text(dir / "summary.txt", render_summary(report));
  write_text(dir / "drift_events.csv", render_drift_events(report));

  for (const auto& dev : report.devices) {
    std::vector<TelemetryRecord> rows;
    if (auto it = data.telemetry.find(dev.device_id); it != data.telemetry.end()) {
      std::copy_if(it->second.begin(), it->second.end(), std::back_inserter(rows),
                   [&](const TelemetryRecord& t) { return report.period.contains(t.at); });
    }
    write_telemetry_csv(dir / ("device_" + dev.device_id + "_telemetry.csv"), rows);
  }

  if (!emit_plot_data) return;

  std::string daily = join_csv({"device", "evaluated_at", "rmse", "n_evaluated", "triggered", "model_version"}) + "\n";
  for (const auto& dev : report.devices) {
    for (const auto& p : dev.daily_rmse) {
      daily += join_csv({dev.device_id, format_rfc3339(p.at), format_double(p.rmse), std::to_string(p.n_evaluated),
                         p.triggered ? "true" : "false",
                         p.model_version ? std::to_string(p.model_version->value) : std::string()}) +
               "\n";
    }
  }
  write_text(dir / "daily_rmse.csv", daily);

  for (const auto& dev : report.devices) {
    std::string series = join_csv({"timestamp", "air_quality_static", "predicted_future_aq", "model_version"}) + "\n";
    if (auto it = data.predictions.find(dev.device_id); it != data.predictions.end()) {
      for (const auto& row : it->second) {
        if (!report.period.contains(row.reading.timestamp)) continue;
        series += join_csv({format_rfc3339(row.reading.timestamp), format_double(row.reading.air_quality_static),
                            format_double(row.predicted_future_aq), std::to_string(row.model_version.value)}) +
                  "\n";
      }
    }
    write_text(dir / ("predictions_" + dev.device_id + ".csv"), series);
  }
}

}  // namespace edgefleet
