#include "edgefleet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "edgefleet/error.hpp"

namespace edgefleet {

namespace {

const std::string& require(const FieldMap& raw, std::string_view name) {
  const std::string* value = find_field(raw, name);
  if (value == nullptr) throw Error(ErrorCode::kMissingField, "missing field '" + std::string(name) + "'");
  return *value;
}

double require_number(const FieldMap& raw, std::string_view name) {
  const std::string& text = require(raw, name);
  const auto value = parse_double(text);
  if (!value) {
    throw Error(ErrorCode::kMalformedField,
                "field '" + std::string(name) + "' is not a number: '" + text + "'");
  }
  return *value;
}

}  // namespace

SensorReading parse_reading(const FieldMap& raw) {
  SensorReading r;
  r.timestamp = parse_rfc3339(trim(require(raw, "timestamp")));
  r.name = require(raw, "name");
  r.room = require(raw, "room");
  r.room_type = require(raw, "room_type");
  r.floor = require(raw, "floor");
  r.air_quality = require_number(raw, "air_quality");
  r.air_quality_static = require_number(raw, "air_quality_static");
  r.ambient_light = require_number(raw, "ambient_light");
  r.humidity = require_number(raw, "humidity");
  r.iaq_accuracy = require_number(raw, "iaq_accuracy");
  r.iaq_accuracy_static = require_number(raw, "iaq_accuracy_static");
  r.pressure = require_number(raw, "pressure");
  r.temperature = require_number(raw, "temperature");
  return r;
}

FieldMap to_field_map(const SensorReading& r) {
  return {{"timestamp", format_rfc3339(r.timestamp)},
          {"name", r.name},
          {"room", r.room},
          {"room_type", r.room_type},
          {"floor", r.floor},
          {"air_quality", format_double(r.air_quality)},
          {"air_quality_static", format_double(r.air_quality_static)},
          {"ambient_light", format_double(r.ambient_light)},
          {"humidity", format_double(r.humidity)},
          {"iaq_accuracy", format_double(r.iaq_accuracy)},
          {"iaq_accuracy_static", format_double(r.iaq_accuracy_static)},
          {"pressure", format_double(r.pressure)},
          {"temperature", format_double(r.temperature)}};
}

FeatureVector extract_features(const SensorReading& r) {
  return FeatureVector{{r.air_quality_static, r.ambient_light, r.humidity, r.iaq_accuracy_static,
                        r.pressure, r.temperature},
                       r.timestamp,
                       r.room};
}

bool passes_cleaning(const SensorReading& r) {
  const Features f = extract_features(r).values;
  if (!std::all_of(f.begin(), f.end(), [](double v) { return std::isfinite(v); })) return false;
  return r.air_quality_static >= kAqiMin && r.air_quality_static <= kAqiMax;
}

std::vector<SensorReading> clean(std::vector<SensorReading> series) {
  std::stable_sort(series.begin(), series.end(),
                   [](const SensorReading& a, const SensorReading& b) { return a.timestamp < b.timestamp; });
  std::vector<SensorReading> out;
  out.reserve(series.size());
  for (auto& r : series) {
    if (!passes_cleaning(r)) continue;
    if (!out.empty() && out.back().timestamp == r.timestamp) continue;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<LabeledExample> build_training_set(std::span<const SensorReading> series) {
  std::vector<LabeledExample> out;
  if (series.size() > kLabelShift) {
    out.reserve(series.size() - kLabelShift);
    for (std::size_t i = 0; i + kLabelShift < series.size(); ++i) {
      bool run_ok = true;
      for (std::size_t j = i; j < i + kLabelShift; ++j) {
        const Duration gap = series[j + 1].timestamp - series[j].timestamp;
        if (gap <= Duration::zero() || gap > kMaxLabelGap) {
          run_ok = false;
          break;
        }
      }
      if (!run_ok) continue;
      out.push_back({extract_features(series[i]), series[i + kLabelShift].air_quality_static});
    }
  }
  if (out.empty()) {
    throw Error(ErrorCode::kInsufficientData,
                "need at least 4 consecutive readings, got series of " + std::to_string(series.size()));
  }
  return out;
}

std::vector<SensorReading> read_readings_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kMissingField, "reading CSV has no header row");
  const auto header = split_csv_line(line);
  if (header.size() != kReadingColumns.size() ||
      !std::equal(header.begin(), header.end(), kReadingColumns.begin())) {
    throw Error(ErrorCode::kMissingField, "reading CSV header does not match the 13-column schema");
  }
  std::vector<SensorReading> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::kMalformedField, "line " + std::to_string(line_no) + ": expected 13 cells");
    }
    FieldMap raw;
    raw.reserve(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) raw.emplace_back(header[i], cells[i]);
    out.push_back(parse_reading(raw));
  }
  return out;
}

std::vector<SensorReading> read_readings_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kStorageFailure, "cannot open " + path.string());
  return read_readings_csv(in);
}

void write_readings_csv(std::ostream& out, std::span<const SensorReading> readings) {
  out << join_csv({kReadingColumns.begin(), kReadingColumns.end()}) << '\n';
  std::vector<std::string> cells;
  for (const auto& r : readings) {
    cells.clear();
    for (auto& [key, value] : to_field_map(r)) cells.push_back(std::move(value));
    out << join_csv(cells) << '\n';
  }
}

void write_readings_csv(const std::filesystem::path& path, std::span<const SensorReading> readings) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kStorageFailure, "cannot write " + path.string());
  write_readings_csv(out, readings);
  if (!out) throw Error(ErrorCode::kStorageFailure, "write failed: " + path.string());
}

std::vector<std::string> prediction_log_header() {
  std::vector<std::string> header(kReadingColumns.begin(), kReadingColumns.end());
  header.insert(header.end(), {"predicted_future_aq", "model_version", "predicted_at"});
  return header;
}

std::string format_prediction_row(const PredictionRow& row) {
  std::vector<std::string> cells;
  cells.reserve(16);
  for (auto& [key, value] : to_field_map(row.reading)) cells.push_back(std::move(value));
  cells.push_back(format_double(row.predicted_future_aq));
  cells.push_back(std::to_string(row.model_version.value));
  cells.push_back(format_rfc3339(row.predicted_at));
  return join_csv(cells);
}

PredictionRow parse_prediction_row(const std::vector<std::string>& cells) {
  const auto header = prediction_log_header();
  if (cells.size() != header.size()) {
    throw Error(ErrorCode::kMalformedField, "prediction row must have 16 cells");
  }
  FieldMap raw;
  for (std::size_t i = 0; i < kReadingColumns.size(); ++i) raw.emplace_back(header[i], cells[i]);
  PredictionRow row;
  row.reading = parse_reading(raw);
  const auto forecast = parse_double(cells[13]);
  const auto version = parse_int(cells[14]);
  if (!forecast || !version || *version < 0) {
    throw Error(ErrorCode::kMalformedField, "bad prediction columns");
  }
  row.predicted_future_aq = *forecast;
  row.model_version = ModelVersion{static_cast<std::uint64_t>(*version)};
  row.predicted_at = parse_rfc3339(cells[15]);
  return row;
}

std::vector<PredictionRow> read_prediction_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kStorageFailure, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != prediction_log_header()) {
    throw Error(ErrorCode::kMalformedField, "prediction log header mismatch in " + path.string());
  }
  std::vector<PredictionRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    rows.push_back(parse_prediction_row(split_csv_line(line)));
  }
  return rows;
}

PredictionLog::PredictionLog(std::filesystem::path path, VersionCheck check)
    : path_(std::move(path)), check_(std::move(check)) {
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path_, ec) || std::filesystem::file_size(path_, ec) == 0;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path(), ec);
  out_.open(path_, std::ios::app);
  if (!out_) throw Error(ErrorCode::kStorageFailure, "cannot open prediction log " + path_.string());
  if (fresh) {
    out_ << join_csv(prediction_log_header()) << '\n';
    out_.flush();
  }
}

void PredictionLog::append(const PredictionRow& row) {
  if (check_ && !check_(row.model_version, row.predicted_at)) {
    throw Error(ErrorCode::kUnknownModelVersion,
                "model version " + std::to_string(row.model_version.value) + " is not registered");
  }
  out_ << format_prediction_row(row) << '\n';
  out_.flush();
  if (!out_) throw Error(ErrorCode::kStorageFailure, "append failed on " + path_.string());
  ++rows_written_;
}

}  // namespace edgefleet
