#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "edgefleet/text.hpp"
#include "edgefleet/time.hpp"

namespace edgefleet {

/// Registry-assigned artifact version. 0 means "not registered".
struct ModelVersion {
  std::uint64_t value = 0;
  auto operator<=>(const ModelVersion&) const = default;
};

/// One 5-minute sample from a room sensor.
struct SensorReading {
  Instant timestamp{};
  std::string name;
  std::string room;
  std::string room_type;
  std::string floor;
  double air_quality = 0.0;
  double air_quality_static = 0.0;
  double ambient_light = 0.0;
  double humidity = 0.0;
  double iaq_accuracy = 0.0;
  double iaq_accuracy_static = 0.0;
  double pressure = 0.0;
  double temperature = 0.0;

  bool operator==(const SensorReading&) const = default;
};

/// Column names of the reading CSV schema, in file order.
inline constexpr std::array<const char*, 13> kReadingColumns = {
    "timestamp",          "name",          "room",         "room_type", "floor",
    "air_quality",        "air_quality_static", "ambient_light", "humidity",  "iaq_accuracy",
    "iaq_accuracy_static", "pressure",     "temperature"};

inline constexpr std::size_t kFeatureCount = 6;
using Features = std::array<double, kFeatureCount>;

/// Feature order: air_quality_static, ambient_light, humidity,
/// iaq_accuracy_static, pressure, temperature.
inline constexpr std::array<const char*, kFeatureCount> kFeatureNames = {
    "air_quality_static", "ambient_light", "humidity", "iaq_accuracy_static", "pressure",
    "temperature"};

struct FeatureVector {
  Features values{};
  Instant timestamp{};
  std::string room;
};

struct LabeledExample {
  FeatureVector features;
  double label = 0.0;  // air_quality_static three readings later
};

struct PredictionRow {
  SensorReading reading;
  double predicted_future_aq = 0.0;
  ModelVersion model_version;
  Instant predicted_at{};
};

inline constexpr double kAqiMin = 0.0;
inline constexpr double kAqiMax = 500.0;
inline constexpr std::size_t kLabelShift = 3;
inline constexpr Duration kSamplingInterval = std::chrono::minutes(5);
/// Largest step allowed between consecutive members of a label run (1.5x cadence).
inline constexpr Duration kMaxLabelGap = std::chrono::seconds(450);

SensorReading parse_reading(const FieldMap& raw);
FieldMap to_field_map(const SensorReading& reading);

FeatureVector extract_features(const SensorReading& reading);

/// True when the reading passes the row-level cleaning rules (finite features,
/// AQI inside [0, 500]).
bool passes_cleaning(const SensorReading& reading);

/// Sort by timestamp, drop rows failing the row rules, then keep the first
/// reading for each timestamp. Operates on a single room's series.
std::vector<SensorReading> clean(std::vector<SensorReading> series);

/// One example per index whose 4-reading run has no step wider than
/// kMaxLabelGap. Throws kInsufficientData when no such run exists.
std::vector<LabeledExample> build_training_set(std::span<const SensorReading> series);

// Reading CSV (header = kReadingColumns).
std::vector<SensorReading> read_readings_csv(std::istream& in);
std::vector<SensorReading> read_readings_csv(const std::filesystem::path& path);
void write_readings_csv(std::ostream& out, std::span<const SensorReading> readings);
void write_readings_csv(const std::filesystem::path& path, std::span<const SensorReading> readings);

// Prediction log: 13 reading columns, then predicted_future_aq,
// model_version, predicted_at.
std::vector<std::string> prediction_log_header();
std::string format_prediction_row(const PredictionRow& row);
PredictionRow parse_prediction_row(const std::vector<std::string>& cells);
std::vector<PredictionRow> read_prediction_log(const std::filesystem::path& path);

/// Append-only per-device CSV log with a single writer. Each append is
/// flushed before returning. Rows stamped with a version the checker does not
/// know are rejected with kUnknownModelVersion.
class PredictionLog {
 public:
  using VersionCheck = std::function<bool(ModelVersion, Instant)>;

  explicit PredictionLog(std::filesystem::path path, VersionCheck check = {});

  PredictionLog(const PredictionLog&) = delete;
  PredictionLog& operator=(const PredictionLog&) = delete;

  void append(const PredictionRow& row);

  std::size_t rows_written() const { return rows_written_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  VersionCheck check_;
  std::ofstream out_;
  std::size_t rows_written_ = 0;
};

}  // namespace edgefleet
