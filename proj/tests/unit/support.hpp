#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "edgefleet/pipeline.hpp"
#include "edgefleet/time.hpp"

namespace testing {

using namespace edgefleet;

inline Instant t0() { return parse_rfc3339("2020-03-15T00:00:00Z"); }
inline Instant at_min(std::int64_t minutes) { return t0() + std::chrono::minutes(minutes); }

inline SensorReading reading(Instant t, double aqs, const std::string& room = "A10") {
  SensorReading r;
  r.timestamp = t;
  r.name = "bme680-" + room;
  r.room = room;
  r.room_type = "office";
  r.floor = "1";
  r.air_quality = aqs;
  r.air_quality_static = aqs;
  r.ambient_light = 120.0;
  r.humidity = 35.0;
  r.iaq_accuracy = 3.0;
  r.iaq_accuracy_static = 3.0;
  r.pressure = 1013.0;
  r.temperature = 21.0;
  return r;
}

/// Gap-free 5-minute series starting at t0().
inline std::vector<SensorReading> series(const std::vector<double>& aqs, const std::string& room = "A10") {
  std::vector<SensorReading> out;
  for (std::size_t i = 0; i < aqs.size(); ++i) out.push_back(reading(at_min(5 * static_cast<std::int64_t>(i)), aqs[i], room));
  return out;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("edgefleet-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(++counter));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline std::size_t line_count(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

/// Noiseless linear data over 6 random features: y = w.x + b.
struct LinearData {
  std::vector<Features> rows;
  std::vector<double> targets;
  Features weights{};
  double intercept = 0.0;
};

inline LinearData linear_data(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  LinearData d;
  for (auto& w : d.weights) w = u(rng);
  d.intercept = u(rng) * 10.0;
  for (std::size_t i = 0; i < n; ++i) {
    Features x;
    for (std::size_t j = 0; j < kFeatureCount; ++j) x[j] = u(rng) * static_cast<double>(j + 1) + 10.0 * static_cast<double>(j);
    double y = d.intercept;
    for (std::size_t j = 0; j < kFeatureCount; ++j) y += d.weights[j] * x[j];
    d.rows.push_back(x);
    d.targets.push_back(y);
  }
  return d;
}

}  // namespace testing
