#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "edgefleet/pipeline.hpp"
#include "edgefleet/time.hpp"

namespace edgefleet {

inline constexpr double kDriftThreshold = 10.0;
inline constexpr std::size_t kMinDriftSamples = 12;

/// Outcome of one daily drift evaluation on an edge device.
struct DriftReport {
  std::string device_id;
  std::string room;
  Instant evaluated_at{};
  Instant window_start{};
  Instant window_end{};
  double daily_rmse = 0.0;  // NaN when nothing matured in the window
  std::size_t n_evaluated = 0;
  bool triggered = false;
  ModelVersion model_version;
};

/// Inclusive threshold; never triggers below the minimum sample count.
bool drift_triggered(double daily_rmse, std::size_t n_evaluated, double threshold = kDriftThreshold,
                     std::size_t min_samples = kMinDriftSamples);

std::string encode_drift(const DriftReport& report);
DriftReport decode_drift(std::string_view bytes);

struct ControlCommand {
  std::string command = "deploy";
  ModelVersion model_version;
};

std::string encode_control(const ControlCommand& command);
ControlCommand decode_control(std::string_view bytes);

}  // namespace edgefleet
