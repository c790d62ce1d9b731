#pragma once

#include <cstdint>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "edgefleet/pipeline.hpp"
#include "edgefleet/time.hpp"

namespace edgefleet {

/// Same-instant events fire in this order.
enum class EventKind { kSensor = 0, kTelemetry = 1, kDailyTrigger = 2, kControl = 3 };
std::string_view to_string(EventKind kind);

struct FiredEvent {
  Instant at{};
  EventKind kind = EventKind::kSensor;
  std::uint64_t timer_id = 0;  // registration order
  std::string tag;
};

/// Discrete-event clock. Events fire by (time, kind, registration order).
class SimClock {
 public:
  explicit SimClock(Instant start) : now_(start) {}

  Instant now() const { return now_; }

  /// Periodic timer firing at first, first + period, ... Returns its id.
  std::uint64_t schedule_every(EventKind kind, Instant first, Duration period, std::string tag = {});
  /// One-shot timer. Throws kInvalidArgument when `at` is in the past.
  std::uint64_t schedule_at(EventKind kind, Instant at, std::string tag = {});
  void cancel(std::uint64_t timer_id);

  /// Fires the next event due at or before `to`, moving the clock to it.
  std::optional<FiredEvent> pop_next(Instant to);

  /// Fires every event due at or before `to`, in order, and leaves the clock
  /// at `to`. Throws kInvalidArgument when `to` is before now().
  std::vector<FiredEvent> advance_clock(Instant to);

  std::optional<Instant> next_due() const;

 private:
  struct Timer {
    Instant at;
    EventKind kind;
    std::uint64_t id;
    bool operator>(const Timer& o) const {
      if (at != o.at) return at > o.at;
      if (kind != o.kind) return kind > o.kind;
      return id > o.id;
    }
  };
  struct Schedule {
    EventKind kind;
    Duration period;  // zero for one-shot
    std::string tag;
    bool cancelled = false;
  };

  void drop_cancelled();

  Instant now_;
  std::uint64_t next_id_ = 1;
  std::vector<Schedule> schedules_;
  std::priority_queue<Timer, std::vector<Timer>, std::greater<>> queue_;
};

/// Step change in the generating process, optionally ramped in linearly.
struct RegimeShift {
  Instant at{};
  double aqi_offset = 0.0;
  double humidity_offset = 0.0;
  double temperature_offset = 0.0;
  double gain_scale = 1.0;  // multiplies occupancy_gain once fully in effect
  Duration ramp{0};
};

/// Synthetic room model. AQI is a base level, a diurnal sinusoid, a
/// pollutant state driven by occupancy events, white noise and any active
/// regime offsets, clipped to [0, 500]. Humidity, temperature and light
/// respond to the same occupancy signal, which is what makes them
/// predictive.
struct RoomProfile {
  std::string room;
  std::string room_type = "office";
  std::string floor = "1";
  std::string sensor_name;  // defaults to "bme680-<room>"

  double base_aqi = 50.0;
  double daily_amplitude = 4.0;
  double noise_std = 2.5;
  double occupancy_spike_rate = 5.0;  // meetings per weekday
  double weekend_factor = 0.2;
  double occupancy_gain = 65.0;       // AQI the pollutant state approaches during a meeting
  double pollutant_response = 0.15;   // per-step relaxation towards the occupancy target
  double process_noise_share = 0.48;  // pollutant-state noise, as a fraction of noise_std

  // Feature couplings.
  double base_humidity = 35.0;
  double humidity_per_occupancy = 3.0;
  double temperature_per_occupancy = 0.6;
  double light_per_occupancy = 300.0;
  double daylight_peak = 60.0;  // lux through the window at midday

  std::vector<RegimeShift> regime_shifts;
};

/// Deterministic in (profile, seed, start, duration). One reading every
/// kSamplingInterval from `start` (inclusive) to start + duration (exclusive).
std::vector<SensorReading> generate_room_series(const RoomProfile& profile, std::uint64_t seed, Instant start,
                                                Duration duration);

/// Profiles for rooms A10, A29 and A30 tuned against their reported
/// three-month AQI averages and unhealthy-sample counts.
RoomProfile default_profile(const std::string& room);

}  // namespace edgefleet
