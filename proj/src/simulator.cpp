#include "edgefleet/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "edgefleet/error.hpp"

namespace edgefleet {

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kSensor: return "sensor";
    case EventKind::kTelemetry: return "telemetry";
    case EventKind::kDailyTrigger: return "daily_trigger";
    case EventKind::kControl: return "control";
  }
  return "unknown";
}

std::uint64_t SimClock::schedule_every(EventKind kind, Instant first, Duration period, std::string tag) {
  if (period <= Duration::zero()) throw Error(ErrorCode::kInvalidArgument, "timer period must be positive");
  if (first < now_) throw Error(ErrorCode::kInvalidArgument, "timer starts in the past");
  const std::uint64_t id = next_id_++;
  schedules_.push_back({kind, period, std::move(tag)});
  queue_.push({first, kind, id});
  return id;
}

std::uint64_t SimClock::schedule_at(EventKind kind, Instant at, std::string tag) {
  if (at < now_) throw Error(ErrorCode::kInvalidArgument, "event scheduled in the past");
  const std::uint64_t id = next_id_++;
  schedules_.push_back({kind, Duration::zero(), std::move(tag)});
  queue_.push({at, kind, id});
  return id;
}

void SimClock::cancel(std::uint64_t timer_id) {
  if (timer_id == 0 || timer_id >= next_id_) return;
  schedules_[timer_id - 1].cancelled = true;
}

void SimClock::drop_cancelled() {
  while (!queue_.empty() && schedules_[queue_.top().id - 1].cancelled) queue_.pop();
}

std::optional<Instant> SimClock::next_due() const {
  auto copy = queue_;
  while (!copy.empty() && schedules_[copy.top().id - 1].cancelled) copy.pop();
  if (copy.empty()) return std::nullopt;
  return copy.top().at;
}

std::optional<FiredEvent> SimClock::pop_next(Instant to) {
  drop_cancelled();
  if (queue_.empty() || queue_.top().at > to) return std::nullopt;
  const Timer timer = queue_.top();
  queue_.pop();
  const Schedule& sched = schedules_[timer.id - 1];
  now_ = timer.at;
  if (sched.period > Duration::zero()) queue_.push({timer.at + sched.period, timer.kind, timer.id});
  return FiredEvent{timer.at, timer.kind, timer.id, sched.tag};
}

std::vector<FiredEvent> SimClock::advance_clock(Instant to) {
  if (to < now_) throw Error(ErrorCode::kInvalidArgument, "cannot move the clock backwards");
  std::vector<FiredEvent> fired;
  while (auto event = pop_next(to)) fired.push_back(std::move(*event));
  now_ = to;
  return fired;
}

// ---------------------------------------------------------------------------

namespace {

double shift_weight(const RegimeShift& shift, Instant t) {
  if (t < shift.at) return 0.0;
  if (shift.ramp <= Duration::zero()) return 1.0;
  const double elapsed = static_cast<double>((t - shift.at + kSamplingInterval).count());
  return std::min(1.0, elapsed / static_cast<double>(shift.ramp.count()));
}

double hour_of_day(Instant t) {
  const auto since_midnight = t - std::chrono::floor<std::chrono::days>(t);
  return static_cast<double>(since_midnight.count()) / static_cast<double>(kHour.count());
}

}  // namespace

std::vector<SensorReading> generate_room_series(const RoomProfile& p, std::uint64_t seed, Instant start,
                                                Duration duration) {
  if (duration <= Duration::zero()) throw Error(ErrorCode::kInvalidArgument, "duration must be positive");
  const std::size_t n = static_cast<std::size_t>((duration.count() + kSamplingInterval.count() - 1) /
                                                  kSamplingInterval.count());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Occupancy: non-overlapping meetings on the calendar days the run covers.
  std::vector<double> occupancy(n, 0.0);
  const auto step_ms = kSamplingInterval.count();
  const auto first_day = std::chrono::floor<std::chrono::days>(start);
  const Instant end = start + kSamplingInterval * static_cast<std::int64_t>(n);
  for (auto day = first_day; Instant(day) < end; day += std::chrono::days(1)) {
    const std::chrono::weekday wd{day};
    const bool weekend = wd == std::chrono::Saturday || wd == std::chrono::Sunday;
    const double rate = p.occupancy_spike_rate * (weekend ? p.weekend_factor : 1.0);
    const int events = rate > 0.0 ? std::poisson_distribution<int>(rate)(rng) : 0;
    for (int e = 0; e < events; ++e) {
      const double start_hour = 8.0 + 10.0 * unit(rng);
      const double length_hours = 0.5 + 1.5 * unit(rng);
      const double intensity = 0.6 + 0.8 * unit(rng);
      const Instant from = Instant(day) + Duration(static_cast<std::int64_t>(start_hour * 3'600'000.0));
      const Instant to = from + Duration(static_cast<std::int64_t>(length_hours * 3'600'000.0));
      // Sample indices [a, b) whose timestamps fall in [from, to).
      const auto a_ms = (from - start).count();
      const auto b_ms = (to - start).count();
      const std::int64_t a = std::max<std::int64_t>(0, (a_ms + step_ms - 1) / step_ms);
      const std::int64_t b = std::min<std::int64_t>(static_cast<std::int64_t>(n), (b_ms + step_ms - 1) / step_ms);
      if (a >= b || b_ms <= 0) continue;
      bool free = true;
      for (auto i = a; i < b && free; ++i) free = occupancy[static_cast<std::size_t>(i)] == 0.0;
      if (!free) continue;
      for (auto i = a; i < b; ++i) occupancy[static_cast<std::size_t>(i)] = intensity;
    }
  }

  const std::string name = p.sensor_name.empty() ? "bme680-" + p.room : p.sensor_name;
  const double process_noise = p.process_noise_share * p.noise_std;
  std::vector<SensorReading> out;
  out.reserve(n);
  double pollutant = 0.0;
  double weather = 0.0;
  double pressure_walk = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Instant t = start + kSamplingInterval * static_cast<std::int64_t>(i);
    const double hour = hour_of_day(t);
    const double diurnal = std::sin(2.0 * std::numbers::pi * (hour - 9.0) / 24.0);
    const double occ = occupancy[i];

    double aqi_offset = 0.0;
    double humidity_offset = 0.0;
    double temperature_offset = 0.0;
    double gain = p.occupancy_gain;
    for (const auto& shift : p.regime_shifts) {
      const double w = shift_weight(shift, t);
      aqi_offset += w * shift.aqi_offset;
      humidity_offset += w * shift.humidity_offset;
      temperature_offset += w * shift.temperature_offset;
      gain *= 1.0 + w * (shift.gain_scale - 1.0);
    }

    if (i > 0) {
      pollutant += p.pollutant_response * (gain * occupancy[i - 1] - pollutant) + process_noise * normal(rng);
      weather = 0.995 * weather + 0.1 * normal(rng);
      pressure_walk += 0.05 * normal(rng);
    }
    const double aqi = std::clamp(p.base_aqi + p.daily_amplitude * diurnal + pollutant +
                                      p.noise_std * normal(rng) + aqi_offset,
                                  kAqiMin, kAqiMax);
    const double daylight = std::max(0.0, std::sin(std::numbers::pi * (hour - 6.0) / 14.0)) * p.daylight_peak;

    SensorReading r;
    r.timestamp = t;
    r.name = name;
    r.room = p.room;
    r.room_type = p.room_type;
    r.floor = p.floor;
    r.air_quality_static = aqi;
    r.air_quality = std::clamp(aqi + 0.5 * p.noise_std * normal(rng), kAqiMin, kAqiMax);
    r.humidity = p.base_humidity + weather + p.humidity_per_occupancy * occ + 0.3 * normal(rng) + humidity_offset;
    r.temperature = 21.0 + 0.8 * diurnal + p.temperature_per_occupancy * occ + 0.2 * normal(rng) + temperature_offset;
    r.ambient_light = std::max(0.0, daylight + p.light_per_occupancy * occ + 5.0 * normal(rng));
    r.pressure = 1013.0 + pressure_walk;
    r.iaq_accuracy = 3.0;
    r.iaq_accuracy_static = 3.0;
    out.push_back(std::move(r));
  }
  return out;
}

RoomProfile default_profile(const std::string& room) {
  RoomProfile p;
  p.room = room;
  if (room == "A10") {
    p.room_type = "office";
    p.floor = "1";
    p.base_aqi = 53.8;
    p.occupancy_gain = 64.0;
    p.occupancy_spike_rate = 5.0;
  } else if (room == "A29") {
    p.room_type = "meeting";
    p.floor = "2";
    p.base_aqi = 52.7;
    p.occupancy_gain = 68.0;
    p.occupancy_spike_rate = 5.0;
  } else if (room == "A30") {
    p.room_type = "meeting";
    p.floor = "2";
    p.base_aqi = 49.0;
    p.occupancy_gain = 58.0;
    p.occupancy_spike_rate = 4.0;
  }
  return p;
}

}  // namespace edgefleet
