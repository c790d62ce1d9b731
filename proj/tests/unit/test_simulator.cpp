#include <cmath>
#include <map>

#include "doctest.h"
#include "edgefleet/error.hpp"
#include "edgefleet/simulator.hpp"
#include "support.hpp"

using namespace edgefleet;
using namespace std::chrono_literals;
using testing::at_min;
using testing::t0;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an edgefleet::Error");
  return ErrorCode::kInvalidArgument;
}

RoomProfile flat_profile(double level) {
  RoomProfile p;
  p.room = "A30";
  p.base_aqi = level;
  p.daily_amplitude = 0.0;
  p.noise_std = 0.0;
  p.occupancy_spike_rate = 0.0;
  return p;
}

}  // namespace

TEST_SUITE("simulator") {
  TEST_CASE("a day of sensor ticks is 288 events") {
    SimClock clock(t0());
    clock.schedule_every(EventKind::kSensor, t0(), kSamplingInterval, "A10");
    const auto fired = clock.advance_clock(t0() + kDay - 1ms);
    CHECK(fired.size() == 288);
    for (std::size_t i = 0; i < fired.size(); ++i) CHECK(fired[i].at == at_min(5 * static_cast<std::int64_t>(i)));
    CHECK(clock.now() == t0() + kDay - 1ms);
    CHECK(*clock.next_due() == t0() + kDay);
  }

  TEST_CASE("same-instant events fire sensor, telemetry, trigger, control") {
    SimClock clock(t0());
    clock.schedule_at(EventKind::kControl, at_min(5), "deploy");
    clock.schedule_every(EventKind::kDailyTrigger, at_min(5), kDay, "daily");
    clock.schedule_every(EventKind::kTelemetry, at_min(5), 1min, "tel");
    clock.schedule_every(EventKind::kSensor, at_min(5), kSamplingInterval, "A29");
    clock.schedule_every(EventKind::kSensor, at_min(5), kSamplingInterval, "A10");
    const auto fired = clock.advance_clock(at_min(5));
    REQUIRE(fired.size() == 5);
    CHECK(fired[0].tag == "A29");  // registration order among equals
    CHECK(fired[1].tag == "A10");
    CHECK(fired[2].kind == EventKind::kTelemetry);
    CHECK(fired[3].kind == EventKind::kDailyTrigger);
    CHECK(fired[4].kind == EventKind::kControl);
  }

  TEST_CASE("a trigger at the boundary fires exactly once") {
    SimClock clock(t0());
    clock.schedule_every(EventKind::kDailyTrigger, t0() + kDay, kDay);
    CHECK(clock.advance_clock(t0() + kDay - 1ms).empty());
    CHECK(clock.advance_clock(t0() + kDay).size() == 1);
    CHECK(clock.advance_clock(t0() + kDay).empty());
    CHECK(clock.advance_clock(t0() + 2 * kDay - 1ms).empty());
    CHECK(clock.advance_clock(t0() + 3 * kDay).size() == 2);
  }

  TEST_CASE("time never runs backwards") {
    SimClock clock(t0());
    clock.advance_clock(at_min(10));
    CHECK(code_of([&] { clock.advance_clock(at_min(5)); }) == ErrorCode::kInvalidArgument);
    CHECK(code_of([&] { clock.schedule_at(EventKind::kControl, at_min(5)); }) == ErrorCode::kInvalidArgument);
    std::optional<Instant> last;
    clock.schedule_every(EventKind::kTelemetry, at_min(10), 1min);
    clock.schedule_every(EventKind::kSensor, at_min(10), kSamplingInterval);
    while (auto e = clock.pop_next(at_min(60))) {
      if (last) CHECK(e->at >= *last);
      last = e->at;
      CHECK(clock.now() == e->at);
    }
  }

  TEST_CASE("cancelled timers stop firing") {
    SimClock clock(t0());
    const auto id = clock.schedule_every(EventKind::kTelemetry, t0(), 1min);
    CHECK(clock.advance_clock(at_min(2)).size() == 3);
    clock.cancel(id);
    CHECK(clock.advance_clock(at_min(10)).empty());
    CHECK_FALSE(clock.next_due());
  }

  TEST_CASE("generation is deterministic in its inputs") {
    const RoomProfile p = default_profile("A10");
    const auto a = generate_room_series(p, 42, t0(), kDay * 3);
    const auto b = generate_room_series(p, 42, t0(), kDay * 3);
    const auto c = generate_room_series(p, 43, t0(), kDay * 3);
    CHECK(a == b);
    CHECK(a != c);
    REQUIRE(a.size() == 864);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].timestamp == at_min(5 * static_cast<std::int64_t>(i)));
      CHECK(a[i].room == "A10");
      CHECK(a[i].name == "bme680-A10");
    }
  }

  TEST_CASE("a flat noiseless profile is constant") {
    const auto s = generate_room_series(flat_profile(55.45), 7, t0(), kDay * 2);
    for (const auto& r : s) CHECK(r.air_quality_static == 55.45);
  }

  TEST_CASE("values are clipped to the sensor range") {
    RoomProfile high = flat_profile(900.0);
    for (const auto& r : generate_room_series(high, 1, t0(), kDay)) CHECK(r.air_quality_static == 500.0);
    RoomProfile low = default_profile("A10");
    low.base_aqi = -200.0;
    for (const auto& r : generate_room_series(low, 1, t0(), kDay)) {
      CHECK(r.air_quality_static >= 0.0);
      CHECK(r.air_quality >= 0.0);
    }
  }

  TEST_CASE("a regime shift moves the level from its instant onwards") {
    RoomProfile p = flat_profile(80.0);
    p.regime_shifts.push_back({t0() + kDay, -40.0, -10.0, 0.0, 1.0, Duration{0}});
    const auto s = generate_room_series(p, 3, t0(), kDay * 2);
    for (const auto& r : s) CHECK(r.air_quality_static == (r.timestamp < t0() + kDay ? 80.0 : 40.0));

    RoomProfile ramped = flat_profile(80.0);
    ramped.regime_shifts.push_back({t0() + kDay, -40.0, 0.0, 0.0, 1.0, kDay});
    const auto r = generate_room_series(ramped, 3, t0(), kDay * 3);
    // Half a day in, the sample itself counts towards the ramp.
    CHECK(r[288 + 144].air_quality_static == doctest::Approx(80.0 - 40.0 * (12.0 * 60 + 5) / (24.0 * 60)));
    CHECK(r.back().air_quality_static == 40.0);
  }

  TEST_CASE("A10 over three months matches its reported statistics") {
    const auto s = generate_room_series(default_profile("A10"), 42, t0(), std::chrono::days(90));
    double sum = 0.0;
    std::size_t unhealthy = 0;
    for (const auto& r : s) {
      sum += r.air_quality_static;
      unhealthy += r.air_quality_static > 100.0 ? 1 : 0;
    }
    const double mean = sum / static_cast<double>(s.size());
    CHECK(std::abs(mean - 61.92) <= 3.0);
    CHECK(std::abs(static_cast<double>(unhealthy) - 2033.0) <= 0.15 * 2033.0);
  }

  TEST_CASE("room profiles rank like the reported averages") {
    std::map<std::string, double> means;
    for (const char* room : {"A10", "A29", "A30"}) {
      const auto s = generate_room_series(default_profile(room), 42, t0(), std::chrono::days(90));
      double sum = 0.0;
      for (const auto& r : s) sum += r.air_quality_static;
      means[room] = sum / static_cast<double>(s.size());
    }
    CHECK(std::abs(means["A29"] - 61.40) <= 3.0);
    CHECK(std::abs(means["A30"] - 55.45) <= 3.0);
    CHECK(means["A30"] < means["A29"]);
  }

  TEST_CASE("features track occupancy") {
    const auto s = generate_room_series(default_profile("A29"), 9, t0(), std::chrono::days(14));
    // Light during working hours correlates with AQI above the base level.
    double sxy = 0, sx = 0, sy = 0, sxx = 0, syy = 0;
    for (const auto& r : s) {
      sx += r.ambient_light;
      sy += r.air_quality_static;
      sxy += r.ambient_light * r.air_quality_static;
      sxx += r.ambient_light * r.ambient_light;
      syy += r.air_quality_static * r.air_quality_static;
    }
    const double n = static_cast<double>(s.size());
    const double corr = (sxy - sx * sy / n) / std::sqrt((sxx - sx * sx / n) * (syy - sy * sy / n));
    CHECK(corr > 0.3);
  }

  TEST_CASE("bad durations are rejected") {
    CHECK(code_of([] { generate_room_series(default_profile("A10"), 1, t0(), Duration{0}); }) ==
          ErrorCode::kInvalidArgument);
  }
}
