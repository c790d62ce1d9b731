#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "edgefleet/edge_agent.hpp"
#include "edgefleet/error.hpp"
#include "support.hpp"

using namespace edgefleet;
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

/// Model that forecasts `value` for every input.
ModelArtifact constant_model(double value, const std::string& room = "A10") {
  LinearParams p;
  p.intercept = value;
  ModelArtifact a;
  a.algorithm = Algorithm::kMlr;
  a.params = p;
  a.room = room;
  a.window_start = t0() - std::chrono::days(90);
  a.window_end = t0();
  a.trained_at = t0();
  return a;
}

struct Fixture {
  testing::TempDir dir{"agent"};
  Registry registry{dir / "registry"};
  Supervisor supervisor{&registry};
  InMemoryBroker broker;
  EdgeAgent agent;

  explicit Fixture(const std::string& room = "A10")
      : agent(AgentConfig{"jetson-nano", room, dir / "logs" / "jetson-nano_predictions.csv"}, registry, &supervisor,
              &broker) {
    supervisor.register_device("jetson-nano", room);
  }

  ModelVersion install(const ModelArtifact& a, Instant at = t0()) {
    ModelArtifact copy = a;
    copy.version = registry.register_model(a, at);
    agent.swap_model(copy, at);
    return copy.version;
  }

  std::vector<AuditRecord> events(AuditEvent e) const {
    AuditFilter f;
    f.event = e;
    return registry.audit_query(f);
  }
};

/// One day of readings at 5-min cadence ending at t0() + 1 day, AQI from `aq(i)`.
template <typename F>
void stream_day(Fixture& fx, F aq) {
  for (int i = 1; i <= 288; ++i) {
    const Instant t = at_min(5 * i);
    fx.agent.process1_step(testing::reading(t, aq(i)), t);
  }
}

}  // namespace

TEST_SUITE("edge_agent") {
  TEST_CASE("rows are stamped with the deployed version") {
    Fixture fx;
    for (int i = 0; i < 6; ++i) fx.registry.register_model(constant_model(50), t0());
    const auto v7 = fx.install(constant_model(55));
    CHECK(v7.value == 7);
    const auto row = fx.agent.process1_step(testing::reading(at_min(5), 60), at_min(5));
    REQUIRE(row);
    CHECK(row->model_version.value == 7);
    CHECK(row->predicted_future_aq == 55.0);
    const auto logged = read_prediction_log(fx.dir / "logs" / "jetson-nano_predictions.csv");
    REQUIRE(logged.size() == 1);
    CHECK(logged[0].model_version.value == 7);
  }

  TEST_CASE("duplicate timestamps are ignored") {
    Fixture fx;
    fx.install(constant_model(50));
    CHECK(fx.agent.process1_step(testing::reading(at_min(5), 60), at_min(5)));
    CHECK_FALSE(fx.agent.process1_step(testing::reading(at_min(5), 61), at_min(6)));
    CHECK(fx.agent.log_rows() == 1);
    CHECK(fx.agent.counters().duplicates == 1);
  }

  TEST_CASE("unclean, foreign and model-less readings are dropped and counted") {
    Fixture fx;
    CHECK_FALSE(fx.agent.process1_step(testing::reading(at_min(5), 60), at_min(5)));  // no model yet
    fx.install(constant_model(50));
    auto bad = testing::reading(at_min(10), 60);
    bad.humidity = std::nan("");
    CHECK_FALSE(fx.agent.process1_step(bad, at_min(10)));
    CHECK_FALSE(fx.agent.process1_step(testing::reading(at_min(15), 60, "A29"), at_min(15)));
    CHECK(fx.agent.process1_step(testing::reading(at_min(20), 60), at_min(20)));
    const auto c = fx.agent.counters();
    CHECK(c.received == 4);
    CHECK(c.dropped == 3);
    CHECK(c.inferences == 1);
    CHECK(c.received == c.inferences + c.dropped);
  }

  TEST_CASE("a forecast above 100 raises an air quality alarm") {
    Fixture fx;
    fx.install(constant_model(101.0));
    fx.agent.process1_step(testing::reading(at_min(5), 60), at_min(5));
    const auto alarms = fx.supervisor.alarms();
    REQUIRE(alarms.size() == 1);
    CHECK(alarms[0].kind == AlarmKind::kAirQuality);
    CHECK(alarms[0].value == 101.0);
    CHECK(fx.events(AuditEvent::kAlarm).size() == 1);
  }

  TEST_CASE("a forecast of exactly 100 stays quiet") {
    Fixture fx;
    fx.install(constant_model(100.0));
    fx.agent.process1_step(testing::reading(at_min(5), 60), at_min(5));
    CHECK(fx.supervisor.alarms().empty());
  }

  TEST_CASE("threshold is inclusive and needs the minimum sample count") {
    CHECK(drift_triggered(16.39, 285));
    CHECK(drift_triggered(10.0, 285));
    CHECK_FALSE(drift_triggered(9.99, 285));
    CHECK_FALSE(drift_triggered(9.999, 285));
    CHECK_FALSE(drift_triggered(std::nextafter(10.0, 0.0), 285));
    CHECK(drift_triggered(30.0, 12));
    CHECK_FALSE(drift_triggered(30.0, 11));
    CHECK_FALSE(drift_triggered(std::nan(""), 0));
  }

  TEST_CASE("daily RMSE matches an enumeration of matured forecasts") {
    Fixture fx;
    fx.install(constant_model(50.0));
    // Readings 1..288; forecast at reading i is 50, actual is reading i+3.
    auto aq = [](int i) { return 50.0 + static_cast<double>(i % 7); };
    stream_day(fx, aq);
    const Instant now = t0() + kDay;
    const DriftReport r = fx.agent.process2_evaluate(now);
    double ss = 0;
    std::size_t n = 0;
    for (int i = 1; i + 3 <= 288; ++i) {
      const double err = 50.0 - aq(i + 3);
      ss += err * err;
      ++n;
    }
    CHECK(r.n_evaluated == n);
    CHECK(r.n_evaluated == 285);
    CHECK(r.daily_rmse == doctest::Approx(std::sqrt(ss / static_cast<double>(n))).epsilon(1e-12));
    CHECK(r.window_start == now - kDay);
  }

  TEST_CASE("an RMSE of exactly 10 triggers, just under does not") {
    {
      Fixture fx;
      fx.install(constant_model(50.0));
      stream_day(fx, [](int) { return 60.0; });
      const DriftReport r = fx.agent.process2_evaluate(t0() + kDay);
      CHECK(r.daily_rmse == 10.0);
      CHECK(r.triggered);
      const auto drift = fx.events(AuditEvent::kDrift);
      REQUIRE(drift.size() == 1);
      CHECK(*find_field(drift[0].detail, "triggered") == "true");
      CHECK(*find_field(drift[0].detail, "rmse") == "10");
      const auto alarms = fx.supervisor.alarms();
      REQUIRE(alarms.size() == 1);
      CHECK(alarms[0].kind == AlarmKind::kModelDrift);
    }
    {
      Fixture fx;
      fx.install(constant_model(50.0));
      stream_day(fx, [](int) { return 59.999; });
      const DriftReport r = fx.agent.process2_evaluate(t0() + kDay);
      CHECK(r.daily_rmse == doctest::Approx(9.999).epsilon(1e-12));
      CHECK_FALSE(r.triggered);
      CHECK(fx.supervisor.alarms().empty());
    }
  }

  TEST_CASE("no matured forecasts records an insufficient sentinel") {
    Fixture fx;
    fx.install(constant_model(50.0));
    const DriftReport r = fx.agent.process2_evaluate(t0() + kDay);
    CHECK(r.n_evaluated == 0);
    CHECK(std::isnan(r.daily_rmse));
    CHECK_FALSE(r.triggered);
    const auto drift = fx.events(AuditEvent::kDrift);
    REQUIRE(drift.size() == 1);
    CHECK(*find_field(drift[0].detail, "rmse") == "insufficient");
  }

  TEST_CASE("forecasts in the last 15 minutes are immature") {
    Fixture fx;
    fx.install(constant_model(50.0));
    stream_day(fx, [](int) { return 55.0; });
    // Evaluating 10 minutes before the last reading drops two more forecasts.
    const DriftReport r = fx.agent.process2_evaluate(t0() + kDay - std::chrono::minutes(10));
    CHECK(r.n_evaluated == 283);
  }

  TEST_CASE("a gap inside a label run keeps the forecast out") {
    Fixture fx;
    fx.install(constant_model(50.0));
    for (int i = 1; i <= 40; ++i) {
      if (i == 20) continue;  // one missing reading makes a 10-minute step
      const Instant t = at_min(5 * i);
      fx.agent.process1_step(testing::reading(t, 55.0), t);
    }
    const DriftReport r = fx.agent.process2_evaluate(at_min(200));
    // Forecasts 1..36 have a reading 3 steps later; those whose run crosses 19->21 do not count.
    std::size_t expected = 0;
    for (int i = 1; i <= 37; ++i) {
      if (i == 20) continue;
      const bool crosses = i >= 17 && i <= 19;
      if (!crosses && i + 3 <= 40) ++expected;
    }
    CHECK(r.n_evaluated == expected);
  }

  TEST_CASE("drift reports are published on the device topic") {
    Fixture fx;
    auto sub = fx.broker.subscribe(Topic("fleet/+/drift"));
    fx.install(constant_model(50.0));
    stream_day(fx, [](int) { return 65.0; });
    fx.agent.process2_evaluate(t0() + kDay);
    const auto m = sub.try_receive();
    REQUIRE(m);
    CHECK(m->topic.str() == "fleet/jetson-nano/drift");
    const DriftReport d = decode_drift(m->payload);
    CHECK(d.triggered);
    CHECK(d.daily_rmse == 15.0);
  }

  TEST_CASE("swaps are atomic with respect to streaming inference") {
    Fixture fx;
    const auto v1 = fx.install(constant_model(50.0));
    ModelArtifact next = constant_model(70.0);
    next.version = fx.registry.register_model(next, t0());
    std::atomic<bool> go{false};
    std::thread streamer([&] {
      for (int i = 1; i <= 2000; ++i) {
        if (i == 500) go = true;
        const Instant t = at_min(5 * i);
        fx.agent.process1_step(testing::reading(t, 60), t0());
      }
    });
    while (!go) std::this_thread::yield();
    fx.agent.swap_model(next, t0());
    streamer.join();

    const auto rows = read_prediction_log(fx.dir / "logs" / "jetson-nano_predictions.csv");
    REQUIRE(rows.size() == 2000);
    std::size_t boundaries = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      CHECK(rows[i].model_version >= rows[i - 1].model_version);
      if (rows[i].model_version != rows[i - 1].model_version) ++boundaries;
    }
    for (const auto& r : rows) CHECK(r.predicted_future_aq == (r.model_version == v1 ? 50.0 : 70.0));
    CHECK(boundaries == 1);
    CHECK(fx.events(AuditEvent::kDeploy).size() == 2);
  }

  TEST_CASE("a rejected swap keeps the old model and leaves a trail") {
    Fixture fx;
    const auto v1 = fx.install(constant_model(50.0));
    ModelArtifact broken = constant_model(60.0);
    broken.version = fx.registry.register_model(broken, t0());
    std::get<LinearParams>(broken.params).intercept = std::nan("");
    CHECK(code_of([&] { fx.agent.swap_model(broken, at_min(1)); }) == ErrorCode::kArtifactVerificationFailed);
    CHECK(fx.agent.current_version() == v1);

    ModelArtifact foreign = constant_model(60.0, "A29");
    foreign.version = fx.registry.register_model(foreign, t0());
    CHECK(code_of([&] { fx.agent.swap_model(foreign, at_min(2)); }) == ErrorCode::kArtifactVerificationFailed);

    ModelArtifact unregistered = constant_model(60.0);
    unregistered.version = ModelVersion{42};
    CHECK(code_of([&] { fx.agent.swap_model(unregistered, at_min(3)); }) == ErrorCode::kArtifactVerificationFailed);

    CHECK(fx.agent.current_version() == v1);
    CHECK(fx.events(AuditEvent::kDeployFailed).size() == 3);
    std::size_t failures = 0;
    for (const auto& a : fx.supervisor.alarms()) failures += a.kind == AlarmKind::kDeployFailure ? 1 : 0;
    CHECK(failures == 3);
    const auto row = fx.agent.process1_step(testing::reading(at_min(5), 60), at_min(5));
    REQUIRE(row);
    CHECK(row->model_version == v1);
  }

  TEST_CASE("a bit-rotted stored artifact fails the deploy safely") {
    Fixture fx;
    const auto v1 = fx.install(constant_model(50.0));
    const auto v2 = fx.registry.register_model(constant_model(70.0), t0());
    const auto path = fx.registry.model_path(v2);
    std::string bytes = testing::slurp(path);
    bytes[bytes.size() - 2] = bytes[bytes.size() - 2] == '7' ? '8' : '7';
    std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
    CHECK_FALSE(fx.agent.deploy_version(v2, at_min(1)));
    CHECK(fx.agent.current_version() == v1);
    const auto failed = fx.events(AuditEvent::kDeployFailed);
    REQUIRE(failed.size() == 1);
    CHECK(failed[0].model_version == v2);
  }

  TEST_CASE("control payloads deploy by version") {
    Fixture fx;
    fx.install(constant_model(50.0));
    const auto v2 = fx.registry.register_model(constant_model(70.0), t0());
    fx.agent.handle_control(encode_control({"deploy", v2}), at_min(1));
    CHECK(fx.agent.current_version() == v2);
    CHECK(fx.registry.model_at("A10", at_min(1)) == v2);
    CHECK(code_of([&] { fx.agent.handle_control("type:control\ncommand:reboot\nmodel_version:2\n", at_min(2)); }) ==
          ErrorCode::kDecodeError);
  }

  TEST_CASE("recent examples come from the stored history window") {
    Fixture fx;
    fx.agent.seed_history(testing::series(std::vector<double>(288, 50.0)));
    const auto examples = fx.agent.recent_examples(t0() + kDay, kDay);
    // The window excludes its start, so the first reading is out: 287 readings, 284 labelled.
    CHECK(examples.size() == 284);
    CHECK(fx.agent.recent_examples(t0() - kDay, kHour).empty());
  }

  TEST_CASE("telemetry reports the counters") {
    Fixture fx;
    fx.install(constant_model(50.0));
    stream_day(fx, [](int i) { return i == 3 ? 900.0 : 50.0; });
    const TelemetryRecord t = fx.agent.make_telemetry(t0() + kDay);
    CHECK(t.device_id == "jetson-nano");
    CHECK(t.inference_count == 287);
    CHECK(t.dropped_readings == 1);
    CHECK(std::abs(t.accelerometer[2] - 9.81) < 0.2);
  }

  TEST_CASE("agent configuration is checked") {
    testing::TempDir dir("agent");
    Registry reg(dir / "registry");
    CHECK(code_of([&] { EdgeAgent a(AgentConfig{"", "A10", dir / "log.csv"}, reg); }) == ErrorCode::kInvalidArgument);
    AgentConfig short_memory{"d", "A10", dir / "log.csv"};
    short_memory.retention = kHour;
    CHECK(code_of([&] { EdgeAgent a(short_memory, reg); }) == ErrorCode::kInvalidArgument);
  }
}
