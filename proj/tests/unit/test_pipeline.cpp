#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "doctest.h"
#include "edgefleet/error.hpp"
#include "edgefleet/pipeline.hpp"
#include "support.hpp"

using namespace edgefleet;
using testing::at_min;
using testing::reading;
using testing::series;
using testing::t0;

namespace {

FieldMap full_record() {
  return {{"timestamp", "2020-03-15T00:00:00Z"},
          {"name", "bme680-A10"},
          {"room", "A10"},
          {"room_type", "office"},
          {"floor", "1"},
          {"air_quality", "60.5"},
          {"air_quality_static", "61.92"},
          {"ambient_light", "120"},
          {"humidity", "35.25"},
          {"iaq_accuracy", "3"},
          {"iaq_accuracy_static", "3"},
          {"pressure", "1013.25"},
          {"temperature", "21.5"}};
}

FieldMap without(FieldMap fields, const std::string& name) {
  std::erase_if(fields, [&](const auto& kv) { return kv.first == name; });
  return fields;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an edgefleet::Error");
  return ErrorCode::kInvalidArgument;
}

// Independent scan: rows with all six features finite and AQI in range.
std::size_t count_clean_rows(const std::vector<SensorReading>& rows) {
  std::size_t n = 0;
  for (const auto& r : rows) {
    const double v[] = {r.air_quality_static, r.ambient_light, r.humidity, r.iaq_accuracy_static, r.pressure,
                        r.temperature};
    bool ok = true;
    for (double x : v) ok = ok && std::isfinite(x);
    ok = ok && r.air_quality_static >= 0.0 && r.air_quality_static <= 500.0;
    n += ok ? 1 : 0;
  }
  return n;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("parse_reading types the thirteen fields") {
    const SensorReading r = parse_reading(full_record());
    CHECK(r.air_quality_static == 61.92);
    CHECK(r.room == "A10");
    CHECK(r.timestamp == t0());
    CHECK(r.pressure == 1013.25);
  }

  TEST_CASE("parse_reading round-trips to the identical field map") {
    CHECK(to_field_map(parse_reading(full_record())) == full_record());
  }

  TEST_CASE("missing and malformed fields are reported") {
    CHECK(code_of([] { parse_reading(without(full_record(), "pressure")); }) == ErrorCode::kMissingField);
    FieldMap bad = full_record();
    bad[7].second = "bright";
    CHECK(code_of([&] { parse_reading(bad); }) == ErrorCode::kMalformedField);
    bad = full_record();
    bad[0].second = "yesterday";
    CHECK(code_of([&] { parse_reading(bad); }) == ErrorCode::kMalformedField);
  }

  TEST_CASE("features follow the documented order") {
    SensorReading r = reading(t0(), 61.0);
    r.ambient_light = 2;
    r.humidity = 3;
    r.iaq_accuracy_static = 4;
    r.pressure = 5;
    r.temperature = 6;
    const FeatureVector f = extract_features(r);
    CHECK(f.values == Features{61, 2, 3, 4, 5, 6});
    CHECK(f.room == "A10");
  }

  TEST_CASE("clean keeps the first of duplicate timestamps") {
    const auto out = clean({reading(at_min(0), 50), reading(at_min(0), 51), reading(at_min(5), 52)});
    REQUIRE(out.size() == 2);
    CHECK(out[0].air_quality_static == 50);
    CHECK(out[1].air_quality_static == 52);
  }

  TEST_CASE("clean drops out-of-range AQI and sorts") {
    const auto out = clean({reading(at_min(10), 40), reading(at_min(5), 612.0), reading(at_min(0), 30),
                            reading(at_min(15), -0.5), reading(at_min(20), 500.0)});
    REQUIRE(out.size() == 3);
    CHECK(out[0].air_quality_static == 30);
    CHECK(out[1].air_quality_static == 40);
    CHECK(out[2].air_quality_static == 500.0);
  }

  TEST_CASE("clean removes rows with NaN humidity, matching a brute-force count") {
    std::mt19937_64 rng(17);
    std::vector<SensorReading> rows;
    for (int i = 0; i < 1000; ++i) rows.push_back(reading(at_min(5 * i), 40 + (i % 50)));
    std::vector<std::size_t> idx(rows.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    for (int i = 0; i < 37; ++i) rows[idx[static_cast<std::size_t>(i)]].humidity = std::numeric_limits<double>::quiet_NaN();
    const auto out = clean(rows);
    CHECK(out.size() == 963);
    CHECK(out.size() == count_clean_rows(rows));
  }

  TEST_CASE("clean is idempotent and strictly increasing on random input") {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> slot(0, 60);
    std::uniform_real_distribution<double> aq(-50, 600);
    std::bernoulli_distribution nan(0.05);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<SensorReading> rows;
      const int n = trial % 40;
      for (int i = 0; i < n; ++i) {
        auto r = reading(at_min(5 * slot(rng)), aq(rng));
        if (nan(rng)) r.temperature = std::numeric_limits<double>::infinity();
        rows.push_back(r);
      }
      const auto once = clean(rows);
      CHECK(clean(once) == once);
      for (std::size_t i = 1; i < once.size(); ++i) CHECK(once[i - 1].timestamp < once[i].timestamp);
      for (const auto& r : once) CHECK(passes_cleaning(r));
    }
  }

  TEST_CASE("labels are the AQI three readings later") {
    const auto examples = build_training_set(series({10, 20, 30, 40, 50}));
    REQUIRE(examples.size() == 2);
    CHECK(examples[0].label == 40);
    CHECK(examples[1].label == 50);
    CHECK(examples[0].features.values[0] == 10);
  }

  TEST_CASE("fewer than four readings is insufficient") {
    const auto s = series({10, 20, 30});
    CHECK(code_of([&] { build_training_set(s); }) == ErrorCode::kInsufficientData);
    CHECK(code_of([] { build_training_set({}); }) == ErrorCode::kInsufficientData);
  }

  TEST_CASE("a gap-free 45-day series yields N - 3 examples") {
    std::vector<double> aqs(12'960);
    for (std::size_t i = 0; i < aqs.size(); ++i) aqs[i] = static_cast<double>(i % 300);
    const auto s = series(aqs);
    const auto examples = build_training_set(s);
    std::size_t expected = 0;  // enumerate every window that fits
    for (std::size_t i = 0; i + 3 < s.size(); ++i) ++expected;
    CHECK(expected == 12'957);
    CHECK(examples.size() == expected);
  }

  TEST_CASE("label invariant and gap rule hold on random gappy series") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> step(0, 9);
    std::uniform_real_distribution<double> aq(0, 300);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<SensorReading> rows;
      std::int64_t seconds = 0;
      for (int i = 0; i < 60; ++i) {
        const int s = step(rng);
        // Mostly on cadence; sometimes 7.5 min exactly, sometimes longer.
        seconds += s < 7 ? 300 : (s == 7 ? 450 : 451 + 600 * s);
        rows.push_back(reading(t0() + std::chrono::seconds(seconds), aq(rng)));
      }
      const auto cleaned = clean(rows);
      std::vector<LabeledExample> examples;
      try {
        examples = build_training_set(cleaned);
      } catch (const Error&) {
        continue;
      }
      std::size_t k = 0;
      for (std::size_t i = 0; i + 3 < cleaned.size(); ++i) {
        bool ok = true;
        for (std::size_t j = i; j < i + 3; ++j) ok = ok && cleaned[j + 1].timestamp - cleaned[j].timestamp <= std::chrono::seconds(450);
        if (!ok) continue;
        REQUIRE(k < examples.size());
        CHECK(examples[k].features.timestamp == cleaned[i].timestamp);
        CHECK(examples[k].label == cleaned[i + 3].air_quality_static);
        ++k;
      }
      CHECK(k == examples.size());
      CHECK(examples.size() <= cleaned.size() - 3);
    }
  }

  TEST_CASE("reading CSV round-trips and rejects a foreign header") {
    const auto s = series({10.5, 20.25, 30.125});
    std::stringstream buf;
    write_readings_csv(buf, s);
    CHECK(read_readings_csv(buf) == s);
    std::stringstream foreign("timestamp,room\n2020-03-15T00:00:00Z,A10\n");
    CHECK(code_of([&] { read_readings_csv(foreign); }) == ErrorCode::kMissingField);
  }

  TEST_CASE("prediction log appends in order and guards versions") {
    testing::TempDir dir("plog");
    const auto path = dir / "dev_predictions.csv";
    {
      PredictionLog log(path, [](ModelVersion v, Instant) { return v.value == 1; });
      for (int i = 0; i < 3; ++i) {
        PredictionRow row{reading(at_min(5 * i), 50 + i), 60.0 + i, ModelVersion{1}, at_min(5 * i)};
        log.append(row);
      }
      PredictionRow stray{reading(at_min(15), 53), 63.0, ModelVersion{7}, at_min(15)};
      CHECK(code_of([&] { log.append(stray); }) == ErrorCode::kUnknownModelVersion);
      CHECK(log.rows_written() == 3);
    }
    const auto rows = read_prediction_log(path);
    REQUIRE(rows.size() == 3);
    for (int i = 0; i < 3; ++i) {
      CHECK(rows[static_cast<std::size_t>(i)].predicted_future_aq == 60.0 + i);
      CHECK(rows[static_cast<std::size_t>(i)].reading.timestamp == at_min(5 * i));
    }
    CHECK(testing::line_count(path) == 4);
    CHECK(prediction_log_header().size() == 16);
  }

  TEST_CASE("prediction log line count matches an independent counter") {
    testing::TempDir dir("plog45");
    const auto path = dir / "dev_predictions.csv";
    std::size_t inference_calls = 0;
    {
      PredictionLog log(path, [](ModelVersion v, Instant) { return v.value > 0; });
      for (int i = 0; i < 12'960; ++i) {
        log.append({reading(at_min(5 * i), 50), 55.0, ModelVersion{1 + static_cast<std::uint64_t>(i / 4000)}, at_min(5 * i)});
        ++inference_calls;
      }
    }
    CHECK(testing::line_count(path) - 1 == inference_calls);
  }
}
