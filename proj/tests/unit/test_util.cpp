#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "doctest.h"
#include "edgefleet/error.hpp"
#include "edgefleet/text.hpp"
#include "edgefleet/time.hpp"
#include "support.hpp"

using namespace edgefleet;

TEST_SUITE("util") {
  TEST_CASE("shortest doubles round-trip bit for bit") {
    std::mt19937_64 rng(21);
    for (int i = 0; i < 5000; ++i) {
      std::uint64_t bits = rng();
      double v;
      std::memcpy(&v, &bits, sizeof v);
      if (!std::isfinite(v)) continue;
      const auto back = parse_double(format_double(v));
      REQUIRE(back);
      if (v == 0.0) {
        CHECK(*back == 0.0);
      } else {
        CHECK(std::memcmp(&*back, &v, sizeof v) == 0);
      }
    }
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(10.0) == "10");
    CHECK(format_double(-0.0) == "0");
    CHECK(format_double(61.92) == "61.92");
  }

  TEST_CASE("number parsing is strict") {
    CHECK(parse_double("1.5") == 1.5);
    CHECK(std::isnan(*parse_double("nan")));
    CHECK(std::isinf(*parse_double("inf")));
    CHECK_FALSE(parse_double(""));
    CHECK_FALSE(parse_double("1.5x"));
    CHECK_FALSE(parse_double("bright"));
    CHECK(parse_int("-42") == -42);
    CHECK_FALSE(parse_int("4.2"));
    CHECK_FALSE(parse_int(""));
  }

  TEST_CASE("CSV fields with separators and quotes survive") {
    const std::vector<std::string> fields = {"plain", "a,b", "say \"hi\"", "", "k=v;k2=v2"};
    CHECK(split_csv_line(join_csv(fields)) == fields);
    CHECK(csv_escape("plain") == "plain");
    CHECK(csv_escape("a,b") == "\"a,b\"");
    CHECK(split_csv_line("a,,c") == std::vector<std::string>{"a", "", "c"});
  }

  TEST_CASE("fields and trimming") {
    const FieldMap f = {{"a", "1"}, {"b", "2"}};
    CHECK(*find_field(f, "b") == "2");
    CHECK(find_field(f, "c") == nullptr);
    CHECK(trim("  x y \t") == "x y");
    CHECK(trim("   ").empty());
  }

  TEST_CASE("RFC 3339 formatting and parsing") {
    CHECK(format_rfc3339(testing::t0()) == "2020-03-15T00:00:00Z");
    CHECK(format_rfc3339(testing::t0() + Duration(250)) == "2020-03-15T00:00:00.250Z");
    CHECK(parse_rfc3339("2020-03-15T00:00:00Z") == testing::t0());
    CHECK(parse_rfc3339("2020-03-15 00:05:00+00:00") == testing::at_min(5));
    CHECK(parse_rfc3339("2020-03-15T00:00:00.250Z") == testing::t0() + Duration(250));
    CHECK(format_date(testing::at_min(60 * 30)) == "2020-03-16");
    for (const char* bad : {"", "2020-03-15", "2020-03-15T00:00:00", "2020-13-01T00:00:00Z", "2020-03-15T00:00:00+02:00",
                            "yesterday"}) {
      CHECK_THROWS_AS(parse_rfc3339(bad), Error);
    }
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<std::int64_t> ms(0, 4'102'444'800'000);
    for (int i = 0; i < 500; ++i) {
      const Instant t = from_epoch_ms(ms(rng));
      CHECK(parse_rfc3339(format_rfc3339(t)) == t);
    }
  }

  TEST_CASE("errors name their code") {
    const Error e(ErrorCode::kInsufficientData, "need 10 rows");
    CHECK(std::string(e.what()) == "InsufficientData: need 10 rows");
    CHECK(e.code() == ErrorCode::kInsufficientData);
  }
}
