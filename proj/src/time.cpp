#include "edgefleet/time.hpp"

#include <charconv>
#include <cstdio>

#include "edgefleet/error.hpp"

namespace edgefleet {

namespace {

using namespace std::chrono;

int parse_digits(std::string_view text, std::size_t pos, std::size_t count) {
  if (pos + count > text.size()) {
    throw Error(ErrorCode::kMalformedField, "timestamp too short: '" + std::string(text) + "'");
  }
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + count, value);
  if (ec != std::errc() || ptr != text.data() + pos + count) {
    throw Error(ErrorCode::kMalformedField, "bad timestamp digits: '" + std::string(text) + "'");
  }
  return value;
}

void expect_char(std::string_view text, std::size_t pos, std::string_view allowed) {
  if (pos >= text.size() || allowed.find(text[pos]) == std::string_view::npos) {
    throw Error(ErrorCode::kMalformedField, "bad timestamp layout: '" + std::string(text) + "'");
  }
}

}  // namespace

std::string format_rfc3339(Instant t) {
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const hh_mm_ss<Duration> hms{t - day};
  char buf[40];
  const int ms = static_cast<int>(hms.subseconds().count());
  if (ms == 0) {
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
  } else {
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ",
                  static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()), static_cast<int>(hms.hours().count()),
                  static_cast<int>(hms.minutes().count()), static_cast<int>(hms.seconds().count()),
                  ms);
  }
  return buf;
}

std::string format_date(Instant t) { return format_rfc3339(floor<days>(t)).substr(0, 10); }

Instant parse_rfc3339(std::string_view text) {
  const int y = parse_digits(text, 0, 4);
  expect_char(text, 4, "-");
  const int mo = parse_digits(text, 5, 2);
  expect_char(text, 7, "-");
  const int d = parse_digits(text, 8, 2);
  expect_char(text, 10, "Tt ");
  const int h = parse_digits(text, 11, 2);
  expect_char(text, 13, ":");
  const int mi = parse_digits(text, 14, 2);
  expect_char(text, 16, ":");
  const int s = parse_digits(text, 17, 2);
  std::size_t pos = 19;
  int ms = 0;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    int scale = 100;
    std::size_t digits = 0;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
      ms += (text[pos] - '0') * scale;
      scale /= 10;
      ++pos;
      ++digits;
    }
    if (digits == 0 || digits > 3) {
      throw Error(ErrorCode::kMalformedField, "bad fractional seconds: '" + std::string(text) + "'");
    }
  }
  const std::string_view zone = text.substr(pos);
  if (zone != "Z" && zone != "z" && zone != "+00:00") {
    throw Error(ErrorCode::kMalformedField, "timestamp must be UTC: '" + std::string(text) + "'");
  }
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59) {
    throw Error(ErrorCode::kMalformedField, "timestamp out of range: '" + std::string(text) + "'");
  }
  return Instant(sys_days{ymd}) + hours(h) + minutes(mi) + seconds(s) + milliseconds(ms);
}

}  // namespace edgefleet
