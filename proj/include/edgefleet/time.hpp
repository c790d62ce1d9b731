#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace edgefleet {

/// UTC instant with millisecond resolution. Stored as epoch milliseconds.
using Duration = std::chrono::milliseconds;
using Instant = std::chrono::sys_time<Duration>;

inline constexpr Duration kMinute = std::chrono::minutes(1);
inline constexpr Duration kHour = std::chrono::hours(1);
inline constexpr Duration kDay = std::chrono::hours(24);

inline std::int64_t epoch_ms(Instant t) { return t.time_since_epoch().count(); }
inline Instant from_epoch_ms(std::int64_t ms) { return Instant(Duration(ms)); }

/// RFC 3339 in UTC, e.g. "2020-03-15T00:00:00Z". Milliseconds are printed
/// only when non-zero so whole-second instants stay short.
std::string format_rfc3339(Instant t);

/// Accepts "YYYY-MM-DDTHH:MM:SS[.fff]" followed by "Z" or "+00:00".
/// A space is accepted in place of the 'T'. Throws Error(kMalformedField).
Instant parse_rfc3339(std::string_view text);

/// Date part only ("2020-03-15").
std::string format_date(Instant t);

}  // namespace edgefleet
