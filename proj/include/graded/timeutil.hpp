#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace graded::timeutil {

using Timestamp = std::chrono::sys_seconds;

// "Mon, 06 Sep 2021 16:45:00 +0200" and the obsolete zone names (GMT, UT,
// EST, EDT, CST, CDT, MST, MDT, PST, PDT, Z). Weekday and seconds optional.
std::optional<Timestamp> parse_rfc822(std::string_view s);

// "2021-09-06T16:45:00Z", "2021-09-06T16:45:00.250+02:00", lowercase 't'
// and space separators accepted. Fractional seconds are truncated.
std::optional<Timestamp> parse_rfc3339(std::string_view s);

// Tries RFC 3339 first, then RFC 822.
std::optional<Timestamp> parse_any(std::string_view s);

// Always UTC with a 'Z' suffix, second precision.
std::string format_rfc3339(Timestamp t);

// Strict inverse of format_rfc3339 for stored records; throws on failure.
Timestamp parse_stored(std::string_view s);

inline Timestamp now() {
  return std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
}

}  // namespace graded::timeutil
