#pragma once

// Twelve-hour wall-clock timestamps as emitted by schedule and enrichment
// prompts, e.g. "2025-02-06 11:48:48 pm".

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace gidea {

struct Timestamp {
  // Seconds since 1970-01-01 00:00:00 (no time zone; the simulation clock is local).
  std::int64_t seconds = 0;
  // The text the value was parsed from, kept so serialization is lossless.
  std::string text;

  // Accepts `YYYY-MM-DD h:mm:ss am|pm` with a 1 or 2 digit hour in 1..12 and
  // case-insensitive meridiem. Returns nullopt on anything else.
  static std::optional<Timestamp> parse(std::string_view s);
  // Canonical rendering: zero-padded hour, lowercase meridiem.
  static Timestamp from_seconds(std::int64_t seconds);
  static std::string format(std::int64_t seconds);

  // The retained text, or the canonical rendering when none was retained.
  std::string str() const;
  // "h:mm am" as used in activity duration lines.
  std::string clock_str() const;

  bool operator==(const Timestamp& o) const { return seconds == o.seconds; }
  auto operator<=>(const Timestamp& o) const { return seconds <=> o.seconds; }
};

}  // namespace gidea
