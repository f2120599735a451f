#include "gidea/timestamp.hpp"

#include <chrono>
#include <cstdio>

namespace gidea {

namespace {

bool digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
  if (pos + n > s.size()) return false;
  out = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    out = out * 10 + (s[i] - '0');
  }
  return true;
}

char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

constexpr std::int64_t kDay = 86400;

}  // namespace

std::optional<Timestamp> Timestamp::parse(std::string_view s) {
  int year, month, day, hour, minute, second;
  if (!digits(s, 0, 4, year) || s.size() < 11 || s[4] != '-' || !digits(s, 5, 2, month) || s[7] != '-' ||
      !digits(s, 8, 2, day) || s[10] != ' ') {
    return std::nullopt;
  }
  std::size_t pos = 11;
  std::size_t hour_len = (pos + 1 < s.size() && s[pos + 1] == ':') ? 1 : 2;
  if (!digits(s, pos, hour_len, hour)) return std::nullopt;
  pos += hour_len;
  if (pos >= s.size() || s[pos] != ':' || !digits(s, pos + 1, 2, minute)) return std::nullopt;
  pos += 3;
  if (pos >= s.size() || s[pos] != ':' || !digits(s, pos + 1, 2, second)) return std::nullopt;
  pos += 3;
  if (pos + 3 != s.size() || s[pos] != ' ') return std::nullopt;
  const char m0 = lower(s[pos + 1]);
  const char m1 = lower(s[pos + 2]);
  if ((m0 != 'a' && m0 != 'p') || m1 != 'm') return std::nullopt;
  if (hour < 1 || hour > 12 || minute > 59 || second > 59) return std::nullopt;

  const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                                        std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok()) return std::nullopt;
  const int hour24 = (hour % 12) + (m0 == 'p' ? 12 : 0);
  const std::int64_t days = std::chrono::sys_days{ymd}.time_since_epoch().count();
  Timestamp t;
  t.seconds = days * kDay + hour24 * 3600 + minute * 60 + second;
  t.text = std::string(s);
  return t;
}

std::string Timestamp::format(std::int64_t seconds) {
  std::int64_t days = seconds / kDay;
  std::int64_t rem = seconds % kDay;
  if (rem < 0) {
    rem += kDay;
    --days;
  }
  const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days}}};
  const int hour24 = static_cast<int>(rem / 3600);
  const int hour12 = hour24 % 12 == 0 ? 12 : hour24 % 12;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02d:%02d:%02d %s", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), hour12,
                static_cast<int>(rem % 3600 / 60), static_cast<int>(rem % 60), hour24 < 12 ? "am" : "pm");
  return buf;
}

Timestamp Timestamp::from_seconds(std::int64_t seconds) { return {seconds, format(seconds)}; }

std::string Timestamp::str() const { return text.empty() ? format(seconds) : text; }

std::string Timestamp::clock_str() const {
  std::int64_t rem = seconds % kDay;
  if (rem < 0) rem += kDay;
  const int hour24 = static_cast<int>(rem / 3600);
  const int hour12 = hour24 % 12 == 0 ? 12 : hour24 % 12;
  char buf[16];
  std::snprintf(buf, sizeof buf, "%d:%02d %s", hour12, static_cast<int>(rem % 3600 / 60), hour24 < 12 ? "am" : "pm");
  return buf;
}

}  // namespace gidea
