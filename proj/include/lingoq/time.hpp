#pragma once

#include "lingoq/error.hpp"

#include <chrono>
#include <cstdio>
#include <string>

namespace lingoq {

using Timestamp = std::chrono::sys_seconds;
using Seconds = std::chrono::seconds;

inline Timestamp from_epoch(std::int64_t seconds) { return Timestamp{Seconds{seconds}}; }
inline std::int64_t to_epoch(Timestamp t) { return t.time_since_epoch().count(); }

inline Timestamp now_utc() {
  return std::chrono::floor<Seconds>(std::chrono::system_clock::now());
}

/// Formats as "YYYY-MM-DDTHH:MM:SSZ".
inline std::string format_iso8601(Timestamp t) {
  using namespace std::chrono;
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const hh_mm_ss hms{t - day};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02lldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long long>(hms.seconds().count()));
  return buf;
}

/// Accepts "YYYY-MM-DDTHH:MM:SS" followed by "Z" or "+HH:MM"/"-HH:MM".
inline Timestamp parse_iso8601(const std::string& text) {
  using namespace std::chrono;
  int y = 0;
  unsigned mo = 0, d = 0;
  int h = 0, mi = 0, s = 0;
  int consumed = 0;
  if (std::sscanf(text.c_str(), "%4d-%2u-%2uT%2d:%2d:%2d%n", &y, &mo, &d, &h, &mi, &s, &consumed) != 6) {
    fail(ErrorCode::schema_violation, "bad timestamp: " + text);
  }
  const year_month_day ymd{year{y}, month{mo}, day{d}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 60) fail(ErrorCode::schema_violation, "bad timestamp: " + text);
  auto t = sys_days{ymd} + hours{h} + minutes{mi} + Seconds{s};
  const std::string rest = text.substr(static_cast<std::size_t>(consumed));
  if (rest == "Z" || rest.empty()) return t;
  int oh = 0, om = 0;
  char sign = 0;
  if (std::sscanf(rest.c_str(), "%c%2d:%2d", &sign, &oh, &om) != 3 || (sign != '+' && sign != '-')) {
    fail(ErrorCode::schema_violation, "bad timestamp offset: " + text);
  }
  const auto offset = hours{oh} + minutes{om};
  return sign == '+' ? t - offset : t + offset;
}

/// A user's calendar, as a fixed offset from UTC.
struct UtcOffset {
  std::chrono::minutes offset{0};

  std::chrono::sys_days local_day(Timestamp t) const {
    return std::chrono::floor<std::chrono::days>(t + offset);
  }
  /// Seconds elapsed since local midnight.
  Seconds time_of_day(Timestamp t) const {
    const auto local = t + offset;
    return local - std::chrono::floor<std::chrono::days>(local);
  }
  bool same_day(Timestamp a, Timestamp b) const { return local_day(a) == local_day(b); }
};

}  // namespace lingoq
