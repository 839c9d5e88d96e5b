// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <string_view>

namespace citypulse {

using Instant = std::chrono::sys_time<std::chrono::milliseconds>;
using LocalTime = std::chrono::local_time<std::chrono::milliseconds>;
using Date = std::chrono::year_month_day;

/// An instant together with the UTC offset it was observed/displayed with.
struct Timestamp {
  Instant utc{};
  std::chrono::minutes offset{0};

  bool operator==(const Timestamp&) const = default;
};

/// Accepts `YYYY-MM-DDTHH:MM[:SS[.fff]](Z|±HH:MM)`; throws ParseError.
Timestamp parseRfc3339(std::string_view text);

/// Always emits seconds and a numeric offset; milliseconds only when nonzero.
std::string formatRfc3339(const Timestamp& ts);

Date parseDate(std::string_view text);
std::string formatDate(const Date& d);

/// Parses durations like `30s`, `5m`, `5min`, `1h`, `1d`, `2w`.
std::chrono::milliseconds parseDuration(std::string_view text);
std::string formatDuration(std::chrono::milliseconds d);

/// A civil time zone. Constructed from an IANA name (resolved through the
/// system zoneinfo database, falling back to a small built-in table) or from
/// a POSIX TZ rule string such as `EST5EDT,M3.2.0,M11.1.0`.
class TimeZone {
 public:
  static TimeZone fromName(const std::string& name);
  static TimeZone utc();

  const std::string& name() const noexcept { return name_; }
  const std::string& posixRule() const noexcept { return rule_; }

  std::chrono::minutes offsetAt(Instant t) const;
  LocalTime toLocal(Instant t) const;
  /// Maps a civil time to an instant. Times skipped by a forward DST jump
  /// resolve using the pre-transition offset; repeated times resolve to the
  /// earlier instant.
  Instant fromLocal(LocalTime t) const;
  Instant startOfDay(const Date& d) const;
  Timestamp stamp(Instant t) const { return {t, offsetAt(t)}; }

 private:
  struct Impl;
  TimeZone(std::string name, std::string rule, std::shared_ptr<const Impl> impl);

  std::string name_;
  std::string rule_;
  std::shared_ptr<const Impl> impl_;
};

/// Reads the POSIX footer of a TZif v2+ file, or returns empty on failure.
std::string posixRuleFromZoneinfo(const std::string& ianaName);

}  // namespace citypulse
