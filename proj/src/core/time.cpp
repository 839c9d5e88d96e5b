// SPDX-License-Identifier: Apache-2.0
#include "citypulse/core/time.hpp"

#include <boost/date_time/local_time/local_time.hpp>
#include <boost/date_time/posix_time/posix_time.hpp>

#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <map>

#include "citypulse/core/errors.hpp"

namespace citypulse {

using namespace std::chrono;

namespace {

int parseFixed(std::string_view text, size_t pos, size_t len, std::string_view what) {
  if (pos + len > text.size()) throw ParseError("bad_timestamp: truncated " + std::string(what));
  int v = 0;
  for (size_t i = pos; i < pos + len; ++i) {
    char c = text[i];
    if (c < '0' || c > '9') throw ParseError("bad_timestamp: non-digit in " + std::string(what));
    v = v * 10 + (c - '0');
  }
  return v;
}

void expectChar(std::string_view text, size_t pos, char c) {
  if (pos >= text.size() || text[pos] != c) {
    throw ParseError(std::string("bad_timestamp: expected '") + c + "'");
  }
}

Date checkedDate(int y, int m, int d) {
  Date date{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  if (!date.ok()) throw ParseError("bad_timestamp: invalid calendar date");
  return date;
}

}  // namespace

Timestamp parseRfc3339(std::string_view text) {
  // YYYY-MM-DDTHH:MM
  int y = parseFixed(text, 0, 4, "year");
  expectChar(text, 4, '-');
  int mo = parseFixed(text, 5, 2, "month");
  expectChar(text, 7, '-');
  int d = parseFixed(text, 8, 2, "day");
  if (text.size() <= 10 || (text[10] != 'T' && text[10] != 't' && text[10] != ' ')) {
    throw ParseError("bad_timestamp: expected 'T'");
  }
  int hh = parseFixed(text, 11, 2, "hour");
  expectChar(text, 13, ':');
  int mm = parseFixed(text, 14, 2, "minute");
  size_t pos = 16;
  int ss = 0;
  int ms = 0;
  if (pos < text.size() && text[pos] == ':') {
    ss = parseFixed(text, pos + 1, 2, "second");
    pos += 3;
    if (pos < text.size() && text[pos] == '.') {
      ++pos;
      size_t start = pos;
      int digits = 0;
      while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
        if (digits < 3) ms = ms * 10 + (text[pos] - '0');
        ++digits;
        ++pos;
      }
      if (pos == start) throw ParseError("bad_timestamp: empty fraction");
      for (int i = digits; i < 3; ++i) ms *= 10;
    }
  }
  if (hh > 23 || mm > 59 || ss > 60) throw ParseError("bad_timestamp: time out of range");
  if (ss == 60) ss = 59;  // leap seconds collapse onto :59

  minutes offset{0};
  if (pos >= text.size()) throw ParseError("bad_timestamp: missing UTC offset");
  char sign = text[pos];
  if (sign == 'Z' || sign == 'z') {
    ++pos;
  } else if (sign == '+' || sign == '-') {
    int oh = parseFixed(text, pos + 1, 2, "offset hour");
    expectChar(text, pos + 3, ':');
    int om = parseFixed(text, pos + 4, 2, "offset minute");
    if (oh > 23 || om > 59) throw ParseError("bad_timestamp: offset out of range");
    offset = minutes{oh * 60 + om};
    if (sign == '-') offset = -offset;
    pos += 6;
  } else {
    throw ParseError("bad_timestamp: missing UTC offset");
  }
  if (pos != text.size()) throw ParseError("bad_timestamp: trailing characters");

  Date date = checkedDate(y, mo, d);
  auto local = sys_days{date} + hours{hh} + minutes{mm} + seconds{ss} + milliseconds{ms};
  return {Instant{local - offset}, offset};
}

std::string formatRfc3339(const Timestamp& ts) {
  auto local = ts.utc + ts.offset;
  auto dp = floor<days>(local);
  Date date{dp};
  hh_mm_ss tod{local - dp};
  char buf[64];
  int n = std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d",
                        static_cast<int>(date.year()), static_cast<unsigned>(date.month()),
                        static_cast<unsigned>(date.day()), static_cast<int>(tod.hours().count()),
                        static_cast<int>(tod.minutes().count()),
                        static_cast<int>(tod.seconds().count()));
  std::string out(buf, static_cast<size_t>(n));
  if (auto ms = tod.subseconds().count(); ms != 0) {
    std::snprintf(buf, sizeof buf, ".%03d", static_cast<int>(ms));
    out += buf;
  }
  auto off = ts.offset.count();
  char sign = off < 0 ? '-' : '+';
  off = off < 0 ? -off : off;
  std::snprintf(buf, sizeof buf, "%c%02d:%02d", sign, static_cast<int>(off / 60),
                static_cast<int>(off % 60));
  out += buf;
  return out;
}

Date parseDate(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw ParseError("bad_date: expected YYYY-MM-DD");
  }
  try {
    return checkedDate(parseFixed(text, 0, 4, "year"), parseFixed(text, 5, 2, "month"),
                       parseFixed(text, 8, 2, "day"));
  } catch (const ParseError&) {
    throw ParseError("bad_date: " + std::string(text));
  }
}

std::string formatDate(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

milliseconds parseDuration(std::string_view text) {
  long long n = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
  if (ec != std::errc{} || n <= 0) throw ParseError("bad_duration: " + std::string(text));
  std::string_view unit(ptr, static_cast<size_t>(text.data() + text.size() - ptr));
  if (unit == "ms") return milliseconds{n};
  if (unit == "s") return seconds{n};
  if (unit == "m" || unit == "min") return minutes{n};
  if (unit == "h") return hours{n};
  if (unit == "d") return days{n};
  if (unit == "w") return weeks{n};
  throw ParseError("bad_duration: unknown unit in " + std::string(text));
}

std::string formatDuration(milliseconds d) {
  auto n = d.count();
  if (n % 86'400'000 == 0) return std::to_string(n / 86'400'000) + "d";
  if (n % 3'600'000 == 0) return std::to_string(n / 3'600'000) + "h";
  if (n % 60'000 == 0) return std::to_string(n / 60'000) + "m";
  if (n % 1000 == 0) return std::to_string(n / 1000) + "s";
  return std::to_string(n) + "ms";
}

// ---------------------------------------------------------------------------
// TimeZone

struct TimeZone::Impl {
  boost::local_time::time_zone_ptr zone;
};

namespace {

const std::map<std::string, std::string>& builtinRules() {
  static const std::map<std::string, std::string> rules{
      {"UTC", "UTC0"},
      {"Etc/UTC", "UTC0"},
      {"America/New_York", "EST5EDT,M3.2.0,M11.1.0"},
      {"America/Chicago", "CST6CDT,M3.2.0,M11.1.0"},
      {"America/Denver", "MST7MDT,M3.2.0,M11.1.0"},
      {"America/Los_Angeles", "PST8PDT,M3.2.0,M11.1.0"},
      {"Asia/Shanghai", "CST-8"},
      {"Europe/London", "GMT0BST,M3.5.0/1,M10.5.0"},
  };
  return rules;
}

/// Rewrites a POSIX TZ rule into the dialect of boost::posix_time_zone:
/// offsets east of UTC are positive and the DST offset is an adjustment
/// relative to standard time. Quoted abbreviations become plain letters.
std::string toBoostRule(const std::string& rule) {
  std::size_t i = 0;
  auto name = [&](const char* fallback) -> std::string {
    if (i < rule.size() && rule[i] == '<') {
      auto close = rule.find('>', i);
      if (close == std::string::npos) throw ConfigError("unterminated abbreviation in " + rule);
      i = close + 1;
      return fallback;
    }
    auto start = i;
    while (i < rule.size() && std::isalpha(static_cast<unsigned char>(rule[i]))) ++i;
    if (i - start < 3) throw ConfigError("bad zone abbreviation in " + rule);
    return rule.substr(start, i - start);
  };
  // Returns seconds west of UTC, as written in POSIX rules.
  auto offset = [&]() -> long {
    long sign = 1;
    if (i < rule.size() && (rule[i] == '+' || rule[i] == '-')) sign = rule[i++] == '-' ? -1 : 1;
    long parts[3] = {0, 0, 0};
    int n = 0;
    while (n < 3) {
      auto start = i;
      while (i < rule.size() && std::isdigit(static_cast<unsigned char>(rule[i]))) ++i;
      if (start == i) throw ConfigError("bad offset in " + rule);
      parts[n++] = std::stol(rule.substr(start, i - start));
      if (i < rule.size() && rule[i] == ':') {
        ++i;
      } else {
        break;
      }
    }
    return sign * (parts[0] * 3600 + parts[1] * 60 + parts[2]);
  };
  auto fmt = [](long secs) {
    char buf[32];
    long a = secs < 0 ? -secs : secs;
    std::snprintf(buf, sizeof buf, "%c%02ld:%02ld:%02ld", secs < 0 ? '-' : '+', a / 3600,
                  (a / 60) % 60, a % 60);
    return std::string(buf);
  };

  std::string out = name("STD");
  long stdWest = offset();
  out += fmt(-stdWest);
  if (i >= rule.size()) return out;
  out += name("DST");
  long dstWest = stdWest - 3600;
  if (i < rule.size() && rule[i] != ',') dstWest = offset();
  out += fmt(stdWest - dstWest);
  out += rule.substr(i);
  return out;
}

bool looksLikePosixRule(const std::string& s) {
  return s.find_first_of("0123456789") != std::string::npos && s.find('/') == std::string::npos;
}

}  // namespace

std::string posixRuleFromZoneinfo(const std::string& ianaName) {
  if (ianaName.empty() || ianaName.find("..") != std::string::npos || ianaName.front() == '/') {
    return {};
  }
  const char* dir = std::getenv("TZDIR");
  std::string path = std::string(dir ? dir : "/usr/share/zoneinfo") + "/" + ianaName;
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < 5 || data.compare(0, 4, "TZif") != 0 || data[4] < '2') return {};
  // The footer is "\n<rule>\n" at the very end of the file.
  if (data.back() != '\n') return {};
  auto start = data.rfind('\n', data.size() - 2);
  if (start == std::string::npos) return {};
  return data.substr(start + 1, data.size() - start - 2);
}

TimeZone::TimeZone(std::string name, std::string rule, std::shared_ptr<const Impl> impl)
    : name_(std::move(name)), rule_(std::move(rule)), impl_(std::move(impl)) {}

TimeZone TimeZone::fromName(const std::string& name) {
  std::string rule = posixRuleFromZoneinfo(name);
  if (rule.empty()) {
    if (auto it = builtinRules().find(name); it != builtinRules().end()) {
      rule = it->second;
    } else if (looksLikePosixRule(name)) {
      rule = name;
    } else {
      throw ConfigError("unknown time zone: " + name);
    }
  }
  auto impl = std::make_shared<Impl>();
  try {
    impl->zone.reset(new boost::local_time::posix_time_zone(toBoostRule(rule)));
  } catch (const std::exception& e) {
    throw ConfigError("unsupported time zone rule '" + rule + "' for " + name + ": " + e.what());
  }
  return TimeZone(name, rule, std::move(impl));
}

TimeZone TimeZone::utc() { return fromName("UTC"); }

minutes TimeZone::offsetAt(Instant t) const {
  namespace pt = boost::posix_time;
  namespace lt = boost::local_time;
  auto secs = floor<seconds>(t).time_since_epoch().count();
  pt::ptime utc = pt::from_time_t(static_cast<std::time_t>(secs));
  lt::local_date_time ldt(utc, impl_->zone);
  auto off = impl_->zone->base_utc_offset();
  if (ldt.is_dst()) off += impl_->zone->dst_offset();
  return minutes{off.total_seconds() / 60};
}

LocalTime TimeZone::toLocal(Instant t) const {
  return LocalTime{t.time_since_epoch() + offsetAt(t)};
}

Instant TimeZone::fromLocal(LocalTime t) const {
  // Evaluate both candidate offsets (one hour either side) and pick the
  // earliest instant that maps back to t; if none does, t falls in a gap.
  Instant naive{t.time_since_epoch()};
  auto before = offsetAt(naive - hours{26});
  auto after = offsetAt(naive + hours{26});
  Instant a = naive - before;
  Instant b = naive - after;
  bool aOk = toLocal(a) == t;
  bool bOk = toLocal(b) == t;
  if (aOk && bOk) return std::min(a, b);
  if (aOk) return a;
  if (bOk) return b;
  return a;
}

Instant TimeZone::startOfDay(const Date& d) const {
  return fromLocal(LocalTime{local_days{d}.time_since_epoch()});
}

}  // namespace citypulse
