// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <compare>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "citypulse/core/time.hpp"

namespace citypulse {

template <class Tag>
class StringId {
 public:
  StringId() = default;
  explicit StringId(std::string v) : value_(std::move(v)) {}

  const std::string& str() const noexcept { return value_; }
  bool empty() const noexcept { return value_.empty(); }

  auto operator<=>(const StringId&) const = default;

 private:
  std::string value_;
};

using CityId = StringId<struct CityIdTag>;
using LocationId = StringId<struct LocationIdTag>;

/// Lowercase token of [a-z0-9_], 1..32 chars. Throws ParseError.
CityId parseCityId(std::string_view text);
/// Non-empty, at most 128 chars, no separators (`,` `\t` `\n` `"` `/`).
LocationId parseLocationId(std::string_view text);

enum class MetricKind {
  TrafficVolume,
  TravelTime,
  TransitRidership,
  BikeCount,
  PedCount,
  CrashCount,
  FatalityCount,
  SpeedingTicketCount,
  TruckGvw,
  ParkingOccupancy,
  ComplaintCount,
  Speed,
};

inline constexpr std::array kAllMetricKinds = {
    MetricKind::TrafficVolume,       MetricKind::TravelTime,
    MetricKind::TransitRidership,    MetricKind::BikeCount,
    MetricKind::PedCount,            MetricKind::CrashCount,
    MetricKind::FatalityCount,       MetricKind::SpeedingTicketCount,
    MetricKind::TruckGvw,            MetricKind::ParkingOccupancy,
    MetricKind::ComplaintCount,      MetricKind::Speed,
};

std::string_view toString(MetricKind kind);
std::optional<MetricKind> metricKindFromString(std::string_view token);
/// Throws ParseError on unknown tokens.
MetricKind parseMetricKind(std::string_view token);

/// Canonical unit label: minutes, mph, kips, or count.
std::string_view canonicalUnit(MetricKind kind);
bool isCountLike(MetricKind kind);
/// Value invariant for a metric: finite, and the per-kind domain rule.
bool valueInDomain(MetricKind kind, double value);

using Meta = std::map<std::string, std::string>;

struct TimeSeriesRecord {
  CityId city;
  MetricKind metric{MetricKind::TrafficVolume};
  LocationId location;
  Timestamp timestamp;
  double value{0.0};
  Meta meta;

  bool operator==(const TimeSeriesRecord&) const = default;
};

/// Canonical CSV line (no trailing newline); meta column only if non-empty.
std::string toCsvLine(const TimeSeriesRecord& r);
/// Parses a canonical CSV line; throws ParseError carrying a reason code.
TimeSeriesRecord recordFromCsvLine(std::string_view line);

std::string formatMeta(const Meta& meta);
Meta parseMeta(std::string_view text);

/// Value formatting that round-trips doubles exactly.
std::string formatNumber(double v);

class WeekKey {
 public:
  /// Throws InvalidArgument if `monday` is not a Monday.
  explicit WeekKey(Date monday);

  const Date& monday() const noexcept { return monday_; }
  WeekKey plusWeeks(int n) const;
  std::string toString() const { return formatDate(monday_); }

  auto operator<=>(const WeekKey&) const = default;

 private:
  Date monday_;
};

WeekKey weekKeyFor(Instant t, const TimeZone& zone);
WeekKey weekKeyForDate(const Date& d);
/// Parses `YYYY-MM-DD`; throws InvalidArgument if not a Monday.
WeekKey parseWeekKey(std::string_view text);

struct BoundingBox {
  double x{0}, y{0}, w{0}, h{0};

  bool operator==(const BoundingBox&) const = default;
};

bool isValid(const BoundingBox& b);

enum class ObjectClass { Person, Car, Truck, Bicycle, Bus };

inline constexpr std::array kAllObjectClasses = {
    ObjectClass::Person, ObjectClass::Car, ObjectClass::Truck,
    ObjectClass::Bicycle, ObjectClass::Bus};

std::string_view toString(ObjectClass c);
std::optional<ObjectClass> objectClassFromString(std::string_view token);

struct Detection {
  ObjectClass objectClass{ObjectClass::Person};
  double confidence{0.0};
  BoundingBox bbox;

  bool operator==(const Detection&) const = default;
};

struct DetectionFrame {
  LocationId camera;
  CityId city;
  Timestamp capturedAt;
  std::int64_t frameSeq{0};
  std::vector<Detection> detections;

  bool operator==(const DetectionFrame&) const = default;
};

/// Canonical NDJSON line for a frame (no trailing newline).
std::string toNdjsonLine(const DetectionFrame& f);

struct FrameParseResult {
  DetectionFrame frame;
  std::size_t droppedLowConfidence{0};
  std::size_t droppedUnknownClass{0};
};

/// Parses one NDJSON frame. Detections below `confidenceCutoff` or with a
/// class outside ObjectClass are dropped and counted, not rejected. Throws
/// ParseError with a reason-code prefix for malformed frames.
FrameParseResult frameFromNdjsonLine(std::string_view line, double confidenceCutoff = 0.0);

struct SeriesKey {
  CityId city;
  MetricKind metric{MetricKind::TrafficVolume};
  LocationId location;

  auto operator<=>(const SeriesKey& o) const {
    if (auto c = city <=> o.city; c != 0) return c;
    if (auto c = toString(metric) <=> toString(o.metric); c != 0) return c;
    return location <=> o.location;
  }
  bool operator==(const SeriesKey&) const = default;
};

inline SeriesKey keyOf(const TimeSeriesRecord& r) {
  return {r.city, r.metric, r.location};
}

}  // namespace citypulse
