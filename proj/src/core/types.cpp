// SPDX-License-Identifier: Apache-2.0
#include "citypulse/core/types.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "citypulse/core/errors.hpp"

namespace citypulse {

using namespace std::chrono;

CityId parseCityId(std::string_view text) {
  if (text.empty() || text.size() > 32) throw ParseError("bad_city: " + std::string(text));
  for (char c : text) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
    if (!ok) throw ParseError("bad_city: " + std::string(text));
  }
  return CityId{std::string(text)};
}

LocationId parseLocationId(std::string_view text) {
  if (text.empty() || text.size() > 128) throw ParseError("bad_location: " + std::string(text));
  for (char c : text) {
    if (c == ',' || c == '\t' || c == '\n' || c == '\r' || c == '"' || c == '/' || c == '\\') {
      throw ParseError("bad_location: " + std::string(text));
    }
  }
  return LocationId{std::string(text)};
}

namespace {

constexpr std::array<std::pair<MetricKind, std::string_view>, 12> kMetricNames{{
    {MetricKind::TrafficVolume, "traffic_volume"},
    {MetricKind::TravelTime, "travel_time"},
    {MetricKind::TransitRidership, "transit_ridership"},
    {MetricKind::BikeCount, "bike_count"},
    {MetricKind::PedCount, "ped_count"},
    {MetricKind::CrashCount, "crash_count"},
    {MetricKind::FatalityCount, "fatality_count"},
    {MetricKind::SpeedingTicketCount, "speeding_ticket_count"},
    {MetricKind::TruckGvw, "truck_gvw"},
    {MetricKind::ParkingOccupancy, "parking_occupancy"},
    {MetricKind::ComplaintCount, "complaint_count"},
    {MetricKind::Speed, "speed"},
}};

constexpr std::array<std::pair<ObjectClass, std::string_view>, 5> kClassNames{{
    {ObjectClass::Person, "person"},
    {ObjectClass::Car, "car"},
    {ObjectClass::Truck, "truck"},
    {ObjectClass::Bicycle, "bicycle"},
    {ObjectClass::Bus, "bus"},
}};

}  // namespace

std::string_view toString(MetricKind kind) {
  for (auto& [k, name] : kMetricNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<MetricKind> metricKindFromString(std::string_view token) {
  for (auto& [k, name] : kMetricNames) {
    if (name == token) return k;
  }
  return std::nullopt;
}

MetricKind parseMetricKind(std::string_view token) {
  if (auto k = metricKindFromString(token)) return *k;
  throw ParseError("unknown_metric: " + std::string(token));
}

std::string_view canonicalUnit(MetricKind kind) {
  switch (kind) {
    case MetricKind::TravelTime: return "minutes";
    case MetricKind::Speed: return "mph";
    case MetricKind::TruckGvw: return "kips";
    default: return "count";
  }
}

bool isCountLike(MetricKind kind) {
  return kind != MetricKind::TravelTime && kind != MetricKind::Speed &&
         kind != MetricKind::TruckGvw;
}

bool valueInDomain(MetricKind kind, double value) {
  if (!std::isfinite(value)) return false;
  if (kind == MetricKind::TravelTime) return value > 0;
  return value >= 0;
}

std::string formatNumber(double v) {
  char buf[32];
  // Shortest representation that round-trips.
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string formatMeta(const Meta& meta) {
  std::string out;
  for (auto& [k, v] : meta) {
    if (!out.empty()) out += ';';
    out += k;
    out += '=';
    out += v;
  }
  return out;
}

Meta parseMeta(std::string_view text) {
  Meta meta;
  while (!text.empty()) {
    auto semi = text.find(';');
    auto item = text.substr(0, semi);
    auto eq = item.find('=');
    if (eq == std::string_view::npos || eq == 0) throw ParseError("bad_meta: " + std::string(item));
    auto key = item.substr(0, eq);
    auto val = item.substr(eq + 1);
    if (val.find('=') != std::string_view::npos) throw ParseError("bad_meta: " + std::string(item));
    meta[std::string(key)] = std::string(val);
    if (semi == std::string_view::npos) break;
    text.remove_prefix(semi + 1);
  }
  return meta;
}

std::string toCsvLine(const TimeSeriesRecord& r) {
  std::string out = r.city.str();
  out += ',';
  out += toString(r.metric);
  out += ',';
  out += r.location.str();
  out += ',';
  out += formatRfc3339(r.timestamp);
  out += ',';
  out += formatNumber(r.value);
  if (!r.meta.empty()) {
    out += ',';
    out += formatMeta(r.meta);
  }
  return out;
}

namespace {

std::vector<std::string_view> splitCsv(std::string_view line) {
  std::vector<std::string_view> fields;
  size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

double parseValue(std::string_view text) {
  if (text.empty()) throw ParseError("bad_value: empty");
  // from_chars rejects "nan"/"inf" spellings in some forms; catch them here.
  std::string lower;
  for (char c : text) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "nan" || lower == "+nan" || lower == "-nan" || lower == "inf" ||
      lower == "+inf" || lower == "-inf" || lower == "infinity" || lower == "-infinity") {
    throw ParseError("non_finite_value: " + std::string(text));
  }
  double v = 0;
  const char* first = text.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, text.data() + text.size(), v);
  if (ec == std::errc::result_out_of_range) throw ParseError("non_finite_value: " + std::string(text));
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ParseError("bad_value: " + std::string(text));
  }
  if (!std::isfinite(v)) throw ParseError("non_finite_value: " + std::string(text));
  return v;
}

}  // namespace

TimeSeriesRecord recordFromCsvLine(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  auto f = splitCsv(line);
  if (f.size() != 5 && f.size() != 6) throw ParseError("field_count: " + std::to_string(f.size()));
  TimeSeriesRecord r;
  r.city = parseCityId(f[0]);
  r.metric = parseMetricKind(f[1]);
  r.location = parseLocationId(f[2]);
  r.timestamp = parseRfc3339(f[3]);
  r.value = parseValue(f[4]);
  if (!valueInDomain(r.metric, r.value)) {
    throw ParseError("out_of_domain: " + std::string(f[4]));
  }
  if (f.size() == 6) r.meta = parseMeta(f[5]);
  return r;
}

// ---------------------------------------------------------------------------

WeekKey::WeekKey(Date monday) : monday_(monday) {
  if (!monday.ok() || weekday{sys_days{monday}} != Monday) {
    throw InvalidArgument("week key must be a Monday: " + formatDate(monday));
  }
}

WeekKey WeekKey::plusWeeks(int n) const {
  return WeekKey(Date{sys_days{monday_} + days{7 * n}});
}

WeekKey weekKeyForDate(const Date& d) {
  sys_days sd{d};
  weekday wd{sd};
  return WeekKey(Date{sd - days{wd.iso_encoding() - 1}});
}

WeekKey weekKeyFor(Instant t, const TimeZone& zone) {
  auto local = zone.toLocal(t);
  auto ld = floor<days>(local);
  return weekKeyForDate(Date{sys_days{ld.time_since_epoch()}});
}

WeekKey parseWeekKey(std::string_view text) {
  Date d;
  try {
    d = parseDate(text);
  } catch (const ParseError& e) {
    throw InvalidArgument(e.what());
  }
  return WeekKey(d);
}

bool isValid(const BoundingBox& b) {
  return std::isfinite(b.x) && std::isfinite(b.y) && std::isfinite(b.w) && std::isfinite(b.h) &&
         b.w > 0 && b.h > 0 && b.x >= 0 && b.y >= 0;
}

std::string_view toString(ObjectClass c) {
  for (auto& [k, name] : kClassNames) {
    if (k == c) return name;
  }
  return "unknown";
}

std::optional<ObjectClass> objectClassFromString(std::string_view token) {
  for (auto& [k, name] : kClassNames) {
    if (name == token) return k;
  }
  return std::nullopt;
}

std::string toNdjsonLine(const DetectionFrame& f) {
  nlohmann::ordered_json j;
  j["camera"] = f.camera.str();
  j["city"] = f.city.str();
  j["ts"] = formatRfc3339(f.capturedAt);
  j["seq"] = f.frameSeq;
  auto dets = nlohmann::ordered_json::array();
  for (const auto& d : f.detections) {
    nlohmann::ordered_json dj;
    dj["class"] = std::string(toString(d.objectClass));
    dj["conf"] = d.confidence;
    dj["bbox"] = {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h};
    dets.push_back(std::move(dj));
  }
  j["detections"] = std::move(dets);
  return j.dump();
}

FrameParseResult frameFromNdjsonLine(std::string_view line, double confidenceCutoff) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error&) {
    throw ParseError("bad_json");
  }
  if (!j.is_object()) throw ParseError("bad_json: not an object");
  for (const char* field : {"camera", "city", "ts", "seq", "detections"}) {
    if (!j.contains(field)) throw ParseError(std::string("missing_field: ") + field);
  }
  if (!j["camera"].is_string() || !j["city"].is_string() || !j["ts"].is_string()) {
    throw ParseError("bad_field_type");
  }
  if (!j["seq"].is_number_integer()) throw ParseError("bad_seq");
  if (!j["detections"].is_array()) throw ParseError("bad_field_type: detections");

  FrameParseResult out;
  auto& f = out.frame;
  f.camera = parseLocationId(j["camera"].get<std::string>());
  f.city = parseCityId(j["city"].get<std::string>());
  f.capturedAt = parseRfc3339(j["ts"].get<std::string>());
  f.frameSeq = j["seq"].get<std::int64_t>();
  if (f.frameSeq < 0) throw ParseError("bad_seq: negative");

  for (const auto& d : j["detections"]) {
    if (!d.is_object() || !d.contains("class") || !d.contains("conf") || !d.contains("bbox")) {
      throw ParseError("bad_detection");
    }
    if (!d["class"].is_string() || !d["conf"].is_number()) throw ParseError("bad_detection");
    double conf = d["conf"].get<double>();
    if (!std::isfinite(conf) || conf < 0.0 || conf > 1.0) throw ParseError("bad_confidence");
    const auto& bb = d["bbox"];
    if (!bb.is_array() || bb.size() != 4) throw ParseError("bad_bbox");
    for (const auto& v : bb) {
      if (!v.is_number()) throw ParseError("bad_bbox");
    }
    BoundingBox box{bb[0].get<double>(), bb[1].get<double>(), bb[2].get<double>(),
                    bb[3].get<double>()};
    if (!isValid(box)) throw ParseError("bad_bbox");
    auto cls = objectClassFromString(d["class"].get<std::string>());
    if (!cls) {
      ++out.droppedUnknownClass;
      continue;
    }
    if (conf < confidenceCutoff) {
      ++out.droppedLowConfidence;
      continue;
    }
    f.detections.push_back({*cls, conf, box});
  }
  return out;
}

}  // namespace citypulse
