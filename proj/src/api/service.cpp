// SPDX-License-Identifier: Apache-2.0
#include "citypulse/api/service.hpp"

#include <algorithm>
#include <charconv>

#include "citypulse/core/errors.hpp"
#include "citypulse/mobility/metrics.hpp"
#include "citypulse/serialize.hpp"
#include "citypulse/sociability/geometry.hpp"

namespace citypulse::api {

using nlohmann::json;
using namespace std::chrono;
namespace ser = citypulse::serialize;

std::string_view toString(ErrorCode c) {
  switch (c) {
    case ErrorCode::BadRequest: return "bad_request";
    case ErrorCode::NotFound: return "not_found";
    case ErrorCode::NoData: return "no_data";
    case ErrorCode::Internal: return "internal";
  }
  return "internal";
}

int httpStatus(ErrorCode c) {
  switch (c) {
    case ErrorCode::BadRequest: return 400;
    case ErrorCode::NotFound: return 404;
    case ErrorCode::NoData: return 404;
    case ErrorCode::Internal: return 500;
  }
  return 500;
}

std::pair<std::string, int> parseListen(std::string_view listen) {
  auto colon = listen.rfind(':');
  if (colon == std::string_view::npos) throw InvalidArgument("listen address must be host:port");
  int port = 0;
  auto ps = listen.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(ps.data(), ps.data() + ps.size(), port);
  if (ec != std::errc{} || ptr != ps.data() + ps.size() || port < 0 || port > 65535) {
    throw InvalidArgument("bad port in listen address: " + std::string(listen));
  }
  return {std::string(listen.substr(0, colon)), port};
}

namespace {

[[noreturn]] void badRequest(const std::string& msg) { throw ApiError(ErrorCode::BadRequest, msg); }

const std::string& required(const QueryParams& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end() || it->second.empty()) {
    throw ApiError(ErrorCode::BadRequest, "missing parameter '" + name + "'", {{"parameter", name}});
  }
  return it->second;
}

std::optional<std::string> optionalParam(const QueryParams& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

std::vector<std::string> splitList(std::string_view s) {
  std::vector<std::string> out;
  while (!s.empty()) {
    auto comma = s.find(',');
    auto item = s.substr(0, comma);
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

double numberParam(const QueryParams& p, const std::string& name, double fallback) {
  auto v = optionalParam(p, name);
  if (!v) return fallback;
  double out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc{} || ptr != v->data() + v->size()) badRequest("parameter '" + name + "' must be a number");
  return out;
}

int intParam(const QueryParams& p, const std::string& name, int fallback) {
  auto v = optionalParam(p, name);
  if (!v) return fallback;
  int out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc{} || ptr != v->data() + v->size()) badRequest("parameter '" + name + "' must be an integer");
  return out;
}

Instant instantParam(const std::string& text, const TimeZone& zone, const std::string& name) {
  try {
    if (text.size() == 10) return zone.startOfDay(parseDate(text));
    return parseRfc3339(text).utc;
  } catch (const ParseError& e) {
    badRequest("parameter '" + name + "': " + e.what());
  }
}

struct CityContext {
  CityId city;
  const TimeZone* zone;
};

CityContext cityParam(const Config& cfg, const QueryParams& p) {
  const auto& text = required(p, "city");
  CityId city{text};
  if (!cfg.hasCity(city)) throw ApiError(ErrorCode::NotFound, "unknown city '" + text + "'");
  return {city, &cfg.zone(city)};
}

mobility::TimeWindow windowParams(const QueryParams& p, const TimeZone& zone,
                                  const std::string& fromName = "from",
                                  const std::string& toName = "to") {
  mobility::TimeWindow w{instantParam(required(p, fromName), zone, fromName),
                         instantParam(required(p, toName), zone, toName)};
  if (!(w.from < w.to)) badRequest("'" + fromName + "' must precede '" + toName + "'");
  return w;
}

MetricKind metricParam(const QueryParams& p, const std::string& fallback = "") {
  auto v = optionalParam(p, "metric");
  std::string token = v ? *v : fallback;
  if (token.empty()) required(p, "metric");
  auto kind = metricKindFromString(token);
  if (!kind) badRequest("unknown metric '" + token + "'");
  return *kind;
}

LocationId locationParam(const QueryParams& p, const std::string& name) {
  try {
    return parseLocationId(required(p, name));
  } catch (const ParseError& e) {
    badRequest(e.what());
  }
}

/// Frames in a window, sorted by (capturedAt, frameSeq).
struct FrameCursor {
  std::int64_t ms{0};
  std::int64_t seq{0};
  std::size_t skip{0};
};

std::optional<FrameCursor> parseCursor(const std::optional<std::string>& text) {
  if (!text) return std::nullopt;
  FrameCursor c;
  if (std::sscanf(text->c_str(), "%ld.%ld.%zu", &c.ms, &c.seq, &c.skip) != 3) {
    badRequest("malformed cursor");
  }
  return c;
}

}  // namespace

ApiService::ApiService(Warehouse& warehouse, const Config& config)
    : warehouse_(warehouse), config_(config) {}

std::size_t ApiService::cacheSize() const {
  std::lock_guard lock(cacheMutex_);
  return cache_.size();
}

Response ApiService::handle(std::string_view path, const QueryParams& params) {
  try {
    warehouse_.refresh();
  } catch (const std::exception&) {
    // Serve the last consistent snapshot.
  }
  const auto hw = warehouse_.highWaterMark();
  std::string key(path);
  key += '?';
  for (const auto& [k, v] : params) key += k + '=' + v + '&';
  {
    std::lock_guard lock(cacheMutex_);
    if (hw != cacheHighWater_) {
      cache_.clear();
      cacheHighWater_ = hw;
    }
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }

  Response resp;
  try {
    resp.body = route(path, params).dump();
  } catch (const ApiError& e) {
    json body = {{"code", std::string(toString(e.code()))}, {"message", e.what()}};
    if (!e.details().is_null()) body["details"] = e.details();
    resp = {httpStatus(e.code()), body.dump()};
  } catch (const InvalidArgument& e) {
    resp = {400, json{{"code", "bad_request"}, {"message", e.what()}}.dump()};
  } catch (const ParseError& e) {
    resp = {400, json{{"code", "bad_request"}, {"message", e.what()}}.dump()};
  } catch (const InsufficientData& e) {
    resp = {404, json{{"code", "no_data"}, {"message", e.what()}}.dump()};
  } catch (const EmptyWindow& e) {
    resp = {404, json{{"code", "no_data"}, {"message", e.what()}}.dump()};
  } catch (const std::exception& e) {
    return {500, json{{"code", "internal"}, {"message", e.what()}}.dump()};
  }

  std::lock_guard lock(cacheMutex_);
  if (hw == cacheHighWater_) {
    if (cache_.size() >= 4096) cache_.clear();
    cache_[key] = resp;
  }
  return resp;
}

json ApiService::route(std::string_view path, const QueryParams& p) {
  if (path == "/healthz") {
    return {{"status", "ok"}, {"warehouseHighWater", warehouse_.highWaterMark()}};
  }

  if (path == "/v1/cities") {
    json cities = json::array();
    auto filter = optionalParam(p, "city");
    for (const auto& [city, zone] : config_.cities) {
      if (filter && city.str() != *filter) continue;
      std::map<std::string, json> metrics;
      for (const auto& s : warehouse_.listSeries(city)) {
        auto name = std::string(toString(s.key.metric));
        auto& m = metrics[name];
        if (m.is_null()) {
          m = {{"metric", name}, {"unit", std::string(canonicalUnit(s.key.metric))},
               {"locations", json::array()}};
        }
        m["locations"].push_back({{"location", s.key.location.str()},
                                  {"count", s.count},
                                  {"from", ser::timestamp(s.first, zone)},
                                  {"to", ser::timestamp(s.last, zone)}});
      }
      json metricList = json::array();
      for (auto& [name, m] : metrics) metricList.push_back(std::move(m));
      json cameras = json::array();
      for (const auto& c : warehouse_.listCameras(city)) {
        cameras.push_back({{"camera", c.camera.str()},
                           {"count", c.count},
                           {"from", ser::timestamp(c.first, zone)},
                           {"to", ser::timestamp(c.last, zone)}});
      }
      cities.push_back({{"city", city.str()},
                        {"timezone", zone.name()},
                        {"metrics", metricList},
                        {"cameras", cameras}});
    }
    return {{"cities", cities}};
  }

  if (path == "/v1/metrics/weekly") {
    auto ctx = cityParam(config_, p);
    auto metric = metricParam(p);
    auto location = locationParam(p, "location");
    std::vector<WeekKey> weeks;
    try {
      for (const auto& w : splitList(required(p, "weeks"))) weeks.push_back(parseWeekKey(w));
    } catch (const InvalidArgument& e) {
      badRequest(std::string("malformed week list: ") + e.what());
    }
    if (weeks.empty()) badRequest("malformed week list: empty");
    auto baseline = mobility::BaselineSpec::parse(optionalParam(p, "baseline").value_or("prior_year"));
    mobility::WeeklyOptions opts;
    opts.agg = optionalParam(p, "agg") ? mobility::parseAggregation(*optionalParam(p, "agg"))
                                       : mobility::defaultAggregation(metric);
    opts.cadence = config_.cadenceFor(ctx.city, metric);
    mobility::MobilityMetrics mm(warehouse_, *ctx.zone);
    json rows = json::array();
    for (const auto& d : mm.weeklyDelta({ctx.city, metric, location}, weeks, baseline, opts)) {
      rows.push_back(ser::toJson(d));
    }
    return {{"city", ctx.city.str()},      {"metric", std::string(toString(metric))},
            {"location", location.str()},  {"baseline", baseline.toString()},
            {"agg", std::string(mobility::toString(opts.agg))}, {"weeks", rows}};
  }

  if (path == "/v1/metrics/profile") {
    auto ctx = cityParam(config_, p);
    auto metric = metricParam(p);
    auto location = locationParam(p, "location");
    Date day;
    try {
      day = parseDate(required(p, "day"));
    } catch (const ParseError& e) {
      badRequest(e.what());
    }
    mobility::MobilityMetrics mm(warehouse_, *ctx.zone);
    json body = ser::toJson(mm.hourlyProfile({ctx.city, metric, location}, day));
    body["city"] = ctx.city.str();
    body["metric"] = std::string(toString(metric));
    body["location"] = location.str();
    return body;
  }

  if (path == "/v1/metrics/reliability") {
    auto ctx = cityParam(config_, p);
    auto metric = metricParam(p, "travel_time");
    auto location = locationParam(p, "location");
    auto w = windowParams(p, *ctx.zone);
    int start = intParam(p, "dayStart", 7);
    int end = intParam(p, "dayEnd", 19);
    if (start < 0 || end > 24 || start >= end) badRequest("daytime window must satisfy 0 <= dayStart < dayEnd <= 24");
    mobility::MobilityMetrics mm(warehouse_, *ctx.zone);
    json body = ser::toJson(mm.reliability({ctx.city, metric, location}, w, start, end), *ctx.zone);
    body["city"] = ctx.city.str();
    body["metric"] = std::string(toString(metric));
    body["location"] = location.str();
    return body;
  }

  if (path == "/v1/metrics/speeding") {
    auto ctx = cityParam(config_, p);
    auto w = windowParams(p, *ctx.zone);
    double limit = numberParam(p, "limit", 25.0);
    std::vector<LocationId> segments;
    if (auto s = optionalParam(p, "segments")) {
      for (const auto& id : splitList(*s)) segments.emplace_back(id);
    }
    mobility::MobilityMetrics mm(warehouse_, *ctx.zone);
    json body = ser::toJson(mm.speedingShare(ctx.city, w, limit, segments));
    body["city"] = ctx.city.str();
    body["window"] = ser::window(w.from, w.to, *ctx.zone);
    return body;
  }

  if (path == "/v1/metrics/fatality-rate") {
    auto ctx = cityParam(config_, p);
    auto w = windowParams(p, *ctx.zone);
    mobility::MobilityMetrics mm(warehouse_, *ctx.zone);
    json body = ser::toJson(mm.fatalityRate(ctx.city, w));
    body["city"] = ctx.city.str();
    body["window"] = ser::window(w.from, w.to, *ctx.zone);
    return body;
  }

  if (path == "/v1/metrics/gvw") {
    auto ctx = cityParam(config_, p);
    auto location = locationParam(p, "location");
    auto w = windowParams(p, *ctx.zone);
    std::vector<double> edges = mobility::defaultGvwEdges();
    if (auto b = optionalParam(p, "bins")) {
      edges.clear();
      for (const auto& e : splitList(*b)) {
        double v = 0;
        auto [ptr, ec] = std::from_chars(e.data(), e.data() + e.size(), v);
        if (ec != std::errc{} || ptr != e.data() + e.size()) badRequest("bins must be numbers");
        edges.push_back(v);
      }
    }
    SeriesKey key{ctx.city, MetricKind::TruckGvw, location};
    mobility::MobilityMetrics mm(warehouse_, *ctx.zone);
    auto hist = mm.gvwBins(key, w, edges);
    json body = ser::toJson(hist);
    body["city"] = ctx.city.str();
    body["location"] = location.str();
    body["window"] = ser::window(w.from, w.to, *ctx.zone);
    if (optionalParam(p, "baselineFrom") || optionalParam(p, "baselineTo")) {
      auto bw = windowParams(p, *ctx.zone, "baselineFrom", "baselineTo");
      auto base = mm.gvwBins(key, bw, edges);
      body["baselineWindow"] = ser::window(bw.from, bw.to, *ctx.zone);
      body["deltas"] = ser::toJson(mobility::gvwBinDeltas(hist, base));
    }
    return body;
  }

  if (path == "/v1/sociability/summary" || path == "/v1/sociability/frames") {
    auto ctx = cityParam(config_, p);
    auto camera = locationParam(p, "camera");
    auto w = windowParams(p, *ctx.zone);
    auto frames = warehouse_.queryFrames(ctx.city, camera, w.from, w.to);
    const auto& params = config_.projection;

    if (path == "/v1/sociability/summary") {
      std::vector<sociability::FrameResult> results;
      results.reserve(frames.size());
      for (const auto& f : frames) results.push_back(sociability::analyzeFrame(f, params));
      json body = ser::toJson(sociability::summarize(results, w.from, w.to), *ctx.zone);
      body["city"] = ctx.city.str();
      body["camera"] = camera.str();
      body["params"] = ser::toJson(params);
      return body;
    }

    int limitArg = intParam(p, "limit", static_cast<int>(config_.api.defaultPageLimit));
    if (limitArg <= 0) badRequest("limit must be positive");
    auto limit = std::min<std::size_t>(static_cast<std::size_t>(limitArg), config_.api.maxPageLimit);
    auto cursor = parseCursor(optionalParam(p, "cursor"));

    auto keyOf = [](const DetectionFrame& f) {
      return std::pair{f.capturedAt.utc.time_since_epoch().count(), f.frameSeq};
    };
    std::size_t start = 0;
    if (cursor) {
      std::pair<std::int64_t, std::int64_t> ck{cursor->ms, cursor->seq};
      start = static_cast<std::size_t>(
          std::lower_bound(frames.begin(), frames.end(), ck,
                           [&](const DetectionFrame& f, const auto& k) { return keyOf(f) < k; }) -
          frames.begin());
      for (std::size_t skipped = 0;
           skipped < cursor->skip && start < frames.size() && keyOf(frames[start]) == ck; ++skipped) {
        ++start;
      }
    }
    auto end = std::min(frames.size(), start + limit);
    json items = json::array();
    for (auto i = start; i < end; ++i) {
      items.push_back(ser::toJson(sociability::analyzeFrame(frames[i], params), *ctx.zone));
    }
    json next = nullptr;
    if (end < frames.size() && end > start) {
      auto last = keyOf(frames[end - 1]);
      std::size_t same = 0;
      for (auto i = end; i-- > 0 && keyOf(frames[i]) == last;) ++same;
      next = std::to_string(last.first) + "." + std::to_string(last.second) + "." +
             std::to_string(same);
    }
    return {{"city", ctx.city.str()}, {"camera", camera.str()}, {"frames", items},
            {"nextCursor", next}};
  }

  if (path == "/v1/compare") {
    static const std::map<std::string, std::pair<std::string, std::vector<std::string>>> kViews{
        {"reliability", {"/v1/metrics/reliability", {"stdDev", "mean"}}},
        {"fatality-rate", {"/v1/metrics/fatality-rate", {"ratePer1000", "crashes", "fatalities"}}},
        {"speeding", {"/v1/metrics/speeding", {"share"}}},
        {"gvw", {"/v1/metrics/gvw", {"total"}}},
        {"sociability", {"/v1/sociability/summary",
                         {"avgPedsDensity", "maxPedsDensity", "complianceRate"}}},
        {"series", {"series", {"mean", "sum", "n"}}},
    };
    const auto& view = required(p, "view");
    auto it = kViews.find(view);
    if (it == kViews.end()) badRequest("unknown compare view '" + view + "'");

    auto side = [&](const std::string& fromName, const std::string& toName) -> json {
      QueryParams q = p;
      q["from"] = required(p, fromName);
      q["to"] = required(p, toName);
      try {
        if (it->second.first == "series") {
          auto ctx = cityParam(config_, q);
          auto metric = metricParam(q);
          auto location = locationParam(q, "location");
          auto w = windowParams(q, *ctx.zone);
          auto recs = warehouse_.query({ctx.city, metric, location}, w.from, w.to);
          return {{"window", ser::window(w.from, w.to, *ctx.zone)},
                  {"n", recs.size()},
                  {"sum", ser::optionalNumber(mobility::aggregate(recs, mobility::Aggregation::Sum))},
                  {"mean", ser::optionalNumber(mobility::aggregate(recs, mobility::Aggregation::Mean))}};
        }
        return route(it->second.first, q);
      } catch (const ApiError& e) {
        if (e.code() != ErrorCode::NoData) throw;
        return {{"error", {{"code", "no_data"}, {"message", e.what()}}}};
      } catch (const InsufficientData& e) {
        return {{"error", {{"code", "no_data"}, {"message", e.what()}}}};
      } catch (const EmptyWindow& e) {
        return {{"error", {{"code", "no_data"}, {"message", e.what()}}}};
      }
    };
    json left = side("leftFrom", "leftTo");
    json right = side("rightFrom", "rightTo");
    json deltas = json::object();
    for (const auto& field : it->second.second) {
      if (!left.contains(field) || !right.contains(field)) continue;
      const auto& l = left[field];
      const auto& r = right[field];
      if (!l.is_number() || !r.is_number()) continue;
      double lv = l.get<double>();
      double rv = r.get<double>();
      deltas[field] = {{"absolute", rv - lv},
                       {"pctChange", lv != 0.0 ? json(100.0 * (rv - lv) / lv) : json(nullptr)}};
    }
    return {{"view", view}, {"left", left}, {"right", right}, {"deltas", deltas}};
  }

  throw ApiError(ErrorCode::NotFound, "no route for " + std::string(path));
}

}  // namespace citypulse::api
