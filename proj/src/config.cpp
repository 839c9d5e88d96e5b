// SPDX-License-Identifier: Apache-2.0
#include "citypulse/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <iterator>

#include "citypulse/core/errors.hpp"

namespace citypulse {

namespace {

template <class T>
T scalar(const YAML::Node& node, const std::string& what) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception& e) {
    throw ConfigError("invalid value for " + what + ": " + e.what());
  }
}

std::chrono::milliseconds duration(const YAML::Node& node, const std::string& what) {
  try {
    return parseDuration(scalar<std::string>(node, what));
  } catch (const ParseError& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

ingest::FeedDescriptor parseFeed(const YAML::Node& n) {
  ingest::FeedDescriptor f;
  if (!n.IsMap()) throw ConfigError("each feed must be a mapping");
  if (!n["id"] || !n["city"] || !n["metric"]) throw ConfigError("feed needs id, city and metric");
  f.feedId = scalar<std::string>(n["id"], "feed id");
  const std::string ctx = "feed " + f.feedId;
  try {
    f.city = parseCityId(scalar<std::string>(n["city"], ctx + " city"));
  } catch (const ParseError& e) {
    throw ConfigError(ctx + ": " + e.what());
  }
  auto metric = scalar<std::string>(n["metric"], ctx + " metric");
  if (metric == "detection_frames") {
    f.format = ingest::FeedFormat::Ndjson;
    f.expectedCadence = std::chrono::seconds{30};
    f.validMin = 0;
    f.validMax = 1000;
    f.unitLabel = "detections";
  } else {
    auto kind = metricKindFromString(metric);
    if (!kind) throw ConfigError(ctx + ": unknown metric '" + metric + "'");
    f.metric = *kind;
    f.unitLabel = std::string(canonicalUnit(*kind));
  }
  if (n["format"]) f.format = ingest::parseFeedFormat(scalar<std::string>(n["format"], ctx + " format"));
  if (n["cadence"]) f.expectedCadence = duration(n["cadence"], ctx + " cadence");
  if (auto r = n["valid_range"]) {
    if (!r.IsSequence() || r.size() != 2) throw ConfigError(ctx + ": valid_range needs [min, max]");
    f.validMin = scalar<double>(r[0], ctx + " valid_range");
    f.validMax = scalar<double>(r[1], ctx + " valid_range");
  }
  if (n["unit"]) f.unitLabel = scalar<std::string>(n["unit"], ctx + " unit");
  if (n["schema_version"]) f.schemaVersion = scalar<int>(n["schema_version"], ctx + " schema_version");
  if (n["staleness"]) f.stalenessHorizon = duration(n["staleness"], ctx + " staleness");
  if (n["confidence_cutoff"]) {
    f.confidenceCutoff = scalar<double>(n["confidence_cutoff"], ctx + " confidence_cutoff");
  }
  if (auto t = n["thresholds"]) {
    if (t["accuracy"]) f.thresholds.accuracy = scalar<double>(t["accuracy"], ctx + " thresholds");
    if (t["timeliness"]) f.thresholds.timeliness = scalar<double>(t["timeliness"], ctx + " thresholds");
    if (t["validity"]) f.thresholds.validity = scalar<double>(t["validity"], ctx + " thresholds");
    if (t["granularity"]) {
      f.thresholds.granularity = scalar<double>(t["granularity"], ctx + " thresholds");
    }
  }
  f.validate();
  return f;
}

}  // namespace

const ingest::FeedDescriptor& Config::feed(const std::string& feedId) const {
  for (const auto& f : feeds) {
    if (f.feedId == feedId) return f;
  }
  throw ConfigError("unknown feed: " + feedId);
}

const TimeZone& Config::zone(const CityId& city) const {
  auto it = cities.find(city);
  if (it == cities.end()) throw InvalidArgument("unknown city: " + city.str());
  return it->second;
}

std::optional<std::chrono::milliseconds> Config::cadenceFor(const CityId& city,
                                                            MetricKind metric) const {
  for (const auto& f : feeds) {
    if (f.city == city && f.metric == metric) return f.expectedCadence;
  }
  return std::nullopt;
}

Config parseConfig(const std::string& yamlText, const std::filesystem::path& baseDir) {
  YAML::Node root;
  try {
    root = YAML::Load(yamlText);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  if (!root.IsMap()) throw ConfigError("config must be a YAML mapping");

  Config cfg;
  if (auto w = root["warehouse"]) {
    if (w["path"]) cfg.warehousePath = scalar<std::string>(w["path"], "warehouse.path");
    if (w["retention"]) cfg.retention = duration(w["retention"], "warehouse.retention");
    if (w["max_bytes"]) cfg.maxBytes = scalar<std::uint64_t>(w["max_bytes"], "warehouse.max_bytes");
  }
  if (cfg.warehousePath.is_relative()) cfg.warehousePath = baseDir / cfg.warehousePath;

  if (auto c = root["cities"]) {
    if (!c.IsMap()) throw ConfigError("cities must map city id to time zone");
    for (const auto& kv : c) {
      CityId id;
      try {
        id = parseCityId(scalar<std::string>(kv.first, "city id"));
      } catch (const ParseError& e) {
        throw ConfigError(e.what());
      }
      cfg.cities.emplace(id, TimeZone::fromName(scalar<std::string>(kv.second, "city time zone")));
    }
  }

  if (auto s = root["sociability"]) {
    auto& p = cfg.projection;
    if (s["threshold_m"]) p.distanceThresholdMeters = scalar<double>(s["threshold_m"], "threshold_m");
    if (s["height_m"]) p.assumedHeightMeters = scalar<double>(s["height_m"], "height_m");
    if (s["min_box_h"]) p.minBoxHeightPx = scalar<double>(s["min_box_h"], "min_box_h");
    if (s["confidence_cutoff"]) {
      p.confidenceCutoff = scalar<double>(s["confidence_cutoff"], "confidence_cutoff");
    }
    try {
      p.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("sociability: ") + e.what());
    }
  }

  if (auto a = root["api"]) {
    if (a["listen"]) cfg.api.listen = scalar<std::string>(a["listen"], "api.listen");
    if (a["cors_origin"]) cfg.api.corsOrigin = scalar<std::string>(a["cors_origin"], "api.cors_origin");
    if (a["page_limit"]) cfg.api.defaultPageLimit = scalar<std::size_t>(a["page_limit"], "api.page_limit");
    if (a["max_page_limit"]) {
      cfg.api.maxPageLimit = scalar<std::size_t>(a["max_page_limit"], "api.max_page_limit");
    }
  }

  if (auto feeds = root["feeds"]) {
    if (!feeds.IsSequence()) throw ConfigError("feeds must be a list");
    for (const auto& n : feeds) {
      auto f = parseFeed(n);
      if (!cfg.hasCity(f.city)) throw ConfigError("feed " + f.feedId + " uses unconfigured city " + f.city.str());
      for (const auto& other : cfg.feeds) {
        if (other.feedId == f.feedId) throw ConfigError("duplicate feed id " + f.feedId);
      }
      cfg.feeds.push_back(std::move(f));
    }
  }
  return cfg;
}

Config loadConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  return parseConfig(text, base);
}

}  // namespace citypulse
