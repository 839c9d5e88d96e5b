// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "citypulse/core/time.hpp"
#include "citypulse/core/types.hpp"
#include "citypulse/ingest/ingest.hpp"
#include "citypulse/sociability/geometry.hpp"

namespace citypulse {

struct ApiSettings {
  std::string listen{"127.0.0.1:8080"};
  /// Value for Access-Control-Allow-Origin; empty disables CORS headers.
  std::string corsOrigin;
  std::size_t defaultPageLimit{100};
  std::size_t maxPageLimit{1000};
};

/// Operator configuration, loaded from a YAML file:
///
///   warehouse: {path: ./data, retention: 400d, max_bytes: 1000000000}
///   cities: {nyc: America/New_York, seattle: America/Los_Angeles}
///   sociability: {threshold_m: 1.8288, height_m: 1.70, min_box_h: 8, confidence_cutoff: 0.5}
///   api: {listen: 127.0.0.1:8080, cors_origin: "http://localhost:5173"}
///   feeds:
///     - {id: sea_volume, city: seattle, metric: traffic_volume, format: csv,
///        cadence: 1h, valid_range: [0, 20000], unit: vehicles}
///
/// Relative warehouse paths resolve against the config file's directory.
struct Config {
  std::filesystem::path warehousePath{"data"};
  std::optional<std::chrono::milliseconds> retention;
  std::optional<std::uint64_t> maxBytes;
  std::map<CityId, TimeZone> cities;
  std::vector<ingest::FeedDescriptor> feeds;
  sociability::ProjectionParams projection;
  ApiSettings api;

  /// Throws ConfigError for unknown feeds.
  const ingest::FeedDescriptor& feed(const std::string& feedId) const;
  /// Throws InvalidArgument for unknown cities.
  const TimeZone& zone(const CityId& city) const;
  bool hasCity(const CityId& city) const { return cities.count(city) != 0; }
  /// Expected cadence of the feed delivering (city, metric), if configured.
  std::optional<std::chrono::milliseconds> cadenceFor(const CityId& city, MetricKind metric) const;
};

Config loadConfig(const std::filesystem::path& path);
Config parseConfig(const std::string& yamlText, const std::filesystem::path& baseDir);

}  // namespace citypulse
