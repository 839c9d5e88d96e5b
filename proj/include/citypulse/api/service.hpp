// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>

#include <json.hpp>

#include "citypulse/config.hpp"
#include "citypulse/warehouse/warehouse.hpp"

namespace citypulse::api {

using QueryParams = std::map<std::string, std::string>;

struct Response {
  int status{200};
  std::string body;
};

enum class ErrorCode { BadRequest, NotFound, NoData, Internal };

std::string_view toString(ErrorCode c);
int httpStatus(ErrorCode c);

/// Thrown by handlers; rendered as `{"code", "message", "details"?}`.
class ApiError : public std::runtime_error {
 public:
  ApiError(ErrorCode code, const std::string& message, nlohmann::json details = nullptr)
      : std::runtime_error(message), code_(code), details_(std::move(details)) {}

  ErrorCode code() const noexcept { return code_; }
  const nlohmann::json& details() const noexcept { return details_; }

 private:
  ErrorCode code_;
  nlohmann::json details_;
};

/// Read-only HTTP surface over the warehouse and the metric operations.
///
/// Routes (all GET, JSON bodies):
///   /healthz
///   /v1/cities                      unknown `city` filter -> 200, empty list
///   /v1/metrics/weekly              unknown city -> 404 not_found
///   /v1/metrics/profile
///   /v1/metrics/reliability         < 2 daytime samples -> 404 no_data
///   /v1/metrics/speeding
///   /v1/metrics/fatality-rate       zero crashes -> 200, ratePer1000 null
///   /v1/metrics/gvw
///   /v1/sociability/summary         no frames -> 404 no_data
///   /v1/sociability/frames          keyset-paginated via `cursor`
///   /v1/compare                     `view` selects the paired payload
/// Malformed parameters yield 400 bad_request. Range parameters accept
/// RFC 3339 instants or `YYYY-MM-DD` (local midnight of the city).
class ApiService {
 public:
  ApiService(Warehouse& warehouse, const Config& config);

  /// Dispatches one request. Responses are memoized per (path, params) and
  /// invalidated when the warehouse high-water mark moves.
  Response handle(std::string_view path, const QueryParams& params);

  std::size_t cacheSize() const;

 private:
  nlohmann::json route(std::string_view path, const QueryParams& params);

  Warehouse& warehouse_;
  const Config& config_;
  mutable std::mutex cacheMutex_;
  std::uint64_t cacheHighWater_{0};
  std::map<std::string, Response> cache_;
};

/// Runs the service behind cpp-httplib on a background thread.
class HttpServer {
 public:
  HttpServer(ApiService& service, ApiSettings settings);
  ~HttpServer();

  /// Binds and starts listening; port 0 picks a free port. Returns the bound port.
  int start(const std::string& host, int port);
  /// Blocks until stop() is called from another thread.
  void runForeground(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Splits `host:port`; throws InvalidArgument.
std::pair<std::string, int> parseListen(std::string_view listen);

}  // namespace citypulse::api
