// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <functional>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "citypulse/core/types.hpp"
#include "citypulse/warehouse/warehouse.hpp"

namespace citypulse::ingest {

enum class FeedFormat { Csv, Ndjson };

std::string_view toString(FeedFormat f);
FeedFormat parseFeedFormat(std::string_view s);

struct QualityThresholds {
  double accuracy{0.9};
  double timeliness{0.5};
  double validity{0.9};
  double granularity{0.5};
};

/// Per-source ingest configuration. `metric` is empty for detection-frame
/// feeds. `validRange` is expressed in the metric's canonical unit (for frame
/// feeds: detections per frame).
struct FeedDescriptor {
  std::string feedId;
  CityId city;
  std::optional<MetricKind> metric;
  FeedFormat format{FeedFormat::Csv};
  std::chrono::milliseconds expectedCadence{std::chrono::hours{1}};
  double validMin{0.0};
  double validMax{1e12};
  std::string unitLabel{"count"};
  int schemaVersion{1};
  QualityThresholds thresholds;
  /// Defaults to 3 x expectedCadence.
  std::optional<std::chrono::milliseconds> stalenessHorizon;
  double confidenceCutoff{0.5};

  bool isDetectionFeed() const noexcept { return !metric.has_value(); }
  std::chrono::milliseconds staleness() const {
    return stalenessHorizon.value_or(3 * expectedCadence);
  }
  /// Throws ConfigError on broken invariants.
  void validate() const;
};

/// Factor converting `unitLabel` values to the metric's canonical unit.
/// Throws ConfigError for labels that do not apply to the metric.
double unitScale(MetricKind metric, std::string_view unitLabel);

struct Reject {
  std::size_t lineNo{0};
  std::string rawLine;
  std::string reasonCode;
};

struct ParsedBatch {
  std::vector<TimeSeriesRecord> records;
  std::vector<DetectionFrame> frames;
  std::vector<Reject> rejects;
  /// Input rows, excluding the CSV header and blank lines.
  std::size_t total{0};
  std::size_t droppedLowConfidence{0};
  std::size_t droppedUnknownClass{0};

  std::size_t accepted() const noexcept { return records.size() + frames.size(); }
};

/// Every non-blank data row becomes exactly one record/frame or one reject.
/// Throws UnreadableStream on I/O failure and SchemaMismatch when the header
/// or line shape does not match the descriptor's format.
ParsedBatch parseBatch(const FeedDescriptor& feed, std::istream& in);
ParsedBatch parseBatch(const FeedDescriptor& feed, std::string_view raw);

enum class Verdict { Accept, Quarantine };

std::string_view toString(Verdict v);

struct DimensionScores {
  double accuracy{0};
  double timeliness{0};
  double validity{0};
  double granularity{0};
};

struct QualityReport {
  std::string feedId;
  std::string batchId;
  std::size_t total{0};
  std::size_t accepted{0};
  std::size_t rejected{0};
  DimensionScores scores;
  std::vector<Reject> rejects;
  Verdict verdict{Verdict::Quarantine};
  /// Set when the batch had no rows: an upstream feed outage.
  bool emptyBatch{false};
};

/// Scores a parsed batch on accuracy, timeliness, validity and granularity:
///   accuracy    = accepted / total
///   validity    = share of accepted values inside [validMin, validMax]
///   timeliness  = share of accepted items with now - timestamp <= staleness
///   granularity = min(1, observed / expected), where expected sums, per
///                 series or camera, floor((last - first) / cadence) + 1
/// The verdict is accept iff every score meets its threshold.
QualityReport evaluateBatch(const FeedDescriptor& feed, std::string batchId,
                            const ParsedBatch& parsed, Instant now);

nlohmann::json toJson(const QualityReport& report);

/// Content-derived id: `<feedId>:<first 16 hex of sha256(raw)>`.
std::string deriveBatchId(std::string_view feedId, std::string_view raw);

struct RetryPolicy {
  int maxAttempts{5};
  std::chrono::milliseconds initialBackoff{50};
  double multiplier{2.0};
  std::chrono::milliseconds maxBackoff{2000};
};

enum class DispatchOutcome { Applied, Duplicate, Quarantined };

std::string_view toString(DispatchOutcome o);

/// Sends accepted batches to the sink (all-or-nothing) and quarantined ones to
/// the quarantine area. Rejected rows of accepted batches are preserved in
/// quarantine too. WarehouseUnavailable is retried with exponential backoff;
/// the last failure is rethrown once attempts are exhausted.
DispatchOutcome dispatch(BatchSink& sink, const QualityReport& report, const ParsedBatch& parsed,
                         std::string_view rawPayload, const RetryPolicy& retry = {},
                         const std::function<void(std::chrono::milliseconds)>& sleep = {});

}  // namespace citypulse::ingest
