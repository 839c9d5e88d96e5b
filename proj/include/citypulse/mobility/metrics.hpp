// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <chrono>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "citypulse/core/types.hpp"
#include "citypulse/warehouse/warehouse.hpp"

namespace citypulse::mobility {

struct TimeWindow {
  Instant from{};
  Instant to{};
};

enum class BaselineMode { SameWeekPriorYear, FixedReferenceWeek };

struct BaselineSpec {
  BaselineMode mode{BaselineMode::SameWeekPriorYear};
  std::optional<WeekKey> referenceWeek;

  static BaselineSpec priorYear() { return {}; }
  static BaselineSpec fixed(WeekKey week) { return {BaselineMode::FixedReferenceWeek, week}; }
  /// `prior_year` or `ref:YYYY-MM-DD`; throws InvalidArgument.
  static BaselineSpec parse(std::string_view text);
  std::string toString() const;
};

/// The baseline week for `week`: for prior-year mode the week with the same
/// index counted from the first Monday of the previous year.
WeekKey baselineWeekFor(const WeekKey& week, const BaselineSpec& spec);
/// Zero-based index of `week` from the first Monday of its Monday's year.
int weekIndexInYear(const WeekKey& week);

enum class Aggregation { Sum, Mean };

Aggregation parseAggregation(std::string_view text);
std::string_view toString(Aggregation a);
/// Sum for count-like metrics, mean for travel_time / speed / truck_gvw.
Aggregation defaultAggregation(MetricKind metric);

enum class DeltaStatus { Ok, NoData, MissingBaseline };

std::string_view toString(DeltaStatus s);

struct WeeklyDelta {
  WeekKey week;
  WeekKey baselineWeek;
  DeltaStatus status{DeltaStatus::Ok};
  std::optional<double> currentMean;
  std::optional<double> baselineMean;
  /// 100 * (current - baseline) / baseline; present only when status is Ok.
  std::optional<double> pctChange;
  std::size_t currentSamples{0};
  std::size_t baselineSamples{0};
};

struct HourlyProfile {
  Date day;
  std::array<std::optional<double>, 24> values{};
  std::array<std::size_t, 24> sampleCounts{};
};

struct ReliabilityResult {
  TimeWindow window;
  int startHour{7};
  int endHour{19};
  std::optional<double> stdDev;
  std::optional<double> mean;
  std::size_t n{0};
};

struct SpeedingShare {
  double limitMph{25};
  std::optional<double> share;
  std::size_t over{0};
  std::size_t total{0};
  std::map<std::string, double> perSegmentMean;
  std::vector<std::string> segmentsWithoutData;
};

struct FatalityRate {
  std::optional<double> ratePer1000;  // empty: zero crashes, rate undefined
  double fatalities{0};
  double crashes{0};
};

struct GvwBin {
  double lower{0};
  std::optional<double> upper;  // empty: open-ended
  std::size_t count{0};
};

struct GvwHistogram {
  std::vector<GvwBin> bins;
  std::size_t total{0};
};

struct GvwBinDelta {
  double lower{0};
  std::optional<double> upper;
  std::size_t current{0};
  std::size_t baseline{0};
  std::optional<double> pctChange;
};

/// Default GVW edges in kips: [0,10) [10,26) [26,100) [100,inf).
std::vector<double> defaultGvwEdges();

// ---------------------------------------------------------------------------
// Pure computations over record spans.

/// Throws InvalidArgument when `baseline` is zero.
double pctChange(double current, double baseline);

/// Aggregates values over one window; empty when there are no samples.
std::optional<double> aggregate(std::span<const TimeSeriesRecord> records, Aggregation agg);

HourlyProfile computeHourlyProfile(std::span<const TimeSeriesRecord> records, const Date& day,
                                   const TimeZone& zone);

/// Sample standard deviation (n - 1) of records whose local hour lies in
/// [startHour, endHour).
ReliabilityResult computeReliability(std::span<const TimeSeriesRecord> records,
                                     const TimeWindow& window, int startHour, int endHour,
                                     const TimeZone& zone);

/// Bins must start at 0, ascend strictly; the last bin is open-ended.
GvwHistogram computeGvwBins(std::span<const TimeSeriesRecord> records,
                            std::span<const double> edges);

std::vector<GvwBinDelta> gvwBinDeltas(const GvwHistogram& current, const GvwHistogram& baseline);

// ---------------------------------------------------------------------------
// Operations reading from the warehouse.

struct WeeklyOptions {
  Aggregation agg{Aggregation::Sum};
  /// When set, a week needs at least half of week/cadence samples to count.
  std::optional<std::chrono::milliseconds> cadence;
};

class MobilityMetrics {
 public:
  MobilityMetrics(const Warehouse& warehouse, TimeZone zone)
      : warehouse_(warehouse), zone_(std::move(zone)) {}

  std::vector<WeeklyDelta> weeklyDelta(const SeriesKey& key, const std::vector<WeekKey>& weeks,
                                       const BaselineSpec& baseline,
                                       const WeeklyOptions& options) const;
  HourlyProfile hourlyProfile(const SeriesKey& key, const Date& day) const;
  /// Throws InsufficientData when fewer than two daytime samples exist.
  ReliabilityResult reliability(const SeriesKey& key, const TimeWindow& window, int startHour = 7,
                                int endHour = 19) const;
  /// Empty `segments` means every speed series of the city.
  SpeedingShare speedingShare(const CityId& city, const TimeWindow& window, double limitMph,
                              const std::vector<LocationId>& segments = {}) const;
  FatalityRate fatalityRate(const CityId& city, const TimeWindow& window) const;
  GvwHistogram gvwBins(const SeriesKey& key, const TimeWindow& window,
                       std::span<const double> edges) const;

  TimeWindow weekWindow(const WeekKey& week) const;
  TimeWindow dayWindow(const Date& day) const;
  const TimeZone& zone() const noexcept { return zone_; }

 private:
  const Warehouse& warehouse_;
  TimeZone zone_;
};

}  // namespace citypulse::mobility
