// SPDX-License-Identifier: Apache-2.0
#include "citypulse/mobility/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "citypulse/core/errors.hpp"

namespace citypulse::mobility {

using namespace std::chrono;

BaselineSpec BaselineSpec::parse(std::string_view text) {
  if (text == "prior_year" || text == "same_week_prior_year") return priorYear();
  if (text.substr(0, 4) == "ref:") return fixed(parseWeekKey(text.substr(4)));
  throw InvalidArgument("baseline must be prior_year or ref:YYYY-MM-DD, got '" +
                        std::string(text) + "'");
}

std::string BaselineSpec::toString() const {
  if (mode == BaselineMode::SameWeekPriorYear) return "prior_year";
  return "ref:" + referenceWeek->toString();
}

namespace {

sys_days firstMondayOf(year y) {
  sys_days jan1{y / January / 1};
  weekday wd{jan1};
  return jan1 + days{(7 + 1 - static_cast<int>(wd.c_encoding())) % 7};
}

}  // namespace

int weekIndexInYear(const WeekKey& week) {
  sys_days monday{week.monday()};
  return static_cast<int>((monday - firstMondayOf(week.monday().year())).count() / 7);
}

WeekKey baselineWeekFor(const WeekKey& week, const BaselineSpec& spec) {
  if (spec.mode == BaselineMode::FixedReferenceWeek) {
    if (!spec.referenceWeek) throw InvalidArgument("fixed baseline requires a reference week");
    return *spec.referenceWeek;
  }
  int idx = weekIndexInYear(week);
  auto prior = firstMondayOf(week.monday().year() - years{1}) + days{7 * idx};
  return WeekKey(Date{prior});
}

Aggregation parseAggregation(std::string_view text) {
  if (text == "sum") return Aggregation::Sum;
  if (text == "mean") return Aggregation::Mean;
  throw InvalidArgument("agg must be sum or mean, got '" + std::string(text) + "'");
}

std::string_view toString(Aggregation a) { return a == Aggregation::Sum ? "sum" : "mean"; }

Aggregation defaultAggregation(MetricKind metric) {
  return isCountLike(metric) ? Aggregation::Sum : Aggregation::Mean;
}

std::string_view toString(DeltaStatus s) {
  switch (s) {
    case DeltaStatus::Ok: return "ok";
    case DeltaStatus::NoData: return "no_data";
    case DeltaStatus::MissingBaseline: return "missing_baseline";
  }
  return "unknown";
}

std::vector<double> defaultGvwEdges() { return {0.0, 10.0, 26.0, 100.0}; }

double pctChange(double current, double baseline) {
  if (baseline == 0.0) throw InvalidArgument("percent change against a zero baseline");
  return 100.0 * (current - baseline) / baseline;
}

std::optional<double> aggregate(std::span<const TimeSeriesRecord> records, Aggregation agg) {
  if (records.empty()) return std::nullopt;
  double sum = 0;
  for (const auto& r : records) sum += r.value;
  return agg == Aggregation::Sum ? sum : sum / static_cast<double>(records.size());
}

namespace {

int localHour(Instant t, const TimeZone& zone) {
  auto local = zone.toLocal(t);
  auto dp = floor<days>(local);
  return static_cast<int>(floor<hours>(local - dp).count());
}

}  // namespace

HourlyProfile computeHourlyProfile(std::span<const TimeSeriesRecord> records, const Date& day,
                                   const TimeZone& zone) {
  HourlyProfile p;
  p.day = day;
  std::array<double, 24> sums{};
  for (const auto& r : records) {
    auto local = zone.toLocal(r.timestamp.utc);
    if (Date{floor<days>(local)} != day) continue;
    int h = localHour(r.timestamp.utc, zone);
    sums[static_cast<size_t>(h)] += r.value;
    ++p.sampleCounts[static_cast<size_t>(h)];
  }
  for (size_t h = 0; h < 24; ++h) {
    if (p.sampleCounts[h] > 0) p.values[h] = sums[h] / static_cast<double>(p.sampleCounts[h]);
  }
  return p;
}

ReliabilityResult computeReliability(std::span<const TimeSeriesRecord> records,
                                     const TimeWindow& window, int startHour, int endHour,
                                     const TimeZone& zone) {
  if (startHour < 0 || endHour > 24 || startHour >= endHour) {
    throw InvalidArgument("daytime window must satisfy 0 <= start < end <= 24");
  }
  ReliabilityResult res;
  res.window = window;
  res.startHour = startHour;
  res.endHour = endHour;
  // Welford's running mean / M2.
  double mean = 0;
  double m2 = 0;
  for (const auto& r : records) {
    if (r.timestamp.utc < window.from || r.timestamp.utc >= window.to) continue;
    int h = localHour(r.timestamp.utc, zone);
    if (h < startHour || h >= endHour) continue;
    ++res.n;
    double delta = r.value - mean;
    mean += delta / static_cast<double>(res.n);
    m2 += delta * (r.value - mean);
  }
  if (res.n >= 1) res.mean = mean;
  if (res.n >= 2) res.stdDev = std::sqrt(m2 / static_cast<double>(res.n - 1));
  return res;
}

GvwHistogram computeGvwBins(std::span<const TimeSeriesRecord> records,
                            std::span<const double> edges) {
  if (edges.empty() || edges.front() != 0.0) throw InvalidArgument("GVW bins must start at 0");
  for (size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) throw InvalidArgument("GVW bin edges must ascend strictly");
  }
  GvwHistogram hist;
  for (size_t i = 0; i < edges.size(); ++i) {
    GvwBin bin{edges[i], std::nullopt, 0};
    if (i + 1 < edges.size()) bin.upper = edges[i + 1];
    hist.bins.push_back(bin);
  }
  for (const auto& r : records) {
    auto it = std::upper_bound(edges.begin(), edges.end(), r.value);
    if (it == edges.begin()) continue;  // negative weight: rejected at ingest
    ++hist.bins[static_cast<size_t>(it - edges.begin() - 1)].count;
    ++hist.total;
  }
  return hist;
}

std::vector<GvwBinDelta> gvwBinDeltas(const GvwHistogram& current, const GvwHistogram& baseline) {
  if (current.bins.size() != baseline.bins.size()) {
    throw InvalidArgument("GVW histograms use different bins");
  }
  std::vector<GvwBinDelta> out;
  for (size_t i = 0; i < current.bins.size(); ++i) {
    GvwBinDelta d{current.bins[i].lower, current.bins[i].upper, current.bins[i].count,
                  baseline.bins[i].count, std::nullopt};
    if (d.baseline > 0) {
      d.pctChange = pctChange(static_cast<double>(d.current), static_cast<double>(d.baseline));
    }
    out.push_back(d);
  }
  return out;
}

// ---------------------------------------------------------------------------

TimeWindow MobilityMetrics::weekWindow(const WeekKey& week) const {
  sys_days monday{week.monday()};
  return {zone_.startOfDay(week.monday()), zone_.startOfDay(Date{monday + days{7}})};
}

TimeWindow MobilityMetrics::dayWindow(const Date& day) const {
  return {zone_.startOfDay(day), zone_.startOfDay(Date{sys_days{day} + days{1}})};
}

std::vector<WeeklyDelta> MobilityMetrics::weeklyDelta(const SeriesKey& key,
                                                      const std::vector<WeekKey>& weeks,
                                                      const BaselineSpec& baseline,
                                                      const WeeklyOptions& options) const {
  auto minSamples = [&](const TimeWindow& w) -> std::size_t {
    if (!options.cadence) return 1;
    auto expected = static_cast<double>((w.to - w.from) / *options.cadence);
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.5 * expected)));
  };

  std::vector<WeeklyDelta> out;
  for (const auto& week : weeks) {
    WeeklyDelta d{week, baselineWeekFor(week, baseline), DeltaStatus::Ok, {}, {}, {}, 0, 0};
    auto cw = weekWindow(week);
    auto bw = weekWindow(d.baselineWeek);
    auto cur = warehouse_.query(key, cw.from, cw.to);
    auto base = warehouse_.query(key, bw.from, bw.to);
    d.currentSamples = cur.size();
    d.baselineSamples = base.size();
    d.currentMean = aggregate(cur, options.agg);
    d.baselineMean = aggregate(base, options.agg);
    if (cur.size() < minSamples(cw)) {
      d.status = DeltaStatus::NoData;
    } else if (base.size() < minSamples(bw) || !d.baselineMean || *d.baselineMean == 0.0) {
      d.status = DeltaStatus::MissingBaseline;
    } else {
      d.pctChange = pctChange(*d.currentMean, *d.baselineMean);
    }
    out.push_back(std::move(d));
  }
  return out;
}

HourlyProfile MobilityMetrics::hourlyProfile(const SeriesKey& key, const Date& day) const {
  auto w = dayWindow(day);
  auto recs = warehouse_.query(key, w.from, w.to);
  return computeHourlyProfile(recs, day, zone_);
}

ReliabilityResult MobilityMetrics::reliability(const SeriesKey& key, const TimeWindow& window,
                                               int startHour, int endHour) const {
  if (!(window.from < window.to)) throw InvalidArgument("reliability window must be non-empty");
  auto recs = warehouse_.query(key, window.from, window.to);
  auto res = computeReliability(recs, window, startHour, endHour, zone_);
  if (!res.stdDev) {
    throw InsufficientData("reliability needs at least 2 daytime samples, found " +
                           std::to_string(res.n));
  }
  return res;
}

SpeedingShare MobilityMetrics::speedingShare(const CityId& city, const TimeWindow& window,
                                             double limitMph,
                                             const std::vector<LocationId>& segments) const {
  SpeedingShare out;
  out.limitMph = limitMph;
  std::vector<LocationId> ids = segments;
  if (ids.empty()) {
    for (const auto& s : warehouse_.listSeries(city)) {
      if (s.key.metric == MetricKind::Speed) ids.push_back(s.key.location);
    }
  }
  for (const auto& id : ids) {
    auto recs = warehouse_.query({city, MetricKind::Speed, id}, window.from, window.to);
    auto mean = aggregate(recs, Aggregation::Mean);
    if (!mean) {
      out.segmentsWithoutData.push_back(id.str());
      continue;
    }
    out.perSegmentMean[id.str()] = *mean;
    ++out.total;
    if (*mean > limitMph) ++out.over;
  }
  if (out.total > 0) out.share = static_cast<double>(out.over) / static_cast<double>(out.total);
  return out;
}

FatalityRate MobilityMetrics::fatalityRate(const CityId& city, const TimeWindow& window) const {
  FatalityRate out;
  for (const auto& s : warehouse_.listSeries(city)) {
    if (s.key.metric != MetricKind::CrashCount && s.key.metric != MetricKind::FatalityCount) continue;
    auto recs = warehouse_.query(s.key, window.from, window.to);
    double sum = aggregate(recs, Aggregation::Sum).value_or(0.0);
    (s.key.metric == MetricKind::CrashCount ? out.crashes : out.fatalities) += sum;
  }
  if (out.crashes > 0) out.ratePer1000 = 1000.0 * out.fatalities / out.crashes;
  return out;
}

GvwHistogram MobilityMetrics::gvwBins(const SeriesKey& key, const TimeWindow& window,
                                      std::span<const double> edges) const {
  auto recs = warehouse_.query(key, window.from, window.to);
  return computeGvwBins(recs, edges);
}

}  // namespace citypulse::mobility
