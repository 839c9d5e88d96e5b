// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "citypulse/core/errors.hpp"
#include "citypulse/mobility/metrics.hpp"
#include "fixtures.hpp"
#include "test_util.hpp"

using namespace citypulse;
using namespace citypulse::mobility;
using namespace std::chrono;
using citypulse::testing::TempDir;

namespace {

const TimeZone& ny() {
  static const TimeZone zone = TimeZone::fromName("America/New_York");
  return zone;
}

TimeSeriesRecord rec(MetricKind metric, const std::string& loc, Instant t, double value) {
  TimeSeriesRecord r;
  r.city = CityId{"nyc"};
  r.metric = metric;
  r.location = LocationId{loc};
  r.timestamp = {t, ny().offsetAt(t)};
  r.value = value;
  return r;
}

Instant localAt(Date d, int hour, int minute = 0) {
  return ny().fromLocal(LocalTime{local_days{d} + hours{hour} + minutes{minute}});
}

double twoPassSampleStdDev(const std::vector<double>& xs) {
  double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

TEST_CASE("percent change") {
  CHECK(pctChange(5309, 10000) == doctest::Approx(-46.91).epsilon(1e-12));
  CHECK(pctChange(42, 42) == 0.0);
  CHECK(pctChange(70, 100) == doctest::Approx(-30.0));
  CHECK_THROWS_AS(pctChange(1, 0), InvalidArgument);
}

TEST_CASE("percent change is scale invariant") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    double c = fixtures::uniform(rng, 0, 1e6);
    double b = fixtures::uniform(rng, 1, 1e6);
    double k = fixtures::uniform(rng, 1e-3, 1e3);
    CHECK(pctChange(k * c, k * b) == doctest::Approx(pctChange(c, b)).epsilon(1e-9));
  }
}

TEST_CASE("baseline weeks") {
  CHECK(baselineWeekFor(parseWeekKey("2020-03-30"), BaselineSpec::priorYear()).toString() ==
        "2019-04-01");
  CHECK(baselineWeekFor(parseWeekKey("2020-04-13"), BaselineSpec::priorYear()).toString() ==
        "2019-04-15");
  CHECK(weekIndexInYear(parseWeekKey("2020-01-06")) == 0);
  CHECK(weekIndexInYear(parseWeekKey("2020-03-30")) == 12);
  auto fixed = BaselineSpec::parse("ref:2020-02-24");
  CHECK((fixed.mode == BaselineMode::FixedReferenceWeek));
  CHECK(baselineWeekFor(parseWeekKey("2020-05-11"), fixed).toString() == "2020-02-24");
  CHECK(fixed.toString() == "ref:2020-02-24");
  CHECK(BaselineSpec::parse("prior_year").toString() == "prior_year");
  CHECK_THROWS_AS(BaselineSpec::parse("ref:2020-02-25"), InvalidArgument);
  CHECK_THROWS_AS(BaselineSpec::parse("last_tuesday"), InvalidArgument);
}

TEST_CASE("aggregation defaults") {
  CHECK((defaultAggregation(MetricKind::TrafficVolume) == Aggregation::Sum));
  CHECK((defaultAggregation(MetricKind::TravelTime) == Aggregation::Mean));
  CHECK((defaultAggregation(MetricKind::Speed) == Aggregation::Mean));
  CHECK((parseAggregation("mean") == Aggregation::Mean));
  CHECK_THROWS(parseAggregation("median"));
  CHECK_FALSE(aggregate({}, Aggregation::Sum).has_value());
}

TEST_CASE("hourly profile") {
  Date day = 2020y / March / 24;
  std::vector<TimeSeriesRecord> recs;
  for (int h = 0; h < 24; ++h) recs.push_back(rec(MetricKind::TravelTime, "x", localAt(day, h), 12));
  auto flat = computeHourlyProfile(recs, day, ny());
  for (int h = 0; h < 24; ++h) {
    REQUIRE(flat.values[static_cast<std::size_t>(h)].has_value());
    CHECK(*flat.values[static_cast<std::size_t>(h)] == 12);
  }

  std::vector<TimeSeriesRecord> two = {rec(MetricKind::TravelTime, "x", localAt(day, 8, 10), 40),
                                       rec(MetricKind::TravelTime, "x", localAt(day, 8, 40), 60),
                                       rec(MetricKind::TravelTime, "x", localAt(day, 23, 59) + minutes{2}, 99)};
  auto p = computeHourlyProfile(two, day, ny());
  CHECK(*p.values[8] == 50);
  CHECK(p.sampleCounts[8] == 2);
  CHECK_FALSE(p.values[9].has_value());
  CHECK(p.sampleCounts[23] == 0);
}

TEST_CASE("hourly profile conserves samples") {
  std::mt19937_64 rng(4);
  Date day = 2020y / March / 8;  // 23-hour day
  auto from = ny().startOfDay(day);
  auto to = ny().startOfDay(Date{sys_days{day} + days{1}});
  std::vector<TimeSeriesRecord> recs;
  double total = 0;
  for (int i = 0; i < 500; ++i) {
    auto t = from + milliseconds{static_cast<std::int64_t>(fixtures::uniform(rng, 0, 1.0 * (to - from).count()))};
    double v = fixtures::uniform(rng, 1, 100);
    total += v;
    recs.push_back(rec(MetricKind::TravelTime, "x", t, v));
  }
  auto p = computeHourlyProfile(recs, day, ny());
  std::size_t n = 0;
  double sum = 0;
  for (std::size_t h = 0; h < 24; ++h) {
    n += p.sampleCounts[h];
    if (p.values[h]) sum += *p.values[h] * static_cast<double>(p.sampleCounts[h]);
  }
  CHECK(n == recs.size());
  CHECK(sum == doctest::Approx(total).epsilon(1e-9));
  CHECK(p.sampleCounts[2] == 0);
}

TEST_CASE("reliability") {
  Date day = 2020y / April / 30;
  TimeWindow w{ny().startOfDay(day), ny().startOfDay(Date{sys_days{day} + days{1}})};
  std::vector<TimeSeriesRecord> recs = {rec(MetricKind::TravelTime, "x", localAt(day, 9), 10),
                                        rec(MetricKind::TravelTime, "x", localAt(day, 10), 14),
                                        rec(MetricKind::TravelTime, "x", localAt(day, 19), 500),
                                        rec(MetricKind::TravelTime, "x", localAt(day, 6, 59), 500)};
  auto r = computeReliability(recs, w, 7, 19, ny());
  CHECK(r.n == 2);
  CHECK(*r.stdDev == doctest::Approx(std::sqrt(8.0)).epsilon(1e-12));
  CHECK(*r.mean == 12);

  std::vector<TimeSeriesRecord> flat;
  for (int h = 7; h < 19; ++h) flat.push_back(rec(MetricKind::TravelTime, "x", localAt(day, h), 9.5));
  CHECK(*computeReliability(flat, w, 7, 19, ny()).stdDev == 0.0);
  CHECK_FALSE(computeReliability({recs.data(), 1}, w, 7, 19, ny()).stdDev.has_value());
}

TEST_CASE("reliability matches a two-pass oracle") {
  std::mt19937_64 rng(9);
  Date day = 2020y / May / 4;
  TimeWindow w{ny().startOfDay(day), ny().startOfDay(Date{sys_days{day} + days{1}})};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<TimeSeriesRecord> recs;
    std::vector<double> xs;
    int n = 2 + trial % 40;
    double offset = fixtures::uniform(rng, 0, 1e6);
    for (int i = 0; i < n; ++i) {
      double v = offset + fixtures::uniform(rng, 0, 30);
      xs.push_back(v);
      recs.push_back(rec(MetricKind::TravelTime, "x", localAt(day, 7 + i % 12, i % 60), v));
    }
    auto r = computeReliability(recs, w, 7, 19, ny());
    CHECK(*r.stdDev == doctest::Approx(twoPassSampleStdDev(xs)).epsilon(1e-9));
  }
}

TEST_CASE("gvw bins") {
  std::vector<TimeSeriesRecord> recs;
  for (double v : {50.0, 99.9, 100.1, 140.0}) {
    recs.push_back(rec(MetricKind::TruckGvw, "qb", localAt(2020y / March / 2, 9), v));
  }
  std::vector<double> edges = {0, 100};
  auto h = computeGvwBins(recs, edges);
  REQUIRE(h.bins.size() == 2);
  CHECK(h.bins[0].count == 2);
  CHECK(h.bins[1].count == 2);
  CHECK(h.bins[0].upper == 100.0);
  CHECK_FALSE(h.bins[1].upper.has_value());
  CHECK(h.total == 4);

  auto empty = computeGvwBins({}, edges);
  CHECK(empty.total == 0);
  CHECK(empty.bins[0].count == 0);

  for (auto bad : {std::vector<double>{}, std::vector<double>{5, 10}, std::vector<double>{0, 10, 10}}) {
    CHECK_THROWS_AS(computeGvwBins(recs, bad), InvalidArgument);
  }
  CHECK(defaultGvwEdges() == std::vector<double>{0, 10, 26, 100});

  GvwHistogram base = computeGvwBins(std::span(recs).subspan(0, 3), edges);
  auto deltas = gvwBinDeltas(h, base);
  CHECK(deltas[1].current == 2);
  CHECK(deltas[1].baseline == 1);
  CHECK(*deltas[1].pctChange == 100.0);
  CHECK(gvwBinDeltas(h, empty)[0].pctChange == std::nullopt);
}

TEST_CASE("gvw counts always sum to the sample count") {
  std::mt19937_64 rng(12);
  auto edges = defaultGvwEdges();
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TimeSeriesRecord> recs;
    int n = static_cast<int>(fixtures::uniform(rng, 0, 200));
    for (int i = 0; i < n; ++i) {
      recs.push_back(rec(MetricKind::TruckGvw, "qb", localAt(2020y / March / 2, 9), fixtures::uniform(rng, 0, 160)));
    }
    auto h = computeGvwBins(recs, edges);
    std::size_t sum = 0;
    for (const auto& b : h.bins) sum += b.count;
    CHECK(sum == recs.size());
  }
}

TEST_CASE("warehouse-backed metrics") {
  TempDir dir;
  WarehouseOptions o;
  o.root = dir.path();
  Warehouse w(o);
  MobilityMetrics m(w, ny());

  BatchPayload b{"b1", "feed", {}, {}};
  auto put = [&](MetricKind k, const std::string& loc, Instant t, double v) {
    b.records.push_back(rec(k, loc, t, v));
  };
  put(MetricKind::CrashCount, "citywide", localAt(2020y / February / 3, 12), 3000);
  put(MetricKind::CrashCount, "citywide", localAt(2020y / February / 4, 12), 2000);
  put(MetricKind::FatalityCount, "citywide", localAt(2020y / February / 4, 12), 7);
  put(MetricKind::FatalityCount, "zero", localAt(2020y / March / 4, 12), 0);
  put(MetricKind::CrashCount, "zero", localAt(2020y / March / 4, 12), 100);
  put(MetricKind::FatalityCount, "none", localAt(2020y / April / 4, 12), 5);
  for (int i = 0; i < 10; ++i) {
    put(MetricKind::Speed, "s" + std::to_string(i), localAt(2020y / April / 15, 8), 20.0 + i);
  }
  put(MetricKind::TrafficVolume, "v", localAt(2019y / April / 2, 8), 10000);
  put(MetricKind::TrafficVolume, "v", localAt(2020y / March / 31, 8), 5309);
  w.append(b);

  auto feb = m.fatalityRate(CityId{"nyc"}, {localAt(2020y / February / 1, 0), localAt(2020y / February / 22, 0)});
  CHECK(feb.ratePer1000 == 1.4);
  auto mar = m.fatalityRate(CityId{"nyc"}, {localAt(2020y / March / 1, 0), localAt(2020y / March / 31, 0)});
  CHECK(mar.ratePer1000 == 0.0);
  auto apr = m.fatalityRate(CityId{"nyc"}, {localAt(2020y / April / 1, 0), localAt(2020y / April / 10, 0)});
  CHECK_FALSE(apr.ratePer1000.has_value());
  CHECK(apr.fatalities == 5);

  TimeWindow day = m.dayWindow(2020y / April / 15);
  auto share = m.speedingShare(CityId{"nyc"}, day, 25);
  CHECK(share.total == 10);
  CHECK(share.over == 4);
  CHECK(*share.share == 0.4);
  double prev = 1.0;
  for (double limit = 15; limit <= 35; limit += 0.5) {
    auto s = *m.speedingShare(CityId{"nyc"}, day, limit).share;
    CHECK(s <= prev);
    prev = s;
  }
  auto picked = m.speedingShare(CityId{"nyc"}, day, 25, {LocationId{"s9"}, LocationId{"nope"}});
  CHECK(picked.total == 1);
  CHECK(picked.segmentsWithoutData == std::vector<std::string>{"nope"});

  SeriesKey vol{CityId{"nyc"}, MetricKind::TrafficVolume, LocationId{"v"}};
  auto deltas = m.weeklyDelta(vol, {parseWeekKey("2020-03-30"), parseWeekKey("2020-04-06")},
                              BaselineSpec::priorYear(), {});
  REQUIRE(deltas.size() == 2);
  CHECK((deltas[0].status == DeltaStatus::Ok));
  CHECK(*deltas[0].pctChange == doctest::Approx(-46.91));
  CHECK((deltas[1].status == DeltaStatus::NoData));
  CHECK_FALSE(deltas[1].pctChange.has_value());
  auto missing = m.weeklyDelta(vol, {parseWeekKey("2019-04-01")}, BaselineSpec::priorYear(), {});
  CHECK((missing[0].status == DeltaStatus::MissingBaseline));
  WeeklyOptions sparse;
  sparse.cadence = hours{1};
  CHECK((m.weeklyDelta(vol, {parseWeekKey("2020-03-30")}, BaselineSpec::priorYear(), sparse)[0].status ==
         DeltaStatus::NoData));

  SeriesKey tt{CityId{"nyc"}, MetricKind::TravelTime, LocationId{"none"}};
  CHECK_THROWS_AS(m.reliability(tt, m.dayWindow(2020y / April / 30)), InsufficientData);
  CHECK_THROWS_AS(m.reliability(tt, {day.to, day.from}), InvalidArgument);
}

TEST_CASE("week windows follow local midnight") {
  TempDir dir;
  WarehouseOptions o;
  o.root = dir.path();
  Warehouse w(o);
  MobilityMetrics m(w, ny());
  auto win = m.weekWindow(parseWeekKey("2020-03-02"));
  CHECK(win.from == sys_days{2020y / March / 2} + hours{5});
  CHECK(win.to == sys_days{2020y / March / 9} + hours{4});
}
