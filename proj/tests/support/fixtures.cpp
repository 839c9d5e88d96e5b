// SPDX-License-Identifier: Apache-2.0
#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <sstream>

#include "citypulse/commands.hpp"
#include "citypulse/core/errors.hpp"

namespace citypulse::fixtures {

namespace fs = std::filesystem;
using namespace std::chrono;

namespace {

const char* kConfig = R"(# Fixture configuration for the seattle and nyc corpora.
warehouse:
  path: warehouse
cities:
  seattle: America/Los_Angeles
  nyc: America/New_York
sociability:
  threshold_m: 1.8288
  height_m: 1.70
  min_box_h: 8
  confidence_cutoff: 0.5
api:
  listen: 127.0.0.1:0
  cors_origin: "http://localhost:5173"
feeds:
  - {id: sea_volume, city: seattle, metric: traffic_volume, format: csv, cadence: 1h,
     valid_range: [0, 5000], unit: vehicles, staleness: 8d}
  - {id: sea_travel, city: seattle, metric: travel_time, format: csv, cadence: 1h,
     valid_range: [0, 240], unit: minutes, staleness: 8d}
  - {id: nyc_speed, city: nyc, metric: speed, format: csv, cadence: 1h,
     valid_range: [0, 100], unit: mph, staleness: 8d}
  - {id: nyc_crash, city: nyc, metric: crash_count, format: csv, cadence: 1d,
     valid_range: [0, 2000], unit: crashes, staleness: 8d}
  - {id: nyc_fatal, city: nyc, metric: fatality_count, format: csv, cadence: 1d,
     valid_range: [0, 100], unit: fatalities, staleness: 8d}
  - {id: nyc_gvw, city: nyc, metric: truck_gvw, format: csv, cadence: 30m,
     valid_range: [0, 300], unit: kips, staleness: 8d}
  - {id: nyc_broadway, city: nyc, metric: detection_frames, format: ndjson, cadence: 30s,
     valid_range: [0, 1000], staleness: 2h, confidence_cutoff: 0.5}
)";

Instant localAt(const TimeZone& zone, year_month_day d, int hour, int minute = 0) {
  return zone.fromLocal(LocalTime{local_days{d} + hours{hour} + minutes{minute}});
}

TimeSeriesRecord record(const TimeZone& zone, const char* city, MetricKind metric,
                        const std::string& location, Instant t, double value) {
  TimeSeriesRecord r;
  r.city = CityId{city};
  r.metric = metric;
  r.location = LocationId{location};
  r.timestamp = zone.stamp(t);
  r.value = value;
  return r;
}

/// Groups records into one CSV file per local Monday-start week.
void addWeeklyFiles(FixtureSet& set, const std::string& feedId, const TimeZone& zone,
                    std::vector<TimeSeriesRecord> records) {
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return a.timestamp.utc < b.timestamp.utc;
  });
  std::map<WeekKey, std::vector<const TimeSeriesRecord*>> byWeek;
  for (const auto& r : records) byWeek[weekKeyFor(r.timestamp.utc, zone)].push_back(&r);
  for (const auto& [week, rows] : byWeek) {
    std::string content = "city,metric,location,timestamp,value\n";
    for (const auto* r : rows) content += toCsvLine(*r) + "\n";
    set.files.push_back({feedId, week.toString() + ".csv", content,
                         formatRfc3339(rows.back()->timestamp)});
  }
}

/// Integer apportionment of `total` proportional to `weights` (largest remainder).
std::vector<long> apportion(long total, const std::vector<double>& weights) {
  double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<long> out(weights.size());
  std::vector<std::pair<double, std::size_t>> rema;
  long assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    double exact = static_cast<double>(total) * weights[i] / sum;
    out[i] = static_cast<long>(std::floor(exact));
    assigned += out[i];
    rema.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(rema.begin(), rema.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (long k = 0; k < total - assigned; ++k) ++out[rema[static_cast<std::size_t>(k)].second];
  return out;
}

void rescaleToStdDev(std::vector<double*> values, double target) {
  double n = static_cast<double>(values.size());
  double mean = 0;
  for (auto* v : values) mean += *v;
  mean /= n;
  double ss = 0;
  for (auto* v : values) ss += (*v - mean) * (*v - mean);
  double sd = std::sqrt(ss / (n - 1));
  for (auto* v : values) *v = mean + (*v - mean) * target / sd;
}

void seattleVolume(FixtureSet& set, const TimeZone& zone) {
  static const double kDiurnal[24] = {1.0, 0.6, 0.4, 0.4, 0.6, 1.5, 3.0, 5.0, 6.0, 5.0, 4.5, 4.5,
                                      4.8, 4.8, 5.0, 5.5, 6.0, 6.2, 5.0, 4.0, 3.0, 2.5, 2.0, 1.5};
  const std::pair<year_month_day, long> weeks[] = {
      {2019y / April / 1, 10000}, {2019y / April / 15, 10000}, {2019y / April / 29, 10000},
      {2019y / May / 13, 10000},  {2020y / March / 30, 5309},  {2020y / April / 13, 5805},
      {2020y / April / 27, 6450}, {2020y / May / 11, 7369},
  };
  std::vector<double> weights;
  for (int d = 0; d < 7; ++d) {
    for (int h = 0; h < 24; ++h) weights.push_back(kDiurnal[h] * (d >= 5 ? 0.8 : 1.0));
  }
  std::vector<TimeSeriesRecord> recs;
  for (const auto& [monday, total] : weeks) {
    auto counts = apportion(total, weights);
    for (int d = 0; d < 7; ++d) {
      auto day = year_month_day{sys_days{monday} + days{d}};
      for (int h = 0; h < 24; ++h) {
        recs.push_back(record(zone, "seattle", MetricKind::TrafficVolume, "i5_downtown",
                              localAt(zone, day, h),
                              static_cast<double>(counts[static_cast<std::size_t>(d * 24 + h)])));
      }
    }
  }
  addWeeklyFiles(set, "sea_volume", zone, std::move(recs));
}

void seattleTravel(FixtureSet& set, const TimeZone& zone) {
  std::mt19937_64 rng(20200228);
  std::vector<TimeSeriesRecord> recs;
  auto emitDays = [&](year_month_day first, int count, auto valueFor) {
    for (int d = 0; d < count; ++d) {
      auto day = year_month_day{sys_days{first} + days{d}};
      auto wd = weekday{sys_days{day}}.iso_encoding();
      for (int h = 0; h < 24; ++h) {
        recs.push_back(record(zone, "seattle", MetricKind::TravelTime, "i5_seg",
                              localAt(zone, day, h), valueFor(day, wd, h)));
      }
    }
  };
  auto night = [&] { return 18.0 + uniform(rng, -0.3, 0.3); };
  auto daytime = [](int h) { return h >= 7 && h < 19; };

  emitDays(2020y / February / 24, 7, [&](year_month_day, unsigned wd, int h) {
    if (!daytime(h)) return night();
    static const std::map<int, double> kPeaks{{7, 6}, {8, 14}, {9, 7}, {16, 8}, {17, 16}, {18, 9}};
    double v = (wd <= 5 ? 22.0 : 21.0) + uniform(rng, -1.0, 1.0);
    if (wd <= 5) {
      if (auto it = kPeaks.find(h); it != kPeaks.end()) v += it->second;
    }
    return v;
  });
  emitDays(2020y / March / 23, 7, [&](year_month_day, unsigned, int h) {
    return daytime(h) ? 18.0 + uniform(rng, -0.3, 0.3) : night();
  });
  emitDays(2020y / April / 27, 14, [&](year_month_day, unsigned, int h) {
    return daytime(h) ? 17.0 + uniform(rng, -1.0, 1.0) : night();
  });

  auto rescale = [&](Instant from, Instant to, double target) {
    std::vector<double*> sel;
    for (auto& r : recs) {
      auto t = r.timestamp.utc;
      int h = static_cast<int>((zone.toLocal(t) - floor<days>(zone.toLocal(t))) / hours{1});
      if (t >= from && t < to && daytime(h)) sel.push_back(&r.value);
    }
    rescaleToStdDev(sel, target);
  };
  rescale(zone.startOfDay(2020y / February / 24), zone.startOfDay(2020y / March / 2), 6.43);
  rescale(zone.startOfDay(2020y / April / 30), zone.startOfDay(2020y / May / 7), 0.67);
  addWeeklyFiles(set, "sea_travel", zone, std::move(recs));
}

void nycSpeed(FixtureSet& set, const TimeZone& zone) {
  std::vector<TimeSeriesRecord> recs;
  auto t = localAt(zone, 2020y / April / 15, 8);
  for (int i = 0; i < 145; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "seg_%03d", i);
    double v = (i % 12 == 0 && i < 144) ? 26.0 + (i / 12) % 6 : 12.0 + i % 13;
    recs.push_back(record(zone, "nyc", MetricKind::Speed, id, t, v));
  }
  addWeeklyFiles(set, "nyc_speed", zone, std::move(recs));
}

void nycCrashes(FixtureSet& set, const TimeZone& zone) {
  std::vector<TimeSeriesRecord> crashes, fatalities;
  for (int d = 0; d < 21; ++d) {
    auto day = year_month_day{sys_days{2020y / February / 1} + days{d}};
    auto t = zone.startOfDay(day);
    crashes.push_back(record(zone, "nyc", MetricKind::CrashCount, "citywide", t, d < 2 ? 239 : 238));
    fatalities.push_back(
        record(zone, "nyc", MetricKind::FatalityCount, "citywide", t, d % 3 == 2 ? 1 : 0));
  }
  addWeeklyFiles(set, "nyc_crash", zone, std::move(crashes));
  addWeeklyFiles(set, "nyc_fatal", zone, std::move(fatalities));
}

void nycGvw(FixtureSet& set, const TimeZone& zone) {
  auto start = zone.startOfDay(2020y / February / 3);
  auto split = zone.startOfDay(2020y / March / 13);
  auto end = zone.startOfDay(2020y / April / 12);
  std::vector<TimeSeriesRecord> recs;
  auto emit = [&](Instant from, Instant to, int heavy) {
    auto n = static_cast<long>((to - from) / minutes{30});
    std::vector<bool> isHeavy(static_cast<std::size_t>(n), false);
    for (long j = 0; j < heavy; ++j) isHeavy[static_cast<std::size_t>(j * n / heavy)] = true;
    for (long i = 0; i < n; ++i) {
      double v = isHeavy[static_cast<std::size_t>(i)] ? 100.5 + static_cast<double>(i % 20) * 2
                                                      : 8.0 + static_cast<double>((i * 37) % 90);
      recs.push_back(record(zone, "nyc", MetricKind::TruckGvw, "qb", from + minutes{30} * i, v));
    }
  };
  emit(start, split, 100);
  emit(split, end, 70);
  addWeeklyFiles(set, "nyc_gvw", zone, std::move(recs));
}

Detection person(double cx, double cy, double confidence) {
  return {ObjectClass::Person, confidence, {cx - 30, cy - 85, 60, 170}};
}

void nycFrames(FixtureSet& set, const TimeZone& zone) {
  auto start = localAt(zone, 2020y / April / 2, 12);
  std::string content;
  std::string last;
  int pairFrames = 0;
  for (int i = 0; i < 125; ++i) {
    int persons = i == 60 ? 12 : (i < 16 ? 4 : 3);
    int pairs = 0;
    if (i == 60) {
      pairs = 2;
    } else if (i % 6 == 1 && pairFrames < 20) {
      pairs = 1;
      ++pairFrames;
    }
    DetectionFrame f;
    f.camera = LocationId{"broadway"};
    f.city = CityId{"nyc"};
    f.capturedAt = zone.stamp(start + seconds{30} * i);
    f.frameSeq = i + 1;
    int placed = 0;
    for (int cell = 0; placed < persons; ++cell) {
      double cx = 100 + 400 * (cell % 4);
      double cy = 100 + 400 * (cell / 4);
      double conf = 0.6 + 0.01 * ((i + placed) % 39);
      f.detections.push_back(person(cx, cy, conf));
      ++placed;
      if (cell < pairs) {
        f.detections.push_back(person(cx + 100, cy, conf));
        ++placed;
      }
    }
    f.detections.push_back({ObjectClass::Car, 0.9, {1800, 100, 200, 120}});
    f.detections.push_back(person(2000, 900, 0.3));
    content += toNdjsonLine(f) + "\n";
    last = formatRfc3339(f.capturedAt);
  }
  set.files.push_back({"nyc_broadway", "2020-04-02.ndjson", content, last});
}

}  // namespace

double uniform(std::mt19937_64& rng, double lo, double hi) {
  double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

FixtureSet standardFixture() {
  FixtureSet set;
  set.configYaml = kConfig;
  auto seattle = TimeZone::fromName("America/Los_Angeles");
  auto nyc = TimeZone::fromName("America/New_York");
  seattleVolume(set, seattle);
  seattleTravel(set, seattle);
  nycSpeed(set, nyc);
  nycCrashes(set, nyc);
  nycGvw(set, nyc);
  nycFrames(set, nyc);
  return set;
}

std::vector<fs::path> writeFixture(const FixtureSet& set, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream(dir / "config.yaml") << set.configYaml;
  std::vector<fs::path> out;
  for (const auto& f : set.files) {
    auto path = dir / "feeds" / f.feedId / f.name;
    fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    os << f.content;
    if (!os) throw InvalidArgument("cannot write " + path.string());
    out.push_back(path);
  }
  return out;
}

fs::path ingestStandardFixture(const fs::path& dir) {
  auto set = standardFixture();
  auto paths = writeFixture(set, dir);
  for (std::size_t i = 0; i < paths.size(); ++i) {
    std::ostringstream out, err;
    cli::IngestArgs args{dir / "config.yaml", set.files[i].feedId, paths[i], set.files[i].now, {}};
    if (cli::runIngest(args, {out, err}) != cli::kExitOk) {
      throw std::runtime_error("fixture batch " + paths[i].string() + " not accepted: " + out.str() +
                               err.str());
    }
  }
  return dir / "config.yaml";
}

std::string threePersonFrameNdjson() {
  DetectionFrame f;
  f.camera = LocationId{"example"};
  f.city = CityId{"nyc"};
  f.capturedAt = parseRfc3339("2020-04-02T12:00:00-04:00");
  f.frameSeq = 1;
  f.detections = {person(100, 100, 0.9), person(200, 100, 0.9), person(900, 100, 0.9)};
  return toNdjsonLine(f) + "\n";
}

DetectionFrame randomFrame(std::mt19937_64& rng, std::size_t maxPersons, std::int64_t seq) {
  DetectionFrame f;
  f.camera = LocationId{"cam"};
  f.city = CityId{"nyc"};
  f.capturedAt = parseRfc3339("2020-04-02T12:00:00Z");
  f.capturedAt.utc += seconds{30} * seq;
  f.frameSeq = seq;
  auto persons = static_cast<std::size_t>(uniform(rng, 0, static_cast<double>(maxPersons) + 1));
  for (std::size_t i = 0; i < persons; ++i) {
    double h = uniform(rng, 4, 300);
    f.detections.push_back({ObjectClass::Person, uniform(rng, 0.5, 1.0),
                            {uniform(rng, 0, 1920), uniform(rng, 0, 1080), h * 0.4, h}});
  }
  auto others = static_cast<int>(uniform(rng, 0, 4));
  for (int i = 0; i < others; ++i) {
    f.detections.push_back({ObjectClass::Car, uniform(rng, 0.5, 1.0),
                            {uniform(rng, 0, 1920), uniform(rng, 0, 1080), 120, 80}});
  }
  return f;
}

}  // namespace citypulse::fixtures
