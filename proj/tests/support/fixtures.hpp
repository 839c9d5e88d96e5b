// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "citypulse/core/types.hpp"

// Deterministic fixture corpus for two cities.
//
// seattle (America/Los_Angeles)
//   sea_volume  traffic_volume @ i5_downtown, hourly, one file per week.
//               Weeks of 2019-04-01/15/29 and 2019-05-13 total 10000 vehicles
//               each; weeks of 2020-03-30, 04-13, 04-27, 05-11 total 5309,
//               5805, 6450, 7369. Hourly counts follow a diurnal shape and
//               are apportioned by largest remainder so totals are exact.
//   sea_travel  travel_time @ i5_seg, hourly, weeks of 2020-02-24, 03-23 and
//               2020-04-27..05-10. Daytime (07:00-19:00) samples are rescaled
//               to a sample standard deviation of exactly 6.43 min over
//               [2020-02-24, 2020-03-02) and 0.67 min over
//               [2020-04-30, 2020-05-07). Weekdays of the February week carry
//               commute peaks at 08:00 and 17:00; 2020-03-24 is flat.
//
// nyc (America/New_York)
//   nyc_speed     speed at 145 segments seg_000..seg_144, one sample at
//                 2020-04-15T08:00; 12 segments exceed 25 mph.
//   nyc_crash     crash_count @ citywide, daily 2020-02-01..02-21 (sum 5000).
//   nyc_fatal     fatality_count @ citywide, same days (sum 7).
//   nyc_gvw       truck_gvw @ qb, one truck every 30 min from 2020-02-03 to
//                 2020-04-12; 100 trucks above 100 kips before 2020-03-13
//                 and 70 from then on.
//   nyc_broadway  detection frames, camera broadway, 125 frames every 30 s
//                 from 2020-04-02T12:00-04:00; 400 persons, one frame with
//                 12, 22 violating pairs (44 persons). Boxes are 170 px tall
//                 (0.01 m/px at 1.70 m); persons sit on a 400 px grid and a
//                 pair partner is offset by 100 px (1 m). Each frame also
//                 holds a car and a 0.3-confidence person that is filtered.
namespace citypulse::fixtures {

struct FixtureFile {
  std::string feedId;
  std::string name;
  std::string content;
  /// Latest timestamp in the file; used as the ingest clock.
  std::string now;
};

struct FixtureSet {
  std::string configYaml;
  std::vector<FixtureFile> files;
};

FixtureSet standardFixture();

/// Writes `config.yaml` and `feeds/<feedId>/<name>` under `dir`. Returns the
/// paths of the feed files in generation order.
std::vector<std::filesystem::path> writeFixture(const FixtureSet& set,
                                                const std::filesystem::path& dir);

/// Writes the standard fixture under `dir` and ingests every file in order
/// with its own `now`. Returns the config path; throws if any batch is not
/// accepted.
std::filesystem::path ingestStandardFixture(const std::filesystem::path& dir);

/// One frame with three persons, two of them 1 m apart.
std::string threePersonFrameNdjson();

/// Random frame with up to `maxPersons` people and a few other objects.
DetectionFrame randomFrame(std::mt19937_64& rng, std::size_t maxPersons, std::int64_t seq);

/// Uniform double in [lo, hi) from raw engine output (platform independent).
double uniform(std::mt19937_64& rng, double lo, double hi);

}  // namespace citypulse::fixtures
