// SPDX-License-Identifier: Apache-2.0
#include "citypulse/serialize.hpp"

namespace citypulse::serialize {

std::string timestamp(Instant t, const TimeZone& zone) { return formatRfc3339(zone.stamp(t)); }

Json window(Instant from, Instant to, const TimeZone& zone) {
  return {{"from", timestamp(from, zone)}, {"to", timestamp(to, zone)}};
}

Json optionalNumber(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json toJson(const mobility::WeeklyDelta& d) {
  return {
      {"week", d.week.toString()},
      {"baselineWeek", d.baselineWeek.toString()},
      {"status", std::string(mobility::toString(d.status))},
      {"currentMean", optionalNumber(d.currentMean)},
      {"baselineMean", optionalNumber(d.baselineMean)},
      {"pctChange", optionalNumber(d.pctChange)},
      {"sampleCounts", {{"current", d.currentSamples}, {"baseline", d.baselineSamples}}},
  };
}

Json toJson(const mobility::HourlyProfile& p) {
  Json values = Json::array();
  Json counts = Json::array();
  for (size_t h = 0; h < 24; ++h) {
    values.push_back(optionalNumber(p.values[h]));
    counts.push_back(p.sampleCounts[h]);
  }
  return {{"day", formatDate(p.day)}, {"values", values}, {"sampleCounts", counts}};
}

Json toJson(const mobility::ReliabilityResult& r, const TimeZone& zone) {
  return {
      {"window", window(r.window.from, r.window.to, zone)},
      {"daytimeWindow", {{"startHour", r.startHour}, {"endHour", r.endHour}}},
      {"stdDev", optionalNumber(r.stdDev)},
      {"mean", optionalNumber(r.mean)},
      {"n", r.n},
  };
}

Json toJson(const mobility::SpeedingShare& s) {
  return {
      {"limitMph", s.limitMph},
      {"share", optionalNumber(s.share)},
      {"over", s.over},
      {"total", s.total},
      {"perSegment", s.perSegmentMean},
      {"segmentsWithoutData", s.segmentsWithoutData},
  };
}

Json toJson(const mobility::FatalityRate& f) {
  return {
      {"ratePer1000", optionalNumber(f.ratePer1000)},
      {"rateStatus", f.ratePer1000 ? "ok" : "undefined"},
      {"fatalities", f.fatalities},
      {"crashes", f.crashes},
  };
}

Json toJson(const mobility::GvwHistogram& h) {
  Json bins = Json::array();
  for (const auto& b : h.bins) {
    bins.push_back({{"lower", b.lower}, {"upper", optionalNumber(b.upper)}, {"count", b.count}});
  }
  return {{"bins", bins}, {"total", h.total}};
}

Json toJson(const std::vector<mobility::GvwBinDelta>& deltas) {
  Json out = Json::array();
  for (const auto& d : deltas) {
    out.push_back({{"lower", d.lower},
                   {"upper", optionalNumber(d.upper)},
                   {"current", d.current},
                   {"baseline", d.baseline},
                   {"pctChange", optionalNumber(d.pctChange)}});
  }
  return out;
}

Json toJson(const sociability::FrameResult& f, const TimeZone& zone) {
  Json classes = Json::object();
  for (const auto& [cls, n] : f.countsByClass) classes[std::string(toString(cls))] = n;
  Json j = {
      {"camera", f.camera.str()},
      {"capturedAt", timestamp(f.capturedAt.utc, zone)},
      {"frameSeq", f.frameSeq},
      {"personCount", f.personCount},
      {"countsByClass", classes},
      {"violatedPairs", f.violatedPairs},
      {"violatingPersons", f.violatingPersons},
      {"complianceRate", optionalNumber(f.complianceRate)},
  };
  if (f.pairDistances) {
    Json pairs = Json::array();
    for (const auto& p : *f.pairDistances) {
      pairs.push_back({{"i", p.i}, {"j", p.j}, {"meters", p.meters}});
    }
    j["pairDistances"] = pairs;
  }
  return j;
}

Json toJson(const sociability::ComplianceSummary& s, const TimeZone& zone) {
  return {
      {"window", window(s.from, s.to, zone)},
      {"frames", s.frames},
      {"avgPedsDensity", s.avgPedsDensity},
      {"maxPedsDensity", s.maxPedsDensity},
      {"complianceRate", optionalNumber(s.complianceRate)},
      {"totalViolatedPairs", s.totalViolatedPairs},
      {"totalPersons", s.totalPersons},
      {"totalViolatingPersons", s.totalViolatingPersons},
  };
}

Json toJson(const sociability::ProjectionParams& p) {
  return {
      {"assumedHeightMeters", p.assumedHeightMeters},
      {"distanceThresholdMeters", p.distanceThresholdMeters},
      {"confidenceCutoff", p.confidenceCutoff},
      {"minBoxHeightPx", p.minBoxHeightPx},
  };
}

}  // namespace citypulse::serialize
