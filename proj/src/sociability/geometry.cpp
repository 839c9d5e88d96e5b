// SPDX-License-Identifier: Apache-2.0
#include "citypulse/sociability/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "citypulse/core/errors.hpp"

namespace citypulse::sociability {

void ProjectionParams::validate() const {
  for (double v : {assumedHeightMeters, distanceThresholdMeters, confidenceCutoff, minBoxHeightPx}) {
    if (!(v > 0) || !std::isfinite(v)) {
      throw InvalidArgument("projection parameters must be finite and strictly positive");
    }
  }
}

Point centroid(const BoundingBox& box) {
  if (!isValid(box)) throw InvalidArgument("bounding box needs w > 0, h > 0 and x, y >= 0");
  return {box.x + box.w / 2.0, box.y + box.h / 2.0};
}

RpRatio rpRatio(const BoundingBox& box, const ProjectionParams& params) {
  if (!(box.h > 0)) throw InvalidArgument("bounding box height must be positive");
  return {params.assumedHeightMeters / box.h, box.h < params.minBoxHeightPx};
}

double pairDistance(const BoundingBox& a, const BoundingBox& b, const ProjectionParams& params) {
  auto ca = centroid(a);
  auto cb = centroid(b);
  double px = std::hypot(ca.x - cb.x, ca.y - cb.y);
  double scale = (rpRatio(a, params).metersPerPixel + rpRatio(b, params).metersPerPixel) / 2.0;
  return px * scale;
}

FrameResult analyzeFrame(const DetectionFrame& frame, const ProjectionParams& params) {
  FrameResult res;
  res.camera = frame.camera;
  res.capturedAt = frame.capturedAt;
  res.frameSeq = frame.frameSeq;
  for (auto c : kAllObjectClasses) res.countsByClass[c] = 0;

  struct Person {
    Point c;
    double mpp;
    std::size_t index;
  };
  std::vector<Person> persons;
  std::size_t personIndex = 0;
  for (const auto& d : frame.detections) {
    ++res.countsByClass[d.objectClass];
    if (d.objectClass != ObjectClass::Person) continue;
    auto rp = rpRatio(d.bbox, params);
    if (!rp.degenerate) persons.push_back({centroid(d.bbox), rp.metersPerPixel, personIndex});
    ++personIndex;
  }
  res.personCount = personIndex;

  std::vector<char> violating(persons.size(), 0);
  if (params.includePairDistances) res.pairDistances.emplace();
  for (std::size_t i = 0; i < persons.size(); ++i) {
    for (std::size_t j = i + 1; j < persons.size(); ++j) {
      double px = std::hypot(persons[i].c.x - persons[j].c.x, persons[i].c.y - persons[j].c.y);
      double meters = px * (persons[i].mpp + persons[j].mpp) / 2.0;
      if (meters < params.distanceThresholdMeters) {
        ++res.violatedPairs;
        violating[i] = violating[j] = 1;
      }
      if (res.pairDistances) {
        res.pairDistances->push_back({persons[i].index, persons[j].index, meters});
      }
    }
  }
  res.violatingPersons = static_cast<std::size_t>(std::count(violating.begin(), violating.end(), 1));
  if (res.personCount > 0) {
    res.complianceRate = 1.0 - static_cast<double>(res.violatingPersons) /
                                   static_cast<double>(res.personCount);
  }
  return res;
}

ComplianceSummary summarize(std::span<const FrameResult> frames, Instant from, Instant to) {
  if (frames.empty()) throw EmptyWindow("no frames in the requested window");
  ComplianceSummary s;
  s.from = from;
  s.to = to;
  s.frames = frames.size();
  for (const auto& f : frames) {
    s.totalPersons += f.personCount;
    s.totalViolatingPersons += f.violatingPersons;
    s.totalViolatedPairs += f.violatedPairs;
    s.maxPedsDensity = std::max(s.maxPedsDensity, f.personCount);
  }
  s.avgPedsDensity = static_cast<double>(s.totalPersons) / static_cast<double>(s.frames);
  if (s.totalPersons > 0) {
    s.complianceRate = 1.0 - static_cast<double>(s.totalViolatingPersons) /
                                 static_cast<double>(s.totalPersons);
  }
  return s;
}

}  // namespace citypulse::sociability
