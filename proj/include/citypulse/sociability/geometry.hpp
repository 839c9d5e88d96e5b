// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "citypulse/core/types.hpp"

namespace citypulse::sociability {

/// Height-based pixel-to-meter projection. Every person is assumed to be
/// `assumedHeightMeters` tall; the default violation threshold is 6 ft.
struct ProjectionParams {
  double assumedHeightMeters{1.70};
  double distanceThresholdMeters{1.8288};
  double confidenceCutoff{0.5};
  /// Boxes shorter than this are degenerate: counted in density, excluded
  /// from pair analysis.
  double minBoxHeightPx{8.0};
  bool includePairDistances{false};

  /// Throws InvalidArgument unless every field is strictly positive.
  void validate() const;
};

struct Point {
  double x{0};
  double y{0};
};

struct RpRatio {
  double metersPerPixel{0};
  bool degenerate{false};
};

Point centroid(const BoundingBox& box);
RpRatio rpRatio(const BoundingBox& box, const ProjectionParams& params);
/// Centroid pixel distance scaled by the mean of both boxes' R-P ratios.
double pairDistance(const BoundingBox& a, const BoundingBox& b, const ProjectionParams& params);

struct PairDistance {
  std::size_t i{0};
  std::size_t j{0};
  double meters{0};
};

struct FrameResult {
  LocationId camera;
  Timestamp capturedAt;
  std::int64_t frameSeq{0};
  std::size_t personCount{0};
  std::map<ObjectClass, std::size_t> countsByClass;
  std::size_t violatedPairs{0};
  std::size_t violatingPersons{0};
  /// 1 - violatingPersons / personCount; absent for frames without people.
  std::optional<double> complianceRate;
  std::optional<std::vector<PairDistance>> pairDistances;
};

FrameResult analyzeFrame(const DetectionFrame& frame, const ProjectionParams& params);

struct ComplianceSummary {
  Instant from{};
  Instant to{};
  std::size_t frames{0};
  double avgPedsDensity{0};
  std::size_t maxPedsDensity{0};
  /// Pedestrian-weighted; absent when the window holds no pedestrians.
  std::optional<double> complianceRate;
  std::size_t totalViolatedPairs{0};
  std::size_t totalPersons{0};
  std::size_t totalViolatingPersons{0};
};

/// Throws EmptyWindow when `frames` is empty.
ComplianceSummary summarize(std::span<const FrameResult> frames, Instant from, Instant to);

}  // namespace citypulse::sociability
