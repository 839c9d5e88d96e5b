// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include "citypulse/mobility/metrics.hpp"
#include "citypulse/sociability/geometry.hpp"

// JSON shapes shared by the HTTP API and the CLI. Instants are rendered as
// RFC 3339 in the supplied zone's local offset.
namespace citypulse::serialize {

using Json = nlohmann::json;

std::string timestamp(Instant t, const TimeZone& zone);
Json window(Instant from, Instant to, const TimeZone& zone);
Json optionalNumber(const std::optional<double>& v);

Json toJson(const mobility::WeeklyDelta& d);
Json toJson(const mobility::HourlyProfile& p);
Json toJson(const mobility::ReliabilityResult& r, const TimeZone& zone);
Json toJson(const mobility::SpeedingShare& s);
Json toJson(const mobility::FatalityRate& f);
Json toJson(const mobility::GvwHistogram& h);
Json toJson(const std::vector<mobility::GvwBinDelta>& deltas);

Json toJson(const sociability::FrameResult& f, const TimeZone& zone);
Json toJson(const sociability::ComplianceSummary& s, const TimeZone& zone);
Json toJson(const sociability::ProjectionParams& p);

}  // namespace citypulse::serialize
