// SPDX-License-Identifier: Apache-2.0
#include "citypulse/ingest/ingest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <thread>

#include "citypulse/core/errors.hpp"

namespace citypulse::ingest {

using namespace std::chrono;

std::string_view toString(FeedFormat f) { return f == FeedFormat::Csv ? "csv" : "ndjson"; }

FeedFormat parseFeedFormat(std::string_view s) {
  if (s == "csv") return FeedFormat::Csv;
  if (s == "ndjson") return FeedFormat::Ndjson;
  throw ConfigError("unknown feed format: " + std::string(s));
}

std::string_view toString(Verdict v) { return v == Verdict::Accept ? "accept" : "quarantine"; }

std::string_view toString(DispatchOutcome o) {
  switch (o) {
    case DispatchOutcome::Applied: return "applied";
    case DispatchOutcome::Duplicate: return "duplicate";
    case DispatchOutcome::Quarantined: return "quarantined";
  }
  return "unknown";
}

double unitScale(MetricKind metric, std::string_view unit) {
  switch (metric) {
    case MetricKind::TravelTime:
      if (unit == "minutes" || unit == "min") return 1.0;
      if (unit == "seconds" || unit == "s") return 1.0 / 60.0;
      if (unit == "hours" || unit == "h") return 60.0;
      break;
    case MetricKind::Speed:
      if (unit == "mph") return 1.0;
      if (unit == "km/h" || unit == "kph" || unit == "kmh") return 1.0 / 1.609344;
      break;
    case MetricKind::TruckGvw:
      if (unit == "kips") return 1.0;
      if (unit == "lbs" || unit == "lb") return 1e-3;
      if (unit == "kg") return 2.20462262185e-3;
      if (unit == "tonnes" || unit == "t") return 2.20462262185;
      break;
    default:
      // Count-like metrics accept any descriptive label (vehicles, trips, ...).
      return 1.0;
  }
  throw ConfigError("unit '" + std::string(unit) + "' does not apply to " +
                    std::string(toString(metric)));
}

void FeedDescriptor::validate() const {
  if (feedId.empty()) throw ConfigError("feed id must not be empty");
  if (city.empty()) throw ConfigError("feed " + feedId + ": city missing");
  if (expectedCadence <= milliseconds::zero()) throw ConfigError("feed " + feedId + ": cadence must be > 0");
  if (!(validMin < validMax)) throw ConfigError("feed " + feedId + ": valid range needs min < max");
  if (stalenessHorizon && *stalenessHorizon <= milliseconds::zero()) {
    throw ConfigError("feed " + feedId + ": staleness must be > 0");
  }
  if (isDetectionFeed() && format != FeedFormat::Ndjson) {
    throw ConfigError("feed " + feedId + ": detection frames are ingested as ndjson");
  }
  if (!isDetectionFeed() && format != FeedFormat::Csv) {
    throw ConfigError("feed " + feedId + ": time-series feeds are ingested as csv");
  }
  if (metric) unitScale(*metric, unitLabel);
  for (double t : {thresholds.accuracy, thresholds.timeliness, thresholds.validity,
                   thresholds.granularity, confidenceCutoff}) {
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("feed " + feedId + ": thresholds must lie in [0,1]");
  }
}

namespace {

std::string reasonOf(const std::exception& e) {
  std::string msg = e.what();
  return msg.substr(0, msg.find(':'));
}

std::string_view trimCr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

bool isBlank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

}  // namespace

ParsedBatch parseBatch(const FeedDescriptor& feed, std::istream& in) {
  if (!in) throw UnreadableStream("input stream is not readable");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw UnreadableStream("I/O error while reading feed " + feed.feedId);
  return parseBatch(feed, buf.str());
}

ParsedBatch parseBatch(const FeedDescriptor& feed, std::string_view raw) {
  ParsedBatch out;
  std::vector<std::pair<std::size_t, std::string_view>> lines;
  {
    std::size_t lineNo = 0;
    std::string_view rest = raw;
    while (!rest.empty()) {
      auto nl = rest.find('\n');
      auto line = trimCr(rest.substr(0, nl));
      ++lineNo;
      if (!isBlank(line)) lines.emplace_back(lineNo, line);
      if (nl == std::string_view::npos) break;
      rest.remove_prefix(nl + 1);
    }
  }

  if (feed.format == FeedFormat::Csv) {
    if (lines.empty()) return out;
    auto header = lines.front().second;
    if (header != "city,metric,location,timestamp,value" &&
        header != "city,metric,location,timestamp,value,meta") {
      throw SchemaMismatch("feed " + feed.feedId + ": unexpected CSV header '" +
                           std::string(header) + "'");
    }
    const double scale = feed.metric ? unitScale(*feed.metric, feed.unitLabel) : 1.0;
    for (auto it = lines.begin() + 1; it != lines.end(); ++it) {
      auto [lineNo, line] = *it;
      ++out.total;
      try {
        auto rec = recordFromCsvLine(line);
        if (rec.city != feed.city) throw ParseError("city_mismatch");
        if (feed.metric && rec.metric != *feed.metric) throw ParseError("metric_mismatch");
        rec.value *= scale;
        out.records.push_back(std::move(rec));
      } catch (const ParseError& e) {
        out.rejects.push_back({lineNo, std::string(line), reasonOf(e)});
      }
    }
    return out;
  }

  if (!lines.empty() &&
      lines.front().second[lines.front().second.find_first_not_of(" \t")] != '{') {
    throw SchemaMismatch("feed " + feed.feedId + ": expected NDJSON objects");
  }
  std::map<std::pair<CityId, LocationId>, std::int64_t> lastSeq;
  for (auto [lineNo, line] : lines) {
    ++out.total;
    try {
      auto parsed = frameFromNdjsonLine(line, feed.confidenceCutoff);
      auto& f = parsed.frame;
      if (f.city != feed.city) throw ParseError("city_mismatch");
      auto key = std::make_pair(f.city, f.camera);
      if (auto prev = lastSeq.find(key); prev != lastSeq.end() && f.frameSeq <= prev->second) {
        throw ParseError("non_monotonic_seq");
      }
      lastSeq[key] = f.frameSeq;
      out.droppedLowConfidence += parsed.droppedLowConfidence;
      out.droppedUnknownClass += parsed.droppedUnknownClass;
      out.frames.push_back(std::move(f));
    } catch (const ParseError& e) {
      out.rejects.push_back({lineNo, std::string(line), reasonOf(e)});
    }
  }
  return out;
}

QualityReport evaluateBatch(const FeedDescriptor& feed, std::string batchId,
                            const ParsedBatch& parsed, Instant now) {
  QualityReport rep;
  rep.feedId = feed.feedId;
  rep.batchId = std::move(batchId);
  rep.total = parsed.total;
  rep.accepted = parsed.accepted();
  rep.rejected = parsed.rejects.size();
  rep.rejects = parsed.rejects;
  if (rep.total == 0) {
    rep.emptyBatch = true;
    rep.verdict = Verdict::Quarantine;
    return rep;
  }
  rep.scores.accuracy = static_cast<double>(rep.accepted) / static_cast<double>(rep.total);

  if (rep.accepted > 0) {
    const auto horizon = feed.staleness();
    std::size_t inRange = 0;
    std::size_t fresh = 0;
    // (first, last) per series or camera for the cadence count.
    std::map<std::string, std::pair<Instant, Instant>> extents;
    auto observe = [&](const std::string& key, Instant t, double v) {
      if (v >= feed.validMin && v <= feed.validMax) ++inRange;
      if (now - t <= horizon) ++fresh;
      auto [it, inserted] = extents.try_emplace(key, t, t);
      if (!inserted) {
        it->second.first = std::min(it->second.first, t);
        it->second.second = std::max(it->second.second, t);
      }
    };
    for (const auto& r : parsed.records) {
      observe(r.location.str() + '\x1f' + std::string(toString(r.metric)), r.timestamp.utc, r.value);
    }
    for (const auto& f : parsed.frames) {
      observe(f.camera.str(), f.capturedAt.utc, static_cast<double>(f.detections.size()));
    }
    double expected = 0;
    for (const auto& [key, ext] : extents) {
      expected += static_cast<double>((ext.second - ext.first) / feed.expectedCadence) + 1.0;
    }
    const double n = static_cast<double>(rep.accepted);
    rep.scores.validity = static_cast<double>(inRange) / n;
    rep.scores.timeliness = static_cast<double>(fresh) / n;
    rep.scores.granularity = std::min(1.0, n / expected);
  }

  const auto& th = feed.thresholds;
  bool pass = rep.scores.accuracy >= th.accuracy && rep.scores.timeliness >= th.timeliness &&
              rep.scores.validity >= th.validity && rep.scores.granularity >= th.granularity;
  rep.verdict = pass ? Verdict::Accept : Verdict::Quarantine;
  return rep;
}

nlohmann::json toJson(const QualityReport& r) {
  nlohmann::json j;
  j["feedId"] = r.feedId;
  j["batchId"] = r.batchId;
  j["counts"] = {{"total", r.total}, {"accepted", r.accepted}, {"rejected", r.rejected}};
  j["dimensionScores"] = {{"accuracy", r.scores.accuracy},
                          {"timeliness", r.scores.timeliness},
                          {"validity", r.scores.validity},
                          {"granularity", r.scores.granularity}};
  j["verdict"] = std::string(toString(r.verdict));
  j["emptyBatch"] = r.emptyBatch;
  auto rejects = nlohmann::json::array();
  for (const auto& rej : r.rejects) {
    rejects.push_back({{"line", rej.lineNo}, {"reason", rej.reasonCode}, {"raw", rej.rawLine}});
  }
  j["rejects"] = std::move(rejects);
  return j;
}

std::string deriveBatchId(std::string_view feedId, std::string_view raw) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(raw.data(), raw.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string id(feedId);
  id += ':';
  for (unsigned int i = 0; i < 8 && i < len; ++i) {
    id += kHex[digest[i] >> 4];
    id += kHex[digest[i] & 0xf];
  }
  return id;
}

namespace {

template <class Fn>
auto withRetry(const RetryPolicy& retry, const std::function<void(milliseconds)>& sleep, Fn&& fn) {
  auto backoff = retry.initialBackoff;
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const WarehouseUnavailable&) {
      if (attempt >= retry.maxAttempts) throw;
      if (sleep) {
        sleep(backoff);
      } else {
        std::this_thread::sleep_for(backoff);
      }
      backoff = std::min(retry.maxBackoff,
                         duration_cast<milliseconds>(backoff * retry.multiplier));
    }
  }
}

std::string rejectedLines(const ParsedBatch& parsed) {
  std::string out;
  for (const auto& r : parsed.rejects) {
    out += std::to_string(r.lineNo) + '\t' + r.reasonCode + '\t' + r.rawLine + '\n';
  }
  return out;
}

}  // namespace

DispatchOutcome dispatch(BatchSink& sink, const QualityReport& report, const ParsedBatch& parsed,
                         std::string_view rawPayload, const RetryPolicy& retry,
                         const std::function<void(milliseconds)>& sleep) {
  const std::string reportJson = toJson(report).dump(2) + "\n";
  if (report.verdict == Verdict::Quarantine) {
    QuarantineItem item{report.batchId, report.feedId, reportJson, rejectedLines(parsed),
                        std::string(rawPayload)};
    if (item.payload.empty()) item.payload = "\n";
    withRetry(retry, sleep, [&] {
      sink.quarantine(item);
      return 0;
    });
    return DispatchOutcome::Quarantined;
  }

  BatchPayload payload{report.batchId, report.feedId, parsed.records, parsed.frames};
  auto result = withRetry(retry, sleep, [&] { return sink.append(payload); });
  if (!parsed.rejects.empty()) {
    QuarantineItem item{report.batchId, report.feedId, reportJson, rejectedLines(parsed), ""};
    withRetry(retry, sleep, [&] {
      sink.quarantine(item);
      return 0;
    });
  }
  return result == AppendResult::Applied ? DispatchOutcome::Applied : DispatchOutcome::Duplicate;
}

}  // namespace citypulse::ingest
