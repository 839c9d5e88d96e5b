// SPDX-License-Identifier: Apache-2.0
#include "citypulse/commands.hpp"

#include <pthread.h>
#include <signal.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "citypulse/api/service.hpp"
#include "citypulse/config.hpp"
#include "citypulse/core/errors.hpp"
#include "citypulse/ingest/ingest.hpp"
#include "citypulse/mobility/metrics.hpp"
#include "citypulse/serialize.hpp"
#include "citypulse/sociability/geometry.hpp"
#include "citypulse/warehouse/warehouse.hpp"

namespace citypulse::cli {

namespace fs = std::filesystem;
using namespace std::chrono;
using nlohmann::json;

namespace {

template <class F>
int guarded(Io io, F&& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    io.err << "citypulse: error: " << e.what() << '\n';
    return kExitError;
  }
}

std::string readFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnreadableStream("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw UnreadableStream("I/O error reading " + path.string());
  return buf.str();
}

void writeFile(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << content;
  out.flush();
  if (!out) throw InvalidArgument("I/O error writing " + path.string());
}

WarehouseOptions warehouseOptions(const Config& cfg, bool readOnly) {
  WarehouseOptions o;
  o.root = cfg.warehousePath;
  o.readOnly = readOnly;
  o.maxBytes = cfg.maxBytes;
  o.retention = cfg.retention;
  return o;
}

std::unique_ptr<Warehouse> openWriter(const Config& cfg, Io io) {
  ingest::RetryPolicy retry;
  auto backoff = retry.initialBackoff;
  for (int attempt = 1;; ++attempt) {
    try {
      return std::make_unique<Warehouse>(warehouseOptions(cfg, false));
    } catch (const WarehouseUnavailable& e) {
      if (attempt >= retry.maxAttempts) throw;
      io.err << "citypulse: warehouse busy, retrying: " << e.what() << '\n';
      std::this_thread::sleep_for(backoff);
      backoff = std::min(retry.maxBackoff,
                         duration_cast<milliseconds>(backoff * retry.multiplier));
    }
  }
}

Instant instantArg(const std::string& text, const TimeZone& zone, const char* name) {
  if (text.empty()) throw InvalidArgument(std::string("--") + name + " is required");
  if (text.size() == 10) return zone.startOfDay(parseDate(text));
  return parseRfc3339(text).utc;
}

std::string fixed(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string fixedOr(const std::optional<double>& v, int precision, const char* missing) {
  return v ? fixed(*v, precision) : std::string(missing);
}

void emitJson(Io io, const json& j) { io.out << j.dump(2) << '\n'; }

}  // namespace

// ---------------------------------------------------------------------------

int runIngest(const IngestArgs& args, Io io) {
  return guarded(io, [&] {
    auto cfg = loadConfig(args.config);
    const auto& feed = cfg.feed(args.feed);
    auto raw = readFile(args.input);
    auto parsed = ingest::parseBatch(feed, raw);
    auto batchId = args.batchId.value_or(ingest::deriveBatchId(feed.feedId, raw));
    Instant now = args.now ? parseRfc3339(*args.now).utc
                           : time_point_cast<milliseconds>(system_clock::now());
    auto report = ingest::evaluateBatch(feed, batchId, parsed, now);
    auto wh = openWriter(cfg, io);
    auto outcome = ingest::dispatch(*wh, report, parsed, raw);
    auto j = ingest::toJson(report);
    j["dispatch"] = std::string(ingest::toString(outcome));
    emitJson(io, j);
    return report.verdict == ingest::Verdict::Accept ? kExitOk : kExitFlagged;
  });
}

// ---------------------------------------------------------------------------

namespace {

struct ReplayItem {
  const ingest::FeedDescriptor* feed{nullptr};
  fs::path path;
  std::string raw;
  ingest::ParsedBatch parsed;
  std::optional<Instant> first;
  std::optional<Instant> last;
  std::string error;
};

void parseReplayItem(ReplayItem& item) {
  try {
    item.raw = readFile(item.path);
    item.parsed = ingest::parseBatch(*item.feed, item.raw);
    auto note = [&](Instant t) {
      if (!item.first || t < *item.first) item.first = t;
      if (!item.last || t > *item.last) item.last = t;
    };
    for (const auto& r : item.parsed.records) note(r.timestamp.utc);
    for (const auto& f : item.parsed.frames) note(f.capturedAt.utc);
  } catch (const std::exception& e) {
    item.error = e.what();
  }
}

}  // namespace

int runReplay(const ReplayArgs& args, Io io) {
  return guarded(io, [&] {
    if (args.speed < 0) throw InvalidArgument("--speed must be >= 0");
    auto cfg = loadConfig(args.config);
    if (!fs::is_directory(args.dir)) throw InvalidArgument("not a directory: " + args.dir.string());

    std::vector<ReplayItem> items;
    std::vector<fs::path> feedDirs;
    for (const auto& e : fs::directory_iterator(args.dir)) {
      if (e.is_directory()) feedDirs.push_back(e.path());
    }
    std::sort(feedDirs.begin(), feedDirs.end());
    for (const auto& dir : feedDirs) {
      const auto& feed = cfg.feed(dir.filename().string());
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file()) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (auto& f : files) items.push_back({&feed, std::move(f), {}, {}, {}, {}, {}});
    }

    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    auto workers = std::max(1u, std::min<unsigned>(args.workers, static_cast<unsigned>(items.size())));
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (auto i = next++; i < items.size(); i = next++) parseReplayItem(items[i]);
      });
    }
    for (auto& t : pool) t.join();

    std::stable_sort(items.begin(), items.end(), [](const ReplayItem& a, const ReplayItem& b) {
      auto ka = a.last.value_or(Instant::max());
      auto kb = b.last.value_or(Instant::max());
      return ka < kb;
    });

    auto wh = openWriter(cfg, io);
    int status = kExitOk;
    std::optional<Instant> clock;
    std::size_t applied = 0, quarantined = 0, failed = 0;
    for (auto& item : items) {
      json line = {{"file", fs::relative(item.path, args.dir).string()},
                   {"feedId", item.feed->feedId}};
      if (!item.error.empty()) {
        line["error"] = item.error;
        io.out << line.dump() << '\n';
        status = kExitError;
        ++failed;
        continue;
      }
      if (args.speed > 0 && clock && item.last && *item.last > *clock) {
        std::this_thread::sleep_for(duration<double>(*item.last - *clock) / args.speed);
      }
      if (item.last) clock = item.last;
      Instant now = clock.value_or(time_point_cast<milliseconds>(system_clock::now()));
      auto report = ingest::evaluateBatch(*item.feed, ingest::deriveBatchId(item.feed->feedId, item.raw),
                                          item.parsed, now);
      auto outcome = ingest::dispatch(*wh, report, item.parsed, item.raw);
      line["batchId"] = report.batchId;
      line["verdict"] = std::string(ingest::toString(report.verdict));
      line["dispatch"] = std::string(ingest::toString(outcome));
      line["counts"] = {{"total", report.total}, {"accepted", report.accepted},
                        {"rejected", report.rejected}};
      io.out << line.dump() << '\n';
      if (report.verdict == ingest::Verdict::Quarantine) {
        ++quarantined;
        if (status == kExitOk) status = kExitFlagged;
      } else {
        ++applied;
      }
    }
    io.err << "replay: " << items.size() << " batches, " << applied << " accepted, " << quarantined
           << " quarantined, " << failed << " failed\n";
    return status;
  });
}

// ---------------------------------------------------------------------------

int runComply(const ComplyArgs& args, Io io) {
  return guarded(io, [&] {
    sociability::ProjectionParams params;
    params.distanceThresholdMeters = args.thresholdMeters;
    params.assumedHeightMeters = args.heightMeters;
    params.minBoxHeightPx = args.minBoxHeightPx;
    params.confidenceCutoff = args.confidenceCutoff;
    params.validate();
    auto zone = TimeZone::fromName(args.timeZone);

    std::ifstream in(args.input);
    if (!in) throw UnreadableStream("cannot open " + args.input.string());
    std::vector<sociability::FrameResult> results;
    std::size_t lineNo = 0, rejected = 0, lowConfidence = 0, unknownClass = 0;
    std::optional<Instant> first, last;
    for (std::string line; std::getline(in, line);) {
      ++lineNo;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        auto parsed = frameFromNdjsonLine(line, params.confidenceCutoff);
        lowConfidence += parsed.droppedLowConfidence;
        unknownClass += parsed.droppedUnknownClass;
        auto t = parsed.frame.capturedAt.utc;
        if (!first || t < *first) first = t;
        if (!last || t > *last) last = t;
        results.push_back(sociability::analyzeFrame(parsed.frame, params));
      } catch (const ParseError& e) {
        ++rejected;
        io.err << args.input.string() << ':' << lineNo << ": skipped: " << e.what() << '\n';
      }
    }
    if (in.bad()) throw UnreadableStream("I/O error reading " + args.input.string());
    if (results.empty()) throw EmptyWindow("no valid frames in " + args.input.string());

    auto summary = sociability::summarize(results, *first, *last + milliseconds{1});

    std::ostringstream csv;
    csv << "camera,captured_at,frame_seq,person_count,violated_pairs,violating_persons,compliance_rate\n";
    for (const auto& r : results) {
      csv << r.camera.str() << ',' << formatRfc3339(r.capturedAt) << ',' << r.frameSeq << ','
          << r.personCount << ',' << r.violatedPairs << ',' << r.violatingPersons << ','
          << (r.complianceRate ? formatNumber(*r.complianceRate) : std::string()) << '\n';
    }

    auto j = serialize::toJson(summary, zone);
    j["params"] = serialize::toJson(params);
    j["input"] = {{"lines", lineNo},
                  {"framesRejected", rejected},
                  {"droppedLowConfidence", lowConfidence},
                  {"droppedUnknownClass", unknownClass}};

    fs::create_directories(args.outDir);
    writeFile(args.outDir / "frames.csv", csv.str());
    writeFile(args.outDir / "summary.json", j.dump(2) + "\n");
    emitJson(io, j);
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------

int runReport(const ReportArgs& args, Io io) {
  return guarded(io, [&] {
    if (args.format != "csv" && args.format != "json") {
      throw InvalidArgument("--format must be csv or json");
    }
    if (args.precision < 0 || args.precision > 17) throw InvalidArgument("--precision out of range");
    const bool asJson = args.format == "json";
    const int prec = args.precision;

    auto cfg = loadConfig(args.config);
    CityId city = parseCityId(args.city);
    const auto& zone = cfg.zone(city);
    Warehouse wh(warehouseOptions(cfg, true));
    mobility::MobilityMetrics mm(wh, zone);

    auto metricOr = [&](MetricKind fallback) {
      return args.metric.empty() ? fallback : parseMetricKind(args.metric);
    };
    auto location = [&] { return parseLocationId(args.location); };
    auto window = [&] {
      mobility::TimeWindow w{instantArg(args.from, zone, "from"), instantArg(args.to, zone, "to")};
      if (!(w.from < w.to)) throw InvalidArgument("--from must precede --to");
      return w;
    };

    switch (args.kind) {
      case ReportKind::Weekly: {
        if (args.metric.empty()) throw InvalidArgument("--metric is required");
        auto metric = parseMetricKind(args.metric);
        std::vector<WeekKey> weeks;
        for (const auto& w : args.weeks) weeks.push_back(parseWeekKey(w));
        if (weeks.empty()) throw InvalidArgument("--weeks is required");
        mobility::WeeklyOptions opts;
        opts.agg = args.agg ? mobility::parseAggregation(*args.agg) : mobility::defaultAggregation(metric);
        opts.cadence = cfg.cadenceFor(city, metric);
        auto rows = mm.weeklyDelta({city, metric, location()}, weeks,
                                   mobility::BaselineSpec::parse(args.baseline), opts);
        if (asJson) {
          json arr = json::array();
          for (const auto& d : rows) arr.push_back(serialize::toJson(d));
          emitJson(io, arr);
        } else {
          io.out << "week,pct_change\n";
          for (const auto& d : rows) {
            io.out << d.week.toString() << ','
                   << (d.pctChange ? fixed(*d.pctChange, prec) : std::string(mobility::toString(d.status)))
                   << '\n';
          }
        }
        return kExitOk;
      }
      case ReportKind::Profile: {
        auto key = SeriesKey{city, metricOr(MetricKind::TravelTime), location()};
        if (args.days.empty()) throw InvalidArgument("--days is required");
        std::vector<mobility::HourlyProfile> profiles;
        for (const auto& d : args.days) profiles.push_back(mm.hourlyProfile(key, parseDate(d)));
        if (asJson) {
          json arr = json::array();
          for (const auto& p : profiles) arr.push_back(serialize::toJson(p));
          emitJson(io, arr);
        } else {
          io.out << "hour";
          for (const auto& p : profiles) io.out << ',' << formatDate(p.day);
          io.out << '\n';
          for (std::size_t h = 0; h < 24; ++h) {
            io.out << h;
            for (const auto& p : profiles) io.out << ',' << fixedOr(p.values[h], prec, "");
            io.out << '\n';
          }
        }
        return kExitOk;
      }
      case ReportKind::Reliability: {
        auto key = SeriesKey{city, metricOr(MetricKind::TravelTime), location()};
        auto w = window();
        auto recs = wh.query(key, w.from, w.to);
        auto r = mobility::computeReliability(recs, w, args.dayStart, args.dayEnd, zone);
        if (asJson) {
          emitJson(io, serialize::toJson(r, zone));
        } else {
          io.out << "from,to,n,mean,std_dev\n"
                 << serialize::timestamp(w.from, zone) << ',' << serialize::timestamp(w.to, zone)
                 << ',' << r.n << ',' << fixedOr(r.mean, prec, "no_data") << ','
                 << fixedOr(r.stdDev, prec, "no_data") << '\n';
        }
        return kExitOk;
      }
      case ReportKind::Speeding: {
        std::vector<LocationId> segs;
        for (const auto& s : args.segments) segs.push_back(parseLocationId(s));
        auto s = mm.speedingShare(city, window(), args.limitMph, segs);
        if (asJson) {
          emitJson(io, serialize::toJson(s));
        } else {
          io.out << "limit_mph,over,total,share\n"
                 << formatNumber(s.limitMph) << ',' << s.over << ',' << s.total << ','
                 << fixedOr(s.share, std::max(prec, 4), "no_data") << '\n';
        }
        return kExitOk;
      }
      case ReportKind::Fatality: {
        auto f = mm.fatalityRate(city, window());
        if (asJson) {
          emitJson(io, serialize::toJson(f));
        } else {
          io.out << "fatalities,crashes,rate_per_1000\n"
                 << formatNumber(f.fatalities) << ',' << formatNumber(f.crashes) << ','
                 << fixedOr(f.ratePer1000, prec, "undefined") << '\n';
        }
        return kExitOk;
      }
      case ReportKind::Gvw: {
        auto key = SeriesKey{city, MetricKind::TruckGvw, location()};
        auto edges = args.bins.empty() ? mobility::defaultGvwEdges() : args.bins;
        auto hist = mm.gvwBins(key, window(), edges);
        std::optional<mobility::GvwHistogram> base;
        if (args.baselineFrom || args.baselineTo) {
          mobility::TimeWindow bw{instantArg(args.baselineFrom.value_or(""), zone, "baseline-from"),
                                  instantArg(args.baselineTo.value_or(""), zone, "baseline-to")};
          if (!(bw.from < bw.to)) throw InvalidArgument("--baseline-from must precede --baseline-to");
          base = mm.gvwBins(key, bw, edges);
        }
        if (asJson) {
          auto j = serialize::toJson(hist);
          if (base) j["deltas"] = serialize::toJson(mobility::gvwBinDeltas(hist, *base));
          emitJson(io, j);
        } else if (base) {
          io.out << "lower,upper,count,baseline,pct_change\n";
          for (const auto& d : mobility::gvwBinDeltas(hist, *base)) {
            io.out << formatNumber(d.lower) << ',' << (d.upper ? formatNumber(*d.upper) : "") << ','
                   << d.current << ',' << d.baseline << ',' << fixedOr(d.pctChange, prec, "undefined")
                   << '\n';
          }
        } else {
          io.out << "lower,upper,count\n";
          for (const auto& b : hist.bins) {
            io.out << formatNumber(b.lower) << ',' << (b.upper ? formatNumber(*b.upper) : "") << ','
                   << b.count << '\n';
          }
        }
        return kExitOk;
      }
    }
    return kExitError;
  });
}

// ---------------------------------------------------------------------------

int runServe(const ServeArgs& args, Io io) {
  return guarded(io, [&] {
    auto cfg = loadConfig(args.config);
    auto [host, port] = api::parseListen(args.listen.value_or(cfg.api.listen));
    Warehouse wh(warehouseOptions(cfg, true));
    api::ApiService service(wh, cfg);

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    api::HttpServer server(service, cfg.api);
    int bound = server.start(host, port);
    io.out << json{{"listening", host + ":" + std::to_string(bound)}}.dump() << std::endl;
    int sig = 0;
    sigwait(&signals, &sig);
    io.err << "citypulse: shutting down on signal " << sig << '\n';
    server.stop();
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------

int runVerify(const VerifyArgs& args, Io io) {
  return guarded(io, [&] {
    fs::path root;
    if (args.warehouse) {
      root = *args.warehouse;
    } else if (args.config) {
      root = loadConfig(*args.config).warehousePath;
    } else {
      throw InvalidArgument("either --config or --warehouse is required");
    }
    if (!fs::is_directory(root)) throw WarehouseUnavailable("warehouse not found: " + root.string());

    WarehouseOptions opts;
    opts.root = root;
    VerifyReport report;
    try {
      report = Warehouse(opts).verify();
    } catch (const WarehouseUnavailable& e) {
      io.err << "citypulse: " << e.what() << "; verifying without recovery\n";
      report = verifyStore(root);
    } catch (const CorruptSegment& e) {
      report = verifyStore(root);
      if (report.ok) {
        report.ok = false;
        report.problems.push_back(e.what());
      }
    }
    json j = {{"ok", report.ok},
              {"batches", report.batches},
              {"segments", report.segments},
              {"items", report.items},
              {"problems", report.problems},
              {"recovered", report.recovered}};
    emitJson(io, j);
    return report.ok ? kExitOk : kExitFlagged;
  });
}

}  // namespace citypulse::cli
