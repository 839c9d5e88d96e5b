// SPDX-License-Identifier: Apache-2.0
#include "citypulse/warehouse/warehouse.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "citypulse/core/errors.hpp"

namespace citypulse {

namespace fs = std::filesystem;
using namespace std::chrono;

std::string_view toString(AppendResult r) {
  return r == AppendResult::Applied ? "applied" : "duplicate";
}

namespace {

constexpr std::string_view kLedgerFile = "ledger.log";
constexpr std::string_view kSegmentMagic = "CPSEG 1";

std::uint32_t crc32Of(std::string_view data) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
}

std::string hex8(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

[[noreturn]] void throwIo(const std::string& what, int err) {
  std::string msg = what + ": " + std::strerror(err);
  if (err == ENOSPC || err == EDQUOT) throw StorageFull(msg);
  throw WarehouseUnavailable(msg);
}

void writeAll(int fd, std::string_view data, const std::string& what) {
  while (!data.empty()) {
    ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throwIo(what, errno);
    }
    data.remove_prefix(static_cast<size_t>(n));
  }
}

void fsyncDir(const fs::path& dir) {
  int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

/// Writes `data` to a temp file, fsyncs it and renames it into place.
void writeFileDurably(const fs::path& path, std::string_view data) {
  fs::path tmp = path;
  tmp += ".tmp";
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throwIo("open " + tmp.string(), errno);
  try {
    writeAll(fd, data, "write " + tmp.string());
    if (::fsync(fd) != 0) throwIo("fsync " + tmp.string(), errno);
  } catch (...) {
    ::close(fd);
    ::unlink(tmp.c_str());
    throw;
  }
  ::close(fd);
  if (::rename(tmp.c_str(), path.c_str()) != 0) {
    int err = errno;
    ::unlink(tmp.c_str());
    throwIo("rename " + path.string(), err);
  }
  fsyncDir(path.parent_path());
}

std::string readFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptSegment("cannot read " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string segmentName(std::uint64_t seq) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%012llu.seg", static_cast<unsigned long long>(seq));
  return buf;
}

std::string seriesDir(const SeriesKey& k) {
  return "series/" + encodePathComponent(k.city.str()) + "/" + std::string(toString(k.metric)) +
         "/" + encodePathComponent(k.location.str());
}

std::string framesDir(const CityId& city, const LocationId& camera) {
  return "frames/" + encodePathComponent(city.str()) + "/" + encodePathComponent(camera.str());
}

/// Segment: header line, one item per line, footer with CRC32 over the body.
std::string buildSegment(std::string_view kind, const std::vector<std::string>& lines,
                         Instant first, Instant last) {
  std::string body;
  for (const auto& l : lines) {
    body += l;
    body += '\n';
  }
  std::string out(kSegmentMagic);
  out += ' ';
  out += kind;
  out += ' ' + std::to_string(lines.size()) + ' ' +
         std::to_string(first.time_since_epoch().count()) + ' ' +
         std::to_string(last.time_since_epoch().count()) + '\n';
  out += body;
  out += "#CRC32 " + hex8(crc32Of(body)) + ' ' + std::to_string(body.size()) + '\n';
  return out;
}

struct SegmentContents {
  std::string kind;
  std::vector<std::string> lines;
};

SegmentContents readSegment(const fs::path& path) {
  std::string data = readFile(path);
  auto fail = [&](const std::string& why) -> CorruptSegment {
    return CorruptSegment(path.string() + ": " + why);
  };
  auto headerEnd = data.find('\n');
  if (headerEnd == std::string::npos || data.compare(0, kSegmentMagic.size(), kSegmentMagic) != 0) {
    throw fail("bad header");
  }
  std::istringstream header(data.substr(kSegmentMagic.size(), headerEnd - kSegmentMagic.size()));
  SegmentContents seg;
  std::uint64_t count = 0;
  if (!(header >> seg.kind >> count)) throw fail("bad header");

  if (data.size() < 2 || data.back() != '\n') throw fail("missing footer");
  auto footerStart = data.rfind('\n', data.size() - 2);
  if (footerStart == std::string::npos || footerStart < headerEnd) throw fail("missing footer");
  std::string footer = data.substr(footerStart + 1, data.size() - footerStart - 2);
  std::string body = data.substr(headerEnd + 1, footerStart + 1 - (headerEnd + 1));
  char crcHex[16] = {};
  unsigned long long bodyLen = 0;
  if (std::sscanf(footer.c_str(), "#CRC32 %8s %llu", crcHex, &bodyLen) != 2) {
    throw fail("bad footer");
  }
  if (bodyLen != body.size()) throw fail("body length mismatch");
  if (hex8(crc32Of(body)) != crcHex) throw fail("checksum mismatch");

  std::string_view rest(body);
  while (!rest.empty()) {
    auto nl = rest.find('\n');
    seg.lines.emplace_back(rest.substr(0, nl));
    rest.remove_prefix(nl + 1);
  }
  if (seg.lines.size() != count) throw fail("item count mismatch");
  return seg;
}

long long revisionOf(const TimeSeriesRecord& r) {
  auto it = r.meta.find("revision");
  if (it == r.meta.end()) return 0;
  try {
    return std::stoll(it->second);
  } catch (...) {
    return 0;
  }
}

void validateBatchId(const std::string& id, std::string_view what) {
  if (id.empty() || id.size() > 256) throw InvalidArgument(std::string(what) + " must be 1..256 chars");
  for (char c : id) {
    if (c == '\t' || c == '\n' || c == '\r' || c == '|') {
      throw InvalidArgument(std::string(what) + " contains a reserved character");
    }
  }
}

}  // namespace

std::string encodePathComponent(std::string_view s) {
  std::string out;
  for (unsigned char c : s) {
    bool safe = std::isalnum(c) || c == '.' || c == '_' || c == '-';
    if (safe && !(out.empty() && c == '.')) {
      out += static_cast<char>(c);
    } else {
      char buf[4];
      std::snprintf(buf, sizeof buf, "%%%02X", c);
      out += buf;
    }
  }
  return out;
}

std::string formatLedgerLine(const IngestLedgerEntry& e) {
  std::string segs;
  for (const auto& [path, count] : e.segments) {
    if (!segs.empty()) segs += '|';
    segs += path + ':' + std::to_string(count);
  }
  std::string content = std::to_string(e.seq) + '\t' + e.batchId + '\t' + e.feedId + '\t' +
                        std::to_string(e.appendedAt.time_since_epoch().count()) + '\t' +
                        std::to_string(e.recordCount) + '\t' + segs;
  return content + '\t' + hex8(crc32Of(content)) + '\n';
}

std::optional<IngestLedgerEntry> parseLedgerLine(std::string_view line) {
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  auto lastTab = line.rfind('\t');
  if (lastTab == std::string_view::npos) return std::nullopt;
  auto content = line.substr(0, lastTab);
  if (hex8(crc32Of(content)) != line.substr(lastTab + 1)) return std::nullopt;

  std::vector<std::string> f;
  size_t start = 0;
  while (true) {
    auto tab = content.find('\t', start);
    f.emplace_back(content.substr(start, tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  if (f.size() != 6) return std::nullopt;
  IngestLedgerEntry e;
  try {
    e.seq = std::stoull(f[0]);
    e.batchId = f[1];
    e.feedId = f[2];
    e.appendedAt = Instant{milliseconds{std::stoll(f[3])}};
    e.recordCount = std::stoull(f[4]);
    std::string_view segs = f[5];
    while (!segs.empty()) {
      auto bar = segs.find('|');
      auto item = segs.substr(0, bar);
      auto colon = item.rfind(':');
      if (colon == std::string_view::npos) return std::nullopt;
      e.segments.emplace_back(std::string(item.substr(0, colon)),
                              std::stoull(std::string(item.substr(colon + 1))));
      if (bar == std::string_view::npos) break;
      segs.remove_prefix(bar + 1);
    }
  } catch (...) {
    return std::nullopt;
  }
  return e;
}

// ---------------------------------------------------------------------------

struct SeriesData {
  std::vector<TimeSeriesRecord> records;  // stable-sorted by timestamp
  bool hasRevisions{false};
};

struct FrameData {
  std::vector<DetectionFrame> frames;  // sorted by (capturedAt, frameSeq)
};

using CameraKey = std::pair<CityId, LocationId>;

struct Warehouse::State {
  std::map<SeriesKey, std::shared_ptr<const SeriesData>> series;
  std::map<CameraKey, std::shared_ptr<const FrameData>> frames;
  std::vector<IngestLedgerEntry> entries;
  std::set<std::string> batchIds;
};

namespace {

/// Loads segments for a set of ledger entries into `next`, re-sorting only
/// the series and cameras that changed.
void mergeEntries(const fs::path& root, Warehouse::State& next,
                  const std::vector<IngestLedgerEntry>& entries);

}  // namespace

Warehouse::Warehouse(WarehouseOptions options) : options_(std::move(options)) {
  if (!options_.clock) {
    options_.clock = [] { return time_point_cast<milliseconds>(system_clock::now()); };
  }
  state_ = std::make_shared<State>();
  std::error_code ec;
  if (options_.readOnly) {
    if (!fs::exists(options_.root / kLedgerFile)) {
      if (!fs::is_directory(options_.root)) {
        throw WarehouseUnavailable("warehouse not found: " + options_.root.string());
      }
      return;
    }
  } else {
    fs::create_directories(options_.root, ec);
    if (ec) throw WarehouseUnavailable("cannot create " + options_.root.string() + ": " + ec.message());
    auto lockPath = options_.root / "LOCK";
    lockFd_ = ::open(lockPath.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (lockFd_ < 0) throwIo("open " + lockPath.string(), errno);
    if (::flock(lockFd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(lockFd_);
      lockFd_ = -1;
      throw WarehouseUnavailable("warehouse is locked by another writer: " + options_.root.string());
    }
  }
  try {
    if (!options_.readOnly) recover();
    loadLedgerFrom(0, options_.readOnly);
  } catch (...) {
    if (lockFd_ >= 0) {
      ::flock(lockFd_, LOCK_UN);
      ::close(lockFd_);
      lockFd_ = -1;
    }
    throw;
  }
}

Warehouse::~Warehouse() {
  if (lockFd_ >= 0) {
    ::flock(lockFd_, LOCK_UN);
    ::close(lockFd_);
  }
}

void Warehouse::hook(std::string_view point) const {
  if (options_.crashHook) options_.crashHook(point);
}

void Warehouse::recover() {
  auto ledgerPath = options_.root / kLedgerFile;
  std::set<std::string> referenced;
  if (fs::exists(ledgerPath)) {
    std::string data = readFile(ledgerPath);
    size_t pos = 0;
    size_t validEnd = 0;
    size_t lineNo = 0;
    while (pos < data.size()) {
      auto nl = data.find('\n', pos);
      ++lineNo;
      if (nl == std::string::npos) break;  // torn tail
      auto entry = parseLedgerLine(std::string_view(data).substr(pos, nl - pos));
      if (!entry) {
        if (nl + 1 == data.size()) break;  // damaged final line: torn write
        throw CorruptSegment("ledger corrupt at line " + std::to_string(lineNo));
      }
      for (auto& [path, n] : entry->segments) referenced.insert(path);
      pos = nl + 1;
      validEnd = pos;
    }
    if (validEnd < data.size()) {
      if (::truncate(ledgerPath.c_str(), static_cast<off_t>(validEnd)) != 0) {
        throwIo("truncate ledger", errno);
      }
      int fd = ::open(ledgerPath.c_str(), O_WRONLY | O_CLOEXEC);
      if (fd >= 0) {
        ::fsync(fd);
        ::close(fd);
      }
      recovered_.push_back("truncated torn ledger tail (" + std::to_string(data.size() - validEnd) +
                           " bytes)");
    }
  }
  for (const char* top : {"series", "frames"}) {
    auto dir = options_.root / top;
    if (!fs::exists(dir)) continue;
    std::vector<fs::path> doomed;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      auto rel = fs::relative(entry.path(), options_.root).generic_string();
      bool isTmp = entry.path().extension() == ".tmp";
      if (isTmp || !referenced.count(rel)) doomed.push_back(entry.path());
    }
    for (const auto& p : doomed) {
      fs::remove(p);
      recovered_.push_back("removed uncommitted segment " +
                           fs::relative(p, options_.root).generic_string());
    }
  }
}

void Warehouse::loadLedgerFrom(std::uint64_t offset, bool tolerateTornTail) {
  auto ledgerPath = options_.root / kLedgerFile;
  if (!fs::exists(ledgerPath)) return;
  std::string data = readFile(ledgerPath);
  if (data.size() <= offset) return;

  std::vector<IngestLedgerEntry> fresh;
  size_t pos = offset;
  while (pos < data.size()) {
    auto nl = data.find('\n', pos);
    if (nl == std::string::npos) break;  // incomplete line still being written
    auto entry = parseLedgerLine(std::string_view(data).substr(pos, nl - pos));
    if (!entry) {
      if (tolerateTornTail && nl + 1 == data.size()) break;
      throw CorruptSegment("ledger corrupt at byte " + std::to_string(pos));
    }
    fresh.push_back(std::move(*entry));
    pos = nl + 1;
  }
  if (fresh.empty()) return;

  auto next = std::make_shared<State>(*snapshot());
  for (const auto& e : fresh) {
    next->entries.push_back(e);
    next->batchIds.insert(e.batchId);
  }
  mergeEntries(options_.root, *next, fresh);
  {
    std::lock_guard lock(stateMutex_);
    state_ = std::move(next);
  }
  ledgerOffset_ = pos;
}

namespace {

void mergeEntries(const fs::path& root, Warehouse::State& next,
                  const std::vector<IngestLedgerEntry>& entries) {
  std::map<SeriesKey, std::shared_ptr<SeriesData>> touchedSeries;
  std::map<CameraKey, std::shared_ptr<FrameData>> touchedFrames;

  for (const auto& e : entries) {
    for (const auto& [rel, count] : e.segments) {
      auto seg = readSegment(root / rel);
      if (seg.lines.size() != count) {
        throw CorruptSegment(rel + ": ledger count " + std::to_string(count) + " != segment count " +
                             std::to_string(seg.lines.size()));
      }
      if (seg.kind == "records") {
        for (const auto& line : seg.lines) {
          TimeSeriesRecord r;
          try {
            r = recordFromCsvLine(line);
          } catch (const ParseError& err) {
            throw CorruptSegment(rel + ": " + err.what());
          }
          auto key = keyOf(r);
          auto& slot = touchedSeries[key];
          if (!slot) {
            auto it = next.series.find(key);
            slot = it == next.series.end() ? std::make_shared<SeriesData>()
                                           : std::make_shared<SeriesData>(*it->second);
          }
          if (r.meta.count("revision")) slot->hasRevisions = true;
          slot->records.push_back(std::move(r));
        }
      } else if (seg.kind == "frames") {
        for (const auto& line : seg.lines) {
          DetectionFrame f;
          try {
            f = frameFromNdjsonLine(line).frame;
          } catch (const ParseError& err) {
            throw CorruptSegment(rel + ": " + err.what());
          }
          CameraKey key{f.city, f.camera};
          auto& slot = touchedFrames[key];
          if (!slot) {
            auto it = next.frames.find(key);
            slot = it == next.frames.end() ? std::make_shared<FrameData>()
                                           : std::make_shared<FrameData>(*it->second);
          }
          slot->frames.push_back(std::move(f));
        }
      } else {
        throw CorruptSegment(rel + ": unknown segment kind " + seg.kind);
      }
    }
  }
  for (auto& [key, data] : touchedSeries) {
    std::stable_sort(data->records.begin(), data->records.end(),
                     [](const auto& a, const auto& b) { return a.timestamp.utc < b.timestamp.utc; });
    next.series[key] = std::move(data);
  }
  for (auto& [key, data] : touchedFrames) {
    std::stable_sort(data->frames.begin(), data->frames.end(), [](const auto& a, const auto& b) {
      if (a.capturedAt.utc != b.capturedAt.utc) return a.capturedAt.utc < b.capturedAt.utc;
      return a.frameSeq < b.frameSeq;
    });
    next.frames[key] = std::move(data);
  }
}

}  // namespace

std::shared_ptr<const Warehouse::State> Warehouse::snapshot() const {
  std::lock_guard lock(stateMutex_);
  return state_;
}

std::uint64_t Warehouse::storeBytes() const {
  std::uint64_t total = 0;
  std::error_code ec;
  for (auto it = fs::recursive_directory_iterator(options_.root, ec);
       it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) break;
    if (it->is_regular_file(ec)) total += it->file_size(ec);
  }
  return total;
}

AppendResult Warehouse::append(const BatchPayload& batch) {
  if (options_.readOnly) throw WarehouseUnavailable("warehouse opened read-only");
  validateBatchId(batch.batchId, "batchId");
  validateBatchId(batch.feedId, "feedId");
  std::lock_guard writeLock(writeMutex_);

  auto current = snapshot();
  if (current->batchIds.count(batch.batchId)) return AppendResult::Duplicate;

  IngestLedgerEntry entry;
  entry.seq = current->entries.empty() ? 1 : current->entries.back().seq + 1;
  entry.batchId = batch.batchId;
  entry.feedId = batch.feedId;
  entry.appendedAt = options_.clock();
  entry.recordCount = batch.records.size() + batch.frames.size();

  struct PendingSegment {
    std::string rel;
    std::string bytes;
    std::uint64_t count;
  };
  std::vector<PendingSegment> pending;
  {
    std::map<SeriesKey, std::vector<const TimeSeriesRecord*>> bySeries;
    for (const auto& r : batch.records) bySeries[keyOf(r)].push_back(&r);
    for (auto& [key, recs] : bySeries) {
      std::vector<std::string> lines;
      Instant first = Instant::max(), last = Instant::min();
      for (auto* r : recs) {
        lines.push_back(toCsvLine(*r));
        first = std::min(first, r->timestamp.utc);
        last = std::max(last, r->timestamp.utc);
      }
      pending.push_back({seriesDir(key) + "/" + segmentName(entry.seq),
                         buildSegment("records", lines, first, last), recs.size()});
    }
    std::map<CameraKey, std::vector<const DetectionFrame*>> byCamera;
    for (const auto& f : batch.frames) byCamera[{f.city, f.camera}].push_back(&f);
    for (auto& [key, frames] : byCamera) {
      std::vector<std::string> lines;
      Instant first = Instant::max(), last = Instant::min();
      for (auto* f : frames) {
        lines.push_back(toNdjsonLine(*f));
        first = std::min(first, f->capturedAt.utc);
        last = std::max(last, f->capturedAt.utc);
      }
      pending.push_back({framesDir(key.first, key.second) + "/" + segmentName(entry.seq),
                         buildSegment("frames", lines, first, last), frames.size()});
    }
  }

  if (options_.maxBytes) {
    std::uint64_t incoming = 0;
    for (const auto& p : pending) incoming += p.bytes.size();
    if (storeBytes() + incoming > *options_.maxBytes) {
      throw StorageFull("append of " + std::to_string(incoming) + " bytes exceeds store capacity");
    }
  }

  std::vector<fs::path> written;
  try {
    for (const auto& p : pending) {
      auto path = options_.root / p.rel;
      std::error_code ec;
      fs::create_directories(path.parent_path(), ec);
      if (ec) throw WarehouseUnavailable("mkdir " + path.parent_path().string() + ": " + ec.message());
      writeFileDurably(path, p.bytes);
      written.push_back(path);
      entry.segments.emplace_back(p.rel, p.count);
      hook("segment_written");
    }
    for (const char* top : {"series", "frames"}) {
      if (fs::exists(options_.root / top)) fsyncDir(options_.root / top);
    }
    fsyncDir(options_.root);
    hook("before_ledger");

    std::string line = formatLedgerLine(entry);
    auto ledgerPath = options_.root / kLedgerFile;
    int fd = ::open(ledgerPath.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) throwIo("open ledger", errno);
    try {
      if (options_.crashHook) {
        auto half = line.size() / 2;
        writeAll(fd, std::string_view(line).substr(0, half), "write ledger");
        ::fsync(fd);
        hook("ledger_torn");
        writeAll(fd, std::string_view(line).substr(half), "write ledger");
      } else {
        writeAll(fd, line, "write ledger");
      }
      if (::fsync(fd) != 0) throwIo("fsync ledger", errno);
    } catch (...) {
      ::close(fd);
      throw;
    }
    ::close(fd);
    fsyncDir(options_.root);
    ledgerOffset_ += line.size();
  } catch (...) {
    auto ledgerPath = options_.root / kLedgerFile;
    std::error_code ec;
    auto size = fs::file_size(ledgerPath, ec);
    if (!ec && size > ledgerOffset_) {
      [[maybe_unused]] int rc = ::truncate(ledgerPath.c_str(), static_cast<off_t>(ledgerOffset_));
    }
    for (const auto& p : written) fs::remove(p, ec);
    throw;
  }
  hook("after_ledger");

  auto next = std::make_shared<State>(*current);
  next->entries.push_back(entry);
  next->batchIds.insert(entry.batchId);
  // Merge from memory rather than re-reading the files just written.
  {
    std::map<SeriesKey, std::shared_ptr<SeriesData>> touched;
    for (const auto& r : batch.records) {
      auto key = keyOf(r);
      auto& slot = touched[key];
      if (!slot) {
        auto it = next->series.find(key);
        slot = it == next->series.end() ? std::make_shared<SeriesData>()
                                        : std::make_shared<SeriesData>(*it->second);
      }
      if (r.meta.count("revision")) slot->hasRevisions = true;
      slot->records.push_back(r);
    }
    for (auto& [key, data] : touched) {
      std::stable_sort(data->records.begin(), data->records.end(), [](const auto& a, const auto& b) {
        return a.timestamp.utc < b.timestamp.utc;
      });
      next->series[key] = std::move(data);
    }
    std::map<CameraKey, std::shared_ptr<FrameData>> touchedFrames;
    for (const auto& f : batch.frames) {
      CameraKey key{f.city, f.camera};
      auto& slot = touchedFrames[key];
      if (!slot) {
        auto it = next->frames.find(key);
        slot = it == next->frames.end() ? std::make_shared<FrameData>()
                                        : std::make_shared<FrameData>(*it->second);
      }
      slot->frames.push_back(f);
    }
    for (auto& [key, data] : touchedFrames) {
      std::stable_sort(data->frames.begin(), data->frames.end(), [](const auto& a, const auto& b) {
        if (a.capturedAt.utc != b.capturedAt.utc) return a.capturedAt.utc < b.capturedAt.utc;
        return a.frameSeq < b.frameSeq;
      });
      next->frames[key] = std::move(data);
    }
  }
  {
    std::lock_guard lock(stateMutex_);
    state_ = std::move(next);
  }
  return AppendResult::Applied;
}

void Warehouse::quarantine(const QuarantineItem& item) {
  if (options_.readOnly) throw WarehouseUnavailable("warehouse opened read-only");
  validateBatchId(item.batchId, "batchId");
  auto dir = options_.root / "quarantine" / encodePathComponent(item.batchId);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw WarehouseUnavailable("mkdir " + dir.string() + ": " + ec.message());
  writeFileDurably(dir / "report.json", item.reportJson);
  if (!item.rejectedLines.empty()) writeFileDurably(dir / "rejects.txt", item.rejectedLines);
  if (!item.payload.empty()) writeFileDurably(dir / "payload.raw", item.payload);
  fsyncDir(dir.parent_path());
}

std::vector<TimeSeriesRecord> Warehouse::query(const SeriesKey& key, Instant from, Instant to) const {
  if (!(from < to)) throw InvalidArgument("query range must satisfy from < to");
  if (options_.retention) from = std::max(from, options_.clock() - *options_.retention);
  auto snap = snapshot();
  auto it = snap->series.find(key);
  if (it == snap->series.end()) return {};
  const auto& recs = it->second->records;
  auto lo = std::lower_bound(recs.begin(), recs.end(), from,
                             [](const auto& r, Instant t) { return r.timestamp.utc < t; });
  auto hi = std::lower_bound(lo, recs.end(), to,
                             [](const auto& r, Instant t) { return r.timestamp.utc < t; });
  if (!it->second->hasRevisions) return {lo, hi};

  std::vector<TimeSeriesRecord> out;
  for (auto run = lo; run != hi;) {
    auto end = run;
    bool anyRevision = false;
    while (end != hi && end->timestamp.utc == run->timestamp.utc) {
      anyRevision = anyRevision || end->meta.count("revision");
      ++end;
    }
    if (!anyRevision) {
      out.insert(out.end(), run, end);
    } else {
      auto best = run;
      for (auto r = run; r != end; ++r) {
        if (revisionOf(*r) >= revisionOf(*best)) best = r;
      }
      out.push_back(*best);
    }
    run = end;
  }
  return out;
}

std::vector<DetectionFrame> Warehouse::queryFrames(const CityId& city, const LocationId& camera,
                                                   Instant from, Instant to) const {
  if (!(from < to)) throw InvalidArgument("query range must satisfy from < to");
  if (options_.retention) from = std::max(from, options_.clock() - *options_.retention);
  auto snap = snapshot();
  auto it = snap->frames.find({city, camera});
  if (it == snap->frames.end()) return {};
  const auto& frames = it->second->frames;
  auto lo = std::lower_bound(frames.begin(), frames.end(), from,
                             [](const auto& f, Instant t) { return f.capturedAt.utc < t; });
  auto hi = std::lower_bound(lo, frames.end(), to,
                             [](const auto& f, Instant t) { return f.capturedAt.utc < t; });
  return {lo, hi};
}

std::vector<SeriesInfo> Warehouse::listSeries(const std::optional<CityId>& city) const {
  auto snap = snapshot();
  std::vector<SeriesInfo> out;
  for (const auto& [key, data] : snap->series) {
    if (city && key.city != *city) continue;
    if (data->records.empty()) continue;
    out.push_back({key, data->records.size(), data->records.front().timestamp.utc,
                   data->records.back().timestamp.utc});
  }
  return out;
}

std::vector<CameraInfo> Warehouse::listCameras(const std::optional<CityId>& city) const {
  auto snap = snapshot();
  std::vector<CameraInfo> out;
  for (const auto& [key, data] : snap->frames) {
    if (city && key.first != *city) continue;
    if (data->frames.empty()) continue;
    out.push_back({key.first, key.second, data->frames.size(), data->frames.front().capturedAt.utc,
                   data->frames.back().capturedAt.utc});
  }
  return out;
}

std::vector<IngestLedgerEntry> Warehouse::ledger() const { return snapshot()->entries; }

std::uint64_t Warehouse::highWaterMark() const { return snapshot()->entries.size(); }

bool Warehouse::refresh() {
  std::lock_guard writeLock(writeMutex_);
  auto ledgerPath = options_.root / kLedgerFile;
  std::error_code ec;
  auto size = fs::file_size(ledgerPath, ec);
  if (ec || size <= ledgerOffset_) return false;
  auto before = highWaterMark();
  loadLedgerFrom(ledgerOffset_, true);
  return highWaterMark() != before;
}

VerifyReport Warehouse::verify() const {
  auto report = verifyStore(options_.root);
  report.recovered = recovered_;
  return report;
}

VerifyReport verifyStore(const fs::path& root) {
  VerifyReport report;
  auto ledgerPath = root / kLedgerFile;
  if (!fs::exists(ledgerPath)) return report;
  std::string data;
  try {
    data = readFile(ledgerPath);
  } catch (const std::exception& e) {
    report.ok = false;
    report.problems.push_back(e.what());
    return report;
  }
  std::set<std::string> ids;
  std::set<std::string> referenced;
  size_t pos = 0;
  size_t lineNo = 0;
  while (pos < data.size()) {
    ++lineNo;
    auto nl = data.find('\n', pos);
    if (nl == std::string::npos) {
      report.ok = false;
      report.problems.push_back("ledger has an incomplete final line");
      break;
    }
    auto entry = parseLedgerLine(std::string_view(data).substr(pos, nl - pos));
    pos = nl + 1;
    if (!entry) {
      report.ok = false;
      report.problems.push_back("ledger line " + std::to_string(lineNo) + " fails its checksum");
      continue;
    }
    ++report.batches;
    if (!ids.insert(entry->batchId).second) {
      report.ok = false;
      report.problems.push_back("duplicate batch id " + entry->batchId);
    }
    std::uint64_t items = 0;
    for (const auto& [rel, count] : entry->segments) {
      ++report.segments;
      referenced.insert(rel);
      try {
        auto seg = readSegment(root / rel);
        if (seg.lines.size() != count) {
          report.ok = false;
          report.problems.push_back(rel + ": count differs from ledger");
        }
        items += seg.lines.size();
      } catch (const std::exception& e) {
        report.ok = false;
        report.problems.push_back(e.what());
      }
    }
    if (items != entry->recordCount) {
      report.ok = false;
      report.problems.push_back("batch " + entry->batchId + ": ledger says " +
                                std::to_string(entry->recordCount) + " items, segments hold " +
                                std::to_string(items));
    }
    report.items += items;
  }
  for (const char* top : {"series", "frames"}) {
    auto dir = root / top;
    if (!fs::exists(dir)) continue;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (!e.is_regular_file()) continue;
      auto rel = fs::relative(e.path(), root).generic_string();
      if (!referenced.count(rel)) {
        report.ok = false;
        report.problems.push_back("unreferenced segment " + rel);
      }
    }
  }
  return report;
}

}  // namespace citypulse
