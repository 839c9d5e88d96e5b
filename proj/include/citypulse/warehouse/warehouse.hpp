// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "citypulse/core/types.hpp"

namespace citypulse {

enum class AppendResult { Applied, Duplicate };

std::string_view toString(AppendResult r);

struct BatchPayload {
  std::string batchId;
  std::string feedId;
  std::vector<TimeSeriesRecord> records;
  std::vector<DetectionFrame> frames;
};

/// Material preserved verbatim for audit: either a whole quarantined batch or
/// just the rejected rows of an accepted one.
struct QuarantineItem {
  std::string batchId;
  std::string feedId;
  std::string reportJson;
  std::string rejectedLines;
  /// Raw accepted payload; empty when the batch itself was accepted.
  std::string payload;
};

/// Destination for validated batches. The warehouse is the production sink;
/// tests substitute failing sinks to exercise retry paths.
class BatchSink {
 public:
  virtual ~BatchSink() = default;
  virtual AppendResult append(const BatchPayload& batch) = 0;
  virtual void quarantine(const QuarantineItem& item) = 0;
};

struct IngestLedgerEntry {
  std::uint64_t seq{0};
  std::string batchId;
  std::string feedId;
  Instant appendedAt{};
  std::uint64_t recordCount{0};
  /// Relative segment path -> item count written for this batch.
  std::vector<std::pair<std::string, std::uint64_t>> segments;
};

struct SeriesInfo {
  SeriesKey key;
  std::uint64_t count{0};
  Instant first{};
  Instant last{};
};

struct CameraInfo {
  CityId city;
  LocationId camera;
  std::uint64_t count{0};
  Instant first{};
  Instant last{};
};

struct VerifyReport {
  bool ok{true};
  std::uint64_t batches{0};
  std::uint64_t segments{0};
  std::uint64_t items{0};
  std::vector<std::string> problems;
  /// Actions taken by crash recovery when the store was opened for writing.
  std::vector<std::string> recovered;
};

struct WarehouseOptions {
  std::filesystem::path root;
  bool readOnly{false};
  /// Appends that would grow the store beyond this many bytes fail with StorageFull.
  std::optional<std::uint64_t> maxBytes;
  /// Records older than this (relative to `clock()`) are hidden from queries.
  std::optional<std::chrono::milliseconds> retention;
  std::function<Instant()> clock;
  /// Test hook invoked at named points inside append (`segment_written`,
  /// `before_ledger`, `ledger_torn`, `after_ledger`).
  std::function<void(std::string_view)> crashHook;
};

/// Append-only time-series store.
///
/// Layout under `root`:
///   LOCK                       advisory writer lock
///   ledger.log                 one line per committed batch, CRC-protected
///   series/<city>/<metric>/<location>/<seq>.seg
///   frames/<city>/<camera>/<seq>.seg
///   quarantine/<batch>/...     rejected rows and quarantined batches
///
/// A batch becomes visible only once its ledger line is durable; segments
/// without a ledger line are orphans and are removed by recovery on open.
class Warehouse : public BatchSink {
 public:
  explicit Warehouse(WarehouseOptions options);
  ~Warehouse() override;

  Warehouse(const Warehouse&) = delete;
  Warehouse& operator=(const Warehouse&) = delete;

  AppendResult append(const BatchPayload& batch) override;
  void quarantine(const QuarantineItem& item) override;

  /// Half-open [from, to), ascending by timestamp with insertion-order ties.
  /// When revisions exist for a timestamp only the latest one is returned.
  std::vector<TimeSeriesRecord> query(const SeriesKey& key, Instant from, Instant to) const;
  std::vector<DetectionFrame> queryFrames(const CityId& city, const LocationId& camera,
                                          Instant from, Instant to) const;
  std::vector<SeriesInfo> listSeries(const std::optional<CityId>& city = std::nullopt) const;
  std::vector<CameraInfo> listCameras(const std::optional<CityId>& city = std::nullopt) const;
  std::vector<IngestLedgerEntry> ledger() const;

  /// Number of committed batches.
  std::uint64_t highWaterMark() const;
  /// Loads batches committed by other processes since the last load.
  bool refresh();
  /// Re-reads every committed segment and checks checksums and counts.
  VerifyReport verify() const;
  /// Recovery actions performed when this instance was opened.
  const std::vector<std::string>& recoveryLog() const noexcept { return recovered_; }

  const std::filesystem::path& root() const noexcept { return options_.root; }

  /// Opaque in-memory snapshot; defined in the implementation file.
  struct State;

 private:
  void recover();
  void loadLedgerFrom(std::uint64_t offset, bool tolerateTornTail);
  std::shared_ptr<const State> snapshot() const;
  std::uint64_t storeBytes() const;
  void hook(std::string_view point) const;

  WarehouseOptions options_;
  int lockFd_{-1};
  mutable std::mutex stateMutex_;
  std::mutex writeMutex_;
  std::shared_ptr<const State> state_;
  std::uint64_t ledgerOffset_{0};
  std::vector<std::string> recovered_;
};

/// Checks ledger checksums, segment checksums and counts without loading the
/// store into memory. Takes no lock and performs no recovery.
VerifyReport verifyStore(const std::filesystem::path& root);

std::string encodePathComponent(std::string_view s);

/// Ledger lines carry a trailing CRC32 over the preceding bytes.
std::string formatLedgerLine(const IngestLedgerEntry& e);
std::optional<IngestLedgerEntry> parseLedgerLine(std::string_view line);

}  // namespace citypulse
