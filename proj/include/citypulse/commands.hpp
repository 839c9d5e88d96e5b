// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

// Subcommand bodies of the `citypulse` binary. Each returns the process exit
// code and writes machine-readable output to `out`, diagnostics to `err`.
//
// Exit codes:
//   0  success (ingest: batch accepted; verify: store consistent)
//   1  error (bad arguments, unreadable input, configuration problems)
//   2  ingest/replay: a batch was quarantined; verify: problems found
namespace citypulse::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitFlagged = 2;

struct Io {
  std::ostream& out;
  std::ostream& err;
};

struct IngestArgs {
  std::filesystem::path config;
  std::string feed;
  std::filesystem::path input;
  std::optional<std::string> now;  // RFC 3339; defaults to the system clock
  std::optional<std::string> batchId;
};
int runIngest(const IngestArgs& args, Io io);

/// Files live in `<dir>/<feedId>/`; each file is one batch. Batches are
/// delivered in order of their latest timestamp, which is also the ingest clock.
struct ReplayArgs {
  std::filesystem::path config;
  std::filesystem::path dir;
  double speed{0};  // 0 replays without pauses
  unsigned workers{4};
};
int runReplay(const ReplayArgs& args, Io io);

struct ComplyArgs {
  std::filesystem::path input;
  std::filesystem::path outDir;
  double thresholdMeters{1.8288};
  double heightMeters{1.70};
  double minBoxHeightPx{8.0};
  double confidenceCutoff{0.5};
  std::string timeZone{"UTC"};
};
int runComply(const ComplyArgs& args, Io io);

enum class ReportKind { Weekly, Profile, Reliability, Speeding, Fatality, Gvw };

struct ReportArgs {
  ReportKind kind{ReportKind::Weekly};
  std::filesystem::path config;
  std::string city;
  std::string metric;
  std::string location;
  std::string format{"csv"};
  int precision{2};
  // weekly
  std::vector<std::string> weeks;
  std::string baseline{"prior_year"};
  std::optional<std::string> agg;
  // profile
  std::vector<std::string> days;
  // windowed reports
  std::string from;
  std::string to;
  int dayStart{7};
  int dayEnd{19};
  double limitMph{25};
  std::vector<std::string> segments;
  std::vector<double> bins;
  std::optional<std::string> baselineFrom;
  std::optional<std::string> baselineTo;
};
int runReport(const ReportArgs& args, Io io);

struct ServeArgs {
  std::filesystem::path config;
  std::optional<std::string> listen;
};
/// Blocks until SIGINT or SIGTERM.
int runServe(const ServeArgs& args, Io io);

struct VerifyArgs {
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> warehouse;
};
int runVerify(const VerifyArgs& args, Io io);

}  // namespace citypulse::cli
