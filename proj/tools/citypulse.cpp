// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <iostream>

#include "citypulse/commands.hpp"

using namespace citypulse::cli;

namespace {

void addReportCommon(CLI::App* cmd, ReportArgs& a) {
  cmd->add_option("--config", a.config, "Configuration file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--city", a.city, "City id")->required();
  cmd->add_option("--format", a.format, "csv or json")->capture_default_str();
  cmd->add_option("--precision", a.precision, "Decimal places in CSV output")->capture_default_str();
}

void addWindow(CLI::App* cmd, ReportArgs& a) {
  cmd->add_option("--from", a.from, "Window start (RFC 3339 or YYYY-MM-DD, inclusive)")->required();
  cmd->add_option("--to", a.to, "Window end (RFC 3339 or YYYY-MM-DD, exclusive)")->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"citypulse: urban mobility and sociability analytics"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "citypulse 0.1.0");
  Io io{std::cout, std::cerr};
  std::function<int()> action;

  IngestArgs ingestArgs;
  auto* ingest = app.add_subcommand("ingest", "Parse, score and store one batch; prints the quality report");
  ingest->add_option("--config", ingestArgs.config, "Configuration file")->required()->check(CLI::ExistingFile);
  ingest->add_option("--feed", ingestArgs.feed, "Feed id from the configuration")->required();
  ingest->add_option("--input", ingestArgs.input, "Batch file (CSV or NDJSON)")->required();
  ingest->add_option("--now", ingestArgs.now, "Evaluation time for timeliness (RFC 3339)");
  ingest->add_option("--batch-id", ingestArgs.batchId, "Override the content-derived batch id");
  ingest->footer("Exit codes: 0 accepted, 2 quarantined, 1 error.");
  ingest->callback([&] { action = [&] { return runIngest(ingestArgs, io); }; });

  ReplayArgs replayArgs;
  auto* replay = app.add_subcommand("replay", "Replay recorded batch files in order of completion");
  replay->add_option("--config", replayArgs.config, "Configuration file")->required()->check(CLI::ExistingFile);
  replay->add_option("--dir", replayArgs.dir, "Directory holding one sub-directory per feed id")->required();
  replay->add_option("--speed", replayArgs.speed, "Time compression factor; 0 disables pauses")->capture_default_str();
  replay->add_option("--workers", replayArgs.workers, "Parser threads")->capture_default_str();
  replay->footer("Exit codes: 0 all accepted, 2 some quarantined, 1 error.");
  replay->callback([&] { action = [&] { return runReplay(replayArgs, io); }; });

  ComplyArgs complyArgs;
  auto* comply = app.add_subcommand("comply", "Distancing compliance over detection frames");
  comply->add_option("--input", complyArgs.input, "Detection frames (NDJSON)")->required()->check(CLI::ExistingFile);
  comply->add_option("--out", complyArgs.outDir, "Output directory for frames.csv and summary.json")->required();
  comply->add_option("--threshold-m", complyArgs.thresholdMeters, "Distancing threshold in meters")->capture_default_str();
  comply->add_option("--height-m", complyArgs.heightMeters, "Assumed person height in meters")->capture_default_str();
  comply->add_option("--min-box-h", complyArgs.minBoxHeightPx, "Minimum box height in pixels")->capture_default_str();
  comply->add_option("--confidence-cutoff", complyArgs.confidenceCutoff, "Drop detections below this confidence")->capture_default_str();
  comply->add_option("--tz", complyArgs.timeZone, "Zone for summary timestamps")->capture_default_str();
  comply->callback([&] { action = [&] { return runComply(complyArgs, io); }; });

  ReportArgs reportArgs;
  auto* report = app.add_subcommand("report", "Metric tables from warehouse data");
  report->require_subcommand(1);

  auto* weekly = report->add_subcommand("weekly", "Weekly percent change against a baseline");
  addReportCommon(weekly, reportArgs);
  weekly->add_option("--metric", reportArgs.metric, "Metric token")->required();
  weekly->add_option("--location", reportArgs.location, "Location id")->required();
  weekly->add_option("--weeks", reportArgs.weeks, "Week Mondays (YYYY-MM-DD)")->required()->delimiter(',');
  weekly->add_option("--baseline", reportArgs.baseline, "prior_year or ref:YYYY-MM-DD")->capture_default_str();
  weekly->add_option("--agg", reportArgs.agg, "sum or mean");
  weekly->callback([&] { reportArgs.kind = ReportKind::Weekly; });

  auto* profile = report->add_subcommand("profile", "Hourly profile for one or more days");
  addReportCommon(profile, reportArgs);
  profile->add_option("--metric", reportArgs.metric, "Metric token (default travel_time)");
  profile->add_option("--location", reportArgs.location, "Location id")->required();
  profile->add_option("--days", reportArgs.days, "Days (YYYY-MM-DD)")->required()->delimiter(',');
  profile->callback([&] { reportArgs.kind = ReportKind::Profile; });

  auto* reliability = report->add_subcommand("reliability", "Daytime travel-time standard deviation");
  addReportCommon(reliability, reportArgs);
  addWindow(reliability, reportArgs);
  reliability->add_option("--metric", reportArgs.metric, "Metric token (default travel_time)");
  reliability->add_option("--location", reportArgs.location, "Location id")->required();
  reliability->add_option("--day-start", reportArgs.dayStart, "First daytime hour")->capture_default_str();
  reliability->add_option("--day-end", reportArgs.dayEnd, "End of daytime (exclusive hour)")->capture_default_str();
  reliability->callback([&] { reportArgs.kind = ReportKind::Reliability; });

  auto* speeding = report->add_subcommand("speeding", "Share of segments above the speed limit");
  addReportCommon(speeding, reportArgs);
  addWindow(speeding, reportArgs);
  speeding->add_option("--limit", reportArgs.limitMph, "Speed limit in mph")->capture_default_str();
  speeding->add_option("--segments", reportArgs.segments, "Segment ids (default: all)")->delimiter(',');
  speeding->callback([&] { reportArgs.kind = ReportKind::Speeding; });

  auto* fatality = report->add_subcommand("fatality", "Fatalities per 1,000 crashes");
  addReportCommon(fatality, reportArgs);
  addWindow(fatality, reportArgs);
  fatality->callback([&] { reportArgs.kind = ReportKind::Fatality; });

  auto* gvw = report->add_subcommand("gvw", "Truck gross vehicle weight histogram");
  addReportCommon(gvw, reportArgs);
  addWindow(gvw, reportArgs);
  gvw->add_option("--location", reportArgs.location, "Weigh-in-motion station id")->required();
  gvw->add_option("--bins", reportArgs.bins, "Bin edges in kips, starting at 0")->delimiter(',');
  gvw->add_option("--baseline-from", reportArgs.baselineFrom, "Baseline window start");
  gvw->add_option("--baseline-to", reportArgs.baselineTo, "Baseline window end");
  gvw->callback([&] { reportArgs.kind = ReportKind::Gvw; });

  report->callback([&] { action = [&] { return runReport(reportArgs, io); }; });

  ServeArgs serveArgs;
  auto* serve = app.add_subcommand("serve", "Run the read-only HTTP API");
  serve->add_option("--config", serveArgs.config, "Configuration file")->required()->check(CLI::ExistingFile);
  serve->add_option("--listen", serveArgs.listen, "host:port (port 0 picks a free port)");
  serve->callback([&] { action = [&] { return runServe(serveArgs, io); }; });

  VerifyArgs verifyArgs;
  auto* verify = app.add_subcommand("verify", "Run recovery and check every checksum and the ledger");
  verify->add_option("--config", verifyArgs.config, "Configuration file");
  verify->add_option("--warehouse", verifyArgs.warehouse, "Warehouse directory");
  verify->footer("Exit codes: 0 consistent, 2 problems found, 1 error.");
  verify->callback([&] { action = [&] { return runVerify(verifyArgs, io); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitError;
  }
  return action ? action() : kExitError;
}
