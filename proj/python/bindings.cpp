// SPDX-License-Identifier: Apache-2.0
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <sstream>

#include "citypulse/api/service.hpp"
#include "citypulse/commands.hpp"
#include "citypulse/config.hpp"
#include "citypulse/core/errors.hpp"
#include "citypulse/core/time.hpp"
#include "citypulse/ingest/ingest.hpp"
#include "citypulse/mobility/metrics.hpp"
#include "citypulse/serialize.hpp"
#include "citypulse/sociability/geometry.hpp"

namespace py = pybind11;
using namespace citypulse;

namespace {

sociability::ProjectionParams projection(double thresholdM, double heightM, double minBoxH,
                                         double confidenceCutoff, bool includePairs) {
  sociability::ProjectionParams p;
  p.distanceThresholdMeters = thresholdM;
  p.assumedHeightMeters = heightM;
  p.minBoxHeightPx = minBoxH;
  p.confidenceCutoff = confidenceCutoff;
  p.includePairDistances = includePairs;
  p.validate();
  return p;
}

BoundingBox box(const std::tuple<double, double, double, double>& t) {
  return {std::get<0>(t), std::get<1>(t), std::get<2>(t), std::get<3>(t)};
}

std::string analyzeFrameJson(const std::string& line, double thresholdM, double heightM, double minBoxH,
                             double confidenceCutoff, bool includePairs, const std::string& tz) {
  auto p = projection(thresholdM, heightM, minBoxH, confidenceCutoff, includePairs);
  auto frame = frameFromNdjsonLine(line, p.confidenceCutoff).frame;
  return serialize::toJson(sociability::analyzeFrame(frame, p), TimeZone::fromName(tz)).dump();
}

std::string summarizeJson(const std::vector<std::string>& lines, double thresholdM, double heightM,
                          double minBoxH, double confidenceCutoff, const std::string& tz) {
  auto p = projection(thresholdM, heightM, minBoxH, confidenceCutoff, false);
  std::vector<sociability::FrameResult> results;
  Instant first = Instant::max(), last = Instant::min();
  for (const auto& line : lines) {
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    auto frame = frameFromNdjsonLine(line, p.confidenceCutoff).frame;
    first = std::min(first, frame.capturedAt.utc);
    last = std::max(last, frame.capturedAt.utc);
    results.push_back(sociability::analyzeFrame(frame, p));
  }
  if (results.empty()) throw EmptyWindow("no frames given");
  auto s = sociability::summarize(results, first, last + std::chrono::milliseconds{1});
  return serialize::toJson(s, TimeZone::fromName(tz)).dump();
}

std::string evaluateBatchJson(const std::string& configPath, const std::string& feedId, const std::string& raw,
                              const std::string& now) {
  auto cfg = loadConfig(configPath);
  const auto& feed = cfg.feed(feedId);
  auto parsed = ingest::parseBatch(feed, raw);
  auto report = ingest::evaluateBatch(feed, ingest::deriveBatchId(feed.feedId, raw), parsed,
                                      parseRfc3339(now).utc);
  return ingest::toJson(report).dump();
}

/// Read-only API over a configured warehouse, usable without HTTP.
class PyApi {
 public:
  explicit PyApi(const std::string& configPath) : config_(loadConfig(configPath)) {
    WarehouseOptions o;
    o.root = config_.warehousePath;
    o.readOnly = true;
    warehouse_ = std::make_unique<Warehouse>(o);
    service_ = std::make_unique<api::ApiService>(*warehouse_, config_);
  }

  std::pair<int, std::string> get(const std::string& path, const api::QueryParams& params) {
    auto r = service_->handle(path, params);
    return {r.status, r.body};
  }

 private:
  Config config_;
  std::unique_ptr<Warehouse> warehouse_;
  std::unique_ptr<api::ApiService> service_;
};

template <typename Fn>
std::tuple<int, std::string, std::string> capture(Fn&& fn) {
  std::ostringstream out, err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = fn(cli::Io{out, err});
  }
  return {code, out.str(), err.str()};
}

}  // namespace

PYBIND11_MODULE(_citypulse, m) {
  m.doc() = "Native core of citypulse; see the citypulse package for the Python-facing API.";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<EmptyWindow>(m, "EmptyWindow", PyExc_LookupError);
  py::register_exception<InsufficientData>(m, "InsufficientData", PyExc_LookupError);

  m.def("pair_distance",
        [](const std::tuple<double, double, double, double>& a, const std::tuple<double, double, double, double>& b,
           double heightM) {
          sociability::ProjectionParams p;
          p.assumedHeightMeters = heightM;
          return sociability::pairDistance(box(a), box(b), p);
        },
        py::arg("a"), py::arg("b"), py::arg("height_m") = 1.70);

  m.def("analyze_frame_json", &analyzeFrameJson, py::arg("line"), py::arg("threshold_m") = 1.8288,
        py::arg("height_m") = 1.70, py::arg("min_box_h") = 8.0, py::arg("confidence_cutoff") = 0.5,
        py::arg("include_pairs") = false, py::arg("tz") = "UTC");
  m.def("summarize_json", &summarizeJson, py::arg("lines"), py::arg("threshold_m") = 1.8288,
        py::arg("height_m") = 1.70, py::arg("min_box_h") = 8.0, py::arg("confidence_cutoff") = 0.5,
        py::arg("tz") = "UTC");
  m.def("evaluate_batch_json", &evaluateBatchJson, py::arg("config"), py::arg("feed"), py::arg("raw"),
        py::arg("now"));
  m.def("derive_batch_id", &ingest::deriveBatchId, py::arg("feed"), py::arg("raw"));
  m.def("pct_change", &mobility::pctChange, py::arg("current"), py::arg("baseline"));

  py::class_<PyApi>(m, "Api")
      .def(py::init<const std::string&>(), py::arg("config"))
      .def("get_json", &PyApi::get, py::arg("path"), py::arg("params") = api::QueryParams{});

  m.def("run_ingest",
        [](const std::string& config, const std::string& feed, const std::string& input,
           std::optional<std::string> now) {
          cli::IngestArgs a{config, feed, input, std::move(now), {}};
          return capture([&](cli::Io io) { return cli::runIngest(a, io); });
        },
        py::arg("config"), py::arg("feed"), py::arg("input"), py::arg("now") = py::none());
  m.def("run_comply",
        [](const std::string& input, const std::string& outDir, double thresholdM, double heightM,
           const std::string& tz) {
          cli::ComplyArgs a;
          a.input = input;
          a.outDir = outDir;
          a.thresholdMeters = thresholdM;
          a.heightMeters = heightM;
          a.timeZone = tz;
          return capture([&](cli::Io io) { return cli::runComply(a, io); });
        },
        py::arg("input"), py::arg("out_dir"), py::arg("threshold_m") = 1.8288, py::arg("height_m") = 1.70,
        py::arg("tz") = "UTC");
  m.def("run_verify",
        [](const std::string& warehouse) {
          cli::VerifyArgs a;
          a.warehouse = warehouse;
          return capture([&](cli::Io io) { return cli::runVerify(a, io); });
        },
        py::arg("warehouse"));
}
