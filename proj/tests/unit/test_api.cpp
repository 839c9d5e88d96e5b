// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <httplib.h>

#include <cstdlib>

#include "api_golden.hpp"
#include "citypulse/api/service.hpp"
#include "citypulse/config.hpp"
#include "citypulse/core/errors.hpp"
#include "fixtures.hpp"
#include "test_util.hpp"

using namespace citypulse;
using namespace citypulse::api;
using nlohmann::json;
using citypulse::testing::TempDir;

namespace {

struct Store {
  TempDir dir{"citypulse-api"};
  Config config;
  std::unique_ptr<Warehouse> warehouse;
  std::unique_ptr<ApiService> service;

  explicit Store(bool writable = false) {
    auto cfgPath = fixtures::ingestStandardFixture(dir.path());
    config = loadConfig(cfgPath);
    WarehouseOptions o;
    o.root = config.warehousePath;
    o.readOnly = !writable;
    warehouse = std::make_unique<Warehouse>(o);
    service = std::make_unique<ApiService>(*warehouse, config);
  }
};

Store& shared() {
  static Store store;
  return store;
}

json get(ApiService& s, const std::string& path, const QueryParams& params, int expectStatus = 200) {
  auto r = s.handle(path, params);
  CHECK(r.status == expectStatus);
  return json::parse(r.body);
}

}  // namespace

TEST_CASE("golden responses for every route") {
  bool update = std::getenv("UPDATE_GOLDEN") != nullptr;
  for (const auto& outcome : testing::checkGolden(*shared().service, CITYPULSE_GOLDEN_DIR, update)) {
    CAPTURE(outcome.name);
    CAPTURE(outcome.detail);
    CHECK(outcome.ok);
  }
}

TEST_CASE("weekly deltas carry the fixture values") {
  auto body = get(*shared().service, "/v1/metrics/weekly",
                  {{"city", "seattle"}, {"metric", "traffic_volume"}, {"location", "i5_downtown"},
                   {"weeks", "2020-03-30,2020-04-13,2020-04-27,2020-05-11,2020-06-01"}});
  const double expected[] = {-46.91, -41.95, -35.50, -26.31};
  for (int i = 0; i < 4; ++i) {
    CHECK(body["weeks"][i]["status"] == "ok");
    CHECK(body["weeks"][i]["pctChange"].get<double>() == doctest::Approx(expected[i]).epsilon(1e-9));
  }
  CHECK(body["weeks"][4]["status"] == "no_data");
  CHECK(body["weeks"][4]["pctChange"].is_null());
  CHECK(body["agg"] == "sum");
}

TEST_CASE("metric routes match fixture construction") {
  auto& s = *shared().service;
  auto before = get(s, "/v1/metrics/reliability",
                    {{"city", "seattle"}, {"location", "i5_seg"}, {"from", "2020-02-24"}, {"to", "2020-03-02"}});
  CHECK(before["stdDev"].get<double>() == doctest::Approx(6.43).epsilon(1e-9));
  auto after = get(s, "/v1/metrics/reliability",
                   {{"city", "seattle"}, {"location", "i5_seg"}, {"from", "2020-04-30"}, {"to", "2020-05-07"}});
  CHECK(after["stdDev"].get<double>() == doctest::Approx(0.67).epsilon(1e-9));

  auto speeding = get(s, "/v1/metrics/speeding", {{"city", "nyc"}, {"from", "2020-04-15"}, {"to", "2020-04-16"}});
  CHECK(speeding["over"] == 12);
  CHECK(speeding["total"] == 145);
  CHECK(speeding["share"].get<double>() == doctest::Approx(12.0 / 145.0));

  auto fatal = get(s, "/v1/metrics/fatality-rate", {{"city", "nyc"}, {"from", "2020-02-01"}, {"to", "2020-02-22"}});
  CHECK(fatal["ratePer1000"].get<double>() == 1.4);
  auto undefinedRate =
      get(s, "/v1/metrics/fatality-rate", {{"city", "nyc"}, {"from", "2020-06-01"}, {"to", "2020-06-02"}});
  CHECK(undefinedRate["ratePer1000"].is_null());
  CHECK(undefinedRate["rateStatus"] == "undefined");

  auto gvw = get(s, "/v1/metrics/gvw",
                 {{"city", "nyc"}, {"location", "qb"}, {"from", "2020-03-13"}, {"to", "2020-04-13"},
                  {"baselineFrom", "2020-02-03"}, {"baselineTo", "2020-03-13"}});
  auto top = gvw["deltas"].back();
  CHECK(top["current"] == 70);
  CHECK(top["baseline"] == 100);
  CHECK(top["pctChange"].get<double>() == doctest::Approx(-30.0));

  auto summary = get(s, "/v1/sociability/summary",
                     {{"city", "nyc"}, {"camera", "broadway"}, {"from", "2020-04-02"}, {"to", "2020-04-03"}});
  CHECK(summary["avgPedsDensity"].get<double>() == doctest::Approx(3.2));
  CHECK(summary["maxPedsDensity"] == 12);
  CHECK(summary["complianceRate"].get<double>() == doctest::Approx(0.89));
}

TEST_CASE("errors share one schema") {
  auto& s = *shared().service;
  struct Case {
    std::string path;
    QueryParams params;
    int status;
    std::string code;
  };
  std::vector<Case> cases = {
      {"/v1/metrics/weekly", {{"city", "atlantis"}, {"metric", "traffic_volume"}, {"location", "x"}, {"weeks", "2020-03-30"}}, 404, "not_found"},
      {"/v1/metrics/speeding", {{"city", "nyc"}, {"from", "2020-04-15"}}, 400, "bad_request"},
      {"/v1/metrics/speeding", {{"city", "nyc"}, {"from", "2020-04-16"}, {"to", "2020-04-15"}}, 400, "bad_request"},
      {"/v1/metrics/speeding", {{"city", "nyc"}, {"from", "yesterday"}, {"to", "2020-04-15"}}, 400, "bad_request"},
      {"/v1/metrics/speeding", {{"city", "nyc"}, {"from", "2020-04-15"}, {"to", "2020-04-16"}, {"limit", "fast"}}, 400, "bad_request"},
      {"/v1/metrics/weekly", {{"city", "seattle"}, {"metric", "vibes"}, {"location", "x"}, {"weeks", "2020-03-30"}}, 400, "bad_request"},
      {"/v1/metrics/gvw", {{"city", "nyc"}, {"location", "qb"}, {"from", "2020-03-13"}, {"to", "2020-04-13"}, {"bins", "5,10"}}, 400, "bad_request"},
      {"/v1/metrics/reliability", {{"city", "seattle"}, {"location", "i5_seg"}, {"from", "2021-01-01"}, {"to", "2021-01-08"}}, 404, "no_data"},
      {"/v1/sociability/summary", {{"city", "nyc"}, {"camera", "broadway"}, {"from", "2021-01-01"}, {"to", "2021-01-02"}}, 404, "no_data"},
      {"/v1/sociability/frames", {{"city", "nyc"}, {"camera", "broadway"}, {"from", "2020-04-02"}, {"to", "2020-04-03"}, {"cursor", "garbage"}}, 400, "bad_request"},
      {"/v1/compare", {{"view", "weather"}}, 400, "bad_request"},
      {"/v2/anything", {}, 404, "not_found"},
  };
  for (const auto& c : cases) {
    CAPTURE(c.path);
    auto body = get(s, c.path, c.params, c.status);
    CHECK(body["code"] == c.code);
    CHECK(body["message"].is_string());
    for (const auto& [k, v] : body.items()) CHECK((k == "code" || k == "message" || k == "details"));
  }
  auto missing = get(s, "/v1/metrics/speeding", {{"city", "nyc"}, {"from", "2020-04-15"}}, 400);
  CHECK(missing["details"]["parameter"] == "to");
  auto unknown = get(s, "/v1/cities", {{"city", "atlantis"}});
  CHECK(unknown["cities"].empty());
}

TEST_CASE("repeated requests are byte identical") {
  auto& s = *shared().service;
  for (const auto& req : testing::goldenRequests()) {
    CAPTURE(req.name);
    auto a = s.handle(req.path, req.params);
    auto b = s.handle(req.path, req.params);
    CHECK(a.status == b.status);
    CHECK(a.body == b.body);
  }
  CHECK(s.cacheSize() > 0);
}

TEST_CASE("pages partition the frame list") {
  auto& s = *shared().service;
  QueryParams base{{"city", "nyc"}, {"camera", "broadway"}, {"from", "2020-04-02"}, {"to", "2020-04-03"}};
  auto full = base;
  full["limit"] = "1000";
  auto all = get(s, "/v1/sociability/frames", full)["frames"];
  REQUIRE(all.size() == 125);
  for (int limit : {1, 2, 7, 50, 124, 125, 126}) {
    CAPTURE(limit);
    json collected = json::array();
    std::optional<std::string> cursor;
    int pages = 0;
    do {
      auto q = base;
      q["limit"] = std::to_string(limit);
      if (cursor) q["cursor"] = *cursor;
      auto page = get(s, "/v1/sociability/frames", q);
      CHECK(page["frames"].size() <= static_cast<std::size_t>(limit));
      for (const auto& f : page["frames"]) collected.push_back(f);
      cursor = page["nextCursor"].is_null() ? std::nullopt : std::optional(page["nextCursor"].get<std::string>());
      ++pages;
    } while (cursor && pages < 1000);
    CHECK(collected == all);
  }
  auto zero = base;
  zero["limit"] = "0";
  get(s, "/v1/sociability/frames", zero, 400);
}

TEST_CASE("new batches invalidate the cache and ties paginate") {
  Store store(true);
  auto& s = *store.service;
  QueryParams q{{"city", "nyc"}, {"camera", "lobby"}, {"from", "2020-05-01"}, {"to", "2020-05-02"}};
  get(s, "/v1/sociability/summary", q, 404);

  BatchPayload b{"extra", "nyc_broadway", {}, {}};
  for (int i = 0; i < 9; ++i) {
    DetectionFrame f;
    f.city = CityId{"nyc"};
    f.camera = LocationId{"lobby"};
    f.capturedAt = parseRfc3339(i < 6 ? "2020-05-01T12:00:00-04:00" : "2020-05-01T12:00:30-04:00");
    f.frameSeq = i < 4 ? 1 : i;
    f.detections = {{ObjectClass::Person, 0.9, {10.0 * i, 0, 10, 170}}};
    b.frames.push_back(f);
  }
  store.warehouse->append(b);
  auto summary = get(s, "/v1/sociability/summary", q);
  CHECK(summary["frames"] == 9);

  auto full = q;
  full["limit"] = "100";
  auto all = get(s, "/v1/sociability/frames", full)["frames"];
  REQUIRE(all.size() == 9);
  for (int limit = 1; limit <= 10; ++limit) {
    CAPTURE(limit);
    json collected = json::array();
    std::optional<std::string> cursor;
    do {
      auto p = q;
      p["limit"] = std::to_string(limit);
      if (cursor) p["cursor"] = *cursor;
      auto page = get(s, "/v1/sociability/frames", p);
      for (const auto& f : page["frames"]) collected.push_back(f);
      cursor = page["nextCursor"].is_null() ? std::nullopt : std::optional(page["nextCursor"].get<std::string>());
    } while (cursor && collected.size() < 100);
    CHECK(collected == all);
  }
}

TEST_CASE("http server serves routes with cors headers") {
  auto& store = shared();
  ApiSettings settings = store.config.api;
  HttpServer server(*store.service, settings);
  int port = server.start("127.0.0.1", 0);
  REQUIRE(port > 0);
  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(health->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");
  CHECK(health->get_header_value("Content-Type").find("application/json") == 0);

  auto summary = client.Get("/v1/sociability/summary?city=nyc&camera=broadway&from=2020-04-02&to=2020-04-03");
  REQUIRE(summary);
  CHECK(summary->status == 200);
  CHECK(summary->body == store.service->handle("/v1/sociability/summary", {{"city", "nyc"}, {"camera", "broadway"},
                                                                          {"from", "2020-04-02"}, {"to", "2020-04-03"}}).body);
  auto missing = client.Get("/v1/metrics/weekly?city=atlantis&metric=speed&location=x&weeks=2020-03-30");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  auto preflight = client.Options("/v1/cities");
  REQUIRE(preflight);
  CHECK(preflight->status == 204);
  server.stop();
}

TEST_CASE("listen addresses") {
  CHECK(parseListen("127.0.0.1:8080") == std::pair<std::string, int>{"127.0.0.1", 8080});
  CHECK_THROWS_AS(parseListen("localhost"), InvalidArgument);
  CHECK_THROWS_AS(parseListen("localhost:99999"), InvalidArgument);
}
