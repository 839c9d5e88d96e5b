// SPDX-License-Identifier: Apache-2.0
#include <httplib.h>

#include <thread>

#include "citypulse/api/service.hpp"
#include "citypulse/core/errors.hpp"

namespace citypulse::api {

struct HttpServer::Impl {
  ApiService& service;
  ApiSettings settings;
  httplib::Server server;
  std::thread thread;

  Impl(ApiService& s, ApiSettings st) : service(s), settings(std::move(st)) {
    server.Get(R"(/.*)", [this](const httplib::Request& req, httplib::Response& res) {
      QueryParams params;
      for (const auto& [k, v] : req.params) params.emplace(k, v);
      auto out = service.handle(req.path, params);
      res.status = out.status;
      res.set_content(out.body, "application/json");
      cors(res);
    });
    server.Options(R"(/.*)", [this](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
      cors(res);
      res.set_header("Access-Control-Allow-Methods", "GET, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
    });
  }

  void cors(httplib::Response& res) const {
    if (!settings.corsOrigin.empty()) {
      res.set_header("Access-Control-Allow-Origin", settings.corsOrigin);
      res.set_header("Vary", "Origin");
    }
  }
};

HttpServer::HttpServer(ApiService& service, ApiSettings settings)
    : impl_(std::make_unique<Impl>(service, std::move(settings))) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw InvalidArgument("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void HttpServer::runForeground(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) {
    throw InvalidArgument("cannot listen on " + host + ":" + std::to_string(port));
  }
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace citypulse::api
