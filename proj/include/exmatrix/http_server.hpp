#pragma once

#include <memory>
#include <ostream>
#include <string>

// The library default of 5 drops connections under bursts of parallel reads.
#ifndef CPPHTTPLIB_LISTEN_BACKLOG
#define CPPHTTPLIB_LISTEN_BACKLOG 256
#endif
#include "httplib.h"

#include "exmatrix/service.hpp"

namespace exmatrix {

/// Binds a Service to a cpp-httplib server. All methods funnel into
/// Service::handle; CORS headers are added when `cors` is set.
inline std::unique_ptr<httplib::Server> make_http_server(Service& service, bool cors = false) {
  auto server = std::make_unique<httplib::Server>();
  auto dispatch = [&service, cors](const httplib::Request& req, httplib::Response& res) {
    QueryParams query(req.params.begin(), req.params.end());
    const auto out = service.handle(req.method, req.path, query, req.body);
    res.status = out.status;
    if (cors) res.set_header("Access-Control-Allow-Origin", "*");
    if (out.status != 204) res.set_content(out.body, out.content_type);
  };
  server->Get(R"(/.*)", dispatch);
  server->Post(R"(/.*)", dispatch);
  server->Delete(R"(/.*)", dispatch);
  if (cors) {
    server->Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
  }
  return server;
}

/// Blocking serve loop used by the CLI.
inline int run_server(const std::string& host, int port, const std::string& data_dir, bool cors, std::ostream& log) {
  Service::Options options;
  if (!data_dir.empty()) options.data_dir = data_dir;
  Service service(options);
  auto server = make_http_server(service, cors);
  if (!server->bind_to_port(host, port)) throw DataError("cannot bind " + host + ":" + std::to_string(port));
  log << "listening on http://" << host << ":" << port << " (" << service.size() << " models loaded)" << std::endl;
  return server->listen_after_bind() ? 0 : 2;
}

}  // namespace exmatrix
