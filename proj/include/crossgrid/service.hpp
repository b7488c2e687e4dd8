#pragma once

#include <memory>
#include <string>
#include <thread>

#include "crossgrid/workflow.hpp"

namespace httplib {
class Server;
}

namespace crossgrid::service {

/// HTTP front of an Engine.
///
///     POST /requests            body: key=value description  -> 202 {"request_id"}
///     GET  /requests/<id>       -> 200 request record
///     GET  /requests/<id>/result -> 200 forecast, 409 while pending or failed
///
/// Malformed descriptions get 400, unknown ids 404.
class Service {
 public:
  explicit Service(workflow::Engine& engine);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves on a background thread; port 0 picks a free port.
  /// Returns the bound port.
  int start(const std::string& host, int port);
  void stop();

 private:
  workflow::Engine& engine_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace crossgrid::service
