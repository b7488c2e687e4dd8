#include "crossgrid/service.hpp"

#include <httplib.h>

namespace crossgrid::service {

using workflow::json;

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

Service::Service(workflow::Engine& engine) : engine_(engine), server_(std::make_unique<httplib::Server>()) {
  server_->Post("/requests", [this](const httplib::Request& req, httplib::Response& res) {
    std::optional<selection::SelectionRule> rule;
    try {
      if (req.has_param("rule")) rule = selection::SelectionRule::parse(req.get_param_value("rule"));
      reply(res, 202, {{"request_id", engine_.submit(req.body, rule)}});
    } catch (const workflow::InvalidRequest& e) {
      reply(res, 400, {{"error", e.what()}});
    } catch (const store::Unavailable& e) {
      reply(res, 503, {{"error", e.what()}});
    } catch (const Error& e) {
      reply(res, 400, {{"error", e.what()}});
    }
  });
  server_->Get(R"(/requests/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      reply(res, 200, engine_.poll(req.matches[1]).to_json());
    } catch (const NotFound& e) {
      reply(res, 404, {{"error", e.what()}});
    }
  });
  server_->Get(R"(/requests/([^/]+)/result)", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      auto r = engine_.poll(req.matches[1]);
      if (r.state != workflow::RequestState::completed) {
        json body{{"request_id", r.request_id}, {"state", std::string(workflow::to_string(r.state))}};
        if (!r.failure_reason.empty()) body["failure_reason"] = r.failure_reason;
        reply(res, 409, body);
        return;
      }
      auto full = r.to_json();
      reply(res, 200, {{"request_id", r.request_id}, {"forecast", full["forecast"]}, {"selection", full["selection"]}});
    } catch (const NotFound& e) {
      reply(res, 404, {{"error", e.what()}});
    }
  });
}

Service::~Service() { stop(); }

int Service::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void Service::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace crossgrid::service
