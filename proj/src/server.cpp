#include "nist/server.hpp"

#include <utility>

#include "httplib.h"
#include "nist/scenario.hpp"

namespace nist {

namespace {

using nlohmann::json;

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Unauthorized:
      return 401;
    case ErrorCode::UnknownClass:
    case ErrorCode::UnknownModel:
    case ErrorCode::UnknownNifd:
    case ErrorCode::UnknownNisd:
    case ErrorCode::UnknownNif:
    case ErrorCode::UnknownInstance:
    case ErrorCode::UnknownNode:
    case ErrorCode::UnknownService:
    case ErrorCode::UnknownSource:
    case ErrorCode::UnknownReservation:
    case ErrorCode::UnknownPolicy:
    case ErrorCode::UnknownRun:
    case ErrorCode::UnknownRequest:
    case ErrorCode::UnknownLink:
      return 404;
    case ErrorCode::InsufficientResources:
    case ErrorCode::ConflictUnresolvable:
    case ErrorCode::InvalidState:
    case ErrorCode::VersionConflict:
    case ErrorCode::DuplicateRequest:
    case ErrorCode::DuplicatePolicy:
    case ErrorCode::AlreadyCommitted:
      return 409;
    case ErrorCode::PipelineFailed:
      return 422;
    default:
      return 400;
  }
}

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(2) + "\n", "application/json");
}

void reply_error(httplib::Response& res, const NistError& e) {
  reply_json(res, status_for(e.code()),
             json{{"error", e.what()}, {"code", error_code_name(e.code())}});
}

// "Authorization: Bearer <token>" → token, empty when absent or malformed.
std::string bearer_token(const httplib::Request& req) {
  std::string header = req.get_header_value("Authorization");
  const std::string prefix = "Bearer ";
  if (header.rfind(prefix, 0) != 0) return "";
  return header.substr(prefix.size());
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json body = json::parse(req.body, nullptr, false);
  if (body.is_discarded()) {
    throw NistError(ErrorCode::ParseError, "request body is not valid JSON");
  }
  return body;
}

json status_to_json(const RequestStatus& st) {
  json out{{"request_id", st.request_id},
           {"kind", request_kind_name(st.kind)},
           {"done", st.done},
           {"outcome", st.outcome}};
  if (st.done && !st.result.is_null()) out["result"] = st.result;
  if (!st.message.empty()) out["message"] = st.message;
  return out;
}

json decision_to_json(const GateDecision& d) {
  json out{{"verdict", gate_verdict_name(d.verdict)}, {"reason", d.reason}};
  if (d.verdict == GateVerdict::Delay) out["until"] = d.until;
  if (!d.rule_id.empty()) out["rule_id"] = d.rule_id;
  return out;
}

}  // namespace

NioServer::NioServer(ServerConfig cfg)
    : cfg_(std::move(cfg)),
      env_(cfg_.seed),
      log_(cfg_.events_path),
      orch_(env_, log_, cfg_.orch),
      http_(std::make_unique<httplib::Server>()) {
  apply_topology(env_, cfg_.topology.is_null() ? desk_topology() : cfg_.topology);
  install_routes();
}

NioServer::~NioServer() { stop(); }

int NioServer::start() {
  if (running_) return port_;
  if (cfg_.port == 0) {
    port_ = http_->bind_to_any_port(cfg_.host);
    if (port_ < 0) throw NistError(ErrorCode::InvalidState, "cannot bind " + cfg_.host);
  } else {
    if (!http_->bind_to_port(cfg_.host, cfg_.port)) {
      throw NistError(ErrorCode::InvalidState,
                      "cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
    }
    port_ = cfg_.port;
  }
  running_ = true;
  serving_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
  return port_;
}

void NioServer::stop() {
  if (!running_) return;
  http_->stop();
  serving_.join();
  running_ = false;
}

void NioServer::install_routes() {
  // Wraps a handler with auth, body parsing, the sim mutex, and error→status
  // mapping. `kind` gates which tokens may call the route.
  auto guarded = [this](RequestKind kind,
                        std::function<json(const json& body, const httplib::Request&)> fn) {
    return [this, kind, fn = std::move(fn)](const httplib::Request& req,
                                            httplib::Response& res) {
      try {
        std::string token = bearer_token(req);
        auto it = cfg_.orch.tokens.find(token);
        if (it == cfg_.orch.tokens.end() || !it->second.kinds.count(kind)) {
          throw NistError(ErrorCode::Unauthorized, "token is missing or not allowed");
        }
        json body = parse_body(req);
        std::lock_guard lock(mu_);
        reply_json(res, kind == RequestKind::Query ? 200 : 202, fn(body, req));
      } catch (const NistError& e) {
        reply_error(res, e);
      } catch (const std::exception& e) {
        reply_json(res, 500, json{{"error", e.what()}, {"code", "internal"}});
      }
    };
  };

  // Builds the lifecycle request from the route, submits it, and drives the
  // sim until the queue drains so the caller can poll immediately.
  auto submit_and_drive = [this](RequestKind kind, const std::string& token, json payload) {
    LifecycleRequest lr;
    lr.sender = cfg_.orch.tokens.at(token).sender;
    lr.kind = kind;
    lr.payload = std::move(payload);
    lr.auth_token = token;
    std::string id = orch_.submit(std::move(lr));
    env_.run_to_idle();
    return json{{"request_id", id}, {"status_url", "/v1/requests/" + id}};
  };

  http_->Post("/v1/nis", guarded(RequestKind::Create,
                                 [this, submit_and_drive](const json& body,
                                                          const httplib::Request& req) {
                                   return submit_and_drive(RequestKind::Create,
                                                           bearer_token(req), body);
                                 }));

  http_->Post(R"(/v1/nis/([^/]+)/instances)",
              guarded(RequestKind::Instantiate,
                      [this, submit_and_drive](const json& body, const httplib::Request& req) {
                        json payload = body;
                        if (!payload.contains("nisd")) payload["nisd"] = req.matches[1].str();
                        return submit_and_drive(RequestKind::Instantiate, bearer_token(req),
                                                std::move(payload));
                      }));

  http_->Patch(R"(/v1/nis/([^/]+))",
               guarded(RequestKind::Update,
                       [this, submit_and_drive](const json& body, const httplib::Request& req) {
                         json payload = body;
                         payload["instance_id"] = req.matches[1].str();
                         return submit_and_drive(RequestKind::Update, bearer_token(req),
                                                 std::move(payload));
                       }));

  http_->Delete(R"(/v1/instances/([^/]+))",
                guarded(RequestKind::Terminate,
                        [this, submit_and_drive](const json&, const httplib::Request& req) {
                          return submit_and_drive(RequestKind::Terminate, bearer_token(req),
                                                  json{{"instance_id", req.matches[1].str()}});
                        }));

  http_->Get(R"(/v1/instances/([^/]+))",
             guarded(RequestKind::Query, [this](const json&, const httplib::Request& req) {
               return orch_.query_nis(req.matches[1].str());
             }));

  http_->Get(R"(/v1/requests/([^/]+))",
             guarded(RequestKind::Query, [this](const json&, const httplib::Request& req) {
               return status_to_json(orch_.request_status(req.matches[1].str()));
             }));

  http_->Post("/v1/gate",
              guarded(RequestKind::Query, [this](const json& body, const httplib::Request&) {
                std::vector<ProposedAction> batch;
                for (const auto& a : body.value("actions", json::array())) {
                  ProposedAction p;
                  p.nif_name = a.at("nif_name").get<std::string>();
                  p.service_id = a.at("service_id").get<std::string>();
                  p.action_class = parse_action_class(a.at("action").get<std::string>());
                  p.target_node = a.value("target_node", "");
                  p.at = env_.now();
                  batch.push_back(std::move(p));
                }
                json decisions = json::array();
                for (const auto& d : orch_.handle_proposals(batch)) {
                  decisions.push_back(decision_to_json(d));
                }
                return json{{"decisions", decisions}};
              }));

  http_->Get("/v1/policies",
             guarded(RequestKind::Query, [this](const json&, const httplib::Request&) {
               json out = json::array();
               for (const auto& p : orch_.policy_store().active_policies()) {
                 out.push_back(policy_to_json(p));
               }
               return json{{"policies", out}};
             }));

  // Externalized-NIO companion interfaces: declared, not yet served.
  auto ext_stub = [](const httplib::Request&, httplib::Response& res) {
    reply_json(res, 501,
               json{{"error", "Nio-Ext interface is not implemented"}, {"code", "NotImplemented"}});
  };
  http_->Get(R"(/v1/ext/.*)", ext_stub);
  http_->Post(R"(/v1/ext/.*)", ext_stub);
}

}  // namespace nist
