#pragma once

// HTTP front door for the orchestrator: bearer-token auth, one endpoint per
// lifecycle operation, request polling, gate submission, and policy listing.
// Lifecycle calls return 202 with a request id; clients poll
// GET /v1/requests/{id} for the outcome.
//
// The sim event loop is single-threaded by design, so every handler takes one
// coarse mutex around submit + drive. Externalized NIO interfaces beyond the
// orchestration surface (the Nio-Ext family) answer 501 until they exist.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "nist/orchestrator.hpp"

namespace httplib {
class Server;
}

namespace nist {

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::uint64_t seed = 1;
  OrchestratorConfig orch = OrchestratorConfig::desk_defaults();
  std::filesystem::path events_path;  // empty keeps the log in memory
  // Simulated infrastructure in the scenario topology shape (nodes / streams
  // / services); null provisions the desk default of one cloud + two edges.
  nlohmann::json topology;
};

class NioServer {
 public:
  explicit NioServer(ServerConfig cfg);
  ~NioServer();

  NioServer(const NioServer&) = delete;
  NioServer& operator=(const NioServer&) = delete;

  // Binds and serves on a background thread; returns the bound port.
  // Throws InvalidState if the address cannot be bound.
  int start();
  void stop();
  bool running() const { return running_; }
  int port() const { return port_; }

  // Direct access for tests and the scenario-free CLI paths; take care to
  // stop() before touching state concurrently.
  Orchestrator& orchestrator() { return orch_; }
  SimEnv& env() { return env_; }

 private:
  void install_routes();

  ServerConfig cfg_;
  SimEnv env_;
  EventLog log_;
  Orchestrator orch_;
  std::unique_ptr<httplib::Server> http_;
  std::thread serving_;
  std::mutex mu_;  // serializes every handler against the sim loop
  bool running_ = false;
  int port_ = 0;
};

}  // namespace nist
