// Command-line front end: serve the HTTP API, onboard descriptors into a
// local catalog, run scenario files, and drive a running server's lifecycle
// endpoints.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "httplib.h"
#include "nist/scenario.hpp"
#include "nist/server.hpp"

namespace {

using nlohmann::json;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

json read_document_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw nist::NistError(nist::ErrorCode::ParseError, "cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return nist::load_document(buf.str());
}

// Seed precedence: --seed flag, then NIST_SEED, then the config file. The
// fallback differs per command: serve defaults to 1, run-scenario defers to
// the scenario document's own seed.
std::optional<std::uint64_t> seed_override(const std::optional<std::uint64_t>& flag,
                                           const json& config) {
  if (flag) return flag;
  if (const char* env = std::getenv("NIST_SEED")) {
    return std::strtoull(env, nullptr, 10);
  }
  if (config.contains("seed")) return config["seed"].get<std::uint64_t>();
  return std::nullopt;
}

struct Remote {
  std::string server;
  std::string token;
};

int print_response(const httplib::Result& res) {
  if (!res) {
    std::cerr << "error: cannot reach the server (" << httplib::to_string(res.error()) << ")\n";
    return 2;
  }
  std::cout << res->body;
  if (!res->body.empty() && res->body.back() != '\n') std::cout << "\n";
  return res->status >= 400 ? 1 : 0;
}

httplib::Client make_client(const Remote& remote) {
  httplib::Client cli(remote.server);
  cli.set_default_headers({{"Authorization", "Bearer " + remote.token}});
  return cli;
}

int cmd_serve(const std::string& host, int port, std::uint64_t seed,
              const std::string& data_dir, const std::string& events,
              const std::string& topology_file) {
  nist::ServerConfig cfg;
  cfg.host = host;
  cfg.port = port;
  cfg.seed = seed;
  cfg.orch.data_dir = data_dir;
  cfg.events_path = events;
  if (!topology_file.empty()) cfg.topology = read_document_file(topology_file);
  nist::NioServer server(std::move(cfg));
  int bound = server.start();
  std::cout << "listening on http://" << host << ":" << bound << "\n";
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  return 0;
}

int cmd_onboard(const std::vector<std::string>& files, const std::string& data_dir) {
  nist::Catalog catalog(data_dir);
  for (const auto& path : files) {
    json doc = read_document_file(path);
    const std::string kind = doc.value("kind", "");
    std::string id;
    std::string name;
    if (kind == "NIFDescriptor") {
      nist::NifDescriptor nifd = nist::parse_nifd(doc);
      nist::ValidationReport report = nist::validate_descriptor(nifd);
      if (!report.valid) {
        std::cerr << path << ": invalid NIFD\n";
        for (const auto& m : report.messages) std::cerr << "  " << m << "\n";
        return 1;
      }
      id = catalog.onboard(nifd);
      name = nifd.name;
    } else if (kind == "NISDescriptor") {
      nist::NisDescriptor nisd = nist::parse_nisd(doc);
      id = catalog.onboard(nisd);
      name = nisd.name;
    } else {
      std::cerr << path << ": unsupported document kind '" << kind << "'\n";
      return 1;
    }
    std::cout << name << " -> " << id << "\n";
  }
  return 0;
}

int cmd_run_scenario(const std::string& file, const std::string& out_dir,
                     std::optional<std::uint64_t> seed_flag) {
  nist::ScenarioReport report = nist::run_scenario_file(file, out_dir, seed_flag);
  std::cout << report.summary.dump(2) << "\n";
  if (report.exit_code != 0) {
    std::cerr << "invariant violations recorded; see " << report.summary_path.string() << "\n";
  }
  return report.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"network intelligence stratum orchestrator"};
  app.require_subcommand(1);
  app.fallthrough();  // lets --seed/--data-dir/--config appear after the subcommand

  std::optional<std::uint64_t> seed_flag;
  std::string data_dir;
  std::string config_path;
  app.add_option("--seed", seed_flag, "simulation seed");
  app.add_option("--data-dir", data_dir, "durable catalog/policy directory");
  app.add_option("--config", config_path, "JSON config file");

  Remote remote{"http://127.0.0.1:8080", "tok-admin"};
  auto add_remote = [&](CLI::App* sub) {
    sub->add_option("--server", remote.server, "orchestrator base URL");
    sub->add_option("--token", remote.token, "bearer token");
  };

  // serve
  auto* serve = app.add_subcommand("serve", "run the HTTP orchestrator");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string events_path;
  std::string topology_file;
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "bind port (0 picks one)");
  serve->add_option("--events", events_path, "event log file");
  serve->add_option("--topology", topology_file, "infrastructure document (default: desk topology)");

  // onboard
  auto* onboard = app.add_subcommand("onboard", "validate descriptors into the local catalog");
  std::vector<std::string> onboard_files;
  onboard->add_option("files", onboard_files, "descriptor documents")->required();

  // create
  auto* create = app.add_subcommand("create", "train and register a NIS's missing models");
  std::string nisd_ref;
  std::int64_t epoch_budget = 0;
  create->add_option("--nisd", nisd_ref, "NISD name or document file")->required();
  create->add_option("--epoch-budget", epoch_budget, "training epoch cap");
  add_remote(create);

  // instantiate
  auto* inst = app.add_subcommand("instantiate", "deploy a NIS instance");
  std::string inst_nisd;
  std::string params_json;
  inst->add_option("--nisd", inst_nisd, "NISD name")->required();
  inst->add_option("--params", params_json, "instantiation params as JSON");
  add_remote(inst);

  // update
  auto* update = app.add_subcommand("update", "rebind a NIS to better models");
  std::string instance_id;
  std::vector<std::string> update_nifs;
  std::string update_nifd;
  update->add_option("--instance", instance_id, "NIS instance id")->required();
  update->add_option("--nifs", update_nifs, "member NIFs to reconsider");
  update->add_option("--nifd", update_nifd, "revised NIFD document file");
  add_remote(update);

  // terminate
  auto* term = app.add_subcommand("terminate", "tear a NIS instance down");
  std::string term_id;
  term->add_option("--instance", term_id, "NIS instance id")->required();
  add_remote(term);

  // status
  auto* status = app.add_subcommand("status", "poll a request or inspect an instance");
  std::string status_id;
  status->add_option("id", status_id, "request id (req-…) or NIS instance id")->required();
  add_remote(status);

  // run-scenario
  auto* scenario = app.add_subcommand("run-scenario", "execute a scenario file locally");
  std::string scenario_file;
  std::string scenario_out = "scenario-out";
  scenario->add_option("file", scenario_file, "scenario document")->required();
  scenario->add_option("--out", scenario_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    json config = json::object();
    if (!config_path.empty()) config = read_document_file(config_path);
    if (data_dir.empty()) data_dir = config.value("data_dir", "");
    std::optional<std::uint64_t> seed = seed_override(seed_flag, config);
    if (config.contains("server") && remote.server == "http://127.0.0.1:8080") {
      remote.server = config["server"].get<std::string>();
    }
    if (config.contains("token") && remote.token == "tok-admin") {
      remote.token = config["token"].get<std::string>();
    }

    if (serve->parsed()) {
      if (config.contains("host") && !serve->count("--host")) host = config["host"];
      if (config.contains("port") && !serve->count("--port")) port = config["port"];
      return cmd_serve(host, port, seed.value_or(1), data_dir, events_path, topology_file);
    }
    if (onboard->parsed()) return cmd_onboard(onboard_files, data_dir);
    if (scenario->parsed()) return cmd_run_scenario(scenario_file, scenario_out, seed);

    httplib::Client cli = make_client(remote);
    if (create->parsed()) {
      json payload;
      payload["nisd"] = std::filesystem::exists(nisd_ref)
                            ? read_document_file(nisd_ref)
                            : json(nisd_ref);
      if (epoch_budget > 0) payload["epoch_budget"] = epoch_budget;
      return print_response(cli.Post("/v1/nis", payload.dump(), "application/json"));
    }
    if (inst->parsed()) {
      json payload = json::object();
      if (!params_json.empty()) payload["params"] = json::parse(params_json);
      return print_response(cli.Post("/v1/nis/" + inst_nisd + "/instances", payload.dump(),
                                     "application/json"));
    }
    if (update->parsed()) {
      json payload = json::object();
      if (!update_nifs.empty()) payload["nifs"] = update_nifs;
      if (!update_nifd.empty()) payload["nifd"] = read_document_file(update_nifd);
      return print_response(cli.Patch("/v1/nis/" + instance_id, payload.dump(),
                                      "application/json"));
    }
    if (term->parsed()) {
      return print_response(cli.Delete("/v1/instances/" + term_id));
    }
    if (status->parsed()) {
      std::string path = status_id.rfind("req-", 0) == 0 ? "/v1/requests/" + status_id
                                                         : "/v1/instances/" + status_id;
      return print_response(cli.Get(path));
    }
  } catch (const nist::NistError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
