#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "httplib.h"
#include "nist/digest.hpp"
#include "nist/scenario.hpp"
#include "nist/server.hpp"
#include "support.hpp"

using namespace nist;
using nlohmann::json;

// ── event log ────────────────────────────────────────────────────────────────

TEST_CASE("event log assigns sequence numbers and keeps time monotone") {
  EventLog log;
  // copy: the next emit may grow the backing vector and move the record
  EventRecord a = log.emit(10, "NIO", "ack", "req-000001", "ok");
  EventRecord b = log.emit(10, "NIO", "ack", "req-000002", "ok");
  CHECK(a.seq == 1);
  CHECK(b.seq == 2);
  CHECK(log.records().size() == 2);
  CHECK(log.records()[0].detail == json::object());

  bool threw = false;
  try {
    log.emit(9, "NIO", "ack", "req-000003", "ok");
  } catch (const NistError& e) {
    threw = true;
    CHECK(e.code() == ErrorCode::OrderViolation);
  }
  CHECK(threw);
  // the failed emit must not have consumed a sequence number
  CHECK(log.emit(10, "NIO", "ack", "req-000004", "ok").seq == 3);
}

TEST_CASE("file-backed log round-trips through its canonical dump") {
  testsupport::TempDir dir;
  auto path = dir.path() / "events.log";
  {
    EventLog log(path);
    log.emit(0, "Sender", "request_submitted", "req-000001", "ok", json{{"kind", "create"}});
    log.emit(5, "NIO", "reject", "req-000001", error_outcome(ErrorCode::UnknownNisd),
             json{{"message", "no such NISD"}});
  }
  std::vector<EventRecord> replayed = EventLog::read_file(path);
  REQUIRE(replayed.size() == 2);
  CHECK(replayed[0].actor == "Sender");
  CHECK(replayed[1].outcome == "error:UnknownNisd");
  CHECK(replayed[1].detail["message"] == "no such NISD");

  // one canonical JSON object per line, keys sorted by the dump
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line ==
        R"({"action":"request_submitted","actor":"Sender","detail":{"kind":"create"},)"
        R"("outcome":"ok","seq":1,"subject":"req-000001","t":0})");
}

TEST_CASE("event json round-trip and outcome helpers") {
  EventRecord r;
  r.t = 42;
  r.seq = 7;
  r.actor = "PolicyIC";
  r.action = "gate_decision";
  r.subject = "svcA";
  r.outcome = "delayed";
  r.detail = json{{"until", 30000}};
  CHECK(event_from_json(event_to_json(r)) == r);
  CHECK(error_outcome(ErrorCode::InsufficientResources) == "error:InsufficientResources");
}

// ── HTTP surface ─────────────────────────────────────────────────────────────

namespace {

struct ApiBench {
  NioServer server;
  httplib::Client client;

  static ServerConfig make_config() {
    ServerConfig cfg;
    cfg.port = 0;
    cfg.seed = 7;
    cfg.topology = desk_topology();
    cfg.topology["services"] = json::array(
        {json{{"id", "svcA"},
              {"node", "edge0"},
              {"replicas", 1},
              {"demand", json{{"cpu_mc", 200}, {"mem_mib", 256}}}}});
    cfg.orch.tokens["tok-viewer"] = AuthEntry{"viewer", {RequestKind::Query}};
    return cfg;
  }

  ApiBench() : server(make_config()), client("127.0.0.1", server.start()) {
    client.set_default_headers({{"Authorization", "Bearer tok-admin"}});
  }

  // Catalog fixtures mirror the shared two-NIF composition.
  void seed_catalog() {
    Catalog& cat = server.orchestrator().catalog();
    cat.onboard(parse_nifd(testsupport::nif1_doc()));
    cat.onboard(parse_nifd(testsupport::nif2_doc()));
    cat.onboard(parse_nisd(testsupport::nisd_doc()));
    for (auto [name, score] : {std::pair{"nif-anomaly", 0.92}, {"nif-relocation", 0.90}}) {
      ModelImage img;
      img.nif_name = name;
      img.version = SemVer{1, 0, 0};
      img.metric = LearningMetric::Accuracy;
      img.test_score = score;
      img.platform = Platform::Cpu;
      img.input_format = "metrics.timeseries.v1";
      if (std::string(name) == "nif-anomaly") img.dependencies = {{"torch", SemVer{2, 1, 0}}};
      img.blob_ref = cat.put_blob(canonical_dump(json{{"nif_name", name}}));
      cat.register_model(img);
    }
  }

  json poll(const std::string& request_id) {
    auto res = client.Get("/v1/requests/" + request_id);
    REQUIRE(res);
    REQUIRE(res->status == 200);
    return json::parse(res->body);
  }
};

}  // namespace

TEST_CASE("lifecycle over HTTP: accepted, polled, queried, terminated") {
  ApiBench b;
  b.seed_catalog();

  auto created = b.client.Post("/v1/nis", json{{"nisd", "nis-anomaly-relocation"}}.dump(),
                               "application/json");
  REQUIRE(created);
  CHECK(created->status == 202);
  json created_body = json::parse(created->body);
  CHECK(created_body["status_url"] == "/v1/requests/req-000001");
  json create_status = b.poll(created_body["request_id"]);
  CHECK(create_status["done"] == true);
  CHECK(create_status["outcome"] == "ok");
  CHECK(create_status["result"]["trained_nifs"].empty());

  auto inst = b.client.Post("/v1/nis/nis-anomaly-relocation/instances", "{}",
                            "application/json");
  REQUIRE(inst);
  CHECK(inst->status == 202);
  json inst_status = b.poll(json::parse(inst->body)["request_id"]);
  CHECK(inst_status["outcome"] == "ok");
  std::string instance_id = inst_status["result"]["instance_id"];
  CHECK(instance_id == "nis-000001");

  auto query = b.client.Get("/v1/instances/" + instance_id);
  REQUIRE(query);
  CHECK(query->status == 200);
  json q = json::parse(query->body);
  CHECK(q["state"] == "Running");
  CHECK(q["nif_instances"].size() == 2);

  auto policies = b.client.Get("/v1/policies");
  REQUIRE(policies);
  json pol = json::parse(policies->body);
  REQUIRE(pol["policies"].size() == 1);
  CHECK(pol["policies"][0]["policy_id"] == "p-000001");

  auto gone = b.client.Delete("/v1/instances/" + instance_id);
  REQUIRE(gone);
  CHECK(gone->status == 202);
  json term_status = b.poll(json::parse(gone->body)["request_id"]);
  CHECK(term_status["outcome"] == "ok");
  CHECK(term_status["result"]["terminated_nifs"].size() == 2);
}

TEST_CASE("gate endpoint applies the stored cooldown across a batch") {
  ApiBench b;
  b.seed_catalog();
  b.client.Post("/v1/nis/nis-anomaly-relocation/instances", "{}", "application/json");
  LogicalTime now = b.server.env().now();

  json batch{{"actions",
              json::array({json{{"nif_name", "nif-anomaly"},
                                {"service_id", "svcA"},
                                {"action", "scale"}},
                           json{{"nif_name", "nif-relocation"},
                                {"service_id", "svcA"},
                                {"action", "relocate"},
                                {"target_node", "edge1"}}})}};
  auto res = b.client.Post("/v1/gate", batch.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  json decisions = json::parse(res->body)["decisions"];
  REQUIRE(decisions.size() == 2);
  CHECK(decisions[0]["verdict"] == "Allow");
  CHECK(decisions[1]["verdict"] == "Delay");
  CHECK(decisions[1]["until"] == now + 30000);
  CHECK(decisions[1]["rule_id"] == "p-000001");
}

TEST_CASE("authentication and authorization map to 401") {
  ApiBench b;
  httplib::Client anon("127.0.0.1", b.server.port());
  auto res = anon.Get("/v1/policies");
  REQUIRE(res);
  CHECK(res->status == 401);

  httplib::Client bad("127.0.0.1", b.server.port());
  bad.set_default_headers({{"Authorization", "Bearer tok-wrong"}});
  res = bad.Get("/v1/policies");
  REQUIRE(res);
  CHECK(res->status == 401);

  // the viewer token may query but not create
  httplib::Client viewer("127.0.0.1", b.server.port());
  viewer.set_default_headers({{"Authorization", "Bearer tok-viewer"}});
  res = viewer.Get("/v1/policies");
  REQUIRE(res);
  CHECK(res->status == 200);
  res = viewer.Post("/v1/nis", "{}", "application/json");
  REQUIRE(res);
  CHECK(res->status == 401);
  CHECK(json::parse(res->body)["code"] == "Unauthorized");
}

TEST_CASE("error statuses: 404 unknowns, 400 malformed, 501 ext") {
  ApiBench b;
  b.seed_catalog();

  auto res = b.client.Get("/v1/instances/nis-000099");
  REQUIRE(res);
  CHECK(res->status == 404);
  CHECK(json::parse(res->body)["code"] == "UnknownInstance");

  res = b.client.Get("/v1/requests/req-000099");
  REQUIRE(res);
  CHECK(res->status == 404);
  CHECK(json::parse(res->body)["code"] == "UnknownRequest");

  res = b.client.Post("/v1/nis", "{not json", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  CHECK(json::parse(res->body)["code"] == "ParseError");

  res = b.client.Get("/v1/ext/knowledge");
  REQUIRE(res);
  CHECK(res->status == 501);
}

TEST_CASE("lifecycle failures surface through the poll, not the accept") {
  ApiBench b;
  // descriptors without models: create must train, and a zero budget cannot
  Catalog& cat = b.server.orchestrator().catalog();
  cat.onboard(parse_nifd(testsupport::nif1_doc()));
  cat.onboard(parse_nifd(testsupport::nif2_doc()));
  cat.onboard(parse_nisd(testsupport::nisd_doc()));

  auto res = b.client.Post("/v1/nis",
                           json{{"nisd", "nis-anomaly-relocation"}, {"epoch_budget", 0}}.dump(),
                           "application/json");
  REQUIRE(res);
  CHECK(res->status == 202);
  json status = b.poll(json::parse(res->body)["request_id"]);
  CHECK(status["done"] == true);
  CHECK(status["outcome"] == "error:PipelineFailed");
}

// ── scenario runner ──────────────────────────────────────────────────────────

TEST_CASE("an empty scenario runs clean and writes its outputs") {
  testsupport::TempDir dir;
  ScenarioReport report = run_scenario(json::object(), dir.path(), dir.path() / "out");
  CHECK(report.exit_code == 0);
  CHECK(report.summary["events"] == 0);
  CHECK(report.summary["violations"].empty());
  CHECK(std::filesystem::exists(report.events_path));
  CHECK(std::filesystem::exists(report.summary_path));
}

TEST_CASE("the seed override beats the document seed") {
  testsupport::TempDir dir;
  json doc{{"seed", 9}, {"end_ms", 0}};
  ScenarioReport by_doc = run_scenario(doc, dir.path(), dir.path() / "a");
  CHECK(by_doc.summary["seed"] == 9);
  ScenarioReport overridden = run_scenario(doc, dir.path(), dir.path() / "b", 123);
  CHECK(overridden.summary["seed"] == 123);
}

TEST_CASE("the packaged lifecycle scenario passes its own invariants") {
  testsupport::TempDir dir;
  ScenarioReport report = run_scenario_file(
      std::filesystem::path(NIST_REPO_ROOT) / "scenarios" / "scenario_lifecycle.json",
      dir.path() / "out");
  CHECK(report.exit_code == 0);
  CHECK(report.summary["violations"].empty());
  for (const auto& [id, req] : report.summary["requests"].items()) {
    CHECK(req["outcome"] == "ok");
  }
}

// ── CLI seed precedence ──────────────────────────────────────────────────────

namespace {

// Runs the installed CLI and captures stdout; returns the parsed summary.
json run_cli_scenario(const std::string& env_prefix, const std::string& args) {
  std::string binary = std::string(NIST_REPO_ROOT) + "/build/tools/nist";
  REQUIRE(std::filesystem::exists(binary));
  std::string cmd = env_prefix + binary + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  pclose(pipe);
  return json::parse(out);
}

}  // namespace

TEST_CASE("the CLI resolves seeds as flag over environment over document") {
  testsupport::TempDir dir;
  auto scenario_path = dir.path() / "tiny.json";
  std::ofstream(scenario_path) << R"({"seed": 5, "end_ms": 0})";
  std::string base = "run-scenario " + scenario_path.string() + " --out " +
                     (dir.path() / "out").string();

  CHECK(run_cli_scenario("", base)["seed"] == 5);
  CHECK(run_cli_scenario("NIST_SEED=77 ", base)["seed"] == 77);
  CHECK(run_cli_scenario("NIST_SEED=77 ", base + " --seed 123")["seed"] == 123);
}
