#include "nist/scenario.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nist/digest.hpp"
#include "nist/orchestrator.hpp"

namespace nist {

namespace {

using nlohmann::json;

ResourceVec demand_from(const json& j) {
  ResourceVec v;
  v.cpu_mc = j.value("cpu_mc", std::int64_t{0});
  v.mem_mib = j.value("mem_mib", std::int64_t{0});
  v.gpu_units = j.value("gpu_units", std::int64_t{0});
  v.link_bw_mbps = j.value("link_bw_mbps", std::int64_t{0});
  return v;
}

json read_document(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NistError(ErrorCode::ParseError, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return load_document(buf.str());
}

// The timeline driver owns everything a scheduled closure needs to touch.
struct Run {
  SimEnv env;
  EventLog log;
  Orchestrator orch;
  std::vector<std::string> violations;
  std::vector<std::string> request_ids;
  bool ticking = false;
  LogicalTime tick_period = 1000;
  LogicalTime end_ms = 0;

  Run(std::uint64_t seed, const std::filesystem::path& events_path, OrchestratorConfig cfg)
      : env(seed), log(events_path), orch(env, log, std::move(cfg)) {}
};

void note_violation(Run& run, const std::string& what) {
  // Recorded, not thrown: the run continues so the summary shows everything.
  run.violations.push_back(what);
}

// Ledger balance on every node plus the refcount shadow: each NIF instance is
// held exactly as often as live NIS instances list it.
void check_invariants(Run& run, const SimEvent& ev) {
  try {
    run.env.audit();
  } catch (const NistError& e) {
    note_violation(run, "ledger drift after event '" + ev.kind + "' at " +
                            std::to_string(ev.at) + ": " + e.what());
  }
  for (const auto& node_id : run.env.node_ids()) {
    if (!run.env.allocated(node_id).fits_within(run.env.node(node_id).capacity)) {
      note_violation(run, "node " + node_id + " over capacity after event '" + ev.kind +
                              "' at " + std::to_string(ev.at));
    }
  }
  std::map<std::string, int> shadow;
  for (const auto& [nis_id, nis] : run.orch.nis_instances()) {
    switch (nis.state) {
      case NisState::CreatingNIFs:
      case NisState::Reserving:
      case NisState::Interconnecting:
      case NisState::Running:
      case NisState::Updating:
      case NisState::Terminating:
        for (const auto& iid : nis.nif_instance_ids) ++shadow[iid];
        break;
      default:
        break;
    }
  }
  for (const auto& [iid, inst] : run.orch.nif_manager().instances()) {
    int expected = shadow.count(iid) ? shadow.at(iid) : 0;
    if (inst.refcount != expected) {
      note_violation(run, "refcount drift on " + iid + " after event '" + ev.kind + "' at " +
                              std::to_string(ev.at) + ": held " + std::to_string(inst.refcount) +
                              ", shadow " + std::to_string(expected));
    }
  }
}


void onboard_descriptors(Run& run, const json& doc, const std::filesystem::path& base_dir) {
  for (const auto& entry : doc.value("onboard", json::array())) {
    json manifest = entry.is_string()
                        ? read_document(base_dir / entry.get<std::string>())
                        : entry;
    const std::string kind = manifest.value("kind", "");
    std::string id;
    std::string name;
    std::string version;
    if (kind == "NIFDescriptor") {
      NifDescriptor nifd = parse_nifd(manifest);
      ValidationReport report = validate_descriptor(nifd);
      if (!report.valid) {
        std::string fields;
        for (const auto& f : report.missing_mandatory) fields += (fields.empty() ? "" : ", ") + f;
        throw NistError(ErrorCode::InvalidDescriptor,
                        "NIFD '" + nifd.name + "' is invalid: missing " + fields);
      }
      id = run.orch.catalog().onboard(nifd);
      name = nifd.name;
      version = nifd.version.str();
    } else if (kind == "NISDescriptor") {
      NisDescriptor nisd = parse_nisd(manifest);
      id = run.orch.catalog().onboard(nisd);
      name = nisd.name;
      version = nisd.version.str();
    } else {
      throw NistError(ErrorCode::InvalidDescriptor, "onboard entry has unsupported kind '" +
                                                        kind + "'");
    }
    run.log.emit(run.env.now(), "CSOI", "descriptor_onboarded", name, "ok",
                 json{{"id", id},
                      {"kind", kind == "NIFDescriptor" ? "nifd" : "nisd"},
                      {"version", version}});
  }
}

void schedule_models(Run& run, const json& doc) {
  for (const auto& m : doc.value("models", json::array())) {
    LogicalTime at = m.value("at_ms", std::int64_t{0});
    run.env.schedule(at, "scenario.model", json{{"nif_name", m.at("nif_name")}},
                     [&run, m](const SimEvent&) {
                       ModelImage img;
                       img.nif_name = m.at("nif_name").get<std::string>();
                       img.version = SemVer::parse(m.value("version", "1.0.0"));
                       img.metric = parse_learning_metric(m.value("metric", "accuracy"));
                       img.test_score = m.at("test_score").get<double>();
                       img.platform = parse_platform(m.value("platform", "cpu"));
                       img.input_format = m.value("input_format", "");
                       for (const auto& d : m.value("dependencies", json::array())) {
                         img.dependencies.push_back(
                             {d.at("name").get<std::string>(),
                              SemVer::parse(d.value("version", "1.0.0"))});
                       }
                       json blob{{"nif_name", img.nif_name},
                                 {"version", img.version.str()},
                                 {"params", m.value("params", json::object())}};
                       img.blob_ref = run.orch.catalog().put_blob(canonical_dump(blob));
                       std::string id = run.orch.catalog().register_model(img);
                       run.log.emit(run.env.now(), "CSOI", "model_registered", id, "ok",
                                    json{{"nif_name", img.nif_name},
                                         {"version", img.version.str()},
                                         {"test_score", img.test_score}});
                     });
  }
}

void schedule_faults(Run& run, const json& doc) {
  for (const auto& f : doc.value("faults", json::array())) {
    LogicalTime at = f.value("at_ms", std::int64_t{0});
    std::string node = f.at("node").get<std::string>();
    bool fault = f.value("fault", true);
    run.env.schedule(at, "scenario.fault", json{{"node", node}, {"fault", fault}},
                     [&run, node, fault](const SimEvent&) { run.env.set_fault(node, fault); });
  }
}

void schedule_requests(Run& run, const json& doc) {
  for (const auto& r : doc.value("requests", json::array())) {
    LogicalTime at = r.value("at_ms", std::int64_t{0});
    run.env.schedule(at, "scenario.request", json{{"kind", r.at("kind")}},
                     [&run, r](const SimEvent&) {
                       LifecycleRequest req;
                       req.request_id = r.value("id", "");
                       req.sender = r.value("sender", "ops");
                       req.kind = parse_request_kind(r.at("kind").get<std::string>());
                       req.payload = r.value("payload", json::object());
                       req.auth_token = r.value("token", "tok-admin");
                       run.request_ids.push_back(run.orch.submit(std::move(req)));
                     });
  }
}

void bind_behaviors(Run& run, const json& doc) {
  for (const auto& b : doc.value("behaviors", json::array())) {
    const std::string type = b.at("type").get<std::string>();
    if (type == "anomaly_scale") {
      SimEnv::AnomalyScaleBehavior beh;
      beh.nif_name = b.at("nif").get<std::string>();
      beh.service_id = b.at("service").get<std::string>();
      beh.theta = b.value("theta", 0.8);
      beh.period_ms = b.value("period_ms", std::int64_t{1000});
      run.env.bind_anomaly_scale(beh);
    } else if (type == "relocation") {
      SimEnv::RelocationBehavior beh;
      beh.nif_name = b.at("nif").get<std::string>();
      beh.service_id = b.at("service").get<std::string>();
      if (b.contains("weights")) {
        const json& w = b["weights"];
        beh.weights.cpu = w.value("cpu", beh.weights.cpu);
        beh.weights.mem = w.value("mem", beh.weights.mem);
        beh.weights.storage = w.value("storage", beh.weights.storage);
        beh.weights.latency = w.value("latency", beh.weights.latency);
      }
      beh.period_ms = b.value("period_ms", std::int64_t{10000});
      run.env.bind_relocation(beh);
    } else {
      throw NistError(ErrorCode::InvalidSpec, "unknown behavior type '" + type + "'");
    }
    run.ticking = true;
  }
}

// Self-rescheduling driver: evaluate every bound behavior each period and
// route whatever they propose through the policy gate.
void schedule_tick(Run& run, LogicalTime at) {
  if (at > run.end_ms) return;
  run.env.schedule(at, "nif.tick", json::object(), [&run, at](const SimEvent&) {
    std::vector<ProposedAction> proposals = run.env.run_scenario_nifs(run.env.now());
    if (!proposals.empty()) run.orch.handle_proposals(proposals);
    schedule_tick(run, at + run.tick_period);
  });
}

// Post-hoc sweep over executed actions: any two on the same service whose
// class pair resolves temporally must be separated by at least the window.
void check_temporal_spacing(Run& run) {
  struct Executed {
    LogicalTime t;
    std::string nif;
    ActionClass action;
  };
  std::map<std::string, std::vector<Executed>> per_service;
  for (const auto& rec : run.log.records()) {
    if (rec.action != "action_executed" || rec.outcome != "ok") continue;
    per_service[rec.subject].push_back(
        {rec.t, rec.actor, parse_action_class(rec.detail.at("action").get<std::string>())});
  }
  for (const auto& [service, actions] : per_service) {
    for (std::size_t i = 0; i < actions.size(); ++i) {
      for (std::size_t j = i + 1; j < actions.size(); ++j) {
        MatrixEntry entry = run.orch.matrix().at(actions[i].action, actions[j].action);
        if (entry.kind != ResolutionKind::Temporal) continue;
        LogicalTime gap = actions[j].t - actions[i].t;
        if (gap < entry.window_ms) {
          note_violation(run, "temporal conflict on " + service + ": " + actions[i].nif +
                                  " at " + std::to_string(actions[i].t) + " and " +
                                  actions[j].nif + " at " + std::to_string(actions[j].t) +
                                  " inside a " + std::to_string(entry.window_ms) + " ms window");
        }
      }
    }
  }
}

json build_summary(Run& run, std::uint64_t seed) {
  json requests = json::object();
  for (const auto& id : run.request_ids) {
    RequestStatus st = run.orch.request_status(id);
    requests[id] = {{"kind", request_kind_name(st.kind)},
                    {"done", st.done},
                    {"outcome", st.outcome}};
  }
  json instances = json::object();
  for (const auto& [id, nis] : run.orch.nis_instances()) {
    instances[id] = {{"nisd", nis.nisd_ref}, {"state", nis_state_name(nis.state)}};
  }
  json nodes = json::object();
  for (const auto& node_id : run.env.node_ids()) {
    nodes[node_id] = {{"capacity", resource_to_json(run.env.node(node_id).capacity)},
                      {"allocated", resource_to_json(run.env.allocated(node_id))},
                      {"available", resource_to_json(run.env.available(node_id))}};
  }
  json gate{{"allowed", 0}, {"delayed", 0}, {"denied", 0}};
  std::int64_t executed = 0;
  for (const auto& rec : run.log.records()) {
    if (rec.actor == "PolicyIC" && rec.action == "gate_decision") {
      if (rec.outcome == "ok") gate["allowed"] = gate["allowed"].get<int>() + 1;
      else if (rec.outcome == "delayed") gate["delayed"] = gate["delayed"].get<int>() + 1;
      else gate["denied"] = gate["denied"].get<int>() + 1;
    }
    if (rec.action == "action_executed" && rec.outcome == "ok") ++executed;
  }
  return json{{"seed", seed},
              {"end_ms", run.end_ms},
              {"events", run.log.records().size()},
              {"requests", requests},
              {"nis_instances", instances},
              {"final_nodes", nodes},
              {"gate", gate},
              {"actions_executed", executed},
              {"violations", run.violations}};
}

}  // namespace

void apply_topology(SimEnv& env, const json& doc) {
  for (const auto& n : doc.value("nodes", json::array())) {
    SimNode node;
    node.node_id = n.at("id").get<std::string>();
    node.tier = parse_node_tier(n.value("tier", "edge"));
    node.capacity = demand_from(n);
    env.add_node(node);
    if (doc.value("default_streams", true)) env.add_default_streams(node.node_id);
  }
  for (const auto& s : doc.value("streams", json::array())) {
    MetricStream stream;
    stream.source_id = s.at("source_id").get<std::string>();
    stream.node_id = s.at("node").get<std::string>();
    stream.service_id = s.value("service", "");
    stream.kind = parse_metric_kind(s.at("kind").get<std::string>());
    stream.period_ms = s.value("period_ms", std::int64_t{1000});
    stream.mean = s.at("mean").get<double>();
    stream.sigma = s.value("sigma", 0.0);
    stream.phi = s.value("phi", 0.7);
    for (const auto& w : s.value("spikes", json::array())) {
      stream.spikes.push_back(SpikeWindow{w.at("from_ms").get<LogicalTime>(),
                                          w.at("to_ms").get<LogicalTime>(),
                                          w.at("value").get<double>()});
    }
    env.add_stream(stream);
  }
  for (const auto& s : doc.value("services", json::array())) {
    SimService svc;
    svc.service_id = s.at("id").get<std::string>();
    svc.node_id = s.at("node").get<std::string>();
    svc.replicas = s.value("replicas", 1);
    svc.replica_demand = demand_from(s.value("demand", json::object()));
    env.add_service(svc);
  }
}

json desk_topology() {
  json nodes = json::array();
  nodes.push_back(json{{"id", "cloud0"}, {"tier", "cloud"}, {"cpu_mc", 16000},
                       {"mem_mib", 65536}, {"gpu_units", 2}, {"link_bw_mbps", 10000}});
  for (const char* id : {"edge0", "edge1"}) {
    nodes.push_back(json{{"id", id}, {"tier", "edge"}, {"cpu_mc", 4000}, {"mem_mib", 8192},
                         {"gpu_units", 2}, {"link_bw_mbps", 10000}});
  }
  return json{{"nodes", nodes}, {"default_streams", true}};
}

ScenarioReport run_scenario(const json& doc, const std::filesystem::path& base_dir,
                            const std::filesystem::path& out_dir,
                            std::optional<std::uint64_t> seed_override) {
  std::filesystem::create_directories(out_dir);
  std::uint64_t seed = seed_override.value_or(doc.value("seed", std::uint64_t{1}));

  OrchestratorConfig cfg = OrchestratorConfig::desk_defaults();
  cfg.data_dir = out_dir / "state";

  ScenarioReport report;
  report.events_path = out_dir / "events.log";
  report.summary_path = out_dir / "summary.json";

  Run run(seed, report.events_path, std::move(cfg));
  run.end_ms = doc.value("end_ms", std::int64_t{0});

  apply_topology(run.env, doc);
  onboard_descriptors(run, doc, base_dir);
  schedule_models(run, doc);
  schedule_faults(run, doc);
  schedule_requests(run, doc);
  bind_behaviors(run, doc);
  if (run.ticking) schedule_tick(run, 0);

  run.env.set_post_event_hook([&run](const SimEvent& ev) { check_invariants(run, ev); });
  run.env.advance(run.end_ms);
  run.env.run_to_idle();

  check_temporal_spacing(run);

  report.summary = build_summary(run, seed);
  report.exit_code = run.violations.empty() ? 0 : 1;
  std::ofstream out(report.summary_path);
  out << report.summary.dump(2) << "\n";
  return report;
}

ScenarioReport run_scenario_file(const std::filesystem::path& scenario_path,
                                 const std::filesystem::path& out_dir,
                                 std::optional<std::uint64_t> seed_override) {
  json doc = read_document(scenario_path);
  return run_scenario(doc, scenario_path.parent_path(), out_dir, seed_override);
}

}  // namespace nist
