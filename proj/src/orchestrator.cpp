#include "nist/orchestrator.hpp"

#include <algorithm>
#include <utility>

namespace nist {

using nlohmann::json;

const char* nis_state_name(NisState s) {
  switch (s) {
    case NisState::Validating: return "Validating";
    case NisState::ResolvingConflicts: return "ResolvingConflicts";
    case NisState::CreatingNIFs: return "CreatingNIFs";
    case NisState::Reserving: return "Reserving";
    case NisState::Interconnecting: return "Interconnecting";
    case NisState::Running: return "Running";
    case NisState::Updating: return "Updating";
    case NisState::Terminating: return "Terminating";
    case NisState::Terminated: return "Terminated";
    case NisState::Failed: return "Failed";
  }
  return "Failed";
}

bool nis_transition_legal(NisState from, NisState to) {
  if (from == to) return false;
  if (to == NisState::Failed) {
    return from != NisState::Terminated && from != NisState::Failed;
  }
  switch (from) {
    case NisState::Validating: return to == NisState::ResolvingConflicts;
    case NisState::ResolvingConflicts: return to == NisState::CreatingNIFs;
    case NisState::CreatingNIFs: return to == NisState::Reserving;
    case NisState::Reserving: return to == NisState::Interconnecting;
    case NisState::Interconnecting: return to == NisState::Running;
    case NisState::Running: return to == NisState::Updating || to == NisState::Terminating;
    case NisState::Updating: return to == NisState::Running;
    case NisState::Terminating: return to == NisState::Terminated;
    case NisState::Terminated:
    case NisState::Failed: return false;
  }
  return false;
}

const char* request_kind_name(RequestKind k) {
  switch (k) {
    case RequestKind::Create: return "create";
    case RequestKind::Instantiate: return "instantiate";
    case RequestKind::Update: return "update";
    case RequestKind::Terminate: return "terminate";
    case RequestKind::Query: return "query";
  }
  return "query";
}

RequestKind parse_request_kind(const std::string& name) {
  if (name == "create") return RequestKind::Create;
  if (name == "instantiate") return RequestKind::Instantiate;
  if (name == "update") return RequestKind::Update;
  if (name == "terminate") return RequestKind::Terminate;
  if (name == "query") return RequestKind::Query;
  throw NistError(ErrorCode::ParseError, "unknown request kind '" + name + "'");
}

ArbitrationPolicy ArbitrationPolicy::defaults() {
  ArbitrationPolicy p;
  p.weights = {{"learning_score", 1.0}};
  p.preference_note = "prefer model precision unless the operator states otherwise";
  return p;
}

OrchestratorConfig OrchestratorConfig::desk_defaults() {
  OrchestratorConfig cfg;
  cfg.tokens["tok-admin"] =
      AuthEntry{"ops",
                {RequestKind::Create, RequestKind::Instantiate, RequestKind::Update,
                 RequestKind::Terminate, RequestKind::Query}};
  return cfg;
}

namespace {

// Concrete dependency pins for a trained image: the weakest version the
// descriptor constraint admits.
std::vector<ConcreteDependency> pin_dependencies(const std::vector<Dependency>& constraints) {
  std::vector<ConcreteDependency> pins;
  for (const auto& dep : constraints) {
    VersionConstraint c = VersionConstraint::parse(dep.constraint);
    SemVer v = c.op == VersionConstraint::Op::Any ? SemVer{1, 0, 0} : c.version;
    pins.push_back(ConcreteDependency{dep.name, v});
  }
  return pins;
}

// Version for the next trained image of a NIF: the descriptor version when no
// image exists yet, otherwise a patch bump past the newest registered one.
SemVer next_image_version(const Catalog& catalog, const NifDescriptor& nifd) {
  std::optional<SemVer> newest;
  for (const auto& img : catalog.list_models()) {
    if (img.nif_name != nifd.name) continue;
    if (!newest || img.version > *newest) newest = img.version;
  }
  if (!newest || *newest < nifd.version) return nifd.version;
  SemVer bumped = *newest;
  bumped.patch += 1;
  return bumped;
}

// Best catalog image for a member under its NISD version constraint; the
// candidate list already comes back best-first.
ModelImage best_image(const Catalog& catalog, const NifDescriptor& nifd,
                      const std::string& constraint) {
  Requirements req = Orchestrator::requirements_from_nifd(nifd);
  VersionConstraint c = VersionConstraint::parse(constraint);
  for (const auto& img : catalog.query_candidates(nifd.name, req)) {
    if (c.satisfied_by(img.version)) return img;
  }
  throw NistError(ErrorCode::UnknownModel,
                  "no image for '" + nifd.name + "' satisfies the deployment requirements");
}

NifDescriptor nifd_or_throw(const Catalog& catalog, const std::string& name,
                            const std::string& constraint = "") {
  auto found = catalog.find_nifd(name, constraint);
  if (!found) {
    throw NistError(ErrorCode::UnknownNifd, constraint.empty()
                                                ? "no onboarded NIFD for '" + name + "'"
                                                : "no onboarded NIFD for '" + name +
                                                      "' satisfying '" + constraint + "'");
  }
  return *found;
}

std::vector<std::string> to_string_vector(const json& arr) {
  std::vector<std::string> out;
  for (const auto& item : arr) out.push_back(item.get<std::string>());
  return out;
}

// Member names in NISD order, first occurrence only; a NIS that lists the
// same NIF twice still deploys (and trains) it once.
std::vector<std::string> member_names(const NisDescriptor& nisd) {
  std::vector<std::string> names;
  for (const auto& ref : nisd.nif_refs) {
    if (std::find(names.begin(), names.end(), ref.name) == names.end()) names.push_back(ref.name);
  }
  return names;
}

std::string constraint_of(const NisDescriptor& nisd, const std::string& name) {
  for (const auto& ref : nisd.nif_refs) {
    if (ref.name == name) return ref.constraint;
  }
  return "";
}

RequestStatus drive_to_done(Orchestrator& orch, SimEnv& env, const std::string& request_id) {
  while (true) {
    RequestStatus st = orch.request_status(request_id);
    if (st.done) {
      if (st.error) throw NistError(*st.error, st.message);
      return st;
    }
    if (env.queue_empty()) {
      throw NistError(ErrorCode::InvalidState,
                      "request '" + request_id + "' stalled with an idle sim queue");
    }
    env.run_to_idle();
  }
}

}  // namespace

// ── construction ─────────────────────────────────────────────────────────────

Orchestrator::Orchestrator(SimEnv& env, EventLog& log, OrchestratorConfig cfg)
    : env_(env),
      log_(log),
      cfg_(std::move(cfg)),
      catalog_(cfg_.data_dir),
      policies_(cfg_.data_dir),
      gate_(policies_),
      nifcm_(env_, catalog_),
      nifm_(env_, catalog_, nifcm_),
      pipelines_(env_, catalog_, cfg_.data_dir) {
  catalog_.set_clock([this] { return env_.now(); });
  policies_.set_clock([this] { return env_.now(); });
}

// ── request intake ───────────────────────────────────────────────────────────

std::string Orchestrator::submit(LifecycleRequest req) {
  std::string id = req.request_id;
  if (id.empty()) {
    id = format_id("req", next_request_++);
  } else if (requests_.count(id) > 0) {
    throw NistError(ErrorCode::DuplicateRequest, "request id '" + id + "' already used");
  }
  req.request_id = id;
  RequestState st;
  st.status.request_id = id;
  st.status.kind = req.kind;
  st.req = std::move(req);
  const LifecycleRequest& stored = requests_.emplace(id, std::move(st)).first->second.req;
  log_.emit(env_.now(), "Sender", "request_submitted", id, "ok",
            json{{"kind", request_kind_name(stored.kind)}, {"sender", stored.sender}});
  env_.schedule(env_.now(), "orch.request", json{{"request_id", id}},
                [this, id](const SimEvent&) { process(id); });
  return id;
}

RequestStatus Orchestrator::request_status(const std::string& request_id) const {
  auto it = requests_.find(request_id);
  if (it == requests_.end()) {
    throw NistError(ErrorCode::UnknownRequest, "no request '" + request_id + "'");
  }
  return it->second.status;
}

const AuthEntry* Orchestrator::authorize(const LifecycleRequest& req) {
  auto it = cfg_.tokens.find(req.auth_token);
  if (it == cfg_.tokens.end()) {
    throw NistError(ErrorCode::Unauthorized, "unknown auth token");
  }
  const AuthEntry& entry = it->second;
  if (!req.sender.empty() && req.sender != entry.sender) {
    throw NistError(ErrorCode::Unauthorized,
                    "token does not belong to sender '" + req.sender + "'");
  }
  if (entry.kinds.count(req.kind) == 0) {
    throw NistError(ErrorCode::Unauthorized, "sender '" + entry.sender + "' may not " +
                                                 request_kind_name(req.kind));
  }
  return &entry;
}

void Orchestrator::process(const std::string& request_id) {
  RequestState& rs = requests_.at(request_id);
  try {
    const AuthEntry* entry = authorize(rs.req);
    log_.emit(env_.now(), "NIO", "authorize", request_id, "ok",
              json{{"sender", entry->sender}, {"kind", request_kind_name(rs.req.kind)}});
  } catch (const NistError& e) {
    log_.emit(env_.now(), "NIO", "authorize", request_id, "denied",
              json{{"sender", rs.req.sender},
                   {"kind", request_kind_name(rs.req.kind)},
                   {"message", e.what()}});
    finish_error(request_id, e);
    return;
  }
  guarded(request_id, [&] {
    switch (rs.req.kind) {
      case RequestKind::Create: handle_create(request_id); break;
      case RequestKind::Instantiate: handle_instantiate(request_id); break;
      case RequestKind::Update: handle_update(request_id); break;
      case RequestKind::Terminate: handle_terminate(request_id); break;
      case RequestKind::Query: handle_query(request_id); break;
    }
  });
}

void Orchestrator::guarded(const std::string& request_id, const std::function<void()>& body) {
  try {
    body();
  } catch (const NistError& e) {
    finish_error(request_id, e);
  } catch (const json::exception& e) {
    finish_error(request_id, NistError(ErrorCode::InvalidSpec, e.what()));
  }
}

void Orchestrator::finish_ok(const std::string& request_id, json result) {
  RequestState& rs = requests_.at(request_id);
  if (rs.status.done) return;
  rs.status.done = true;
  rs.status.outcome = "ok";
  rs.status.result = std::move(result);
  log_.emit(env_.now(), "NIO", "ack", request_id, "ok", rs.status.result);
}

void Orchestrator::finish_error(const std::string& request_id, const NistError& err) {
  RequestState& rs = requests_.at(request_id);
  if (rs.status.done) return;
  rs.status.done = true;
  rs.status.outcome = error_outcome(err.code());
  rs.status.error = err.code();
  rs.status.message = err.what();
  log_.emit(env_.now(), "NIO", "reject", request_id, rs.status.outcome,
            json{{"message", rs.status.message}});
}

// ── create ───────────────────────────────────────────────────────────────────

// Resolves the request's NISD: an inline document is validated and onboarded,
// a string refers to one already in the catalog.
NisDescriptor Orchestrator::resolve_nisd_payload(const json& payload) {
  if (!payload.contains("nisd")) {
    throw NistError(ErrorCode::InvalidSpec, "payload carries no 'nisd'");
  }
  const json& ref = payload["nisd"];
  if (ref.is_string()) {
    auto found = catalog_.find_nisd(ref.get<std::string>());
    if (!found) {
      throw NistError(ErrorCode::UnknownNisd,
                      "no onboarded NISD '" + ref.get<std::string>() + "'");
    }
    return *found;
  }
  NisDescriptor desc = parse_nisd(ref);
  ValidationReport report = validate_descriptor(desc);
  if (!report.valid) {
    std::string fields;
    for (const auto& f : report.missing_mandatory) fields += (fields.empty() ? "" : ", ") + f;
    throw NistError(ErrorCode::InvalidDescriptor,
                    "NISD '" + desc.name + "' is invalid: missing " + fields);
  }
  std::string id = catalog_.onboard(desc);
  log_.emit(env_.now(), "CSOI", "descriptor_onboarded", desc.name, "ok",
            json{{"id", id}, {"kind", "nisd"}, {"version", desc.version.str()}});
  return desc;
}

void Orchestrator::handle_create(const std::string& request_id) {
  RequestState& rs = requests_.at(request_id);
  const json& payload = rs.req.payload;
  NisDescriptor nisd = resolve_nisd_payload(payload);
  std::vector<std::string> members = member_names(nisd);
  for (const auto& name : members) {
    // Each member must already be onboarded; create trains models, it does
    // not invent descriptors.
    try {
      nifd_or_throw(catalog_, name, constraint_of(nisd, name));
    } catch (const NistError& e) {
      if (e.code() != ErrorCode::UnknownNifd) throw;
      throw NistError(ErrorCode::InvalidDescriptor,
                      "NISD '" + nisd.name + "' references '" + name + "' but " + e.what());
    }
  }
  std::int64_t budget = payload.value("epoch_budget", cfg_.default_epoch_budget);
  ensure_images(request_id, nisd, budget,
                [this, request_id, nisd, members](std::vector<std::string> trained,
                                                  std::optional<NistError> err) {
                  guarded(request_id, [&] {
                    if (err) throw *err;
                    for (const auto& name : members) {
                      const NifDescriptor nifd =
                          nifd_or_throw(catalog_, name, constraint_of(nisd, name));
                      ModelImage img = best_image(catalog_, nifd, constraint_of(nisd, name));
                      if (!nifcm_.has_image(img.model_id)) {
                        nifcm_.upload_image(img.model_id);
                        log_.emit(env_.now(), "NIFCManager", "image_uploaded", img.model_id,
                                  "ok", json{{"nif_name", name}});
                      }
                    }
                    finish_ok(request_id,
                              json{{"created_nifs", members}, {"trained_nifs", trained}});
                  });
                });
}

void Orchestrator::ensure_images(const std::string& request_id, const NisDescriptor& nisd,
                                 std::int64_t epoch_budget,
                                 std::function<void(std::vector<std::string>,
                                                    std::optional<NistError>)> done) {
  std::vector<std::string> missing;
  for (const auto& name : member_names(nisd)) {
    const std::string constraint = constraint_of(nisd, name);
    bool have = catalog_.exists(name, constraint);
    log_.emit(env_.now(), "CSOI", "catalog_check", name, "ok",
              json{{"constraint", constraint}, {"image_available", have}});
    if (!have) missing.push_back(name);
  }
  if (missing.empty()) {
    done({}, std::nullopt);
    return;
  }
  auto chain = std::make_shared<TrainChain>();
  chain->request_id = request_id;
  chain->names = std::move(missing);
  chain->epoch_budget = epoch_budget;
  // The chain owns the trained list; hand it to the caller when it ends. The
  // raw pointer is safe: train_next holds the owning shared_ptr on its stack
  // whenever done runs.
  TrainChain* raw = chain.get();
  chain->done = [outer = std::move(done), raw](std::optional<NistError> err) {
    outer(raw->trained, std::move(err));
  };
  train_next(chain);
}

void Orchestrator::train_next(std::shared_ptr<TrainChain> chain) {
  if (chain->idx >= chain->names.size()) {
    chain->done(std::nullopt);
    return;
  }
  const std::string name = chain->names[chain->idx];
  const NifDescriptor nifd = nifd_or_throw(catalog_, name);
  PipelineSpec spec =
      pipeline_spec_for(nifd, chain->epoch_budget, next_image_version(catalog_, nifd));
  std::string run_id;
  try {
    run_id = pipelines_.start_run(spec, [this, chain, name](const PipelineResult& r) {
      json detail{{"nif_name", name},
                  {"status", pipeline_status_name(r.status)},
                  {"final_score", r.final_score}};
      if (r.status == PipelineStatus::Succeeded) {
        detail["model_id"] = *r.model_id;
        log_.emit(env_.now(), "Pipeline", "pipeline_run", r.run_id, "ok", detail);
        log_.emit(env_.now(), "CSOI", "model_registered", *r.model_id, "ok",
                  json{{"nif_name", name}, {"test_score", r.final_score}});
        chain->trained.push_back(name);
        ++chain->idx;
        train_next(chain);
      } else {
        log_.emit(env_.now(), "Pipeline", "pipeline_run", r.run_id,
                  error_outcome(ErrorCode::PipelineFailed), detail);
        chain->done(NistError(ErrorCode::PipelineFailed,
                              "pipeline for '" + name + "' ended " +
                                  std::string(pipeline_status_name(r.status))));
      }
    });
  } catch (const NistError& e) {
    log_.emit(env_.now(), "Pipeline", "pipeline_run", name,
              error_outcome(ErrorCode::PipelineFailed), json{{"message", e.what()}});
    chain->done(NistError(ErrorCode::PipelineFailed,
                          "pipeline for '" + name + "' failed to start: " + e.what()));
    return;
  }
  log_.emit(env_.now(), "Pipeline", "pipeline_started", run_id, "ok",
            json{{"nif_name", name}, {"epoch_budget", chain->epoch_budget}, {"seed", spec.seed}});
}

PipelineSpec Orchestrator::pipeline_spec_for(const NifDescriptor& nifd,
                                             std::int64_t epoch_budget,
                                             const SemVer& image_version) const {
  PipelineSpec spec;
  spec.nif_name = nifd.name;
  spec.data_spec = nifd.data_spec;
  spec.metric = nifd.learning_metric;
  spec.threshold_upper = nifd.threshold_upper.value_or(0.9);
  spec.epoch_budget = epoch_budget;
  // Stable per (deployment seed, NIF, image version): reruns reproduce the
  // same curve, retrains at a bumped version draw a fresh one.
  spec.seed = splitmix64(env_.seed() ^ fnv1a64(nifd.name + "@" + image_version.str()));
  spec.image.nif_name = nifd.name;
  spec.image.version = image_version;
  spec.image.metric = nifd.learning_metric;
  spec.image.platform = Platform::Cpu;
  spec.image.input_format = nifd.data_spec.input_format;
  spec.image.dependencies = pin_dependencies(nifd.dependencies);
  return spec;
}

// ── instantiate ──────────────────────────────────────────────────────────────

void Orchestrator::handle_instantiate(const std::string& request_id) {
  RequestState& rs = requests_.at(request_id);
  const json& payload = rs.req.payload;
  NisDescriptor nisd = resolve_nisd_payload(payload);
  std::vector<NifDescriptor> member_nifds;
  for (const auto& name : member_names(nisd)) {
    try {
      member_nifds.push_back(nifd_or_throw(catalog_, name, constraint_of(nisd, name)));
    } catch (const NistError& e) {
      if (e.code() != ErrorCode::UnknownNifd) throw;
      throw NistError(ErrorCode::InvalidDescriptor,
                      "NISD '" + nisd.name + "' references '" + name + "' but " + e.what());
    }
  }
  std::string instance_id = format_id("nis", next_nis_++);
  NisInstance& nis = nis_instances_[instance_id];
  nis.instance_id = instance_id;
  nis.nisd_ref = nisd.name;
  nis.created_at = env_.now();
  nis.state = NisState::Validating;
  log_.emit(env_.now(), "NIO", "nis_created", instance_id, "ok",
            json{{"nisd", nisd.name}, {"state", nis_state_name(nis.state)}});
  try {
    resolve_conflicts_for(nis, member_nifds);
    set_state(nis, NisState::CreatingNIFs);
  } catch (const NistError&) {
    set_state(nis, NisState::Failed);
    throw;
  }
  std::int64_t budget = payload.value("epoch_budget", cfg_.default_epoch_budget);
  json params = payload.value("params", json::object());
  ensure_images(request_id, nisd, budget,
                [this, request_id, instance_id, nisd, params](std::vector<std::string>,
                                                              std::optional<NistError> err) {
                  guarded(request_id, [&] {
                    NisInstance& nis = nis_instances_.at(instance_id);
                    if (err) {
                      set_state(nis, NisState::Failed);
                      throw *err;
                    }
                    instantiate_members(request_id, nis, nisd, params);
                  });
                });
}

void Orchestrator::resolve_conflicts_for(NisInstance& nis,
                                         const std::vector<NifDescriptor>& member_nifds) {
  set_state(nis, NisState::ResolvingConflicts);
  std::vector<NmapekProfile> fresh;
  std::set<std::string> fresh_names;
  for (const auto& nifd : member_nifds) {
    fresh.push_back(extract_profile(nifd));
    fresh_names.insert(nifd.name);
  }
  std::vector<std::pair<std::string, NmapekProfile>> deployed;
  for (const auto& [id, other] : nis_instances_) {
    if (other.state != NisState::Running && other.state != NisState::Updating) continue;
    for (const auto& iid : other.nif_instance_ids) {
      const std::string& name = nifm_.instance(iid).nif_name;
      // A member that is already deployed resolves to the same running
      // instance at placement: one planner, so no pair to arbitrate.
      if (fresh_names.count(name)) continue;
      deployed.emplace_back(id, extract_profile(nifd_or_throw(catalog_, name)));
    }
  }
  std::vector<NmapekProfile> all = fresh;
  for (const auto& [id, profile] : deployed) all.push_back(profile);
  bool required = initial_assessment(all);
  log_.emit(env_.now(), "PolicyIC", "initial_assessment", nis.instance_id, "ok",
            json{{"conflict_analysis_required", required}});
  if (!required) return;
  std::vector<Conflict> conflicts = detect_conflicts(fresh, deployed, cfg_.matrix);
  for (const auto& c : conflicts) {
    log_.emit(env_.now(), "ConflictResolver", "conflict_detected", c.subject, "ok",
              conflict_to_json(c));
  }
  if (conflicts.empty()) return;
  Resolution res = resolve(conflicts, cfg_.matrix, policies_.active_policies());
  if (res.fallback) {
    log_.emit(env_.now(), "ConflictResolver", "conflicts_resolved", nis.instance_id,
              error_outcome(ErrorCode::ConflictUnresolvable),
              json{{"fallback", true}, {"config_updates", res.config_updates}});
    throw NistError(ErrorCode::ConflictUnresolvable,
                    "no automated resolution for a detected conflict; falling back to the "
                    "last valid configuration requires operator action");
  }
  for (const auto& rule : res.rules) {
    std::string policy_id;
    try {
      policy_id = policies_.store_policy(rule);
    } catch (const NistError& e) {
      // An equivalent active policy already governs this pair.
      if (e.code() != ErrorCode::DuplicatePolicy) throw;
      continue;
    }
    nis.policy_ids.push_back(policy_id);
    log_.emit(env_.now(), "PolicyManager", "policy_stored", policy_id, "ok",
              policy_to_json(policies_.get(policy_id)));
  }
  log_.emit(env_.now(), "ConflictResolver", "conflicts_resolved", nis.instance_id, "ok",
            json{{"conflicts", conflicts.size()}, {"policies", nis.policy_ids}});
}

void Orchestrator::instantiate_members(const std::string& request_id, NisInstance& nis,
                                       const NisDescriptor& nisd, const json& params) {
  std::vector<std::string> fresh_ids;
  std::vector<std::string> reused_ids;
  std::vector<std::string> registered;
  std::vector<std::string> held;
  std::vector<std::string> links;
  std::map<std::string, std::string> member_instance;

  auto rollback = [&]() {
    for (auto it = links.rbegin(); it != links.rend(); ++it) {
      nifcm_.disconnect(*it);
      log_.emit(env_.now(), "NIFCManager", "link_disconnected", *it, "ok",
                json{{"reason", "rollback"}});
    }
    for (auto it = held.rbegin(); it != held.rend(); ++it) {
      nifcm_.release(*it);
      log_.emit(env_.now(), "NIFCManager", "reservation_released", *it, "ok",
                json{{"reason", "rollback"}});
    }
    for (auto it = reused_ids.rbegin(); it != reused_ids.rend(); ++it) {
      int left = nifm_.release_ref(*it);
      log_.emit(env_.now(), "NIFManager", "nif_released", *it, "ok",
                json{{"refcount", left}, {"reason", "rollback"}});
    }
    for (auto it = fresh_ids.rbegin(); it != fresh_ids.rend(); ++it) {
      nifm_.release_ref(*it);
      log_.emit(env_.now(), "NIFManager", "nif_terminated", *it, "ok",
                json{{"reason", "rollback"}});
    }
    for (auto it = registered.rbegin(); it != registered.rend(); ++it) {
      unregister_with_gate(*it);
    }
    nis.nif_instance_ids.clear();
    nis.link_ids.clear();
    set_state(nis, NisState::Failed);
  };

  try {
    for (const auto& name : member_names(nisd)) {
      const std::string constraint = constraint_of(nisd, name);
      const NifDescriptor nifd = nifd_or_throw(catalog_, name, constraint);
      std::string iid;
      if (auto existing = nifm_.find_instance(name, requirements_from_nifd(nifd))) {
        iid = *existing;
        int refs = nifm_.retain(iid);
        reused_ids.push_back(iid);
        log_.emit(env_.now(), "NIFManager", "nif_reused", iid, "ok",
                  json{{"nif_name", name}, {"refcount", refs}});
      } else {
        ModelImage img = best_image(catalog_, nifd, constraint);
        if (!nifcm_.has_image(img.model_id)) {
          nifcm_.upload_image(img.model_id);
          log_.emit(env_.now(), "NIFCManager", "image_uploaded", img.model_id, "ok",
                    json{{"nif_name", name}});
        }
        std::string hint;
        if (params.contains("placement_hints") && params["placement_hints"].contains(name)) {
          hint = params["placement_hints"][name].get<std::string>();
        }
        iid = nifm_.instantiate_nif(name, img.model_id, hint);
        fresh_ids.push_back(iid);
        log_.emit(env_.now(), "NIFManager", "nif_instantiated", iid, "ok",
                  json{{"nif_name", name},
                       {"model_id", img.model_id},
                       {"node_id", nifm_.instance(iid).node_id}});
      }
      member_instance[name] = iid;
      nis.nif_instance_ids.push_back(iid);
      register_with_gate(name);
      registered.push_back(name);
    }

    set_state(nis, NisState::Reserving);
    std::int64_t bw = params.value("link_bw_mbps", cfg_.link_bw_mbps);
    struct PlannedLink {
      std::string inst_a;
      std::string inst_b;
      std::string reservation_id;
    };
    std::vector<PlannedLink> planned;
    for (const auto& link : nisd.links) {
      auto a = member_instance.find(link.producer);
      auto b = member_instance.find(link.consumer);
      if (a == member_instance.end() || b == member_instance.end()) {
        throw NistError(ErrorCode::DanglingLink,
                        "link references non-member NIF '" +
                            (a == member_instance.end() ? link.producer : link.consumer) + "'");
      }
      ResourceVec amount{0, 0, 0, bw};
      Reservation r = nifcm_.reserve({{nifm_.instance(a->second).node_id, amount},
                                      {nifm_.instance(b->second).node_id, amount}});
      held.push_back(r.reservation_id);
      log_.emit(env_.now(), "NIFCManager", "reserved", r.reservation_id, "ok",
                json{{"link", link.producer + "->" + link.consumer}, {"bw_mbps", bw}});
      planned.push_back({a->second, b->second, r.reservation_id});
    }

    set_state(nis, NisState::Interconnecting);
    for (const auto& p : planned) {
      std::string link_id = nifm_.connect(p.inst_a, p.inst_b, bw, p.reservation_id);
      held.erase(std::find(held.begin(), held.end(), p.reservation_id));
      links.push_back(link_id);
      nis.link_ids.push_back(link_id);
      log_.emit(env_.now(), "NIFCManager", "link_connected", link_id, "ok",
                json{{"nif_a", p.inst_a}, {"nif_b", p.inst_b}, {"bw_mbps", bw}});
    }

    set_state(nis, NisState::Running);
    finish_ok(request_id, json{{"instance_id", nis.instance_id},
                               {"nif_instances", nis.nif_instance_ids},
                               {"links", nis.link_ids}});
  } catch (...) {
    rollback();
    throw;
  }
}

// ── update ───────────────────────────────────────────────────────────────────

void Orchestrator::handle_update(const std::string& request_id) {
  RequestState& rs = requests_.at(request_id);
  const json& payload = rs.req.payload;
  NisInstance& nis = nis_at(payload.at("instance_id").get<std::string>());
  if (nis.state != NisState::Running) {
    throw NistError(ErrorCode::InvalidState, "instance '" + nis.instance_id + "' is " +
                                                 nis_state_name(nis.state) + ", not Running");
  }
  set_state(nis, NisState::Updating);
  const std::string instance_id = nis.instance_id;

  auto bind_model = [this, instance_id](const std::string& name, const ModelImage& img) {
    NisInstance& inst = nis_instances_.at(instance_id);
    for (const auto& iid : inst.nif_instance_ids) {
      if (nifm_.instance(iid).nif_name != name) continue;
      if (nifm_.instance(iid).model_id == img.model_id) return false;
      std::string previous = nifm_.instance(iid).model_id;
      if (!nifcm_.has_image(img.model_id)) {
        nifcm_.upload_image(img.model_id);
        log_.emit(env_.now(), "NIFCManager", "image_uploaded", img.model_id, "ok",
                  json{{"nif_name", name}});
      }
      json patch{{"model_id", img.model_id}};
      try {
        json blob = json::parse(catalog_.get_blob(img.blob_ref));
        if (blob.contains("params")) patch["params"] = blob["params"];
      } catch (const std::exception&) {
        // externally registered image without a readable artifact blob
      }
      nifm_.update_config(iid, patch);
      log_.emit(env_.now(), "NIFManager", "nif_rebound", iid, "ok",
                json{{"nif_name", name}, {"model_id", img.model_id}, {"previous", previous}});
      return true;
    }
    throw NistError(ErrorCode::UnknownNif,
                    "'" + name + "' has no member instance in '" + instance_id + "'");
  };

  auto finish_update = [this, request_id, instance_id](
                           std::map<std::string, std::string> selected,
                           std::vector<std::string> retrained, std::optional<NistError> err) {
    guarded(request_id, [&] {
      NisInstance& nis = nis_instances_.at(instance_id);
      // Bindings already applied stay applied; the instance keeps serving
      // throughout, so an update failure returns it to Running as is.
      set_state(nis, NisState::Running);
      if (err) throw *err;
      finish_ok(request_id, json{{"selected_models", selected}, {"retrained", retrained}});
    });
  };

  try {
    if (payload.contains("nifd")) {
      // A revised descriptor rides along with the update; onboarding it first
      // lets the retrain below pick up new thresholds or dependencies.
      NifDescriptor revised = parse_nifd(payload["nifd"]);
      ValidationReport report = validate_descriptor(revised);
      if (!report.valid) {
        std::string fields;
        for (const auto& f : report.missing_mandatory) {
          fields += (fields.empty() ? "" : ", ") + f;
        }
        throw NistError(ErrorCode::InvalidDescriptor,
                        "NIFD '" + revised.name + "' is invalid: missing " + fields);
      }
      std::string id = catalog_.onboard(revised);
      log_.emit(env_.now(), "CSOI", "descriptor_onboarded", revised.name, "ok",
                json{{"id", id}, {"kind", "nifd"}, {"version", revised.version.str()}});
    }

    std::vector<std::string> targets;
    if (payload.contains("nifs")) {
      targets = to_string_vector(payload["nifs"]);
    } else {
      for (const auto& iid : nis.nif_instance_ids) {
        targets.push_back(nifm_.instance(iid).nif_name);
      }
    }
    std::set<std::string> member_set;
    for (const auto& iid : nis.nif_instance_ids) {
      member_set.insert(nifm_.instance(iid).nif_name);
    }

    std::map<std::string, std::string> selected;
    std::vector<std::string> to_retrain;
    for (const auto& name : targets) {
      if (member_set.count(name) == 0) {
        throw NistError(ErrorCode::UnknownNif,
                        "'" + name + "' is not a member of instance '" + instance_id + "'");
      }
      const NifDescriptor nifd = nifd_or_throw(catalog_, name);
      std::vector<ModelImage> candidates =
          catalog_.query_candidates(name, requirements_from_nifd(nifd));
      log_.emit(env_.now(), "CSOI", "catalog_check", name, "ok",
                json{{"candidates", candidates.size()}});
      if (candidates.empty()) {
        to_retrain.push_back(name);
        continue;
      }
      std::map<std::string, ScoreVector> scores;
      for (const auto& img : candidates) {
        double oriented = metric_higher_is_better(img.metric) ? img.test_score : -img.test_score;
        scores[img.model_id] = ScoreVector{{"learning_score", oriented}};
      }
      std::string model_id = select_model(candidates, scores, cfg_.arbitration);
      log_.emit(env_.now(), "CSOI", "model_selected", name, "ok",
                json{{"model_id", model_id}, {"candidates", candidates.size()}});
      auto img = std::find_if(candidates.begin(), candidates.end(),
                              [&](const ModelImage& c) { return c.model_id == model_id; });
      if (bind_model(name, *img)) selected[name] = model_id;
    }

    if (to_retrain.empty()) {
      finish_update(std::move(selected), {}, std::nullopt);
      return;
    }
    auto chain = std::make_shared<TrainChain>();
    chain->request_id = request_id;
    chain->names = std::move(to_retrain);
    chain->epoch_budget = payload.value("epoch_budget", cfg_.default_epoch_budget);
    TrainChain* raw = chain.get();
    chain->done = [this, finish_update, bind_model, selected = std::move(selected),
                   raw](std::optional<NistError> err) {
      if (err) {
        finish_update(selected, raw->trained, std::move(err));
        return;
      }
      // Bind each freshly trained model; requirements now match by
      // construction, so the best candidate is the one just registered.
      for (const auto& name : raw->trained) {
        const NifDescriptor nifd = nifd_or_throw(catalog_, name);
        auto candidates = catalog_.query_candidates(name, requirements_from_nifd(nifd));
        if (candidates.empty()) {
          finish_update(selected, raw->trained,
                        NistError(ErrorCode::UnknownModel, "retrained image for '" + name +
                                                               "' fails its own requirements"));
          return;
        }
        bind_model(name, candidates.front());
      }
      finish_update(selected, raw->trained, std::nullopt);
    };
    train_next(chain);
  } catch (const NistError&) {
    set_state(nis_instances_.at(instance_id), NisState::Running);
    throw;
  }
}

// ── terminate ────────────────────────────────────────────────────────────────

void Orchestrator::handle_terminate(const std::string& request_id) {
  RequestState& rs = requests_.at(request_id);
  NisInstance& nis = nis_at(rs.req.payload.at("instance_id").get<std::string>());
  if (nis.state != NisState::Running) {
    throw NistError(ErrorCode::InvalidState, "instance '" + nis.instance_id + "' is " +
                                                 nis_state_name(nis.state) + ", not Running");
  }
  set_state(nis, NisState::Terminating);
  TerminationReport report;
  for (const auto& link_id : nis.link_ids) {
    if (nifcm_.links().count(link_id) == 0) continue;
    nifcm_.disconnect(link_id);
    log_.emit(env_.now(), "NIFCManager", "link_disconnected", link_id, "ok",
              json{{"instance", nis.instance_id}});
  }
  for (const auto& iid : nis.nif_instance_ids) {
    const std::string name = nifm_.instance(iid).nif_name;
    int left = nifm_.release_ref(iid);
    log_.emit(env_.now(), "NIFManager", "nif_released", iid, "ok",
              json{{"nif_name", name}, {"refcount", left}});
    if (left == 0) {
      log_.emit(env_.now(), "NIFManager", "nif_terminated", iid, "ok",
                json{{"nif_name", name}});
      report.terminated_nifs.push_back(name);
    } else {
      report.retained_nifs.push_back(name);
    }
    unregister_with_gate(name);
  }
  set_state(nis, NisState::Terminated);
  finish_ok(request_id, json{{"terminated_nifs", report.terminated_nifs},
                             {"retained_nifs", report.retained_nifs}});
}

// ── query ────────────────────────────────────────────────────────────────────

void Orchestrator::handle_query(const std::string& request_id) {
  RequestState& rs = requests_.at(request_id);
  finish_ok(request_id, query_nis(rs.req.payload.at("instance_id").get<std::string>()));
}

json Orchestrator::query_nis(const std::string& instance_id) const {
  auto it = nis_instances_.find(instance_id);
  if (it == nis_instances_.end()) {
    throw NistError(ErrorCode::UnknownInstance, "no NIS instance '" + instance_id + "'");
  }
  const NisInstance& nis = it->second;
  json members = json::array();
  for (const auto& iid : nis.nif_instance_ids) {
    const NifInstance& inst = nifm_.instance(iid);
    json m{{"nif_instance_id", iid},
           {"nif_name", inst.nif_name},
           {"model_id", inst.model_id},
           {"node_id", inst.node_id},
           {"state", instance_state_name(inst.state)},
           {"refcount", inst.refcount}};
    // Latest recorded health, if the monitoring loop has produced one; a
    // query must not trigger a fresh probe.
    const auto& reports = nifm_.health_reports();
    for (auto r = reports.rbegin(); r != reports.rend(); ++r) {
      if (r->nif_instance_id != iid) continue;
      m["last_health"] = json{{"verdict", health_verdict_name(r->verdict)}, {"at", r->at}};
      break;
    }
    members.push_back(m);
  }
  json policies = json::array();
  for (const auto& pid : nis.policy_ids) {
    policies.push_back(json{{"policy_id", pid}, {"active", policies_.get(pid).active}});
  }
  return json{{"instance_id", nis.instance_id}, {"nisd", nis.nisd_ref},
              {"state", nis_state_name(nis.state)}, {"created_at", nis.created_at},
              {"nif_instances", members},          {"links", nis.link_ids},
              {"policies", policies}};
}

// ── model arbitration ────────────────────────────────────────────────────────

std::string Orchestrator::select_model(const std::vector<ModelImage>& candidates,
                                       const std::map<std::string, ScoreVector>& scores,
                                       const ArbitrationPolicy& policy) {
  if (candidates.empty()) {
    throw NistError(ErrorCode::InvalidSpec, "model selection over an empty candidate list");
  }
  double total_weight = 0.0;
  for (const auto& [dim, w] : policy.weights) {
    if (w < 0) {
      throw NistError(ErrorCode::InvalidSpec, "negative arbitration weight for '" + dim + "'");
    }
    total_weight += w;
  }
  if (total_weight <= 0) {
    throw NistError(ErrorCode::InvalidSpec, "arbitration weights are all zero");
  }
  const ModelImage* best = nullptr;
  double best_value = 0.0;
  for (const auto& img : candidates) {
    auto it = scores.find(img.model_id);
    if (it == scores.end()) {
      throw NistError(ErrorCode::InvalidSpec,
                      "no score vector for candidate '" + img.model_id + "'");
    }
    double value = 0.0;
    for (const auto& [dim, w] : policy.weights) {
      if (w == 0) continue;
      auto sv = it->second.find(dim);
      double v = sv == it->second.end() ? 0.0 : sv->second;
      value += w * (dim == "energy" ? -v : v);
    }
    bool take = best == nullptr || value > best_value;
    if (!take && value == best_value) {
      take = img.version > best->version ||
             (img.version == best->version && img.model_id < best->model_id);
    }
    if (take) {
      best = &img;
      best_value = value;
    }
  }
  return best->model_id;
}

Requirements Orchestrator::requirements_from_nifd(const NifDescriptor& nifd) {
  Requirements req;
  req.input_format = nifd.data_spec.input_format;
  req.dependency_constraints = nifd.dependencies;
  req.min_performance = nifd.threshold_upper;
  return req;
}

// ── runtime gating ───────────────────────────────────────────────────────────

std::vector<GateDecision> Orchestrator::handle_proposals(const std::vector<ProposedAction>& batch) {
  std::vector<GateDecision> decisions;
  for (const auto& a : batch) {
    gate_.note_pending(GateAction{a.nif_name, a.service_id, a.action_class}, env_.now());
  }
  for (const auto& a : batch) {
    const char* action = action_class_name(a.action_class);
    GateDecision d;
    try {
      d = gate_.gate_action(GateAction{a.nif_name, a.service_id, a.action_class}, env_.now());
    } catch (const NistError& e) {
      d.verdict = GateVerdict::Deny;
      d.reason = e.what();
      log_.emit(env_.now(), "PolicyIC", "gate_decision", a.service_id, error_outcome(e.code()),
                json{{"nif_name", a.nif_name}, {"action", action}, {"verdict", "Deny"},
                     {"reason", d.reason}});
      decisions.push_back(d);
      continue;
    }
    json detail{{"nif_name", a.nif_name}, {"action", action},
                {"verdict", gate_verdict_name(d.verdict)}};
    if (!d.rule_id.empty()) detail["rule_id"] = d.rule_id;
    if (!d.reason.empty()) detail["reason"] = d.reason;
    if (d.verdict == GateVerdict::Delay) detail["until"] = d.until;
    const char* outcome = d.verdict == GateVerdict::Allow ? "ok"
                          : d.verdict == GateVerdict::Delay ? "delayed"
                                                            : "denied";
    log_.emit(env_.now(), "PolicyIC", "gate_decision", a.service_id, outcome, detail);
    if (d.verdict == GateVerdict::Allow) {
      try {
        json executed{{"action", action}};
        switch (a.action_class) {
          case ActionClass::Scale:
            env_.scale_service(a.service_id);
            break;
          case ActionClass::Relocate: {
            std::string target = a.target_node.empty()
                                     ? env_.best_node_for(a.service_id, env_.now(),
                                                          RelocationWeights{})
                                     : a.target_node;
            executed["target_node"] = target;
            env_.relocate_service(a.service_id, target);
            break;
          }
          case ActionClass::Reconfigure:
            // Configuration-plane only; nothing structural changes in the sim.
            break;
        }
        log_.emit(env_.now(), "NIF:" + a.nif_name, "action_executed", a.service_id, "ok",
                  executed);
      } catch (const NistError& e) {
        log_.emit(env_.now(), "NIF:" + a.nif_name, "action_failed", a.service_id,
                  error_outcome(e.code()),
                  json{{"action", action}, {"message", e.what()}});
      }
    }
    decisions.push_back(d);
  }
  return decisions;
}

// ── bookkeeping ──────────────────────────────────────────────────────────────

void Orchestrator::set_state(NisInstance& nis, NisState to) {
  if (!nis_transition_legal(nis.state, to)) {
    throw NistError(ErrorCode::InvalidState, std::string("illegal NIS transition ") +
                                                 nis_state_name(nis.state) + " -> " +
                                                 nis_state_name(to));
  }
  log_.emit(env_.now(), "NIO", "state", nis.instance_id, "ok",
            json{{"from", nis_state_name(nis.state)}, {"to", nis_state_name(to)}});
  nis.state = to;
}

void Orchestrator::register_with_gate(const std::string& nif_name) {
  if (++gate_refs_[nif_name] == 1) gate_.register_nif(nif_name);
}

void Orchestrator::unregister_with_gate(const std::string& nif_name) {
  auto it = gate_refs_.find(nif_name);
  if (it == gate_refs_.end()) return;
  if (--it->second <= 0) {
    gate_refs_.erase(it);
    gate_.unregister_nif(nif_name);
  }
}

NisInstance& Orchestrator::nis_at(const std::string& instance_id) {
  auto it = nis_instances_.find(instance_id);
  if (it == nis_instances_.end()) {
    throw NistError(ErrorCode::UnknownInstance, "no NIS instance '" + instance_id + "'");
  }
  return it->second;
}

json Orchestrator::state_snapshot() const {
  return json{{"env", env_.state_json()},
              {"nifc", nifcm_.state_json()},
              {"nifm", nifm_.state_json()}};
}

// ── synchronous wrappers ─────────────────────────────────────────────────────

CreateResult Orchestrator::create_nis(LifecycleRequest req) {
  req.kind = RequestKind::Create;
  RequestStatus st = drive_to_done(*this, env_, submit(std::move(req)));
  CreateResult out;
  out.created_nifs = to_string_vector(st.result.value("created_nifs", json::array()));
  out.trained_nifs = to_string_vector(st.result.value("trained_nifs", json::array()));
  return out;
}

std::string Orchestrator::instantiate_nis(LifecycleRequest req) {
  req.kind = RequestKind::Instantiate;
  RequestStatus st = drive_to_done(*this, env_, submit(std::move(req)));
  return st.result.at("instance_id").get<std::string>();
}

UpdateResult Orchestrator::update_nis(LifecycleRequest req) {
  req.kind = RequestKind::Update;
  RequestStatus st = drive_to_done(*this, env_, submit(std::move(req)));
  UpdateResult out;
  for (auto it = st.result.at("selected_models").begin();
       it != st.result.at("selected_models").end(); ++it) {
    out.selected_models[it.key()] = it.value().get<std::string>();
  }
  out.retrained = to_string_vector(st.result.value("retrained", json::array()));
  return out;
}

TerminationReport Orchestrator::terminate_nis(LifecycleRequest req) {
  req.kind = RequestKind::Terminate;
  RequestStatus st = drive_to_done(*this, env_, submit(std::move(req)));
  TerminationReport out;
  out.terminated_nifs = to_string_vector(st.result.value("terminated_nifs", json::array()));
  out.retained_nifs = to_string_vector(st.result.value("retained_nifs", json::array()));
  return out;
}

}  // namespace nist
