#pragma once

// The NIO core: lifecycle state machines for NIS creation, instantiation,
// update (model selection), and termination, coordinating catalog, policy,
// managers, and pipelines.
//
// Every lifecycle request is serialized through the sim event loop: submit()
// enqueues, processing happens in sim-event order, and multi-stage flows
// (training pipelines inside create/update) suspend as continuations that the
// pipeline completion events resume. Total order of mutations equals event-log
// order. Callers outside the loop use the synchronous wrappers, which drive
// the sim until their request resolves.

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "nist/catalog.hpp"
#include "nist/common.hpp"
#include "nist/event_log.hpp"
#include "nist/managers.hpp"
#include "nist/pipelines.hpp"
#include "nist/policy.hpp"
#include "nist/simenv.hpp"

namespace nist {

// ── NIS instances ────────────────────────────────────────────────────────────

enum class NisState {
  Validating,
  ResolvingConflicts,
  CreatingNIFs,
  Reserving,
  Interconnecting,
  Running,
  Updating,
  Terminating,
  Terminated,
  Failed
};

const char* nis_state_name(NisState s);
bool nis_transition_legal(NisState from, NisState to);

struct NisInstance {
  std::string instance_id;
  std::string nisd_ref;  // catalog name of the NISD
  NisState state = NisState::Validating;
  std::vector<std::string> nif_instance_ids;
  std::vector<std::string> link_ids;
  LogicalTime created_at = 0;
  std::vector<std::string> policy_ids;
};

// ── requests ─────────────────────────────────────────────────────────────────

enum class RequestKind { Create, Instantiate, Update, Terminate, Query };
const char* request_kind_name(RequestKind k);
RequestKind parse_request_kind(const std::string& name);  // throws ParseError

struct LifecycleRequest {
  std::string request_id;  // assigned at submit when empty; must be unique
  std::string sender;
  RequestKind kind = RequestKind::Query;
  nlohmann::json payload;  // kind-specific, see the handlers
  std::string auth_token;
};

struct RequestStatus {
  std::string request_id;
  RequestKind kind = RequestKind::Query;
  bool done = false;
  std::string outcome;  // "ok" | "denied" | "error:<code>" once done
  nlohmann::json result;
  std::optional<ErrorCode> error;
  std::string message;
};

// ── model arbitration ────────────────────────────────────────────────────────

// Score dimensions; "energy" is a cost and enters the weighted sum negated.
inline constexpr std::array<const char*, 5> kScoreDimensions = {"learning_score", "qoe", "qos",
                                                                "stability", "energy"};

using ScoreVector = std::map<std::string, double>;

struct ArbitrationPolicy {
  std::map<std::string, double> weights;  // nonnegative, at least one positive
  std::string preference_note;

  // Model precision preferred over everything else unless told otherwise.
  static ArbitrationPolicy defaults();
};

// ── results ──────────────────────────────────────────────────────────────────

struct CreateResult {
  std::vector<std::string> created_nifs;  // every member ensured in the catalog
  std::vector<std::string> trained_nifs;  // the subset that needed a pipeline run
};

struct UpdateResult {
  std::map<std::string, std::string> selected_models;  // nif name → model bound
  std::vector<std::string> retrained;
};

struct TerminationReport {
  std::vector<std::string> terminated_nifs;
  std::vector<std::string> retained_nifs;
};

// ── configuration ────────────────────────────────────────────────────────────

struct AuthEntry {
  std::string sender;
  std::set<RequestKind> kinds;
};

struct OrchestratorConfig {
  std::map<std::string, AuthEntry> tokens;  // bearer token → identity
  ArbitrationPolicy arbitration = ArbitrationPolicy::defaults();
  ConflictMatrix matrix = ConflictMatrix::defaults();
  std::int64_t link_bw_mbps = 100;    // interconnection demand per NISD link
  std::int64_t default_epoch_budget = 100;
  std::filesystem::path data_dir;     // durable catalog/policy/pipeline state

  // One operator token allowed everything; enough for desk-scale runs.
  static OrchestratorConfig desk_defaults();
};

// ── the orchestrator ─────────────────────────────────────────────────────────

class Orchestrator {
 public:
  Orchestrator(SimEnv& env, EventLog& log, OrchestratorConfig cfg = OrchestratorConfig::desk_defaults());

  // Enqueues the request onto the sim loop and returns its id immediately.
  // Throws DuplicateRequest on a reused caller-supplied id.
  std::string submit(LifecycleRequest req);
  RequestStatus request_status(const std::string& request_id) const;  // throws UnknownRequest

  // Synchronous wrappers: submit, drive the sim until the request resolves,
  // then return the typed result or throw the recorded error. Not for use
  // from inside sim-event callbacks (use submit there).
  CreateResult create_nis(LifecycleRequest req);
  std::string instantiate_nis(LifecycleRequest req);
  UpdateResult update_nis(LifecycleRequest req);
  TerminationReport terminate_nis(LifecycleRequest req);

  // Read-only status snapshot; safe at any time. Throws UnknownInstance.
  nlohmann::json query_nis(const std::string& instance_id) const;

  // Weighted-sum arbitration over candidate models. Ties by version
  // descending, then model_id ascending. Throws InvalidSpec on an empty
  // candidate list, a missing score vector, or all-zero weights.
  static std::string select_model(const std::vector<ModelImage>& candidates,
                                  const std::map<std::string, ScoreVector>& scores,
                                  const ArbitrationPolicy& policy);

  // PolicyIC front door for runtime actions: notes the whole tick's proposals
  // (priority rules see their winners), gates each in order, executes the
  // allowed ones against the sim, and logs every decision.
  std::vector<GateDecision> handle_proposals(const std::vector<ProposedAction>& batch);

  const std::map<std::string, NisInstance>& nis_instances() const { return nis_instances_; }

  // Deep state over allocations, reservations, components, links, instances,
  // and refcounts; the no-leak oracle compares these across failed calls.
  nlohmann::json state_snapshot() const;

  // Subsystem access for the API surface and the scenario runner.
  SimEnv& env() { return env_; }
  EventLog& log() { return log_; }
  Catalog& catalog() { return catalog_; }
  PolicyStore& policy_store() { return policies_; }
  GateKeeper& gate() { return gate_; }
  NifcManager& nifc_manager() { return nifcm_; }
  NifManager& nif_manager() { return nifm_; }
  PipelineEngine& pipelines() { return pipelines_; }
  const ConflictMatrix& matrix() const { return cfg_.matrix; }

  // Requirements a deployment derives from a NIFD: input format, dependency
  // constraints, and the upper accuracy threshold as minimum performance.
  static Requirements requirements_from_nifd(const NifDescriptor& nifd);

 private:
  struct RequestState {
    LifecycleRequest req;
    RequestStatus status;
  };

  // Sequential training chain: one pipeline run per missing NIF, resumed by
  // pipeline completion events.
  struct TrainChain {
    std::string request_id;
    std::vector<std::string> names;
    std::size_t idx = 0;
    std::vector<std::string> trained;
    std::int64_t epoch_budget = 100;
    std::function<void(std::optional<NistError>)> done;
  };

  void process(const std::string& request_id);
  // Runs body inside the sim loop; a thrown NistError resolves the request
  // instead of unwinding through the event queue.
  void guarded(const std::string& request_id, const std::function<void()>& body);
  void finish_ok(const std::string& request_id, nlohmann::json result);
  void finish_error(const std::string& request_id, const NistError& err);
  const AuthEntry* authorize(const LifecycleRequest& req);

  // Inline NISD documents are validated and onboarded; strings name one
  // already in the catalog.
  NisDescriptor resolve_nisd_payload(const nlohmann::json& payload);

  void handle_create(const std::string& request_id);
  void handle_instantiate(const std::string& request_id);
  void handle_update(const std::string& request_id);
  void handle_terminate(const std::string& request_id);
  void handle_query(const std::string& request_id);

  // Shared by create and instantiate: train every member NIF missing from the
  // catalog, then call done.
  void ensure_images(const std::string& request_id, const NisDescriptor& nisd,
                     std::int64_t epoch_budget,
                     std::function<void(std::vector<std::string> trained,
                                        std::optional<NistError>)> done);
  void train_next(std::shared_ptr<TrainChain> chain);
  PipelineSpec pipeline_spec_for(const NifDescriptor& nifd, std::int64_t epoch_budget,
                                 const SemVer& image_version) const;

  void instantiate_members(const std::string& request_id, NisInstance& nis,
                           const NisDescriptor& nisd, const nlohmann::json& params);
  void resolve_conflicts_for(NisInstance& nis, const std::vector<NifDescriptor>& member_nifds);
  void set_state(NisInstance& nis, NisState to);
  void register_with_gate(const std::string& nif_name);
  void unregister_with_gate(const std::string& nif_name);

  NisInstance& nis_at(const std::string& instance_id);  // throws UnknownInstance

  SimEnv& env_;
  EventLog& log_;
  OrchestratorConfig cfg_;
  Catalog catalog_;
  PolicyStore policies_;
  GateKeeper gate_;
  NifcManager nifcm_;
  NifManager nifm_;
  PipelineEngine pipelines_;

  std::map<std::string, RequestState> requests_;
  std::map<std::string, NisInstance> nis_instances_;
  std::map<std::string, int> gate_refs_;  // NIF name → live registrations
  std::uint64_t next_request_ = 1;
  std::uint64_t next_nis_ = 1;
};

}  // namespace nist
