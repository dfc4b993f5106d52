#pragma once

// Conflict detection and resolution, the policy database, the runtime action
// gate, and knowledge-sharing policy building.
//
// Conflicts are found over N-MAPE-K profiles (what a NIF senses and what it
// plans to touch); resolution turns each conflict into a policy rule through
// the matrix-selected solver; the gate enforces stored rules at action time.
// Everything here is deterministic: detection output is canonically ordered,
// solvers derive priorities from deployment seniority, and the gate decides
// purely from (active rules, action history, logical time).

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "nist/catalog.hpp"
#include "nist/common.hpp"
#include "nist/descriptors.hpp"

namespace nist {

// ── conflicts ────────────────────────────────────────────────────────────────

enum class ConflictKind { TargetOverlap, SameServiceAction, SourceGranularity };
const char* conflict_kind_name(ConflictKind k);

struct ConflictParty {
  std::string nis_id;  // empty for profiles of the NIS under evaluation
  std::string nif_name;

  auto operator<=>(const ConflictParty&) const = default;
};

struct Conflict {
  ConflictKind kind = ConflictKind::SameServiceAction;
  // normalized so parties.first ≤ parties.second; (a,b) equals (b,a)
  std::pair<ConflictParty, ConflictParty> parties;
  std::string subject;  // service_id or source_id
  // per kind: target paths, action classes and the senior party (whose claim
  // wins ties), or the two sampling periods
  nlohmann::json details;

  bool operator==(const Conflict&) const = default;
};

nlohmann::json conflict_to_json(const Conflict& c);

// ── conflict matrix ──────────────────────────────────────────────────────────

enum class ResolutionKind { None, Temporal, Exclusive, Merge };
const char* resolution_kind_name(ResolutionKind k);

struct MatrixEntry {
  ResolutionKind kind = ResolutionKind::None;
  LogicalTime window_ms = 0;  // meaningful for Temporal only

  bool operator==(const MatrixEntry&) const = default;
};

// Symmetric and total over unordered action-class pairs; unset pairs read as
// None. Merge cannot be assigned to an action pair: it resolves
// source-granularity conflicts, which are not action-driven.
class ConflictMatrix {
 public:
  // The paper fixes (scale, relocate) → Temporal(30 s); the rest are
  // conservative defaults: same-action pairs Exclusive, reconfigure pairs
  // Temporal(10 s).
  static ConflictMatrix defaults();

  void set(ActionClass a, ActionClass b, MatrixEntry entry);  // throws ConfigError
  MatrixEntry at(ActionClass a, ActionClass b) const;

 private:
  std::map<std::pair<ActionClass, ActionClass>, MatrixEntry> entries_;
};

// ── policy rules ─────────────────────────────────────────────────────────────

struct CooldownRule {
  ActionClass after_action = ActionClass::Scale;
  ActionClass blocked_action = ActionClass::Relocate;
  LogicalTime window_ms = 0;  // must be positive

  bool operator==(const CooldownRule&) const = default;
};

struct PriorityRule {
  std::string winner_nif;
  std::string loser_nif;

  bool operator==(const PriorityRule&) const = default;
};

struct GranularityMergeRule {
  std::string source_id;
  LogicalTime provisioned_period_ms = 0;  // min of consumer periods
  // per consumer NIF: delivery period, rounded down to a multiple of the
  // provisioned period when not divisible
  std::map<std::string, LogicalTime> delivery_periods;

  bool operator==(const GranularityMergeRule&) const = default;
};

struct PolicyScope {
  std::string service_id;  // empty for source-scoped rules
  std::pair<std::string, std::string> nif_pair;

  bool operator==(const PolicyScope&) const = default;
};

struct PolicyRule {
  std::string policy_id;  // assigned by the store
  PolicyScope scope;
  std::variant<CooldownRule, PriorityRule, GranularityMergeRule> rule;
  bool active = true;
  LogicalTime created_at = 0;

  bool operator==(const PolicyRule&) const = default;
};

nlohmann::json policy_to_json(const PolicyRule& p);
PolicyRule policy_from_json(const nlohmann::json& j);

// ── detection / assessment / resolution ─────────────────────────────────────

// All conflicts across profile pairs that involve the NIS under evaluation
// (fresh×fresh and fresh×deployed; deployed×deployed pairs were settled when
// they were admitted). Three predicates per pair:
//   TargetOverlap       identical (service_id, target_path) in two Plan sets
//   SameServiceAction   same service_id, different target paths, and a
//                       non-None matrix entry for the two action classes
//   SourceGranularity   same source_id consumed at different sampling periods
// Output is sorted by (subject, parties, kind, details) and duplicate-free.
std::vector<Conflict> detect_conflicts(
    const std::vector<NmapekProfile>& fresh,
    const std::vector<std::pair<std::string, NmapekProfile>>& deployed,
    const ConflictMatrix& matrix);

// Cheap sound over-approximation: false only when no profile carries a
// Plan/Execute class and no two profiles share a source.
bool initial_assessment(const std::vector<NmapekProfile>& profiles);

struct Resolution {
  std::vector<PolicyRule> rules;  // policy_id left empty; the store assigns
  std::vector<nlohmann::json> config_updates;
  bool fallback = false;
};

// Solver selection by conflict kind: TargetOverlap → Priority (senior party
// wins; deployment beats order in the request), SameServiceAction with a
// Temporal entry → one Cooldown rule (senior action first; the gate applies
// it in both directions), with an Exclusive entry → Priority when seniority
// is derivable from deployment, otherwise fallback=true and config_updates
// carries the last valid configuration. SourceGranularity → GranularityMerge
// provisioning the finest period.
Resolution resolve(const std::vector<Conflict>& conflicts, const ConflictMatrix& matrix,
                   const std::vector<PolicyRule>& deployed_policies);

// ── policy store ─────────────────────────────────────────────────────────────

class PolicyStore {
 public:
  // Durable log at <data_dir>/policies/policies.log (LDJSON), replayed on
  // startup; empty data_dir keeps the store in memory.
  explicit PolicyStore(std::filesystem::path data_dir = {});

  void set_clock(std::function<LogicalTime()> now_fn);

  std::string store_policy(PolicyRule rule);  // throws DuplicatePolicy
  // Active rules relevant to an action on a service: cooldowns naming the
  // action on either side, priorities and merges scoped to the service.
  std::vector<PolicyRule> lookup_policies(const std::string& service_id,
                                          ActionClass action) const;
  std::vector<PolicyRule> active_policies() const;  // ordered by policy_id
  PolicyRule get(const std::string& policy_id) const;  // throws UnknownPolicy
  void deactivate(const std::string& policy_id);       // throws UnknownPolicy

 private:
  void append_log(const nlohmann::json& record);

  std::filesystem::path log_path_;
  std::function<LogicalTime()> now_;
  std::map<std::string, PolicyRule> policies_;
  std::uint64_t next_policy_ = 1;
};

// ── runtime gate ─────────────────────────────────────────────────────────────

enum class GateVerdict { Allow, Deny, Delay };
const char* gate_verdict_name(GateVerdict v);

struct GateAction {
  std::string nif;
  std::string service_id;
  ActionClass action_class = ActionClass::Scale;
};

struct GateDecision {
  GateVerdict verdict = GateVerdict::Allow;
  LogicalTime until = 0;  // Delay only; strictly after the decision time
  std::string rule_id;    // the rule that determined a non-Allow verdict
  std::string reason;
};

struct ExecutedAction {
  std::string nif;
  std::string service_id;
  ActionClass action_class = ActionClass::Scale;
  LogicalTime at = 0;
};

// Decision plus history append under one lock, so gate decisions are
// linearizable with respect to the action history.
class GateKeeper {
 public:
  explicit GateKeeper(const PolicyStore& store);

  void register_nif(const std::string& nif_name);
  void unregister_nif(const std::string& nif_name);

  // Same-tick proposal registry: priorities deny the loser only while the
  // winner's own proposal is pending in the current tick.
  void note_pending(const GateAction& action, LogicalTime now);

  GateDecision gate_action(const GateAction& action, LogicalTime now);  // throws UnknownNif

  std::vector<ExecutedAction> history() const;

 private:
  const PolicyStore& store_;
  mutable std::mutex mu_;
  std::set<std::string> nifs_;
  std::vector<ExecutedAction> history_;
  std::map<std::pair<std::string, ActionClass>, LogicalTime> last_exec_;
  LogicalTime pending_tick_ = -1;
  std::vector<GateAction> pending_;
};

// ── knowledge sharing ────────────────────────────────────────────────────────

// Rule grammar: `<metric> <op> <const> -> <verb>(<arg>)`, ops < > <= >= ==.
struct ParsedKnowledgeRule {
  std::string metric;
  std::string op;
  double constant = 0.0;
  std::string verb;
  std::string arg;
};

ParsedKnowledgeRule parse_knowledge_rule(const std::string& text);  // throws ParseError

struct KnowledgeRules {
  std::string source_model_ref;
  std::vector<std::string> rules;
};

// Model-Explainability stub: reads the packaged parameters of the model
// artifact and emits threshold rules ("cpu_load > θ -> flag(anomaly)"); when
// the artifact has no anomaly threshold the model's own test score becomes a
// quality assertion rule. Deterministic per model. Throws UnknownModel.
KnowledgeRules translate_knowledge(const Catalog& catalog, const std::string& model_ref);

struct SharedKnowledgeResult {
  NisDescriptor nisd;                 // with rules appended to its policies list
  std::vector<std::string> attached;
  std::vector<std::string> dropped;   // contradicting rules, reported not kept
  std::vector<Conflict> recheck;      // detect_conflicts after attachment
};

// Attaches knowledge rules to the NISD policy section, dropping any
// `allow(action)` rule that contradicts an active Priority rule under which
// one of the NIS's member NIFs is the loser, then re-checks the member
// profiles for conflicts.
SharedKnowledgeResult build_shared_knowledge_policy(
    const NisDescriptor& nisd, const KnowledgeRules& rules,
    const std::vector<PolicyRule>& existing,
    const std::vector<NmapekProfile>& member_profiles = {},
    const ConflictMatrix& matrix = ConflictMatrix::defaults());

}  // namespace nist
