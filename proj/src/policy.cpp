#include "nist/policy.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nist/digest.hpp"

namespace nist {

using nlohmann::json;

namespace {

// Party key for orientation-free detail maps; two parties can share a NIF
// name (e.g. the same NIF deployed under another NIS), so the NIS id is part
// of the key.
std::string party_key(const ConflictParty& p) { return p.nis_id + "/" + p.nif_name; }

std::string fmt_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::pair<ActionClass, ActionClass> ordered_pair(ActionClass a, ActionClass b) {
  return a <= b ? std::make_pair(a, b) : std::make_pair(b, a);
}

}  // namespace

const char* conflict_kind_name(ConflictKind k) {
  switch (k) {
    case ConflictKind::TargetOverlap: return "TargetOverlap";
    case ConflictKind::SameServiceAction: return "SameServiceAction";
    case ConflictKind::SourceGranularity: return "SourceGranularity";
  }
  return "?";
}

const char* resolution_kind_name(ResolutionKind k) {
  switch (k) {
    case ResolutionKind::None: return "None";
    case ResolutionKind::Temporal: return "Temporal";
    case ResolutionKind::Exclusive: return "Exclusive";
    case ResolutionKind::Merge: return "Merge";
  }
  return "?";
}

const char* gate_verdict_name(GateVerdict v) {
  switch (v) {
    case GateVerdict::Allow: return "Allow";
    case GateVerdict::Deny: return "Deny";
    case GateVerdict::Delay: return "Delay";
  }
  return "?";
}

json conflict_to_json(const Conflict& c) {
  json parties = json::array();
  for (const ConflictParty* p : {&c.parties.first, &c.parties.second}) {
    parties.push_back({{"nis_id", p->nis_id}, {"nif_name", p->nif_name}});
  }
  return {{"kind", conflict_kind_name(c.kind)},
          {"parties", parties},
          {"subject", c.subject},
          {"details", c.details}};
}

// ── conflict matrix ──────────────────────────────────────────────────────────

ConflictMatrix ConflictMatrix::defaults() {
  ConflictMatrix m;
  m.set(ActionClass::Scale, ActionClass::Relocate, {ResolutionKind::Temporal, 30000});
  m.set(ActionClass::Scale, ActionClass::Scale, {ResolutionKind::Exclusive, 0});
  m.set(ActionClass::Relocate, ActionClass::Relocate, {ResolutionKind::Exclusive, 0});
  m.set(ActionClass::Reconfigure, ActionClass::Reconfigure, {ResolutionKind::Temporal, 10000});
  m.set(ActionClass::Reconfigure, ActionClass::Scale, {ResolutionKind::Temporal, 10000});
  m.set(ActionClass::Reconfigure, ActionClass::Relocate, {ResolutionKind::Temporal, 10000});
  return m;
}

void ConflictMatrix::set(ActionClass a, ActionClass b, MatrixEntry entry) {
  if (entry.kind == ResolutionKind::Merge) {
    throw NistError(ErrorCode::InvalidSpec,
                    "Merge resolves source-granularity conflicts, not action pairs");
  }
  if (entry.kind == ResolutionKind::Temporal && entry.window_ms <= 0) {
    throw NistError(ErrorCode::InvalidSpec, "temporal entry needs a positive window");
  }
  if (entry.kind != ResolutionKind::Temporal) entry.window_ms = 0;
  entries_[ordered_pair(a, b)] = entry;
}

MatrixEntry ConflictMatrix::at(ActionClass a, ActionClass b) const {
  auto it = entries_.find(ordered_pair(a, b));
  return it == entries_.end() ? MatrixEntry{} : it->second;
}

// ── policy (de)serialization ─────────────────────────────────────────────────

json policy_to_json(const PolicyRule& p) {
  json j = {{"policy_id", p.policy_id},
            {"scope",
             {{"service_id", p.scope.service_id},
              {"nif_pair", {p.scope.nif_pair.first, p.scope.nif_pair.second}}}},
            {"active", p.active},
            {"created_at", p.created_at}};
  if (const auto* c = std::get_if<CooldownRule>(&p.rule)) {
    j["kind"] = "cooldown";
    j["rule"] = {{"after", action_class_name(c->after_action)},
                 {"blocked", action_class_name(c->blocked_action)},
                 {"window_ms", c->window_ms}};
  } else if (const auto* pr = std::get_if<PriorityRule>(&p.rule)) {
    j["kind"] = "priority";
    j["rule"] = {{"winner", pr->winner_nif}, {"loser", pr->loser_nif}};
  } else {
    const auto& m = std::get<GranularityMergeRule>(p.rule);
    json periods = json::object();
    for (const auto& [nif, period] : m.delivery_periods) periods[nif] = period;
    j["kind"] = "merge";
    j["rule"] = {{"source_id", m.source_id},
                 {"provisioned_period_ms", m.provisioned_period_ms},
                 {"delivery_periods", periods}};
  }
  return j;
}

PolicyRule policy_from_json(const json& j) {
  PolicyRule p;
  p.policy_id = j.at("policy_id").get<std::string>();
  p.scope.service_id = j.at("scope").at("service_id").get<std::string>();
  p.scope.nif_pair = {j.at("scope").at("nif_pair").at(0).get<std::string>(),
                      j.at("scope").at("nif_pair").at(1).get<std::string>()};
  p.active = j.at("active").get<bool>();
  p.created_at = j.at("created_at").get<LogicalTime>();
  std::string kind = j.at("kind").get<std::string>();
  const json& r = j.at("rule");
  if (kind == "cooldown") {
    p.rule = CooldownRule{parse_action_class(r.at("after").get<std::string>()),
                          parse_action_class(r.at("blocked").get<std::string>()),
                          r.at("window_ms").get<LogicalTime>()};
  } else if (kind == "priority") {
    p.rule = PriorityRule{r.at("winner").get<std::string>(), r.at("loser").get<std::string>()};
  } else if (kind == "merge") {
    GranularityMergeRule m;
    m.source_id = r.at("source_id").get<std::string>();
    m.provisioned_period_ms = r.at("provisioned_period_ms").get<LogicalTime>();
    for (const auto& [nif, period] : r.at("delivery_periods").items()) {
      m.delivery_periods[nif] = period.get<LogicalTime>();
    }
    p.rule = std::move(m);
  } else {
    throw NistError(ErrorCode::ParseError, "unknown policy kind: " + kind);
  }
  return p;
}

// ── detection ────────────────────────────────────────────────────────────────

namespace {

struct PartyProfile {
  ConflictParty party;
  const NmapekProfile* profile;
  bool deployed;
  std::size_t order;  // position in the request, used when neither is deployed
};

// Senior party of a pair: the deployed one when exactly one side is already
// running, otherwise the one listed first in the request.
void note_seniority(json& details, const PartyProfile& a, const PartyProfile& b) {
  if (a.deployed != b.deployed) {
    const PartyProfile& senior = a.deployed ? a : b;
    details["senior"] = party_key(senior.party);
    details["senior_derivation"] = "deployment";
  } else {
    const PartyProfile& senior = a.order <= b.order ? a : b;
    details["senior"] = party_key(senior.party);
    details["senior_derivation"] = "order";
  }
}

Conflict make_conflict(ConflictKind kind, const PartyProfile& a, const PartyProfile& b,
                       std::string subject, json details) {
  Conflict c;
  c.kind = kind;
  c.parties = std::minmax(a.party, b.party);
  c.subject = std::move(subject);
  c.details = std::move(details);
  return c;
}

}  // namespace

std::vector<Conflict> detect_conflicts(
    const std::vector<NmapekProfile>& fresh,
    const std::vector<std::pair<std::string, NmapekProfile>>& deployed,
    const ConflictMatrix& matrix) {
  std::vector<PartyProfile> all;
  all.reserve(fresh.size() + deployed.size());
  for (std::size_t i = 0; i < fresh.size(); ++i) {
    all.push_back({{"", fresh[i].nif_name}, &fresh[i], false, i});
  }
  for (const auto& [nis_id, prof] : deployed) {
    all.push_back({{nis_id, prof.nif_name}, &prof, true, all.size()});
  }

  std::vector<Conflict> out;
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      const PartyProfile& a = all[i];
      const PartyProfile& b = all[j];
      // pairs among already-running NIFs were settled at their own admission
      if (a.deployed && b.deployed) continue;

      for (const PlanTarget& ta : a.profile->plan_targets) {
        for (const PlanTarget& tb : b.profile->plan_targets) {
          if (ta.service_id != tb.service_id) continue;
          if (ta.target_path == tb.target_path) {
            json details = {{"target_path", ta.target_path},
                            {"actions",
                             {{party_key(a.party), action_class_name(ta.action_class)},
                              {party_key(b.party), action_class_name(tb.action_class)}}}};
            note_seniority(details, a, b);
            out.push_back(make_conflict(ConflictKind::TargetOverlap, a, b, ta.service_id,
                                        std::move(details)));
            continue;
          }
          MatrixEntry entry = matrix.at(ta.action_class, tb.action_class);
          if (entry.kind == ResolutionKind::None) continue;
          json details = {{"actions",
                           {{party_key(a.party), action_class_name(ta.action_class)},
                            {party_key(b.party), action_class_name(tb.action_class)}}},
                          {"paths",
                           {{party_key(a.party), ta.target_path},
                            {party_key(b.party), tb.target_path}}},
                          {"entry", resolution_kind_name(entry.kind)}};
          if (entry.kind == ResolutionKind::Temporal) details["window_ms"] = entry.window_ms;
          note_seniority(details, a, b);
          out.push_back(make_conflict(ConflictKind::SameServiceAction, a, b, ta.service_id,
                                      std::move(details)));
        }
      }

      for (const SourceBinding& sa : a.profile->sources) {
        for (const SourceBinding& sb : b.profile->sources) {
          if (sa.source_id != sb.source_id) continue;
          if (sa.sampling_period_ms == sb.sampling_period_ms) continue;
          json details = {{"periods_ms",
                           {{party_key(a.party), sa.sampling_period_ms},
                            {party_key(b.party), sb.sampling_period_ms}}}};
          out.push_back(make_conflict(ConflictKind::SourceGranularity, a, b, sa.source_id,
                                      std::move(details)));
        }
      }
    }
  }

  std::sort(out.begin(), out.end(), [](const Conflict& x, const Conflict& y) {
    if (x.subject != y.subject) return x.subject < y.subject;
    if (x.parties != y.parties) return x.parties < y.parties;
    if (x.kind != y.kind) return static_cast<int>(x.kind) < static_cast<int>(y.kind);
    return x.details.dump() < y.details.dump();
  });
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool initial_assessment(const std::vector<NmapekProfile>& profiles) {
  std::set<std::string> seen_sources;
  for (const NmapekProfile& p : profiles) {
    if (p.classes.count(NmapekClass::Plan) || p.classes.count(NmapekClass::Execute)) return true;
    for (const SourceBinding& s : p.sources) {
      if (!seen_sources.insert(s.source_id).second) return true;
    }
  }
  return false;
}

// ── resolution ───────────────────────────────────────────────────────────────

namespace {

// nif_name part of a party key produced by detect_conflicts
std::string key_nif(const std::string& key) { return key.substr(key.find('/') + 1); }

bool same_rule(const PolicyRule& a, const PolicyRule& b) {
  return a.scope == b.scope && a.rule == b.rule;
}

void push_unique(std::vector<PolicyRule>& rules, const std::vector<PolicyRule>& deployed,
                 PolicyRule rule) {
  for (const PolicyRule& d : deployed) {
    if (d.active && same_rule(d, rule)) return;  // already governed
  }
  for (const PolicyRule& r : rules) {
    if (same_rule(r, rule)) return;
  }
  rules.push_back(std::move(rule));
}

}  // namespace

Resolution resolve(const std::vector<Conflict>& conflicts, const ConflictMatrix& matrix,
                   const std::vector<PolicyRule>& deployed_policies) {
  Resolution res;
  // one merge rule per source, accumulated across all pairwise conflicts
  std::map<std::string, std::map<std::string, LogicalTime>> source_periods;

  for (const Conflict& c : conflicts) {
    std::pair<std::string, std::string> pair =
        std::minmax(c.parties.first.nif_name, c.parties.second.nif_name);
    std::string key_a = party_key(c.parties.first);
    std::string key_b = party_key(c.parties.second);

    switch (c.kind) {
      case ConflictKind::TargetOverlap: {
        std::string senior = key_nif(c.details.at("senior").get<std::string>());
        PolicyRule rule;
        rule.scope = {c.subject, pair};
        rule.rule = PriorityRule{senior, senior == pair.first ? pair.second : pair.first};
        push_unique(res.rules, deployed_policies, std::move(rule));
        break;
      }
      case ConflictKind::SameServiceAction: {
        ActionClass act_a =
            parse_action_class(c.details.at("actions").at(key_a).get<std::string>());
        ActionClass act_b =
            parse_action_class(c.details.at("actions").at(key_b).get<std::string>());
        MatrixEntry entry = matrix.at(act_a, act_b);
        std::string senior_key = c.details.at("senior").get<std::string>();
        bool a_senior = senior_key == key_a;
        if (entry.kind == ResolutionKind::Temporal) {
          PolicyRule rule;
          rule.scope = {c.subject, pair};
          // the senior party's action opens the window; the gate checks both
          // directions at decision time
          rule.rule = CooldownRule{a_senior ? act_a : act_b, a_senior ? act_b : act_a,
                                   entry.window_ms};
          push_unique(res.rules, deployed_policies, std::move(rule));
        } else if (entry.kind == ResolutionKind::Exclusive) {
          // priority needs real seniority; request order is not enough to
          // pick a permanent winner between two equally-new NIFs
          if (c.details.at("senior_derivation").get<std::string>() == "deployment") {
            std::string senior = key_nif(senior_key);
            PolicyRule rule;
            rule.scope = {c.subject, pair};
            rule.rule = PriorityRule{senior, senior == pair.first ? pair.second : pair.first};
            push_unique(res.rules, deployed_policies, std::move(rule));
          } else {
            res.fallback = true;
            res.config_updates.push_back({{"service_id", c.subject},
                                          {"action", "restore_last_valid_config"},
                                          {"parties", {pair.first, pair.second}}});
          }
        }
        break;
      }
      case ConflictKind::SourceGranularity: {
        auto& periods = source_periods[c.subject];
        for (const auto& [key, period] : c.details.at("periods_ms").items()) {
          periods[key_nif(key)] = period.get<LogicalTime>();
        }
        break;
      }
    }
  }

  for (const auto& [source_id, periods] : source_periods) {
    GranularityMergeRule merge;
    merge.source_id = source_id;
    merge.provisioned_period_ms = periods.begin()->second;
    for (const auto& [nif, period] : periods) {
      merge.provisioned_period_ms = std::min(merge.provisioned_period_ms, period);
    }
    for (const auto& [nif, period] : periods) {
      // deliveries are multiples of the provisioned period, rounded down
      merge.delivery_periods[nif] =
          (period / merge.provisioned_period_ms) * merge.provisioned_period_ms;
    }
    PolicyRule rule;
    rule.scope = {"", {merge.delivery_periods.begin()->first,
                       std::prev(merge.delivery_periods.end())->first}};
    rule.rule = std::move(merge);
    push_unique(res.rules, deployed_policies, std::move(rule));
  }

  return res;
}

// ── policy store ─────────────────────────────────────────────────────────────

PolicyStore::PolicyStore(std::filesystem::path data_dir) : now_([] { return LogicalTime{0}; }) {
  if (data_dir.empty()) return;
  std::filesystem::create_directories(data_dir / "policies");
  log_path_ = data_dir / "policies" / "policies.log";
  std::ifstream in(log_path_);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    std::string op = rec.at("op").get<std::string>();
    if (op == "store") {
      PolicyRule p = policy_from_json(rec.at("policy"));
      std::uint64_t n = std::stoull(p.policy_id.substr(p.policy_id.find('-') + 1));
      next_policy_ = std::max(next_policy_, n + 1);
      policies_[p.policy_id] = std::move(p);
    } else if (op == "deactivate") {
      auto it = policies_.find(rec.at("policy_id").get<std::string>());
      if (it != policies_.end()) it->second.active = false;
    }
  }
}

void PolicyStore::set_clock(std::function<LogicalTime()> now_fn) { now_ = std::move(now_fn); }

void PolicyStore::append_log(const json& record) {
  if (log_path_.empty()) return;
  std::ofstream out(log_path_, std::ios::app);
  out << canonical_dump(record) << "\n";
}

std::string PolicyStore::store_policy(PolicyRule rule) {
  for (const auto& [id, p] : policies_) {
    if (p.active && p.scope == rule.scope && p.rule == rule.rule) {
      throw NistError(ErrorCode::DuplicatePolicy, "policy already active as " + id);
    }
  }
  rule.policy_id = format_id("p", next_policy_++);
  if (rule.created_at == 0) rule.created_at = now_();
  rule.active = true;
  append_log({{"op", "store"}, {"policy", policy_to_json(rule)}});
  std::string id = rule.policy_id;
  policies_[id] = std::move(rule);
  return id;
}

std::vector<PolicyRule> PolicyStore::lookup_policies(const std::string& service_id,
                                                     ActionClass action) const {
  std::vector<PolicyRule> out;
  for (const auto& [id, p] : policies_) {
    if (!p.active || p.scope.service_id != service_id) continue;
    if (const auto* c = std::get_if<CooldownRule>(&p.rule)) {
      if (c->after_action != action && c->blocked_action != action) continue;
    }
    out.push_back(p);
  }
  return out;
}

std::vector<PolicyRule> PolicyStore::active_policies() const {
  std::vector<PolicyRule> out;
  for (const auto& [id, p] : policies_) {
    if (p.active) out.push_back(p);
  }
  return out;
}

PolicyRule PolicyStore::get(const std::string& policy_id) const {
  auto it = policies_.find(policy_id);
  if (it == policies_.end()) {
    throw NistError(ErrorCode::UnknownPolicy, "no policy " + policy_id);
  }
  return it->second;
}

void PolicyStore::deactivate(const std::string& policy_id) {
  auto it = policies_.find(policy_id);
  if (it == policies_.end()) {
    throw NistError(ErrorCode::UnknownPolicy, "no policy " + policy_id);
  }
  if (!it->second.active) return;
  it->second.active = false;
  append_log({{"op", "deactivate"}, {"policy_id", policy_id}});
}

// ── runtime gate ─────────────────────────────────────────────────────────────

GateKeeper::GateKeeper(const PolicyStore& store) : store_(store) {}

void GateKeeper::register_nif(const std::string& nif_name) {
  std::lock_guard lock(mu_);
  nifs_.insert(nif_name);
}

void GateKeeper::unregister_nif(const std::string& nif_name) {
  std::lock_guard lock(mu_);
  nifs_.erase(nif_name);
}

void GateKeeper::note_pending(const GateAction& action, LogicalTime now) {
  std::lock_guard lock(mu_);
  if (now != pending_tick_) {
    pending_.clear();
    pending_tick_ = now;
  }
  pending_.push_back(action);
}

GateDecision GateKeeper::gate_action(const GateAction& action, LogicalTime now) {
  std::lock_guard lock(mu_);
  if (!nifs_.count(action.nif)) {
    throw NistError(ErrorCode::UnknownNif, "NIF not registered with the gate: " + action.nif);
  }
  if (now != pending_tick_) {
    pending_.clear();
    pending_tick_ = now;
  }

  GateDecision decision;
  for (const PolicyRule& p : store_.lookup_policies(action.service_id, action.action_class)) {
    if (const auto* pr = std::get_if<PriorityRule>(&p.rule)) {
      if (pr->loser_nif != action.nif) continue;
      bool winner_pending = std::any_of(
          pending_.begin(), pending_.end(), [&](const GateAction& g) {
            return g.nif == pr->winner_nif && g.service_id == action.service_id;
          });
      if (winner_pending) {
        decision.verdict = GateVerdict::Deny;
        decision.rule_id = p.policy_id;
        decision.reason = pr->winner_nif + " has priority on " + action.service_id;
        return decision;
      }
    } else if (const auto* c = std::get_if<CooldownRule>(&p.rule)) {
      // bidirectional: whichever side ran last blocks the other side of the
      // pair for the window
      std::vector<ActionClass> others;
      if (action.action_class == c->blocked_action) others.push_back(c->after_action);
      if (action.action_class == c->after_action) others.push_back(c->blocked_action);
      for (ActionClass other : others) {
        auto it = last_exec_.find({action.service_id, other});
        if (it == last_exec_.end()) continue;
        if (now - it->second >= c->window_ms) continue;
        LogicalTime until = it->second + c->window_ms;
        if (decision.verdict != GateVerdict::Delay || until > decision.until) {
          decision.verdict = GateVerdict::Delay;
          decision.until = until;
          decision.rule_id = p.policy_id;
          decision.reason = std::string(action_class_name(other)) + " on " + action.service_id +
                            " at t=" + std::to_string(it->second) + " holds a " +
                            std::to_string(c->window_ms) + " ms window";
        }
      }
    }
  }
  if (decision.verdict == GateVerdict::Delay) return decision;

  history_.push_back({action.nif, action.service_id, action.action_class, now});
  auto& last = last_exec_[{action.service_id, action.action_class}];
  last = std::max(last, now);
  decision.reason = "no blocking rule";
  return decision;
}

std::vector<ExecutedAction> GateKeeper::history() const {
  std::lock_guard lock(mu_);
  return history_;
}

// ── knowledge sharing ────────────────────────────────────────────────────────

ParsedKnowledgeRule parse_knowledge_rule(const std::string& text) {
  auto fail = [&](const std::string& why) -> ParsedKnowledgeRule {
    throw NistError(ErrorCode::ParseError, "bad knowledge rule \"" + text + "\": " + why);
  };
  auto is_ident = [](const std::string& s) {
    if (s.empty() || (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_')) {
      return false;
    }
    return std::all_of(s.begin(), s.end(), [](unsigned char ch) {
      return std::isalnum(ch) || ch == '_' || ch == '.';
    });
  };

  std::size_t arrow = text.find("->");
  if (arrow == std::string::npos) return fail("missing ->");

  std::istringstream lhs(text.substr(0, arrow));
  ParsedKnowledgeRule rule;
  std::string constant;
  if (!(lhs >> rule.metric >> rule.op >> constant)) return fail("condition needs metric op const");
  std::string extra;
  if (lhs >> extra) return fail("trailing token before ->: " + extra);
  if (!is_ident(rule.metric)) return fail("metric must be an identifier");
  static const std::set<std::string> kOps = {"<", ">", "<=", ">=", "=="};
  if (!kOps.count(rule.op)) return fail("unknown operator " + rule.op);
  std::size_t used = 0;
  try {
    rule.constant = std::stod(constant, &used);
  } catch (const std::exception&) {
    return fail("constant is not a number: " + constant);
  }
  if (used != constant.size()) return fail("constant is not a number: " + constant);

  std::string rhs = text.substr(arrow + 2);
  auto strip = [](std::string s) {
    std::size_t b = s.find_first_not_of(" \t");
    std::size_t e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  rhs = strip(rhs);
  std::size_t open = rhs.find('(');
  if (open == std::string::npos || rhs.back() != ')') return fail("consequence needs verb(arg)");
  rule.verb = rhs.substr(0, open);
  rule.arg = rhs.substr(open + 1, rhs.size() - open - 2);
  if (!is_ident(rule.verb)) return fail("verb must be an identifier");
  if (rule.arg.empty() || rule.arg.find(')') != std::string::npos) return fail("bad argument");
  return rule;
}

KnowledgeRules translate_knowledge(const Catalog& catalog, const std::string& model_ref) {
  ModelImage img = catalog.get_model(model_ref);
  KnowledgeRules out;
  out.source_model_ref = model_ref;

  std::optional<double> threshold;
  try {
    json blob = json::parse(catalog.get_blob(img.blob_ref));
    if (blob.contains("params") && blob["params"].contains("anomaly_threshold") &&
        blob["params"]["anomaly_threshold"].is_number()) {
      threshold = blob["params"]["anomaly_threshold"].get<double>();
    }
  } catch (const json::parse_error&) {
    // opaque artifact: fall through to the quality rule
  }

  if (threshold) {
    out.rules.push_back("cpu_load > " + fmt_number(*threshold) + " -> flag(anomaly)");
  } else {
    const char* cmp = metric_higher_is_better(img.metric) ? ">=" : "<=";
    out.rules.push_back(std::string(learning_metric_name(img.metric)) + " " + cmp + " " +
                        fmt_number(img.test_score) + " -> assert(model_quality)");
  }
  for (const std::string& r : out.rules) parse_knowledge_rule(r);  // emit only valid rules
  return out;
}

SharedKnowledgeResult build_shared_knowledge_policy(
    const NisDescriptor& nisd, const KnowledgeRules& rules,
    const std::vector<PolicyRule>& existing, const std::vector<NmapekProfile>& member_profiles,
    const ConflictMatrix& matrix) {
  SharedKnowledgeResult result;
  result.nisd = nisd;

  std::set<std::string> members;
  for (const NifRef& ref : nisd.nif_refs) members.insert(ref.name);
  bool member_loses = std::any_of(existing.begin(), existing.end(), [&](const PolicyRule& p) {
    const auto* pr = std::get_if<PriorityRule>(&p.rule);
    return p.active && pr && members.count(pr->loser_nif);
  });

  for (const std::string& text : rules.rules) {
    ParsedKnowledgeRule parsed = parse_knowledge_rule(text);
    // a blanket allow(...) would override a priority rule under which one of
    // the member NIFs already loses; keep the stricter deployed rule
    if (parsed.verb == "allow" && member_loses) {
      result.dropped.push_back(text);
      continue;
    }
    if (std::find(result.nisd.policies.begin(), result.nisd.policies.end(), text) !=
        result.nisd.policies.end()) {
      continue;
    }
    result.nisd.policies.push_back(text);
    result.attached.push_back(text);
  }

  result.recheck = detect_conflicts(member_profiles, {}, matrix);
  return result;
}

}  // namespace nist
