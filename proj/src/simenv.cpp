#include "nist/simenv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nist {

using nlohmann::json;

// ── small converters ──────────────────────────────────────────────────────────

json resource_to_json(const ResourceVec& v) {
  return json{{"cpu_mc", v.cpu_mc},
              {"mem_mib", v.mem_mib},
              {"gpu_units", v.gpu_units},
              {"link_bw_mbps", v.link_bw_mbps}};
}

ResourceVec resource_from_json(const json& j) {
  ResourceVec v;
  v.cpu_mc = j.value("cpu_mc", std::int64_t{0});
  v.mem_mib = j.value("mem_mib", std::int64_t{0});
  v.gpu_units = j.value("gpu_units", std::int64_t{0});
  v.link_bw_mbps = j.value("link_bw_mbps", std::int64_t{0});
  return v;
}

const char* node_tier_name(NodeTier t) {
  return t == NodeTier::Cloud ? "cloud" : "edge";
}

NodeTier parse_node_tier(const std::string& name) {
  if (name == "cloud") return NodeTier::Cloud;
  if (name == "edge") return NodeTier::Edge;
  throw NistError(ErrorCode::ParseError, "unknown node tier '" + name + "'");
}

const char* metric_kind_name(MetricKind k) {
  switch (k) {
    case MetricKind::CpuLoad: return "cpu_load";
    case MetricKind::MemLoad: return "mem_load";
    case MetricKind::StorageUsed: return "storage_used";
    case MetricKind::LatencyMs: return "latency_ms";
  }
  return "cpu_load";
}

MetricKind parse_metric_kind(const std::string& name) {
  if (name == "cpu_load") return MetricKind::CpuLoad;
  if (name == "mem_load") return MetricKind::MemLoad;
  if (name == "storage_used") return MetricKind::StorageUsed;
  if (name == "latency_ms") return MetricKind::LatencyMs;
  throw NistError(ErrorCode::ParseError, "unknown metric kind '" + name + "'");
}

void default_stream_params(NodeTier tier, MetricKind kind, double& mean, double& sigma) {
  switch (kind) {
    case MetricKind::CpuLoad:
      mean = 0.35;
      sigma = 0.05;
      break;
    case MetricKind::MemLoad:
      mean = 0.50;
      sigma = 0.04;
      break;
    case MetricKind::StorageUsed:
      mean = 0.40;
      sigma = 0.03;
      break;
    case MetricKind::LatencyMs:
      mean = tier == NodeTier::Edge ? 10.0 : 40.0;
      sigma = tier == NodeTier::Edge ? 2.0 : 5.0;
      break;
  }
}

// ── SimEnv: clock and queue ──────────────────────────────────────────────────

SimEnv::SimEnv(std::uint64_t seed) : seed_(seed) {}

std::uint64_t SimEnv::schedule(LogicalTime at, const std::string& kind, json payload,
                               EventFn fn) {
  if (at < now_) {
    throw NistError(ErrorCode::TimeReversal,
                    "cannot schedule '" + kind + "' at " + std::to_string(at) +
                        " before now=" + std::to_string(now_));
  }
  std::uint64_t seq = next_seq_++;
  queue_.emplace(std::make_pair(at, seq),
                 QueuedEvent{SimEvent{at, seq, kind, std::move(payload)}, std::move(fn)});
  ++scheduled_;
  return seq;
}

std::vector<SimEvent> SimEnv::advance(LogicalTime until) {
  if (until < now_) {
    throw NistError(ErrorCode::TimeReversal, "advance(" + std::to_string(until) +
                                                 ") before now=" + std::to_string(now_));
  }
  std::vector<SimEvent> dispatched;
  while (!queue_.empty() && queue_.begin()->first.first <= until) {
    auto it = queue_.begin();
    QueuedEvent qe = std::move(it->second);
    queue_.erase(it);
    now_ = qe.ev.at;
    ++dispatched_;
    if (qe.fn) qe.fn(qe.ev);
    if (post_event_) post_event_(qe.ev);
    dispatched.push_back(std::move(qe.ev));
  }
  now_ = until;
  return dispatched;
}

void SimEnv::run_to_idle() {
  while (!queue_.empty()) advance(queue_.begin()->first.first);
}

void SimEnv::set_post_event_hook(std::function<void(const SimEvent&)> hook) {
  post_event_ = std::move(hook);
}

// ── nodes and ledger ─────────────────────────────────────────────────────────

void SimEnv::add_node(const SimNode& node) {
  if (node.node_id.empty()) throw NistError(ErrorCode::ConfigError, "node_id must be nonempty");
  if (nodes_.count(node.node_id)) {
    throw NistError(ErrorCode::ConfigError, "duplicate node '" + node.node_id + "'");
  }
  const auto& c = node.capacity;
  if (c.cpu_mc < 0 || c.mem_mib < 0 || c.gpu_units < 0 || c.link_bw_mbps < 0) {
    throw NistError(ErrorCode::ConfigError, "negative capacity on node '" + node.node_id + "'");
  }
  nodes_.emplace(node.node_id, NodeState{node, {}, {}});
}

std::vector<std::string> SimEnv::node_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : nodes_) out.push_back(id);
  return out;
}

const SimEnv::NodeState& SimEnv::node_state(const std::string& node_id) const {
  auto it = nodes_.find(node_id);
  if (it == nodes_.end()) {
    throw NistError(ErrorCode::UnknownNode, "unknown node '" + node_id + "'");
  }
  return it->second;
}

SimEnv::NodeState& SimEnv::node_state(const std::string& node_id) {
  return const_cast<NodeState&>(std::as_const(*this).node_state(node_id));
}

const SimNode& SimEnv::node(const std::string& node_id) const {
  return node_state(node_id).node;
}

ResourceVec SimEnv::allocated(const std::string& node_id) const {
  return node_state(node_id).allocated;
}

ResourceVec SimEnv::available(const std::string& node_id) const {
  const auto& ns = node_state(node_id);
  return ns.node.capacity - ns.allocated;
}

bool SimEnv::try_allocate(const std::string& node_id, const std::string& entry_id,
                          const std::string& kind, const std::string& owner,
                          const ResourceVec& amount) {
  auto& ns = node_state(node_id);
  if (ns.entries.count(entry_id)) {
    throw NistError(ErrorCode::InvalidState,
                    "ledger entry '" + entry_id + "' already exists on " + node_id);
  }
  if (!(ns.allocated + amount).fits_within(ns.node.capacity)) return false;
  ns.entries.emplace(entry_id, AllocEntry{kind, owner, amount});
  ns.allocated = ns.allocated + amount;
  return true;
}

void SimEnv::release_entry(const std::string& node_id, const std::string& entry_id) {
  auto& ns = node_state(node_id);
  auto it = ns.entries.find(entry_id);
  if (it == ns.entries.end()) {
    throw NistError(ErrorCode::InvalidState,
                    "no ledger entry '" + entry_id + "' on " + node_id);
  }
  ns.allocated = ns.allocated - it->second.amount;
  ns.entries.erase(it);
}

void SimEnv::release_by_owner(const std::string& owner) {
  for (auto& [id, ns] : nodes_) {
    for (auto it = ns.entries.begin(); it != ns.entries.end();) {
      if (it->second.owner == owner) {
        ns.allocated = ns.allocated - it->second.amount;
        it = ns.entries.erase(it);
      } else {
        ++it;
      }
    }
  }
}

void SimEnv::relabel_entry(const std::string& node_id, const std::string& entry_id,
                           const std::string& kind, const std::string& owner) {
  auto& ns = node_state(node_id);
  auto it = ns.entries.find(entry_id);
  if (it == ns.entries.end()) {
    throw NistError(ErrorCode::InvalidState,
                    "no ledger entry '" + entry_id + "' on " + node_id);
  }
  it->second.kind = kind;
  it->second.owner = owner;
}

void SimEnv::audit() const {
  for (const auto& [id, ns] : nodes_) {
    ResourceVec sum;
    for (const auto& [eid, e] : ns.entries) sum = sum + e.amount;
    if (!(sum == ns.allocated)) {
      throw NistError(ErrorCode::InvalidState, "ledger drift on node '" + id + "'");
    }
    if (!sum.fits_within(ns.node.capacity)) {
      throw NistError(ErrorCode::InvalidState, "over-allocation on node '" + id + "'");
    }
  }
}

void SimEnv::set_fault(const std::string& node_id, bool fault) {
  node_state(node_id).node.fault = fault;
}

// ── metric streams ───────────────────────────────────────────────────────────

void SimEnv::add_stream(MetricStream stream) {
  if (stream.source_id.empty()) {
    throw NistError(ErrorCode::ConfigError, "stream source_id must be nonempty");
  }
  if (streams_.count(stream.source_id)) {
    throw NistError(ErrorCode::ConfigError, "duplicate stream '" + stream.source_id + "'");
  }
  if (stream.period_ms <= 0) {
    throw NistError(ErrorCode::ConfigError,
                    "stream '" + stream.source_id + "' needs a positive period");
  }
  StreamState st;
  st.seed_base = splitmix64(seed_ ^ fnv1a64(stream.source_id));
  st.cfg = std::move(stream);
  std::string key = st.cfg.source_id;
  streams_.emplace(std::move(key), std::move(st));
}

void SimEnv::add_default_streams(const std::string& node_id) {
  const SimNode& n = node(node_id);
  for (MetricKind k : {MetricKind::CpuLoad, MetricKind::MemLoad, MetricKind::StorageUsed,
                       MetricKind::LatencyMs}) {
    MetricStream s;
    s.source_id = node_id + "." + metric_kind_name(k);
    s.node_id = node_id;
    s.kind = k;
    s.period_ms = 1000;
    default_stream_params(n.tier, k, s.mean, s.sigma);
    add_stream(std::move(s));
  }
}

bool SimEnv::has_stream(const std::string& source_id) const {
  return streams_.count(source_id) > 0;
}

double SimEnv::raw_sample(const StreamState& s, std::int64_t k) const {
  auto step = [&](double prev, std::int64_t i) {
    double noise =
        2.0 * unit_double(splitmix64(s.seed_base + static_cast<std::uint64_t>(i))) - 1.0;
    return s.cfg.mean + s.cfg.phi * (prev - s.cfg.mean) + s.cfg.sigma * noise;
  };
  if (k <= 0) return s.cfg.mean;
  if (s.memo_k >= 0 && k >= s.memo_k) {
    double x = s.memo_x;
    for (std::int64_t i = s.memo_k + 1; i <= k; ++i) x = step(x, i);
    s.memo_k = k;
    s.memo_x = x;
    return x;
  }
  // backward query: recompute from the start without disturbing the memo
  double x = s.cfg.mean;
  for (std::int64_t i = 1; i <= k; ++i) x = step(x, i);
  if (s.memo_k < 0) {
    s.memo_k = k;
    s.memo_x = x;
  }
  return x;
}

double SimEnv::sample(const std::string& source_id, LogicalTime at) const {
  auto it = streams_.find(source_id);
  if (it == streams_.end()) {
    throw NistError(ErrorCode::UnknownSource, "unknown source '" + source_id + "'");
  }
  const StreamState& st = it->second;
  double x = raw_sample(st, at / st.cfg.period_ms);
  for (const auto& sp : st.cfg.spikes) {
    if (at >= sp.from_ms && at < sp.to_ms) {
      x = sp.value;
      break;
    }
  }
  if (st.cfg.kind == MetricKind::CpuLoad && !st.cfg.node_id.empty() &&
      node(st.cfg.node_id).fault) {
    x = std::max(0.95, x);
  }
  switch (st.cfg.kind) {
    case MetricKind::CpuLoad:
    case MetricKind::MemLoad:
    case MetricKind::StorageUsed:
      return std::clamp(x, 0.0, 1.0);
    case MetricKind::LatencyMs:
      return std::max(0.0, x);
  }
  return x;
}

// ── services ─────────────────────────────────────────────────────────────────

void SimEnv::add_service(const SimService& svc) {
  if (services_.count(svc.service_id)) {
    throw NistError(ErrorCode::ConfigError, "duplicate service '" + svc.service_id + "'");
  }
  if (svc.replicas < 1) {
    throw NistError(ErrorCode::ConfigError,
                    "service '" + svc.service_id + "' needs at least one replica");
  }
  node_state(svc.node_id);  // existence check before any mutation
  for (int i = 1; i <= svc.replicas; ++i) {
    std::string eid = "service/" + svc.service_id + "/r" + std::to_string(i);
    if (!try_allocate(svc.node_id, eid, "service", svc.service_id, svc.replica_demand)) {
      for (int j = 1; j < i; ++j) {
        release_entry(svc.node_id, "service/" + svc.service_id + "/r" + std::to_string(j));
      }
      throw NistError(ErrorCode::InsufficientResources,
                      "node '" + svc.node_id + "' cannot host service '" + svc.service_id + "'");
    }
  }
  services_.emplace(svc.service_id, svc);
}

const SimService& SimEnv::service(const std::string& service_id) const {
  auto it = services_.find(service_id);
  if (it == services_.end()) {
    throw NistError(ErrorCode::UnknownService, "unknown service '" + service_id + "'");
  }
  return it->second;
}

std::vector<std::string> SimEnv::service_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : services_) out.push_back(id);
  return out;
}

void SimEnv::scale_service(const std::string& service_id) {
  auto it = services_.find(service_id);
  if (it == services_.end()) {
    throw NistError(ErrorCode::UnknownService, "unknown service '" + service_id + "'");
  }
  SimService& svc = it->second;
  std::string eid = "service/" + service_id + "/r" + std::to_string(svc.replicas + 1);
  if (!try_allocate(svc.node_id, eid, "service", service_id, svc.replica_demand)) {
    throw NistError(ErrorCode::InsufficientResources,
                    "no headroom on '" + svc.node_id + "' to scale '" + service_id + "'");
  }
  ++svc.replicas;
}

void SimEnv::relocate_service(const std::string& service_id, const std::string& node_id) {
  auto it = services_.find(service_id);
  if (it == services_.end()) {
    throw NistError(ErrorCode::UnknownService, "unknown service '" + service_id + "'");
  }
  SimService& svc = it->second;
  node_state(node_id);  // throws UnknownNode before any mutation
  if (svc.node_id == node_id) return;
  ResourceVec total;
  for (int i = 0; i < svc.replicas; ++i) total = total + svc.replica_demand;
  if (!total.fits_within(available(node_id))) {
    throw NistError(ErrorCode::InsufficientResources,
                    "node '" + node_id + "' cannot absorb service '" + service_id + "'");
  }
  // atomic swap: old replicas vanish, equal replicas appear on the target
  for (int i = 1; i <= svc.replicas; ++i) {
    std::string eid = "service/" + service_id + "/r" + std::to_string(i);
    release_entry(svc.node_id, eid);
    try_allocate(node_id, eid, "service", service_id, svc.replica_demand);
  }
  svc.node_id = node_id;
}

// ── scenario NIF behaviors ───────────────────────────────────────────────────

void SimEnv::bind_anomaly_scale(const AnomalyScaleBehavior& b) {
  anomaly_behaviors_[b.nif_name] = b;
  anomaly_latch_[b.nif_name] = false;
}

void SimEnv::bind_relocation(const RelocationBehavior& b) {
  relocation_behaviors_[b.nif_name] = b;
}

void SimEnv::unbind_nif(const std::string& nif_name) {
  anomaly_behaviors_.erase(nif_name);
  relocation_behaviors_.erase(nif_name);
  anomaly_latch_.erase(nif_name);
}

std::map<std::string, double> SimEnv::relocation_scores(
    LogicalTime at, const RelocationWeights& weights) const {
  struct Row {
    double cpu, mem, storage, latency;
  };
  std::map<std::string, Row> rows;
  for (const auto& [id, ns] : nodes_) {
    rows[id] = Row{sample(id + ".cpu_load", at), sample(id + ".mem_load", at),
                   sample(id + ".storage_used", at), sample(id + ".latency_ms", at)};
  }
  auto norm = [&](auto getter) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& [_, r] : rows) {
      lo = std::min(lo, getter(r));
      hi = std::max(hi, getter(r));
    }
    std::map<std::string, double> out;
    for (const auto& [id, r] : rows) {
      out[id] = hi > lo ? (getter(r) - lo) / (hi - lo) : 0.0;
    }
    return out;
  };
  auto ncpu = norm([](const Row& r) { return r.cpu; });
  auto nmem = norm([](const Row& r) { return r.mem; });
  auto nsto = norm([](const Row& r) { return r.storage; });
  auto nlat = norm([](const Row& r) { return r.latency; });
  std::map<std::string, double> scores;
  for (const auto& [id, _] : rows) {
    scores[id] = weights.cpu * ncpu[id] + weights.mem * nmem[id] + weights.storage * nsto[id] +
                 weights.latency * nlat[id];
  }
  return scores;
}

std::string SimEnv::best_node_for(const std::string& service_id, LogicalTime at,
                                  const RelocationWeights& weights) const {
  const SimService& svc = service(service_id);
  auto scores = relocation_scores(at, weights);
  std::string best;
  double best_score = std::numeric_limits<double>::infinity();
  for (const auto& [id, score] : scores) {  // ascending node id: first min wins
    if (score < best_score) {
      best = id;
      best_score = score;
    }
  }
  // the current node wins exact ties against any other minimum
  if (scores.at(svc.node_id) == best_score) return svc.node_id;
  return best;
}

std::vector<ProposedAction> SimEnv::run_scenario_nifs(LogicalTime now) {
  std::vector<ProposedAction> out;
  for (auto& [name, b] : anomaly_behaviors_) {
    if (now % b.period_ms != 0) continue;
    const SimService& svc = service(b.service_id);
    double cpu = sample(svc.node_id + ".cpu_load", now);
    bool fired = cpu >= b.theta;
    bool& latch = anomaly_latch_[name];
    if (fired && !latch) {
      out.push_back(ProposedAction{name, b.service_id, ActionClass::Scale, "", now});
    }
    latch = fired;
  }
  for (auto& [name, b] : relocation_behaviors_) {
    if (now % b.period_ms != 0) continue;
    const SimService& svc = service(b.service_id);
    std::string best = best_node_for(b.service_id, now, b.weights);
    if (best != svc.node_id) {
      out.push_back(ProposedAction{name, b.service_id, ActionClass::Relocate, best, now});
    }
  }
  return out;
}

json SimEnv::state_json() const {
  json nodes = json::object();
  for (const auto& [id, ns] : nodes_) {
    json entries = json::object();
    for (const auto& [eid, e] : ns.entries) {
      entries[eid] =
          json{{"kind", e.kind}, {"owner", e.owner}, {"amount", resource_to_json(e.amount)}};
    }
    nodes[id] = json{{"tier", node_tier_name(ns.node.tier)},
                     {"capacity", resource_to_json(ns.node.capacity)},
                     {"allocated", resource_to_json(ns.allocated)},
                     {"available", resource_to_json(ns.node.capacity - ns.allocated)},
                     {"fault", ns.node.fault},
                     {"entries", std::move(entries)}};
  }
  json services = json::object();
  for (const auto& [id, s] : services_) {
    services[id] = json{{"node_id", s.node_id},
                        {"replicas", s.replicas},
                        {"replica_demand", resource_to_json(s.replica_demand)}};
  }
  return json{{"now", now_}, {"nodes", std::move(nodes)}, {"services", std::move(services)}};
}

}  // namespace nist
