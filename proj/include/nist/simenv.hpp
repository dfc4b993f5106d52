#pragma once

// Deterministic discrete-event simulation environment: logical clock + event
// queue, simulated edge/cloud nodes with integer resource ledgers, seeded
// metric streams, simulated services (the NIFs' workloads), fault injection,
// and the two scenario NIF behaviors (anomaly+scale, multi-criteria
// relocation) as a proposal engine.
//
// Time is integer milliseconds. Everything stochastic derives from the env
// seed through splitmix64 counters, so a fixed seed reproduces every sample
// bit for bit. The event loop is the single mutator of sim state; callers on
// other threads must go through their own serialization (the server wraps the
// whole loop in one mutex).

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "nist/common.hpp"
#include "nist/descriptors.hpp"

namespace nist {

// ── resources ───────────────────────────────────────────────────────────────

struct ResourceVec {
  std::int64_t cpu_mc = 0;      // millicores
  std::int64_t mem_mib = 0;     // MiB
  std::int64_t gpu_units = 0;   // whole accelerators
  std::int64_t link_bw_mbps = 0;  // Mbit/s

  ResourceVec operator+(const ResourceVec& o) const {
    return {cpu_mc + o.cpu_mc, mem_mib + o.mem_mib, gpu_units + o.gpu_units,
            link_bw_mbps + o.link_bw_mbps};
  }
  ResourceVec operator-(const ResourceVec& o) const {
    return {cpu_mc - o.cpu_mc, mem_mib - o.mem_mib, gpu_units - o.gpu_units,
            link_bw_mbps - o.link_bw_mbps};
  }
  bool fits_within(const ResourceVec& o) const {
    return cpu_mc <= o.cpu_mc && mem_mib <= o.mem_mib && gpu_units <= o.gpu_units &&
           link_bw_mbps <= o.link_bw_mbps;
  }
  bool operator==(const ResourceVec&) const = default;
};

nlohmann::json resource_to_json(const ResourceVec& v);
ResourceVec resource_from_json(const nlohmann::json& j);

enum class NodeTier { Cloud, Edge };

const char* node_tier_name(NodeTier t);
NodeTier parse_node_tier(const std::string& name);  // throws ParseError

struct SimNode {
  std::string node_id;
  NodeTier tier = NodeTier::Edge;
  ResourceVec capacity;
  bool fault = false;
};

// One ledger entry per allocated thing (reservation hold, committed component,
// link endpoint, service replica). available = capacity − Σ entries, and the
// sum is also tracked incrementally; audit() cross-checks the two.
struct AllocEntry {
  std::string kind;   // "hold" | "committed" | "nifc" | "link" | "service"
  std::string owner;  // reservation/instance/link/service id
  ResourceVec amount;
};

// ── metric streams ──────────────────────────────────────────────────────────

enum class MetricKind { CpuLoad, MemLoad, StorageUsed, LatencyMs };

const char* metric_kind_name(MetricKind k);
MetricKind parse_metric_kind(const std::string& name);  // throws ParseError

struct SpikeWindow {
  LogicalTime from_ms = 0;
  LogicalTime to_ms = 0;  // exclusive
  double value = 0.0;
};

// AR(1)-style process sampled on a fixed period grid:
//   x_0 = mean,  x_k = mean + phi·(x_{k-1} − mean) + sigma·n_k
// with n_k a counter-based uniform in [−1, 1]. Spike windows override the
// value outright; node faults force cpu_load to at least 0.95 afterwards.
struct MetricStream {
  std::string source_id;
  std::string node_id;     // streams attach to a node
  std::string service_id;  // optionally also tagged with a service
  MetricKind kind = MetricKind::CpuLoad;
  LogicalTime period_ms = 1000;
  double mean = 0.0;
  double sigma = 0.0;
  double phi = 0.7;
  std::vector<SpikeWindow> spikes;
};

// Default generator parameters per (tier, kind); edge latency sits well below
// cloud latency so placement decisions have signal.
void default_stream_params(NodeTier tier, MetricKind kind, double& mean, double& sigma);

// ── services ────────────────────────────────────────────────────────────────

struct SimService {
  std::string service_id;
  std::string node_id;
  int replicas = 1;
  ResourceVec replica_demand;
};

// ── events ──────────────────────────────────────────────────────────────────

struct SimEvent {
  LogicalTime at = 0;
  std::uint64_t seq = 0;
  std::string kind;
  nlohmann::json payload;
};

// ── scenario NIF behaviors ──────────────────────────────────────────────────

struct ProposedAction {
  std::string nif_name;
  std::string service_id;
  ActionClass action_class = ActionClass::Scale;
  std::string target_node;  // relocation destination, empty otherwise
  LogicalTime at = 0;
};

struct RelocationWeights {
  double cpu = 0.3;
  double mem = 0.2;
  double storage = 0.1;
  double latency = 0.4;
};

class SimEnv {
 public:
  explicit SimEnv(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  LogicalTime now() const { return now_; }

  // ── event queue ───────────────────────────────────────────────────────────
  using EventFn = std::function<void(const SimEvent&)>;
  std::uint64_t schedule(LogicalTime at, const std::string& kind, nlohmann::json payload,
                         EventFn fn);  // throws TimeReversal
  std::vector<SimEvent> advance(LogicalTime until);  // throws TimeReversal
  void run_to_idle();
  bool queue_empty() const { return queue_.empty(); }
  std::uint64_t scheduled_count() const { return scheduled_; }
  std::uint64_t dispatched_count() const { return dispatched_; }
  // Invoked after every dispatched event (test hook for conservation audits).
  void set_post_event_hook(std::function<void(const SimEvent&)> hook);

  // ── nodes and resource ledger ─────────────────────────────────────────────
  void add_node(const SimNode& node);  // throws ConfigError on duplicates/non-positive capacity
  std::vector<std::string> node_ids() const;  // ascending
  bool has_node(const std::string& node_id) const { return nodes_.count(node_id) > 0; }
  const SimNode& node(const std::string& node_id) const;  // throws UnknownNode
  ResourceVec allocated(const std::string& node_id) const;
  ResourceVec available(const std::string& node_id) const;
  bool try_allocate(const std::string& node_id, const std::string& entry_id,
                    const std::string& kind, const std::string& owner, const ResourceVec& amount);
  void release_entry(const std::string& node_id, const std::string& entry_id);
  void release_by_owner(const std::string& owner);
  void relabel_entry(const std::string& node_id, const std::string& entry_id,
                     const std::string& kind, const std::string& owner);
  // Recomputes each node's allocation from its entries and cross-checks the
  // incremental counter; throws InvalidState on drift.
  void audit() const;

  void set_fault(const std::string& node_id, bool fault);

  // ── metric streams ────────────────────────────────────────────────────────
  void add_stream(MetricStream stream);  // throws ConfigError on duplicate source_id
  // Registers the four default streams for a node ("<node>.cpu_load" etc).
  void add_default_streams(const std::string& node_id);
  bool has_stream(const std::string& source_id) const;
  double sample(const std::string& source_id, LogicalTime at) const;  // throws UnknownSource

  // ── services ──────────────────────────────────────────────────────────────
  void add_service(const SimService& svc);
  const SimService& service(const std::string& service_id) const;  // throws UnknownService
  std::vector<std::string> service_ids() const;
  void scale_service(const std::string& service_id);  // +1 replica, throws InsufficientResources
  void relocate_service(const std::string& service_id, const std::string& node_id);  // atomic swap

  // ── scenario NIF behaviors ────────────────────────────────────────────────
  struct AnomalyScaleBehavior {
    std::string nif_name;
    std::string service_id;
    double theta = 0.8;        // anomaly threshold from the NIF's model
    LogicalTime period_ms = 1000;
  };
  struct RelocationBehavior {
    std::string nif_name;
    std::string service_id;
    RelocationWeights weights;
    LogicalTime period_ms = 10000;
  };
  void bind_anomaly_scale(const AnomalyScaleBehavior& b);
  void bind_relocation(const RelocationBehavior& b);
  void unbind_nif(const std::string& nif_name);

  // Evaluates every bound behavior at `now`: NIF1-style behaviors propose a
  // scale on the rising edge of cpu_load ≥ θ on the monitored service's node;
  // NIF2-style behaviors propose relocation to the best-scoring node when it
  // differs from the current one. Proposals are not executed here; the caller
  // routes them through the policy gate first.
  std::vector<ProposedAction> run_scenario_nifs(LogicalTime now);

  // Multi-criteria placement score per node (weighted sum of min-max
  // normalized cpu/mem/storage/latency); smaller is better.
  std::map<std::string, double> relocation_scores(LogicalTime at,
                                                  const RelocationWeights& weights) const;
  std::string best_node_for(const std::string& service_id, LogicalTime at,
                            const RelocationWeights& weights) const;

  // Deterministic deep snapshot of nodes, entries, services, and faults.
  nlohmann::json state_json() const;

 private:
  struct NodeState {
    SimNode node;
    ResourceVec allocated;
    std::map<std::string, AllocEntry> entries;
  };
  struct StreamState {
    MetricStream cfg;
    std::uint64_t seed_base = 0;
    // memoized AR(1) walk: index of last computed sample and its value
    mutable std::int64_t memo_k = -1;
    mutable double memo_x = 0.0;
  };

  const NodeState& node_state(const std::string& node_id) const;
  NodeState& node_state(const std::string& node_id);
  double raw_sample(const StreamState& s, std::int64_t k) const;

  std::uint64_t seed_;
  LogicalTime now_ = 0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t scheduled_ = 0;
  std::uint64_t dispatched_ = 0;
  struct QueuedEvent {
    SimEvent ev;
    EventFn fn;
  };
  std::map<std::pair<LogicalTime, std::uint64_t>, QueuedEvent> queue_;
  std::function<void(const SimEvent&)> post_event_;

  std::map<std::string, NodeState> nodes_;
  std::map<std::string, StreamState> streams_;
  std::map<std::string, SimService> services_;

  std::map<std::string, AnomalyScaleBehavior> anomaly_behaviors_;  // by nif_name
  std::map<std::string, RelocationBehavior> relocation_behaviors_;
  std::map<std::string, bool> anomaly_latch_;  // rising-edge state per nif
};

}  // namespace nist
