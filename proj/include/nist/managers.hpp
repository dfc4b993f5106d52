#pragma once

// NIF Manager and NIF-C Manager over the simulated infrastructure.
//
// The NIF-C Manager is the resource authority: reservations (with sim-time
// expiry), component allocation, links, and the local image store. One
// manager instance covers the whole simulated cluster. The NIF Manager owns
// NIF instances: matching, instantiation (first-fit placement, one NIF-C per
// declared N-MAPE-K class), refcounts, health, teardown.
//
// Both run on the orchestrator's serialized command loop; the sim clock is
// the only time authority, so reservation expiry arrives as a sim event.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nist/catalog.hpp"
#include "nist/descriptors.hpp"
#include "nist/simenv.hpp"

namespace nist {

// Default resource footprint of one NIF-C (one per N-MAPE-K class).
inline constexpr std::int64_t kNifcCpuMc = 100;
inline constexpr std::int64_t kNifcMemMib = 128;
inline constexpr LogicalTime kReservationTtlMs = 60000;
inline constexpr LogicalTime kHealthPeriodMs = 5000;
inline constexpr int kDegradedAfter = 3;

enum class InstanceState { Instantiating, Running, Degraded, Terminating, Terminated };
const char* instance_state_name(InstanceState s);

struct NifInstance {
  std::string nif_instance_id;
  std::string nif_name;
  std::string model_id;
  std::string node_id;  // empty iff Terminated
  std::vector<std::string> nifc_ids;
  int refcount = 0;
  InstanceState state = InstanceState::Instantiating;
  nlohmann::json config;  // current parameter map (model binding, θ, ...)
};

enum class HealthVerdict { Healthy, BelowThreshold, Failed };
const char* health_verdict_name(HealthVerdict v);

struct HealthReport {
  std::string nif_instance_id;
  std::map<std::string, double> learning_kpis;
  std::map<std::string, double> network_kpis;
  HealthVerdict verdict = HealthVerdict::Healthy;
  LogicalTime at = 0;
};

enum class ReservationState { Held, Committed };

struct DemandItem {
  std::string node_id;  // empty = first-fit by ascending node id
  ResourceVec amount;
};

// Released reservations are forgotten outright, so the live table always
// equals exactly the holds and commitments currently backed by the ledger.
struct Reservation {
  std::string reservation_id;
  std::vector<std::pair<std::string, ResourceVec>> placed;  // (node, amount) per demand
  ReservationState state = ReservationState::Held;
  LogicalTime expiry = 0;
};

struct NifcRecord {
  std::string nifc_id;
  std::string nif_instance_id;
  NmapekClass cls = NmapekClass::Monitor;
  std::string node_id;
  ResourceVec demand;
};

struct LinkRecord {
  std::string link_id;
  std::string nif_a;
  std::string nif_b;
  std::string node_a;
  std::string node_b;
  std::int64_t bw_mbps = 0;
};

class NifcManager {
 public:
  NifcManager(SimEnv& env, Catalog& catalog, LogicalTime reservation_ttl = kReservationTtlMs);

  // ── two-phase resources ───────────────────────────────────────────────────
  // All-or-nothing hold across the demand list; expires in sim time unless
  // committed. Throws InsufficientResources (nothing retained) or UnknownNode.
  Reservation reserve(const std::vector<DemandItem>& demands);
  void commit(const std::string& reservation_id);   // throws UnknownReservation, AlreadyCommitted
  void release(const std::string& reservation_id);  // throws UnknownReservation, AlreadyCommitted
  std::optional<Reservation> reservation(const std::string& reservation_id) const;
  std::map<std::string, Reservation> reservations() const;

  // Turns a committed reservation into per-class component records owned by
  // the instance (one demand item per class, same order). The reservation
  // record disappears; the ledger entries live on under the instance.
  std::vector<std::string> adopt_components(const std::string& reservation_id,
                                            const std::string& nif_instance_id,
                                            const std::vector<NmapekClass>& classes);
  void release_components(const std::string& nif_instance_id);
  std::map<std::string, NifcRecord> components() const;

  // ── links ─────────────────────────────────────────────────────────────────
  // Consumes link budget on both endpoint nodes (twice on the same node for a
  // co-located pair). With reservation_id given, the existing hold is
  // consumed in place instead of a fresh allocation.
  std::string connect_nodes(const std::string& nif_a, const std::string& node_a,
                            const std::string& nif_b, const std::string& node_b,
                            std::int64_t bw_mbps, const std::string& reservation_id = "");
  void disconnect(const std::string& link_id);  // throws UnknownLink
  std::map<std::string, LinkRecord> links() const;
  std::vector<std::string> links_of(const std::string& nif_instance_id) const;

  // ── image distribution ────────────────────────────────────────────────────
  void upload_image(const std::string& model_id);  // idempotent, throws UnknownModel
  bool has_image(const std::string& model_id) const;

  nlohmann::json state_json() const;

 private:
  SimEnv& env_;
  Catalog& catalog_;
  LogicalTime ttl_;
  std::map<std::string, Reservation> reservations_;
  std::map<std::string, NifcRecord> nifcs_;
  std::map<std::string, LinkRecord> links_;
  std::set<std::string> images_;
  std::uint64_t next_res_ = 1;
  std::uint64_t next_nifc_ = 1;
  std::uint64_t next_link_ = 1;
};

class NifManager {
 public:
  NifManager(SimEnv& env, Catalog& catalog, NifcManager& nifcm);

  // Running instance of the NIF whose model satisfies the requirements;
  // lowest instance id on ties. Degraded/Terminated instances never match.
  std::optional<std::string> find_instance(const std::string& nif_name,
                                           const Requirements& req) const;

  // First-fit placement by ascending node id; a feasible hint wins. One NIF-C
  // per declared class, each kNifcCpuMc/kNifcMemMib (the first one carries
  // the gpu unit when the model wants a gpu platform). Throws UnknownModel,
  // UnknownNifd, InsufficientResources.
  std::string instantiate_nif(const std::string& nif_name, const std::string& model_id,
                              const std::string& placement_hint = "");

  void terminate_nif(const std::string& nif_instance_id);  // throws UnknownInstance
  int retain(const std::string& nif_instance_id);          // -> new refcount
  int release_ref(const std::string& nif_instance_id);     // -> new refcount; 0 terminates

  // Links resolved to the instances' current nodes; both must be Running.
  std::string connect(const std::string& inst_a, const std::string& inst_b,
                      std::int64_t bw_mbps, const std::string& reservation_id = "");

  HealthReport nif_health(const std::string& nif_instance_id, LogicalTime now);
  // Schedules a report for every live instance each period until the bound.
  void enable_health_loop(LogicalTime period_ms, LogicalTime until_ms);
  const std::vector<HealthReport>& health_reports() const { return reports_; }

  const NifInstance& instance(const std::string& id) const;  // throws UnknownInstance
  std::map<std::string, NifInstance> instances() const;
  void update_config(const std::string& nif_instance_id, const nlohmann::json& patch);

  nlohmann::json state_json() const;
  // Debug dump to <dir>/state/managers.json covering both managers.
  void dump_state(const std::filesystem::path& data_dir) const;

 private:
  NifInstance& live_instance(const std::string& id);
  void health_tick(LogicalTime at, LogicalTime period_ms, LogicalTime until_ms);

  SimEnv& env_;
  Catalog& catalog_;
  NifcManager& nifcm_;
  std::map<std::string, NifInstance> instances_;
  std::map<std::string, int> below_streak_;
  std::map<std::string, LogicalTime> last_report_at_;
  std::vector<HealthReport> reports_;
  std::uint64_t next_instance_ = 1;
};

}  // namespace nist
