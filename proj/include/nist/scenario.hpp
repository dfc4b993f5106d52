#pragma once

// Scenario runner: builds a SimEnv + Orchestrator from a declarative JSON or
// YAML document, drives the timeline (model registrations, lifecycle
// requests, faults, NIF behavior ticks), and audits two invariants after
// every dispatched event: the resource ledger balances on every node, and
// each NIF instance's refcount equals the number of live NIS instances
// holding it. A third check runs post hoc over the event log: no two executed
// actions whose classes carry a Temporal conflict land on the same service
// closer together than the matrix window.
//
// Outputs land in out_dir: events.log (canonical event stream) and
// summary.json (requests, instances, gate tallies, violations). The exit code
// is 0 iff no invariant was violated.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"

namespace nist {

struct ScenarioReport {
  int exit_code = 0;
  nlohmann::json summary;
  std::filesystem::path events_path;
  std::filesystem::path summary_path;
};

class SimEnv;

// Builds nodes, metric streams, and services from the declarative document
// keys (nodes / default_streams / streams / services). The server and the
// scenario runner share this so a topology file means the same thing in both.
void apply_topology(SimEnv& env, const nlohmann::json& doc);

// Desk-scale default: one cloud node and two edge nodes with default streams.
nlohmann::json desk_topology();

// `base_dir` anchors relative paths in "onboard" entries.
ScenarioReport run_scenario(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                            const std::filesystem::path& out_dir,
                            std::optional<std::uint64_t> seed_override = {});

ScenarioReport run_scenario_file(const std::filesystem::path& scenario_path,
                                 const std::filesystem::path& out_dir,
                                 std::optional<std::uint64_t> seed_override = {});

}  // namespace nist
