#pragma once

// Shared fixtures: the two-NIF descriptor pair used across suites (anomaly
// detection + scale NIF, relocation NIF, and the NIS composing them), plus a
// scratch-directory helper.

#include <filesystem>
#include <random>
#include <string>

#include "json.hpp"
#include "nist/descriptors.hpp"

namespace testsupport {

using nlohmann::json;

// NIFD for the anomaly-detection + scale-out function: classes Knowledge and
// Plan, one scale target on svcA's memory request.
inline json nif1_doc() {
  json doc = {
      {"kind", "NIFDescriptor"},
      {"metadata",
       {{"name", "nif-anomaly"},
        {"labels",
         {{"daemon.nmapek.type.Knowledge", "true"}, {"daemon.nmapek.type.Plan", "true"}}},
        {"annotations",
         {{"daemon.nmapek.plan.target.0",
           "svcA:spec.containers.resources.requests.memory:scale"}}}}},
      {"spec",
       {{"version", "1.0.0"},
        {"network_operation", "edge anomaly detection and service scale-out"},
        {"learning_mode", "offline"},
        {"learning_metric", "accuracy"},
        {"threshold_upper", 0.85},
        {"threshold_lower", 0.6},
        {"output_format", "anomaly.flag.v1"},
        {"last_modified", "2026-01-05T00:00:00Z"},
        {"data_spec",
         {{"source_ids", json::array()},
          {"input_format", "metrics.timeseries.v1"},
          {"sampling_period_ms", 1000}}},
        {"dependencies", json::array({{{"name", "torch"}, {"constraint", ">=1.0.0"}}})}}},
  };
  return nist::stamp_integrity(doc);
}

// NIFD for the relocation function: class Plan only, one relocate target on
// svcA's nodeSelector.
inline json nif2_doc() {
  json doc = {
      {"kind", "NIFDescriptor"},
      {"metadata",
       {{"name", "nif-relocation"},
        {"labels", {{"daemon.nmapek.type.Plan", "true"}}},
        {"annotations",
         {{"daemon.nmapek.plan.target.0", "svcA:spec.containers.nodeSelector:relocate"}}}}},
      {"spec",
       {{"version", "1.0.0"},
        {"network_operation", "service relocation by multi-criteria placement"},
        {"learning_mode", "offline"},
        {"learning_metric", "accuracy"},
        {"threshold_upper", 0.85},
        {"threshold_lower", 0.6},
        {"output_format", "placement.decision.v1"},
        {"last_modified", "2026-01-05T00:00:00Z"},
        {"data_spec",
         {{"source_ids", json::array()},
          {"input_format", "metrics.timeseries.v1"},
          {"sampling_period_ms", 1000}}},
        {"dependencies", json::array()}}},
  };
  return nist::stamp_integrity(doc);
}

// NIS composing the two NIFs with one producer→consumer link.
inline json nisd_doc() {
  json doc = {
      {"kind", "NISDescriptor"},
      {"metadata", {{"name", "nis-anomaly-relocation"}}},
      {"spec",
       {{"version", "1.0.0"},
        {"objective", "keep svcA responsive under edge anomalies"},
        {"nif_refs",
         json::array({{{"name", "nif-anomaly"}, {"constraint", ">=1.0.0"}},
                      {{"name", "nif-relocation"}, {"constraint", ">=1.0.0"}}})},
        {"links", json::array({{{"producer", "nif-anomaly"}, {"consumer", "nif-relocation"}}})},
        {"external_knowledge_refs", json::array()}}},
  };
  return nist::stamp_integrity(doc);
}

// Unique scratch directory under the system temp root, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("nist-test-" + std::to_string(rd()) + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace testsupport
