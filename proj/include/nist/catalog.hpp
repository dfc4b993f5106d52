#pragma once

// NIS/NIF catalogs and the model registry: versioned model images plus the
// onboarded descriptor store, with requirement-based candidate queries.
//
// Durability is an append-only index log plus content-addressed files,
// rebuilt into memory on startup. With no data directory the catalog runs
// fully in memory (unit tests, scenario runs that do not ask for a workspace).
//
// Data directory layout:
//   catalog/descriptors/<digest>.json   onboarded descriptor documents
//   catalog/models/<digest>.bin         model artifact blobs
//   catalog/index.log                   LDJSON {op, id, name, version, digest, t}
//   (register_model records additionally embed the full image under "image"
//    so the registry can be rebuilt without a second metadata file)

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "nist/common.hpp"
#include "nist/descriptors.hpp"

namespace nist {

enum class Platform { Cpu, Gpu, Tpu, Fpga };

const char* platform_name(Platform p);
Platform parse_platform(const std::string& name);  // throws ParseError

struct ConcreteDependency {
  std::string name;
  SemVer version;

  bool operator==(const ConcreteDependency&) const = default;
};

struct ModelImage {
  std::string model_id;  // registry-assigned, content-addressed
  std::string nif_name;
  SemVer version;
  LearningMetric metric = LearningMetric::Accuracy;
  double test_score = 0.0;
  Platform platform = Platform::Cpu;
  std::string input_format;
  std::vector<ConcreteDependency> dependencies;
  LogicalTime created_at = 0;  // registry-assigned
  std::string blob_ref;

  bool operator==(const ModelImage&) const = default;
};

// Deployment requirements used to filter candidates. Empty/absent members are
// wildcards so a "weakest requirement" exists; when present the match is
// exact (input_format, platform), constraint satisfaction (dependencies), or
// the metric-oriented bar (min_performance).
struct Requirements {
  std::string input_format;
  std::optional<Platform> platform;
  std::vector<Dependency> dependency_constraints;
  std::optional<double> min_performance;
};

struct DescriptorEntry {
  std::string id;
  std::string kind;  // "nifd" | "nisd"
  std::string name;
  SemVer version;
  std::string digest;
  nlohmann::json doc;
};

nlohmann::json image_to_json(const ModelImage& img);
ModelImage image_from_json(const nlohmann::json& j);

// Requirement filter on a single image (name not considered); the same
// predicate drives catalog queries and instance matching.
bool requirements_match(const ModelImage& img, const Requirements& req);

class Catalog {
 public:
  // Empty data_dir keeps everything in memory. An existing index log is
  // replayed so the catalog picks up where the last process stopped.
  explicit Catalog(std::filesystem::path data_dir = {});

  // Logical clock used for created_at / log timestamps; defaults to 0.
  void set_clock(std::function<LogicalTime()> now_fn);

  // ── model registry (Nio-Ncat / MLp-Ncat) ─────────────────────────────────
  std::string put_blob(const std::string& bytes);        // -> "sha256:<hex>"
  std::string get_blob(const std::string& ref) const;    // throws UnknownModel
  std::string register_model(ModelImage image);          // throws VersionConflict
  ModelImage get_model(const std::string& model_id) const;  // throws UnknownModel
  std::optional<ModelImage> find_model(const std::string& nif_name, const SemVer& version) const;
  bool exists(const std::string& nif_name, const std::string& version_constraint) const;
  std::vector<ModelImage> query_candidates(const std::string& nif_name,
                                           const Requirements& req) const;
  std::vector<ModelImage> list_models() const;  // sorted by (name, version, id)

  // ── descriptor store ─────────────────────────────────────────────────────
  std::string onboard(const NifDescriptor& desc);  // throws InvalidDescriptor
  std::string onboard(const NisDescriptor& desc);
  std::vector<DescriptorEntry> list_descriptors() const;
  // Latest onboarded version satisfying the constraint, if any.
  std::optional<NifDescriptor> find_nifd(const std::string& name,
                                         const std::string& constraint = "") const;
  std::optional<NisDescriptor> find_nisd(const std::string& name_or_id) const;

 private:
  std::string register_locked(ModelImage image);
  std::string onboard_locked(const std::string& kind, const std::string& name,
                             const SemVer& version, const nlohmann::json& doc);
  void append_log(const nlohmann::json& record);
  void replay_log();

  mutable std::shared_mutex mu_;
  std::filesystem::path data_dir_;
  std::function<LogicalTime()> now_;
  std::map<std::string, ModelImage> models_;              // model_id -> image
  std::map<std::string, std::string> blobs_;              // hex digest -> bytes
  std::map<std::string, DescriptorEntry> descriptors_;    // id -> entry
};

}  // namespace nist
