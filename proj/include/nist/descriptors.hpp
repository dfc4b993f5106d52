#pragma once

// NIFD/NISD data model. Descriptors arrive as Kubernetes-manifest-shaped
// documents (metadata.labels / metadata.annotations plus a spec block) in
// YAML or JSON; the canonical serialized form is JSON with sorted keys.
//
// Conventions carried over from the prototype deployment:
//   - N-MAPE-K component classes are label keys `daemon.nmapek.type.<Class>`
//     with value "true".
//   - Plan targets are annotations `daemon.nmapek.plan.target.<index>` whose
//     value is the colon-triple `<service_id>:<target_path>:<action_class>`.
//     A leading `spec.containers.` on the path is stripped; stored paths are
//     relative to the container spec root.
//   - The integrity digest lives at annotation `daemon.integrity.sha256` and
//     is SHA-256 over the canonical body with that annotation blanked.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "nist/common.hpp"

namespace nist {

// ── enumerations ────────────────────────────────────────────────────────────

enum class NmapekClass { Sensor, Monitor, Analyze, Plan, Execute, Effector, Knowledge, Source, Sink };

// Source acts as Sensor and Sink as Effector when analyzing conflicts.
NmapekClass analysis_role(NmapekClass c);

const char* nmapek_class_name(NmapekClass c);
// Accepts canonical names plus the "Analyse" spelling; throws UnknownClass.
NmapekClass parse_nmapek_class(const std::string& name);

enum class ActionClass { Scale, Relocate, Reconfigure };

const char* action_class_name(ActionClass a);
ActionClass parse_action_class(const std::string& name);  // throws ParseError

enum class LearningMode { Offline, Online };
enum class LearningMetric { Accuracy, CrossEntropy, Mse, Reward };

const char* learning_mode_name(LearningMode m);
const char* learning_metric_name(LearningMetric m);
LearningMetric parse_learning_metric(const std::string& name);  // throws ParseError

// True for accuracy/reward, false for the loss-like metrics, where every
// comparison (thresholds, candidate ordering) reverses.
bool metric_higher_is_better(LearningMetric m);

// `score` meets `bar` under the metric's orientation.
bool metric_meets(LearningMetric m, double score, double bar);

// ── descriptor types ────────────────────────────────────────────────────────

struct PlanTarget {
  std::string service_id;
  std::string target_path;
  ActionClass action_class = ActionClass::Scale;

  auto operator<=>(const PlanTarget&) const = default;
};

struct DataSpec {
  std::vector<std::string> source_ids;
  std::string input_format;
  std::int64_t sampling_period_ms = 0;

  bool operator==(const DataSpec&) const = default;
};

struct Dependency {
  std::string name;
  std::string constraint;  // VersionConstraint text

  bool operator==(const Dependency&) const = default;
};

struct NifDescriptor {
  std::string name;
  SemVer version;
  std::string network_operation;
  LearningMode learning_mode = LearningMode::Offline;
  bool has_data_spec = false;  // document carried a spec.data_spec block
  DataSpec data_spec;
  LearningMetric learning_metric = LearningMetric::Accuracy;
  std::optional<double> threshold_upper;
  std::optional<double> threshold_lower;
  std::string output_format;
  std::string last_modified;
  std::vector<Dependency> dependencies;
  std::set<NmapekClass> classes;
  std::vector<PlanTarget> plan_targets;
  std::string stored_integrity;    // digest annotation as found in the document
  std::string computed_integrity;  // digest recomputed over the parsed body
  // Labels/annotations outside the daemon.* conventions, preserved verbatim.
  std::map<std::string, nlohmann::json> extra_labels;
  std::map<std::string, nlohmann::json> extra_annotations;

  // Semantic equality: the two digest bookkeeping fields are excluded, since
  // equivalent YAML/JSON/non-canonical spellings of one descriptor hash
  // differently while meaning the same thing.
  bool operator==(const NifDescriptor& o) const {
    return name == o.name && version == o.version && network_operation == o.network_operation &&
           learning_mode == o.learning_mode && has_data_spec == o.has_data_spec &&
           data_spec == o.data_spec && learning_metric == o.learning_metric &&
           threshold_upper == o.threshold_upper && threshold_lower == o.threshold_lower &&
           output_format == o.output_format && last_modified == o.last_modified &&
           dependencies == o.dependencies && classes == o.classes &&
           plan_targets == o.plan_targets && extra_labels == o.extra_labels &&
           extra_annotations == o.extra_annotations;
  }
};

struct NifRef {
  std::string name;
  std::string constraint;

  bool operator==(const NifRef&) const = default;
};

struct NisLink {
  std::string producer;
  std::string consumer;

  bool operator==(const NisLink&) const = default;
};

struct NisDescriptor {
  std::string name;
  SemVer version;
  std::string objective;
  std::vector<NifRef> nif_refs;
  std::vector<NisLink> links;
  std::vector<std::string> external_knowledge_refs;
  // Knowledge-sharing policy entries (threshold rules) attached to the NIS.
  std::vector<std::string> policies;
  std::string stored_integrity;
  std::string computed_integrity;
  std::map<std::string, nlohmann::json> extra_labels;
  std::map<std::string, nlohmann::json> extra_annotations;

  // Semantic equality, digest fields excluded (see NifDescriptor).
  bool operator==(const NisDescriptor& o) const {
    return name == o.name && version == o.version && objective == o.objective &&
           nif_refs == o.nif_refs && links == o.links &&
           external_knowledge_refs == o.external_knowledge_refs && policies == o.policies &&
           extra_labels == o.extra_labels && extra_annotations == o.extra_annotations;
  }
};

struct ValidationReport {
  bool valid = false;
  std::vector<std::string> missing_mandatory;
  bool integrity_ok = false;
  std::vector<std::string> messages;
};

struct SourceBinding {
  std::string source_id;
  std::int64_t sampling_period_ms = 0;

  auto operator<=>(const SourceBinding&) const = default;
};

struct NmapekProfile {
  std::string nif_name;
  std::set<NmapekClass> classes;
  std::vector<PlanTarget> plan_targets;
  std::vector<SourceBinding> sources;

  bool operator==(const NmapekProfile&) const = default;
};

// ── operations ──────────────────────────────────────────────────────────────

// Auto-detects JSON vs YAML and returns the document tree as JSON.
nlohmann::json load_document(const std::string& text);  // throws ParseError

NifDescriptor parse_nifd(const std::string& document);
NifDescriptor parse_nifd(const nlohmann::json& doc);

// Strict about a present-but-wrong integrity digest (IntegrityMismatch); a
// missing digest parses and is reported by validate_descriptor instead, so
// drafts can be stamped later.
NisDescriptor parse_nisd(const std::string& document);
NisDescriptor parse_nisd(const nlohmann::json& doc);

ValidationReport validate_descriptor(const NifDescriptor& d);
ValidationReport validate_descriptor(const NisDescriptor& d);

NmapekProfile extract_profile(const NifDescriptor& d);

// Canonical manifest documents; the integrity annotation is recomputed so the
// output always round-trips through parse without IntegrityMismatch.
nlohmann::json nifd_document(const NifDescriptor& d);
nlohmann::json nisd_document(const NisDescriptor& d);
std::string serialize_nifd(const NifDescriptor& d);
std::string serialize_nisd(const NisDescriptor& d);

// Digest over the canonical body with the integrity annotation blanked.
std::string integrity_digest(const nlohmann::json& doc);

// Recomputes and embeds the integrity annotation of a raw document (used by
// the `stamp` CLI subcommand and by tests that author documents by hand).
nlohmann::json stamp_integrity(nlohmann::json doc);

}  // namespace nist
