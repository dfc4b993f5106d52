#include "nist/descriptors.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>

#include "nist/digest.hpp"

namespace nist {

namespace {

using nlohmann::json;

constexpr const char* kTypePrefix = "daemon.nmapek.type.";
constexpr const char* kPlanTargetPrefix = "daemon.nmapek.plan.target.";
constexpr const char* kNmapekPrefix = "daemon.nmapek.";
constexpr const char* kIntegrityKey = "daemon.integrity.sha256";
constexpr const char* kContainerRoot = "spec.containers.";

[[noreturn]] void fail(ErrorCode code, const std::string& msg) { throw NistError(code, msg); }

bool full_match_ll(const std::string& s, long long& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

bool full_match_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
      return nullptr;
    case YAML::NodeType::Scalar: {
      const std::string& s = node.Scalar();
      // Quoted scalars carry the "!" tag and stay strings; plain scalars get
      // the usual YAML type guesses.
      if (node.Tag() == "!") return s;
      if (s == "true") return true;
      if (s == "false") return false;
      if (s == "null" || s == "~") return nullptr;
      long long ll = 0;
      if (full_match_ll(s, ll)) return ll;
      double d = 0;
      if (full_match_double(s, d)) return d;
      return s;
    }
    case YAML::NodeType::Sequence: {
      json arr = json::array();
      for (const auto& item : node) arr.push_back(yaml_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      json obj = json::object();
      for (const auto& kv : node) obj[kv.first.Scalar()] = yaml_to_json(kv.second);
      return obj;
    }
    default:
      fail(ErrorCode::ParseError, "undefined YAML node");
  }
}

const json* find(const json& obj, const char* key) {
  if (!obj.is_object()) return nullptr;
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

std::string require_string(const json& obj, const char* key, const std::string& ctx) {
  const json* v = find(obj, key);
  if (!v) fail(ErrorCode::MissingField, ctx + "." + key + " is required");
  if (!v->is_string()) fail(ErrorCode::ParseError, ctx + "." + key + " must be a string");
  return v->get<std::string>();
}

std::string optional_string(const json& obj, const char* key) {
  const json* v = find(obj, key);
  if (!v || v->is_null()) return "";
  if (!v->is_string()) fail(ErrorCode::ParseError, std::string("field ") + key + " must be a string");
  return v->get<std::string>();
}

// Labels carry string "true"/"false"; YAML authors often leave them unquoted,
// so plain booleans are accepted too.
bool label_enabled(const std::string& key, const json& value) {
  if (value.is_boolean()) return value.get<bool>();
  if (value.is_string()) {
    const auto& s = value.get_ref<const std::string&>();
    if (s == "true") return true;
    if (s == "false") return false;
  }
  fail(ErrorCode::ParseError, "label " + key + " must be \"true\" or \"false\"");
}

PlanTarget parse_plan_target_value(const std::string& key, const std::string& value) {
  auto first = value.find(':');
  auto last = value.rfind(':');
  if (first == std::string::npos || first == last) {
    fail(ErrorCode::ParseError, "annotation " + key + " is not a <service>:<path>:<action> triple");
  }
  PlanTarget t;
  t.service_id = value.substr(0, first);
  t.target_path = value.substr(first + 1, last - first - 1);
  if (t.service_id.empty() || t.target_path.empty()) {
    fail(ErrorCode::ParseError, "annotation " + key + " has an empty service or path");
  }
  if (t.target_path.rfind(kContainerRoot, 0) == 0) {
    t.target_path = t.target_path.substr(std::string(kContainerRoot).size());
  }
  t.action_class = parse_action_class(value.substr(last + 1));
  return t;
}

struct ManifestParts {
  std::string name;
  std::set<NmapekClass> classes;
  std::vector<PlanTarget> plan_targets;
  std::string stored_integrity;
  std::map<std::string, json> extra_labels;
  std::map<std::string, json> extra_annotations;
};

ManifestParts parse_manifest(const json& doc, const char* expected_kind) {
  if (!doc.is_object()) fail(ErrorCode::ParseError, "document root must be a mapping");
  if (const json* kind = find(doc, "kind")) {
    if (!kind->is_string() || kind->get<std::string>() != expected_kind) {
      fail(ErrorCode::ParseError, std::string("document kind must be ") + expected_kind);
    }
  }
  const json* metadata = find(doc, "metadata");
  if (!metadata) fail(ErrorCode::MissingField, "metadata is required");

  ManifestParts parts;
  parts.name = require_string(*metadata, "name", "metadata");

  std::map<int, PlanTarget> targets_by_index;
  if (const json* labels = find(*metadata, "labels")) {
    if (!labels->is_object()) fail(ErrorCode::ParseError, "metadata.labels must be a mapping");
    for (auto it = labels->begin(); it != labels->end(); ++it) {
      const std::string& key = it.key();
      if (key.rfind(kTypePrefix, 0) == 0) {
        NmapekClass c = parse_nmapek_class(key.substr(std::string(kTypePrefix).size()));
        if (label_enabled(key, it.value())) parts.classes.insert(c);
      } else if (key.rfind(kNmapekPrefix, 0) == 0) {
        fail(ErrorCode::ParseError, "unrecognized daemon.nmapek label key: " + key);
      } else {
        parts.extra_labels[key] = it.value();
      }
    }
  }
  if (const json* annotations = find(*metadata, "annotations")) {
    if (!annotations->is_object()) fail(ErrorCode::ParseError, "metadata.annotations must be a mapping");
    for (auto it = annotations->begin(); it != annotations->end(); ++it) {
      const std::string& key = it.key();
      if (key.rfind(kPlanTargetPrefix, 0) == 0) {
        long long index = 0;
        if (!full_match_ll(key.substr(std::string(kPlanTargetPrefix).size()), index) || index < 0) {
          fail(ErrorCode::ParseError, "bad plan-target index in annotation key " + key);
        }
        if (!it.value().is_string()) fail(ErrorCode::ParseError, "annotation " + key + " must be a string");
        targets_by_index[static_cast<int>(index)] =
            parse_plan_target_value(key, it.value().get<std::string>());
      } else if (key == kIntegrityKey) {
        if (!it.value().is_string()) fail(ErrorCode::ParseError, "integrity annotation must be a string");
        parts.stored_integrity = it.value().get<std::string>();
      } else if (key.rfind(kNmapekPrefix, 0) == 0) {
        fail(ErrorCode::ParseError, "unrecognized daemon.nmapek annotation key: " + key);
      } else {
        parts.extra_annotations[key] = it.value();
      }
    }
  }
  int expected = 0;
  for (const auto& [index, target] : targets_by_index) {
    if (index != expected++) fail(ErrorCode::ParseError, "plan-target indexes must be contiguous from 0");
    parts.plan_targets.push_back(target);
  }
  return parts;
}

std::vector<Dependency> parse_dependencies(const json& spec) {
  std::vector<Dependency> deps;
  const json* list = find(spec, "dependencies");
  if (!list) return deps;
  if (!list->is_array()) fail(ErrorCode::ParseError, "spec.dependencies must be a list");
  for (const json& entry : *list) {
    Dependency d;
    d.name = require_string(entry, "name", "dependency");
    d.constraint = optional_string(entry, "constraint");
    VersionConstraint::parse(d.constraint);  // reject malformed constraints early
    deps.push_back(std::move(d));
  }
  return deps;
}

void check_threshold_direction(const NifDescriptor& d) {
  if (!d.threshold_upper || !d.threshold_lower) return;
  bool ok = metric_higher_is_better(d.learning_metric)
                ? *d.threshold_lower < *d.threshold_upper
                : *d.threshold_upper < *d.threshold_lower;
  if (!ok) {
    fail(ErrorCode::ParseError,
         std::string("threshold direction is wrong for metric ") +
             learning_metric_name(d.learning_metric));
  }
}

json manifest_skeleton(const char* kind, const std::string& name,
                       const std::map<std::string, json>& extra_labels,
                       const std::map<std::string, json>& extra_annotations) {
  json doc;
  doc["kind"] = kind;
  doc["metadata"]["name"] = name;
  doc["metadata"]["labels"] = json::object();
  doc["metadata"]["annotations"] = json::object();
  for (const auto& [k, v] : extra_labels) doc["metadata"]["labels"][k] = v;
  for (const auto& [k, v] : extra_annotations) doc["metadata"]["annotations"][k] = v;
  return doc;
}

}  // namespace

// ── enumerations ────────────────────────────────────────────────────────────

NmapekClass analysis_role(NmapekClass c) {
  if (c == NmapekClass::Source) return NmapekClass::Sensor;
  if (c == NmapekClass::Sink) return NmapekClass::Effector;
  return c;
}

const char* nmapek_class_name(NmapekClass c) {
  switch (c) {
    case NmapekClass::Sensor: return "Sensor";
    case NmapekClass::Monitor: return "Monitor";
    case NmapekClass::Analyze: return "Analyze";
    case NmapekClass::Plan: return "Plan";
    case NmapekClass::Execute: return "Execute";
    case NmapekClass::Effector: return "Effector";
    case NmapekClass::Knowledge: return "Knowledge";
    case NmapekClass::Source: return "Source";
    case NmapekClass::Sink: return "Sink";
  }
  return "?";
}

NmapekClass parse_nmapek_class(const std::string& name) {
  static const std::map<std::string, NmapekClass> table = {
      {"Sensor", NmapekClass::Sensor},    {"Monitor", NmapekClass::Monitor},
      {"Analyze", NmapekClass::Analyze},  {"Analyse", NmapekClass::Analyze},
      {"Plan", NmapekClass::Plan},        {"Execute", NmapekClass::Execute},
      {"Effector", NmapekClass::Effector}, {"Knowledge", NmapekClass::Knowledge},
      {"Source", NmapekClass::Source},    {"Sink", NmapekClass::Sink},
  };
  auto it = table.find(name);
  if (it == table.end()) fail(ErrorCode::UnknownClass, "unknown N-MAPE-K class: " + name);
  return it->second;
}

const char* action_class_name(ActionClass a) {
  switch (a) {
    case ActionClass::Scale: return "scale";
    case ActionClass::Relocate: return "relocate";
    case ActionClass::Reconfigure: return "reconfigure";
  }
  return "?";
}

ActionClass parse_action_class(const std::string& name) {
  if (name == "scale") return ActionClass::Scale;
  if (name == "relocate") return ActionClass::Relocate;
  if (name == "reconfigure") return ActionClass::Reconfigure;
  fail(ErrorCode::ParseError, "unknown action class: " + name);
}

const char* learning_mode_name(LearningMode m) {
  return m == LearningMode::Offline ? "offline" : "online";
}

const char* learning_metric_name(LearningMetric m) {
  switch (m) {
    case LearningMetric::Accuracy: return "accuracy";
    case LearningMetric::CrossEntropy: return "cross_entropy";
    case LearningMetric::Mse: return "mse";
    case LearningMetric::Reward: return "reward";
  }
  return "?";
}

LearningMetric parse_learning_metric(const std::string& name) {
  if (name == "accuracy") return LearningMetric::Accuracy;
  if (name == "cross_entropy") return LearningMetric::CrossEntropy;
  if (name == "mse") return LearningMetric::Mse;
  if (name == "reward") return LearningMetric::Reward;
  fail(ErrorCode::ParseError, "unknown learning metric: " + name);
}

bool metric_higher_is_better(LearningMetric m) {
  return m == LearningMetric::Accuracy || m == LearningMetric::Reward;
}

bool metric_meets(LearningMetric m, double score, double bar) {
  return metric_higher_is_better(m) ? score >= bar : score <= bar;
}

// ── document loading ────────────────────────────────────────────────────────

nlohmann::json load_document(const std::string& text) {
  json doc = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (!doc.is_discarded()) return doc;
  try {
    return yaml_to_json(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    fail(ErrorCode::ParseError, std::string("document is neither JSON nor YAML: ") + e.what());
  }
}

// ── NIFD ────────────────────────────────────────────────────────────────────

NifDescriptor parse_nifd(const std::string& document) { return parse_nifd(load_document(document)); }

NifDescriptor parse_nifd(const json& doc) {
  ManifestParts parts = parse_manifest(doc, "NIFDescriptor");
  if (parts.classes.empty()) {
    fail(ErrorCode::MissingField, "NIFD declares no daemon.nmapek.type.* class label");
  }

  NifDescriptor d;
  d.name = parts.name;
  d.classes = std::move(parts.classes);
  d.plan_targets = std::move(parts.plan_targets);
  d.stored_integrity = std::move(parts.stored_integrity);
  d.extra_labels = std::move(parts.extra_labels);
  d.extra_annotations = std::move(parts.extra_annotations);

  bool has_plan = d.classes.count(NmapekClass::Plan) > 0;
  if (has_plan && d.plan_targets.empty()) {
    fail(ErrorCode::MissingField, "Plan class declared but no daemon.nmapek.plan.target annotation");
  }
  if (!has_plan && !d.plan_targets.empty()) {
    fail(ErrorCode::ParseError, "plan-target annotations present without the Plan class");
  }

  const json* spec = find(doc, "spec");
  if (!spec) fail(ErrorCode::MissingField, "spec is required");
  d.version = SemVer::parse(require_string(*spec, "version", "spec"));
  d.network_operation = optional_string(*spec, "network_operation");
  d.output_format = optional_string(*spec, "output_format");
  d.last_modified = optional_string(*spec, "last_modified");

  std::string mode = optional_string(*spec, "learning_mode");
  if (mode.empty() || mode == "offline") {
    d.learning_mode = LearningMode::Offline;
  } else if (mode == "online") {
    d.learning_mode = LearningMode::Online;
  } else {
    fail(ErrorCode::ParseError, "unknown learning mode: " + mode);
  }

  std::string metric = optional_string(*spec, "learning_metric");
  d.learning_metric = metric.empty() ? LearningMetric::Accuracy : parse_learning_metric(metric);

  for (const char* key : {"threshold_upper", "threshold_lower"}) {
    if (const json* v = find(*spec, key)) {
      if (!v->is_number()) fail(ErrorCode::ParseError, std::string("spec.") + key + " must be a number");
      (key == std::string("threshold_upper") ? d.threshold_upper : d.threshold_lower) =
          v->get<double>();
    }
  }
  check_threshold_direction(d);

  if (const json* ds = find(*spec, "data_spec")) {
    if (!ds->is_object()) fail(ErrorCode::ParseError, "spec.data_spec must be a mapping");
    d.has_data_spec = true;
    if (const json* ids = find(*ds, "source_ids")) {
      if (!ids->is_array()) fail(ErrorCode::ParseError, "data_spec.source_ids must be a list");
      for (const json& id : *ids) {
        if (!id.is_string()) fail(ErrorCode::ParseError, "data_spec.source_ids entries must be strings");
        d.data_spec.source_ids.push_back(id.get<std::string>());
      }
    }
    d.data_spec.input_format = optional_string(*ds, "input_format");
    if (const json* period = find(*ds, "sampling_period_ms")) {
      if (!period->is_number_integer() || period->get<std::int64_t>() <= 0) {
        fail(ErrorCode::ParseError, "data_spec.sampling_period_ms must be a positive integer");
      }
      d.data_spec.sampling_period_ms = period->get<std::int64_t>();
    }
  }

  bool senses = d.classes.count(NmapekClass::Sensor) || d.classes.count(NmapekClass::Source) ||
                d.classes.count(NmapekClass::Monitor);
  if (senses && d.data_spec.source_ids.empty()) {
    fail(ErrorCode::MissingField, "sensing class declared but data_spec.source_ids is empty");
  }
  if (!senses && !d.data_spec.source_ids.empty()) {
    fail(ErrorCode::ParseError, "data_spec.source_ids present without a Sensor/Source/Monitor class");
  }

  d.dependencies = parse_dependencies(*spec);
  d.computed_integrity = integrity_digest(doc);
  return d;
}

// ── NISD ────────────────────────────────────────────────────────────────────

NisDescriptor parse_nisd(const std::string& document) { return parse_nisd(load_document(document)); }

NisDescriptor parse_nisd(const json& doc) {
  ManifestParts parts = parse_manifest(doc, "NISDescriptor");
  if (!parts.plan_targets.empty()) {
    fail(ErrorCode::ParseError, "plan-target annotations belong on NIFDs, not NISDs");
  }

  NisDescriptor d;
  d.name = parts.name;
  d.stored_integrity = std::move(parts.stored_integrity);
  d.extra_labels = std::move(parts.extra_labels);
  d.extra_annotations = std::move(parts.extra_annotations);

  const json* spec = find(doc, "spec");
  if (!spec) fail(ErrorCode::MissingField, "spec is required");
  d.version = SemVer::parse(require_string(*spec, "version", "spec"));
  d.objective = optional_string(*spec, "objective");

  if (const json* refs = find(*spec, "nif_refs")) {
    if (!refs->is_array()) fail(ErrorCode::ParseError, "spec.nif_refs must be a list");
    for (const json& entry : *refs) {
      NifRef r;
      r.name = require_string(entry, "name", "nif_ref");
      r.constraint = optional_string(entry, "constraint");
      VersionConstraint::parse(r.constraint);
      d.nif_refs.push_back(std::move(r));
    }
  }
  if (d.nif_refs.empty()) fail(ErrorCode::MissingField, "spec.nif_refs must list at least one NIF");

  std::set<std::string> members;
  for (const auto& r : d.nif_refs) members.insert(r.name);

  if (const json* links = find(*spec, "links")) {
    if (!links->is_array()) fail(ErrorCode::ParseError, "spec.links must be a list");
    for (const json& entry : *links) {
      NisLink l;
      l.producer = require_string(entry, "producer", "link");
      l.consumer = require_string(entry, "consumer", "link");
      for (const std::string& end : {l.producer, l.consumer}) {
        if (!members.count(end)) {
          fail(ErrorCode::DanglingLink, "link references " + end + " which is not in nif_refs");
        }
      }
      d.links.push_back(std::move(l));
    }
  }

  // The interconnection graph (undirected view) must be connected whenever the
  // NIS has more than one distinct member.
  if (members.size() > 1) {
    std::map<std::string, std::vector<std::string>> adj;
    for (const auto& l : d.links) {
      adj[l.producer].push_back(l.consumer);
      adj[l.consumer].push_back(l.producer);
    }
    std::set<std::string> seen;
    std::vector<std::string> stack = {*members.begin()};
    while (!stack.empty()) {
      std::string cur = stack.back();
      stack.pop_back();
      if (!seen.insert(cur).second) continue;
      for (const auto& next : adj[cur]) stack.push_back(next);
    }
    if (seen.size() != members.size()) {
      fail(ErrorCode::ParseError, "NIS link graph is not connected");
    }
  }

  if (const json* refs = find(*spec, "external_knowledge_refs")) {
    if (!refs->is_array()) fail(ErrorCode::ParseError, "spec.external_knowledge_refs must be a list");
    for (const json& r : *refs) {
      if (!r.is_string()) fail(ErrorCode::ParseError, "external_knowledge_refs entries must be strings");
      d.external_knowledge_refs.push_back(r.get<std::string>());
    }
  }
  if (const json* pol = find(*spec, "policies")) {
    if (!pol->is_array()) fail(ErrorCode::ParseError, "spec.policies must be a list");
    for (const json& p : *pol) {
      if (!p.is_string()) fail(ErrorCode::ParseError, "spec.policies entries must be strings");
      d.policies.push_back(p.get<std::string>());
    }
  }

  d.computed_integrity = integrity_digest(doc);
  if (!d.stored_integrity.empty() && d.stored_integrity != d.computed_integrity) {
    fail(ErrorCode::IntegrityMismatch, "NISD integrity digest does not match the document body");
  }
  return d;
}

// ── validation ──────────────────────────────────────────────────────────────

ValidationReport validate_descriptor(const NifDescriptor& d) {
  ValidationReport report;
  if (d.network_operation.empty()) report.missing_mandatory.push_back("network_operation");
  if (!d.has_data_spec) report.missing_mandatory.push_back("data_spec");
  if (d.output_format.empty()) report.missing_mandatory.push_back("output_format");
  if (!d.threshold_upper) report.missing_mandatory.push_back("threshold_upper");
  if (!d.threshold_lower) report.missing_mandatory.push_back("threshold_lower");

  report.integrity_ok = !d.computed_integrity.empty() && d.stored_integrity == d.computed_integrity;
  if (d.stored_integrity.empty()) {
    report.messages.push_back("integrity digest is missing");
  } else if (!report.integrity_ok) {
    report.messages.push_back("integrity digest does not match the document body");
  }
  for (const auto& f : report.missing_mandatory) {
    report.messages.push_back("mandatory element missing: " + f);
  }
  report.valid = report.missing_mandatory.empty() && report.integrity_ok;
  return report;
}

ValidationReport validate_descriptor(const NisDescriptor& d) {
  ValidationReport report;
  if (d.objective.empty()) report.missing_mandatory.push_back("objective");
  if (d.nif_refs.empty()) report.missing_mandatory.push_back("nif_refs");

  report.integrity_ok = !d.computed_integrity.empty() && d.stored_integrity == d.computed_integrity;
  if (d.stored_integrity.empty()) {
    report.messages.push_back("integrity digest is missing");
  } else if (!report.integrity_ok) {
    report.messages.push_back("integrity digest does not match the document body");
  }
  for (const auto& f : report.missing_mandatory) {
    report.messages.push_back("mandatory element missing: " + f);
  }
  report.valid = report.missing_mandatory.empty() && report.integrity_ok;
  return report;
}

NmapekProfile extract_profile(const NifDescriptor& d) {
  NmapekProfile p;
  p.nif_name = d.name;
  p.classes = d.classes;
  p.plan_targets = d.plan_targets;
  for (const auto& id : d.data_spec.source_ids) {
    p.sources.push_back({id, d.data_spec.sampling_period_ms});
  }
  return p;
}

// ── canonical documents ─────────────────────────────────────────────────────

std::string integrity_digest(const nlohmann::json& doc) {
  json body = doc;
  body["metadata"]["annotations"][kIntegrityKey] = "";
  return canonical_digest(body);
}

nlohmann::json stamp_integrity(nlohmann::json doc) {
  doc["metadata"]["annotations"][kIntegrityKey] = integrity_digest(doc);
  return doc;
}

nlohmann::json nifd_document(const NifDescriptor& d) {
  json doc = manifest_skeleton("NIFDescriptor", d.name, d.extra_labels, d.extra_annotations);
  for (NmapekClass c : d.classes) {
    doc["metadata"]["labels"][std::string(kTypePrefix) + nmapek_class_name(c)] = "true";
  }
  for (std::size_t i = 0; i < d.plan_targets.size(); ++i) {
    const PlanTarget& t = d.plan_targets[i];
    doc["metadata"]["annotations"][kPlanTargetPrefix + std::to_string(i)] =
        t.service_id + ":" + t.target_path + ":" + action_class_name(t.action_class);
  }
  json& spec = doc["spec"];
  spec["version"] = d.version.str();
  spec["network_operation"] = d.network_operation;
  spec["learning_mode"] = learning_mode_name(d.learning_mode);
  spec["learning_metric"] = learning_metric_name(d.learning_metric);
  if (d.threshold_upper) spec["threshold_upper"] = *d.threshold_upper;
  if (d.threshold_lower) spec["threshold_lower"] = *d.threshold_lower;
  spec["output_format"] = d.output_format;
  spec["last_modified"] = d.last_modified;
  if (d.has_data_spec) {
    json ds;
    ds["source_ids"] = d.data_spec.source_ids;
    ds["input_format"] = d.data_spec.input_format;
    if (d.data_spec.sampling_period_ms > 0) ds["sampling_period_ms"] = d.data_spec.sampling_period_ms;
    spec["data_spec"] = std::move(ds);
  }
  spec["dependencies"] = json::array();
  for (const auto& dep : d.dependencies) {
    spec["dependencies"].push_back({{"name", dep.name}, {"constraint", dep.constraint}});
  }
  return stamp_integrity(std::move(doc));
}

nlohmann::json nisd_document(const NisDescriptor& d) {
  json doc = manifest_skeleton("NISDescriptor", d.name, d.extra_labels, d.extra_annotations);
  json& spec = doc["spec"];
  spec["version"] = d.version.str();
  spec["objective"] = d.objective;
  spec["nif_refs"] = json::array();
  for (const auto& r : d.nif_refs) {
    spec["nif_refs"].push_back({{"name", r.name}, {"constraint", r.constraint}});
  }
  spec["links"] = json::array();
  for (const auto& l : d.links) {
    spec["links"].push_back({{"producer", l.producer}, {"consumer", l.consumer}});
  }
  spec["external_knowledge_refs"] = d.external_knowledge_refs;
  spec["policies"] = d.policies;
  return stamp_integrity(std::move(doc));
}

std::string serialize_nifd(const NifDescriptor& d) { return nifd_document(d).dump(2) + "\n"; }

std::string serialize_nisd(const NisDescriptor& d) { return nisd_document(d).dump(2) + "\n"; }

}  // namespace nist
