#include "nist/catalog.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>

#include "nist/digest.hpp"

namespace nist {

using nlohmann::json;

const char* platform_name(Platform p) {
  switch (p) {
    case Platform::Cpu: return "cpu";
    case Platform::Gpu: return "gpu";
    case Platform::Tpu: return "tpu";
    case Platform::Fpga: return "fpga";
  }
  return "?";
}

Platform parse_platform(const std::string& name) {
  if (name == "cpu") return Platform::Cpu;
  if (name == "gpu") return Platform::Gpu;
  if (name == "tpu") return Platform::Tpu;
  if (name == "fpga") return Platform::Fpga;
  throw NistError(ErrorCode::ParseError, "unknown platform: " + name);
}

json image_to_json(const ModelImage& img) {
  json deps = json::array();
  for (const auto& d : img.dependencies) {
    deps.push_back({{"name", d.name}, {"version", d.version.str()}});
  }
  return json{{"model_id", img.model_id},
              {"nif_name", img.nif_name},
              {"version", img.version.str()},
              {"metric", learning_metric_name(img.metric)},
              {"test_score", img.test_score},
              {"platform", platform_name(img.platform)},
              {"input_format", img.input_format},
              {"dependencies", deps},
              {"created_at", img.created_at},
              {"blob_ref", img.blob_ref}};
}

ModelImage image_from_json(const json& j) {
  ModelImage img;
  img.model_id = j.at("model_id").get<std::string>();
  img.nif_name = j.at("nif_name").get<std::string>();
  img.version = SemVer::parse(j.at("version").get<std::string>());
  img.metric = parse_learning_metric(j.at("metric").get<std::string>());
  img.test_score = j.at("test_score").get<double>();
  img.platform = parse_platform(j.at("platform").get<std::string>());
  img.input_format = j.at("input_format").get<std::string>();
  for (const json& d : j.at("dependencies")) {
    img.dependencies.push_back(
        {d.at("name").get<std::string>(), SemVer::parse(d.at("version").get<std::string>())});
  }
  img.created_at = j.at("created_at").get<LogicalTime>();
  img.blob_ref = j.at("blob_ref").get<std::string>();
  return img;
}

namespace {

// Identity of an image for idempotence checks: every caller-supplied field,
// excluding the registry-assigned model_id and created_at.
std::string image_identity_digest(const ModelImage& img) {
  json j = image_to_json(img);
  j.erase("model_id");
  j.erase("created_at");
  return canonical_digest(j);
}

// Oriented comparison key: smaller is better, so loss-like scores sort
// naturally and higher-is-better scores are negated.
double score_key(const ModelImage& img) {
  return metric_higher_is_better(img.metric) ? -img.test_score : img.test_score;
}

bool candidate_order(const ModelImage& a, const ModelImage& b) {
  if (score_key(a) != score_key(b)) return score_key(a) < score_key(b);
  if (a.version != b.version) return a.version > b.version;
  return a.model_id < b.model_id;
}

}  // namespace

Catalog::Catalog(std::filesystem::path data_dir)
    : data_dir_(std::move(data_dir)), now_([] { return LogicalTime{0}; }) {
  if (!data_dir_.empty()) {
    std::filesystem::create_directories(data_dir_ / "catalog" / "descriptors");
    std::filesystem::create_directories(data_dir_ / "catalog" / "models");
    replay_log();
  }
}

void Catalog::set_clock(std::function<LogicalTime()> now_fn) { now_ = std::move(now_fn); }

void Catalog::append_log(const json& record) {
  if (data_dir_.empty()) return;
  std::ofstream out(data_dir_ / "catalog" / "index.log", std::ios::app);
  out << canonical_dump(record) << "\n";
}

void Catalog::replay_log() {
  std::ifstream in(data_dir_ / "catalog" / "index.log");
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    std::string op = rec.at("op").get<std::string>();
    if (op == "register_model") {
      ModelImage img = image_from_json(rec.at("image"));
      models_[img.model_id] = std::move(img);
    } else if (op == "onboard_nifd" || op == "onboard_nisd") {
      DescriptorEntry e;
      e.id = rec.at("id").get<std::string>();
      e.kind = op == "onboard_nifd" ? "nifd" : "nisd";
      e.name = rec.at("name").get<std::string>();
      e.version = SemVer::parse(rec.at("version").get<std::string>());
      e.digest = rec.at("digest").get<std::string>();
      std::ifstream doc_in(data_dir_ / "catalog" / "descriptors" / (e.digest + ".json"));
      if (doc_in) e.doc = json::parse(doc_in);
      descriptors_[e.id] = std::move(e);
    }
  }
}

std::string Catalog::put_blob(const std::string& bytes) {
  std::unique_lock lock(mu_);
  std::string hex = sha256_hex(bytes);
  if (!blobs_.count(hex)) {
    blobs_[hex] = bytes;
    if (!data_dir_.empty()) {
      std::ofstream out(data_dir_ / "catalog" / "models" / (hex + ".bin"), std::ios::binary);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
  }
  return "sha256:" + hex;
}

std::string Catalog::get_blob(const std::string& ref) const {
  std::shared_lock lock(mu_);
  std::string hex = ref.rfind("sha256:", 0) == 0 ? ref.substr(7) : ref;
  auto it = blobs_.find(hex);
  if (it != blobs_.end()) return it->second;
  if (!data_dir_.empty()) {
    std::ifstream in(data_dir_ / "catalog" / "models" / (hex + ".bin"), std::ios::binary);
    if (in) {
      return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
  }
  throw NistError(ErrorCode::UnknownModel, "no artifact blob for ref " + ref);
}

std::string Catalog::register_model(ModelImage image) {
  std::unique_lock lock(mu_);
  return register_locked(std::move(image));
}

std::string Catalog::register_locked(ModelImage image) {
  if (image.nif_name.empty() || image.blob_ref.empty()) {
    throw NistError(ErrorCode::InvalidImage, "image must carry nif_name and blob_ref");
  }
  if (!std::isfinite(image.test_score)) {
    throw NistError(ErrorCode::InvalidImage, "image test_score must be finite");
  }
  std::string identity = image_identity_digest(image);
  for (const auto& [id, existing] : models_) {
    if (existing.nif_name != image.nif_name || existing.version != image.version) continue;
    if (image_identity_digest(existing) == identity) return id;  // idempotent re-registration
    throw NistError(ErrorCode::VersionConflict,
                    image.nif_name + " " + image.version.str() +
                        " is already registered with different content");
  }
  image.model_id = "m-" + identity.substr(0, 16);
  image.created_at = now_();
  json record = {{"op", "register_model"}, {"id", image.model_id},   {"name", image.nif_name},
                 {"version", image.version.str()}, {"digest", identity}, {"t", image.created_at},
                 {"image", image_to_json(image)}};
  models_[image.model_id] = image;
  append_log(record);
  return image.model_id;
}

ModelImage Catalog::get_model(const std::string& model_id) const {
  std::shared_lock lock(mu_);
  auto it = models_.find(model_id);
  if (it == models_.end()) throw NistError(ErrorCode::UnknownModel, "no model " + model_id);
  return it->second;
}

std::optional<ModelImage> Catalog::find_model(const std::string& nif_name,
                                              const SemVer& version) const {
  std::shared_lock lock(mu_);
  for (const auto& [id, img] : models_) {
    if (img.nif_name == nif_name && img.version == version) return img;
  }
  return std::nullopt;
}

bool Catalog::exists(const std::string& nif_name, const std::string& version_constraint) const {
  VersionConstraint c = VersionConstraint::parse(version_constraint);
  std::shared_lock lock(mu_);
  for (const auto& [id, img] : models_) {
    if (img.nif_name == nif_name && c.satisfied_by(img.version)) return true;
  }
  return false;
}

bool requirements_match(const ModelImage& img, const Requirements& req) {
  if (!req.input_format.empty() && img.input_format != req.input_format) return false;
  if (req.platform && img.platform != *req.platform) return false;
  if (req.min_performance && !metric_meets(img.metric, img.test_score, *req.min_performance)) {
    return false;
  }
  for (const auto& want : req.dependency_constraints) {
    VersionConstraint c = VersionConstraint::parse(want.constraint);
    bool found = false;
    for (const auto& have : img.dependencies) {
      if (have.name == want.name && c.satisfied_by(have.version)) {
        found = true;
        break;
      }
    }
    if (!found) return false;
  }
  return true;
}

std::vector<ModelImage> Catalog::query_candidates(const std::string& nif_name,
                                                  const Requirements& req) const {
  std::shared_lock lock(mu_);
  std::vector<ModelImage> out;
  for (const auto& [id, img] : models_) {
    if (img.nif_name != nif_name) continue;
    if (requirements_match(img, req)) out.push_back(img);
  }
  std::sort(out.begin(), out.end(), candidate_order);
  return out;
}

std::vector<ModelImage> Catalog::list_models() const {
  std::shared_lock lock(mu_);
  std::vector<ModelImage> out;
  out.reserve(models_.size());
  for (const auto& [id, img] : models_) out.push_back(img);
  std::sort(out.begin(), out.end(), [](const ModelImage& a, const ModelImage& b) {
    return std::tie(a.nif_name, a.version, a.model_id) < std::tie(b.nif_name, b.version, b.model_id);
  });
  return out;
}

// Both onboard overloads validate the canonical rebuilt form: the document is
// re-serialized with a fresh digest, so programmatically assembled descriptors
// are storable. Enforcing the integrity of a raw incoming document is the
// lifecycle validation step's job, which runs before onboarding.
std::string Catalog::onboard(const NifDescriptor& desc) {
  NifDescriptor canon = parse_nifd(nifd_document(desc));
  ValidationReport report = validate_descriptor(canon);
  if (!report.valid) {
    std::string why = report.messages.empty() ? "invalid descriptor" : report.messages.front();
    throw NistError(ErrorCode::InvalidDescriptor, desc.name + ": " + why);
  }
  std::unique_lock lock(mu_);
  return onboard_locked("nifd", canon.name, canon.version, nifd_document(canon));
}

std::string Catalog::onboard(const NisDescriptor& desc) {
  NisDescriptor canon = parse_nisd(nisd_document(desc));
  ValidationReport report = validate_descriptor(canon);
  if (!report.valid) {
    std::string why = report.messages.empty() ? "invalid descriptor" : report.messages.front();
    throw NistError(ErrorCode::InvalidDescriptor, desc.name + ": " + why);
  }
  std::unique_lock lock(mu_);
  return onboard_locked("nisd", canon.name, canon.version, nisd_document(canon));
}

std::string Catalog::onboard_locked(const std::string& kind, const std::string& name,
                                    const SemVer& version, const json& doc) {
  // Content address = the descriptor's own integrity digest.
  std::string digest = integrity_digest(doc);
  std::string id = "d-" + digest.substr(0, 16);
  if (auto it = descriptors_.find(id); it != descriptors_.end()) return id;  // idempotent
  for (const auto& [existing_id, e] : descriptors_) {
    if (e.kind == kind && e.name == name && e.version == version) {
      throw NistError(ErrorCode::VersionConflict,
                      kind + " " + name + " " + version.str() +
                          " is already onboarded with different content");
    }
  }
  DescriptorEntry e{id, kind, name, version, digest, doc};
  if (!data_dir_.empty()) {
    std::ofstream out(data_dir_ / "catalog" / "descriptors" / (digest + ".json"));
    out << doc.dump(2) << "\n";
  }
  append_log(json{{"op", "onboard_" + kind},
                  {"id", id},
                  {"name", name},
                  {"version", version.str()},
                  {"digest", digest},
                  {"t", now_()}});
  descriptors_[id] = std::move(e);
  return id;
}

std::vector<DescriptorEntry> Catalog::list_descriptors() const {
  std::shared_lock lock(mu_);
  std::vector<DescriptorEntry> out;
  out.reserve(descriptors_.size());
  for (const auto& [id, e] : descriptors_) out.push_back(e);
  return out;
}

std::optional<NifDescriptor> Catalog::find_nifd(const std::string& name,
                                                const std::string& constraint) const {
  VersionConstraint c = VersionConstraint::parse(constraint);
  std::shared_lock lock(mu_);
  const DescriptorEntry* best = nullptr;
  for (const auto& [id, e] : descriptors_) {
    if (e.kind != "nifd" || e.name != name || !c.satisfied_by(e.version)) continue;
    if (!best || e.version > best->version) best = &e;
  }
  if (!best) return std::nullopt;
  return parse_nifd(best->doc);
}

std::optional<NisDescriptor> Catalog::find_nisd(const std::string& name_or_id) const {
  std::shared_lock lock(mu_);
  if (auto it = descriptors_.find(name_or_id); it != descriptors_.end() && it->second.kind == "nisd") {
    return parse_nisd(it->second.doc);
  }
  const DescriptorEntry* best = nullptr;
  for (const auto& [id, e] : descriptors_) {
    if (e.kind != "nisd" || e.name != name_or_id) continue;
    if (!best || e.version > best->version) best = &e;
  }
  if (!best) return std::nullopt;
  return parse_nisd(best->doc);
}

}  // namespace nist
