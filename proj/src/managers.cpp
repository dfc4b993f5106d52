#include "nist/managers.hpp"

#include <algorithm>
#include <fstream>

#include "nist/digest.hpp"

namespace nist {

using nlohmann::json;

const char* instance_state_name(InstanceState s) {
  switch (s) {
    case InstanceState::Instantiating: return "Instantiating";
    case InstanceState::Running: return "Running";
    case InstanceState::Degraded: return "Degraded";
    case InstanceState::Terminating: return "Terminating";
    case InstanceState::Terminated: return "Terminated";
  }
  return "Instantiating";
}

const char* health_verdict_name(HealthVerdict v) {
  switch (v) {
    case HealthVerdict::Healthy: return "Healthy";
    case HealthVerdict::BelowThreshold: return "BelowThreshold";
    case HealthVerdict::Failed: return "Failed";
  }
  return "Healthy";
}

// ── NifcManager ──────────────────────────────────────────────────────────────

NifcManager::NifcManager(SimEnv& env, Catalog& catalog, LogicalTime reservation_ttl)
    : env_(env), catalog_(catalog), ttl_(reservation_ttl) {}

Reservation NifcManager::reserve(const std::vector<DemandItem>& demands) {
  std::string res_id = format_id("r", next_res_);
  Reservation res;
  res.reservation_id = res_id;
  res.expiry = env_.now() + ttl_;

  auto rollback = [&]() {
    for (std::size_t i = 0; i < res.placed.size(); ++i) {
      env_.release_entry(res.placed[i].first, res_id + "/d" + std::to_string(i));
    }
  };
  for (std::size_t i = 0; i < demands.size(); ++i) {
    const DemandItem& d = demands[i];
    std::string entry = res_id + "/d" + std::to_string(i);
    std::string placed_on;
    if (!d.node_id.empty()) {
      if (env_.try_allocate(d.node_id, entry, "hold", res_id, d.amount)) placed_on = d.node_id;
    } else {
      for (const auto& node : env_.node_ids()) {
        if (env_.try_allocate(node, entry, "hold", res_id, d.amount)) {
          placed_on = node;
          break;
        }
      }
    }
    if (placed_on.empty()) {
      rollback();
      throw NistError(ErrorCode::InsufficientResources,
                      "no node can hold demand " + std::to_string(i) + " of " + res_id);
    }
    res.placed.emplace_back(placed_on, d.amount);
  }

  ++next_res_;  // only consumed by successful reservations
  reservations_.emplace(res_id, res);
  env_.schedule(res.expiry, "reservation.expiry", json{{"reservation_id", res_id}},
                [this, res_id](const SimEvent&) {
                  auto it = reservations_.find(res_id);
                  if (it == reservations_.end() || it->second.state != ReservationState::Held) {
                    return;  // committed or already released; nothing to undo
                  }
                  for (std::size_t i = 0; i < it->second.placed.size(); ++i) {
                    env_.release_entry(it->second.placed[i].first,
                                       res_id + "/d" + std::to_string(i));
                  }
                  reservations_.erase(it);
                });
  return res;
}

void NifcManager::commit(const std::string& reservation_id) {
  auto it = reservations_.find(reservation_id);
  if (it == reservations_.end()) {
    throw NistError(ErrorCode::UnknownReservation,
                    "no live reservation '" + reservation_id + "'");
  }
  if (it->second.state == ReservationState::Committed) {
    throw NistError(ErrorCode::AlreadyCommitted,
                    "reservation '" + reservation_id + "' already committed");
  }
  for (std::size_t i = 0; i < it->second.placed.size(); ++i) {
    env_.relabel_entry(it->second.placed[i].first, reservation_id + "/d" + std::to_string(i),
                       "committed", reservation_id);
  }
  it->second.state = ReservationState::Committed;
}

void NifcManager::release(const std::string& reservation_id) {
  auto it = reservations_.find(reservation_id);
  if (it == reservations_.end()) {
    throw NistError(ErrorCode::UnknownReservation,
                    "no live reservation '" + reservation_id + "'");
  }
  if (it->second.state == ReservationState::Committed) {
    throw NistError(ErrorCode::AlreadyCommitted,
                    "committed reservation '" + reservation_id + "' cannot be released");
  }
  for (std::size_t i = 0; i < it->second.placed.size(); ++i) {
    env_.release_entry(it->second.placed[i].first, reservation_id + "/d" + std::to_string(i));
  }
  reservations_.erase(it);
}

std::optional<Reservation> NifcManager::reservation(const std::string& reservation_id) const {
  auto it = reservations_.find(reservation_id);
  if (it == reservations_.end()) return std::nullopt;
  return it->second;
}

std::map<std::string, Reservation> NifcManager::reservations() const { return reservations_; }

std::vector<std::string> NifcManager::adopt_components(const std::string& reservation_id,
                                                       const std::string& nif_instance_id,
                                                       const std::vector<NmapekClass>& classes) {
  auto it = reservations_.find(reservation_id);
  if (it == reservations_.end()) {
    throw NistError(ErrorCode::UnknownReservation,
                    "no live reservation '" + reservation_id + "'");
  }
  if (it->second.state != ReservationState::Committed) {
    throw NistError(ErrorCode::InvalidState,
                    "reservation '" + reservation_id + "' must be committed before adoption");
  }
  if (classes.size() != it->second.placed.size()) {
    throw NistError(ErrorCode::InvalidState,
                    "class list does not match reservation demands");
  }
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    std::string nifc_id = format_id("c", next_nifc_++);
    const auto& [node, amount] = it->second.placed[i];
    env_.relabel_entry(node, reservation_id + "/d" + std::to_string(i), "nifc",
                       nif_instance_id);
    nifcs_.emplace(nifc_id, NifcRecord{nifc_id, nif_instance_id, classes[i], node, amount});
    ids.push_back(nifc_id);
  }
  reservations_.erase(it);
  return ids;
}

void NifcManager::release_components(const std::string& nif_instance_id) {
  env_.release_by_owner(nif_instance_id);
  for (auto it = nifcs_.begin(); it != nifcs_.end();) {
    if (it->second.nif_instance_id == nif_instance_id) {
      it = nifcs_.erase(it);
    } else {
      ++it;
    }
  }
}

std::map<std::string, NifcRecord> NifcManager::components() const { return nifcs_; }

std::string NifcManager::connect_nodes(const std::string& nif_a, const std::string& node_a,
                                       const std::string& nif_b, const std::string& node_b,
                                       std::int64_t bw_mbps,
                                       const std::string& reservation_id) {
  std::string link_id = format_id("l", next_link_);
  ResourceVec bw{0, 0, 0, bw_mbps};
  if (!reservation_id.empty()) {
    auto it = reservations_.find(reservation_id);
    if (it == reservations_.end()) {
      throw NistError(ErrorCode::UnknownReservation,
                      "no live reservation '" + reservation_id + "'");
    }
    const auto& placed = it->second.placed;
    bool shape_ok = placed.size() == 2 && placed[0].first == node_a &&
                    placed[1].first == node_b && placed[0].second == bw &&
                    placed[1].second == bw;
    if (!shape_ok) {
      throw NistError(ErrorCode::InvalidState,
                      "reservation '" + reservation_id + "' does not match the link demand");
    }
    env_.relabel_entry(node_a, reservation_id + "/d0", "link", link_id);
    env_.relabel_entry(node_b, reservation_id + "/d1", "link", link_id);
    reservations_.erase(it);
  } else {
    if (!env_.try_allocate(node_a, link_id + "/a", "link", link_id, bw)) {
      throw NistError(ErrorCode::InsufficientResources,
                      "no link budget on '" + node_a + "'");
    }
    if (!env_.try_allocate(node_b, link_id + "/b", "link", link_id, bw)) {
      env_.release_entry(node_a, link_id + "/a");
      throw NistError(ErrorCode::InsufficientResources,
                      "no link budget on '" + node_b + "'");
    }
  }
  ++next_link_;
  links_.emplace(link_id, LinkRecord{link_id, nif_a, nif_b, node_a, node_b, bw_mbps});
  return link_id;
}

void NifcManager::disconnect(const std::string& link_id) {
  auto it = links_.find(link_id);
  if (it == links_.end()) {
    throw NistError(ErrorCode::UnknownLink, "unknown link '" + link_id + "'");
  }
  env_.release_by_owner(link_id);
  links_.erase(it);
}

std::map<std::string, LinkRecord> NifcManager::links() const { return links_; }

std::vector<std::string> NifcManager::links_of(const std::string& nif_instance_id) const {
  std::vector<std::string> out;
  for (const auto& [id, l] : links_) {
    if (l.nif_a == nif_instance_id || l.nif_b == nif_instance_id) out.push_back(id);
  }
  return out;
}

void NifcManager::upload_image(const std::string& model_id) {
  catalog_.get_model(model_id);  // throws UnknownModel
  images_.insert(model_id);
}

bool NifcManager::has_image(const std::string& model_id) const {
  return images_.count(model_id) > 0;
}

json NifcManager::state_json() const {
  json reservations = json::object();
  for (const auto& [id, r] : reservations_) {
    json placed = json::array();
    for (const auto& [node, amount] : r.placed) {
      placed.push_back(json{{"node_id", node}, {"amount", resource_to_json(amount)}});
    }
    reservations[id] = json{
        {"state", r.state == ReservationState::Held ? "Held" : "Committed"},
        {"expiry", r.expiry},
        {"placed", std::move(placed)}};
  }
  json nifcs = json::object();
  for (const auto& [id, c] : nifcs_) {
    nifcs[id] = json{{"nif_instance_id", c.nif_instance_id},
                     {"class", nmapek_class_name(c.cls)},
                     {"node_id", c.node_id},
                     {"demand", resource_to_json(c.demand)}};
  }
  json links = json::object();
  for (const auto& [id, l] : links_) {
    links[id] = json{{"nif_a", l.nif_a},
                     {"nif_b", l.nif_b},
                     {"node_a", l.node_a},
                     {"node_b", l.node_b},
                     {"bw_mbps", l.bw_mbps}};
  }
  return json{{"reservations", std::move(reservations)},
              {"nifcs", std::move(nifcs)},
              {"links", std::move(links)},
              {"images", json(images_)}};
}

// ── NifManager ───────────────────────────────────────────────────────────────

NifManager::NifManager(SimEnv& env, Catalog& catalog, NifcManager& nifcm)
    : env_(env), catalog_(catalog), nifcm_(nifcm) {}

std::optional<std::string> NifManager::find_instance(const std::string& nif_name,
                                                     const Requirements& req) const {
  for (const auto& [id, inst] : instances_) {  // ascending id: first hit is the tie-break
    if (inst.nif_name != nif_name || inst.state != InstanceState::Running) continue;
    ModelImage img = catalog_.get_model(inst.model_id);
    if (requirements_match(img, req)) return id;
  }
  return std::nullopt;
}

std::string NifManager::instantiate_nif(const std::string& nif_name,
                                        const std::string& model_id,
                                        const std::string& placement_hint) {
  ModelImage model = catalog_.get_model(model_id);  // throws UnknownModel
  auto nifd = catalog_.find_nifd(nif_name);
  if (!nifd) {
    throw NistError(ErrorCode::UnknownNifd, "no onboarded NIFD for '" + nif_name + "'");
  }

  std::vector<NmapekClass> classes(nifd->classes.begin(), nifd->classes.end());
  std::vector<ResourceVec> demands;
  ResourceVec total;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    ResourceVec d{kNifcCpuMc, kNifcMemMib, 0, 0};
    if (i == 0 && model.platform != Platform::Cpu) d.gpu_units = 1;
    demands.push_back(d);
    total = total + d;
  }

  std::string node;
  if (!placement_hint.empty() && env_.has_node(placement_hint) &&
      total.fits_within(env_.available(placement_hint))) {
    node = placement_hint;
  } else {
    for (const auto& candidate : env_.node_ids()) {
      if (total.fits_within(env_.available(candidate))) {
        node = candidate;
        break;
      }
    }
  }
  if (node.empty()) {
    throw NistError(ErrorCode::InsufficientResources,
                    "no node can host '" + nif_name + "' (" + std::to_string(classes.size()) +
                        " components)");
  }

  std::vector<DemandItem> items;
  for (const auto& d : demands) items.push_back(DemandItem{node, d});
  Reservation res = nifcm_.reserve(items);
  nifcm_.commit(res.reservation_id);

  std::string instance_id = format_id("i", next_instance_++);
  NifInstance inst;
  inst.nif_instance_id = instance_id;
  inst.nif_name = nif_name;
  inst.model_id = model_id;
  inst.node_id = node;
  inst.nifc_ids = nifcm_.adopt_components(res.reservation_id, instance_id, classes);
  inst.refcount = 1;
  inst.state = InstanceState::Running;
  inst.config = json{{"model_id", model_id}};
  try {
    json blob = json::parse(catalog_.get_blob(model.blob_ref));
    if (blob.contains("params")) inst.config["params"] = blob["params"];
  } catch (const std::exception&) {
    // image without a readable artifact blob (externally registered); the
    // instance simply runs without translated parameters
  }
  instances_.emplace(instance_id, std::move(inst));
  return instance_id;
}

NifInstance& NifManager::live_instance(const std::string& id) {
  auto it = instances_.find(id);
  if (it == instances_.end() || it->second.state == InstanceState::Terminated) {
    throw NistError(ErrorCode::UnknownInstance, "no live instance '" + id + "'");
  }
  return it->second;
}

void NifManager::terminate_nif(const std::string& nif_instance_id) {
  NifInstance& inst = live_instance(nif_instance_id);
  inst.state = InstanceState::Terminating;
  for (const auto& link : nifcm_.links_of(nif_instance_id)) nifcm_.disconnect(link);
  nifcm_.release_components(nif_instance_id);
  inst.state = InstanceState::Terminated;
  inst.node_id.clear();
  inst.nifc_ids.clear();
  inst.refcount = 0;
}

int NifManager::retain(const std::string& nif_instance_id) {
  return ++live_instance(nif_instance_id).refcount;
}

int NifManager::release_ref(const std::string& nif_instance_id) {
  NifInstance& inst = live_instance(nif_instance_id);
  if (inst.refcount > 0) --inst.refcount;
  int left = inst.refcount;
  if (left == 0) terminate_nif(nif_instance_id);
  return left;
}

std::string NifManager::connect(const std::string& inst_a, const std::string& inst_b,
                                std::int64_t bw_mbps, const std::string& reservation_id) {
  const NifInstance& a = live_instance(inst_a);
  const NifInstance& b = live_instance(inst_b);
  if (a.state != InstanceState::Running || b.state != InstanceState::Running) {
    throw NistError(ErrorCode::InvalidState, "both link endpoints must be Running");
  }
  return nifcm_.connect_nodes(inst_a, a.node_id, inst_b, b.node_id, bw_mbps, reservation_id);
}

HealthReport NifManager::nif_health(const std::string& nif_instance_id, LogicalTime now) {
  NifInstance& inst = live_instance(nif_instance_id);
  auto nifd = catalog_.find_nifd(inst.nif_name);
  if (!nifd) {
    throw NistError(ErrorCode::UnknownNifd, "no onboarded NIFD for '" + inst.nif_name + "'");
  }
  ModelImage model = catalog_.get_model(inst.model_id);

  HealthReport report;
  report.nif_instance_id = nif_instance_id;
  report.learning_kpis[learning_metric_name(model.metric)] = model.test_score;
  report.network_kpis["cpu_load"] = env_.sample(inst.node_id + ".cpu_load", now);
  report.network_kpis["mem_load"] = env_.sample(inst.node_id + ".mem_load", now);
  report.network_kpis["latency_ms"] = env_.sample(inst.node_id + ".latency_ms", now);

  if (env_.node(inst.node_id).fault) {
    report.verdict = HealthVerdict::Failed;
  } else if (nifd->threshold_lower &&
             !metric_meets(model.metric, model.test_score, *nifd->threshold_lower)) {
    report.verdict = HealthVerdict::BelowThreshold;
  } else {
    report.verdict = HealthVerdict::Healthy;
  }

  // reports are strictly ordered per instance even when sampled twice per tick
  LogicalTime at = now;
  auto last = last_report_at_.find(nif_instance_id);
  if (last != last_report_at_.end() && at <= last->second) at = last->second + 1;
  last_report_at_[nif_instance_id] = at;
  report.at = at;

  if (report.verdict == HealthVerdict::BelowThreshold) {
    if (++below_streak_[nif_instance_id] >= kDegradedAfter &&
        inst.state == InstanceState::Running) {
      inst.state = InstanceState::Degraded;
    }
  } else {
    below_streak_[nif_instance_id] = 0;  // any other verdict breaks the streak
  }
  reports_.push_back(report);
  return report;
}

void NifManager::enable_health_loop(LogicalTime period_ms, LogicalTime until_ms) {
  LogicalTime first = env_.now() + period_ms;
  if (first > until_ms) return;
  env_.schedule(first, "health.tick", {}, [this, period_ms, until_ms](const SimEvent& ev) {
    health_tick(ev.at, period_ms, until_ms);
  });
}

void NifManager::health_tick(LogicalTime at, LogicalTime period_ms, LogicalTime until_ms) {
  for (auto& [id, inst] : instances_) {
    if (inst.state == InstanceState::Running || inst.state == InstanceState::Degraded) {
      nif_health(id, at);
    }
  }
  LogicalTime next = at + period_ms;
  if (next <= until_ms) {
    env_.schedule(next, "health.tick", {}, [this, period_ms, until_ms](const SimEvent& ev) {
      health_tick(ev.at, period_ms, until_ms);
    });
  }
}

const NifInstance& NifManager::instance(const std::string& id) const {
  auto it = instances_.find(id);
  if (it == instances_.end()) {
    throw NistError(ErrorCode::UnknownInstance, "unknown instance '" + id + "'");
  }
  return it->second;
}

std::map<std::string, NifInstance> NifManager::instances() const { return instances_; }

void NifManager::update_config(const std::string& nif_instance_id, const json& patch) {
  NifInstance& inst = live_instance(nif_instance_id);
  for (auto it = patch.begin(); it != patch.end(); ++it) inst.config[it.key()] = it.value();
  if (patch.contains("model_id")) inst.model_id = patch["model_id"].get<std::string>();
}

json NifManager::state_json() const {
  json instances = json::object();
  for (const auto& [id, i] : instances_) {
    instances[id] = json{{"nif_name", i.nif_name},
                         {"model_id", i.model_id},
                         {"node_id", i.node_id},
                         {"nifc_ids", i.nifc_ids},
                         {"refcount", i.refcount},
                         {"state", instance_state_name(i.state)},
                         {"config", i.config}};
  }
  return json{{"instances", std::move(instances)}};
}

void NifManager::dump_state(const std::filesystem::path& data_dir) const {
  json doc{{"nif_manager", state_json()},
           {"nifc_manager", nifcm_.state_json()},
           {"sim", env_.state_json()}};
  std::filesystem::path path = data_dir / "state" / "managers.json";
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << doc.dump(2) << "\n";
}

}  // namespace nist
