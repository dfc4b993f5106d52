#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>

#include "nist/digest.hpp"
#include "nist/managers.hpp"
#include "support.hpp"

using namespace nist;
using nlohmann::json;

namespace {

struct Bench {
  SimEnv env{7};
  Catalog catalog;
  NifcManager nifcm{env, catalog};
  NifManager nifm{env, catalog, nifcm};
  std::string m_anomaly;  // nif-anomaly 1.0.0, accuracy 0.92
  std::string m_reloc;    // nif-relocation 1.0.0, accuracy 0.90

  Bench() {
    for (auto [id, tier, cpu, mem] :
         {std::tuple{"edge0", NodeTier::Edge, std::int64_t{4000}, std::int64_t{8192}},
          std::tuple{"edge1", NodeTier::Edge, std::int64_t{4000}, std::int64_t{8192}},
          std::tuple{"cloud0", NodeTier::Cloud, std::int64_t{16000}, std::int64_t{65536}}}) {
      SimNode n;
      n.node_id = id;
      n.tier = tier;
      n.capacity = ResourceVec{cpu, mem, 2, 10000};
      env.add_node(n);
      env.add_default_streams(id);
    }
    catalog.onboard(parse_nifd(testsupport::nif1_doc()));
    catalog.onboard(parse_nifd(testsupport::nif2_doc()));
    m_anomaly = register_image("nif-anomaly", "1.0.0", 0.92, Platform::Cpu, 0.8);
    m_reloc = register_image("nif-relocation", "1.0.0", 0.90, Platform::Cpu, 0.0);
  }

  std::string register_image(const std::string& nif, const std::string& version, double score,
                             Platform platform, double theta) {
    ModelImage img;
    img.nif_name = nif;
    img.version = SemVer::parse(version);
    img.metric = LearningMetric::Accuracy;
    img.test_score = score;
    img.platform = platform;
    img.input_format = "metrics.timeseries.v1";
    img.dependencies = {{"torch", SemVer{2, 1, 0}}};
    json params = json::object();
    if (theta > 0) params["anomaly_threshold"] = theta;
    img.blob_ref = catalog.put_blob(
        canonical_dump(json{{"nif_name", nif}, {"version", version}, {"params", params}}));
    return catalog.register_model(img);
  }
};

}  // namespace

TEST_CASE("find_instance matches the running instance whose model fits") {
  Bench b;
  CHECK_FALSE(b.nifm.find_instance("nif-anomaly", {}).has_value());
  std::string id = b.nifm.instantiate_nif("nif-anomaly", b.m_anomaly);
  REQUIRE(b.nifm.find_instance("nif-anomaly", {}) == id);

  Requirements cpu_req;
  cpu_req.platform = Platform::Cpu;
  CHECK(b.nifm.find_instance("nif-anomaly", cpu_req) == id);
  Requirements gpu_req;
  gpu_req.platform = Platform::Gpu;
  CHECK_FALSE(b.nifm.find_instance("nif-anomaly", gpu_req).has_value());
  Requirements perf_req;
  perf_req.min_performance = 0.95;
  CHECK_FALSE(b.nifm.find_instance("nif-anomaly", perf_req).has_value());
  CHECK_FALSE(b.nifm.find_instance("nif-relocation", {}).has_value());

  // two matches resolve to the lower instance id
  std::string second = b.nifm.instantiate_nif("nif-anomaly", b.m_anomaly);
  CHECK(second > id);
  CHECK(b.nifm.find_instance("nif-anomaly", {}) == id);
}

TEST_CASE("instantiate picks nodes first-fit and honors feasible hints") {
  Bench b;
  // ascending node ids: cloud0, edge0, edge1. NIF1 has two classes.
  std::string i1 = b.nifm.instantiate_nif("nif-anomaly", b.m_anomaly);
  CHECK(b.nifm.instance(i1).node_id == "cloud0");
  CHECK(b.nifm.instance(i1).nifc_ids.size() == 2);
  CHECK(b.env.allocated("cloud0") == ResourceVec{200, 256, 0, 0});

  // fill cloud0 so the next single-component NIF overflows to edge0
  ResourceVec fill = b.env.available("cloud0");
  fill.cpu_mc -= 50;  // below the 100 mc a component needs
  fill.mem_mib = 0;
  fill.gpu_units = 0;
  fill.link_bw_mbps = 0;
  CHECK(b.env.try_allocate("cloud0", "filler", "service", "svc-fill", fill));
  std::string i2 = b.nifm.instantiate_nif("nif-relocation", b.m_reloc);
  CHECK(b.nifm.instance(i2).node_id == "edge0");

  // a hint with room overrides first-fit; an infeasible hint falls back
  std::string i3 = b.nifm.instantiate_nif("nif-relocation", b.m_reloc, "edge1");
  CHECK(b.nifm.instance(i3).node_id == "edge1");
  std::string i4 = b.nifm.instantiate_nif("nif-relocation", b.m_reloc, "cloud0");
  CHECK(b.nifm.instance(i4).node_id == "edge0");
  std::string i5 = b.nifm.instantiate_nif("nif-relocation", b.m_reloc, "no-such-node");
  CHECK(b.nifm.instance(i5).node_id == "edge0");

  CHECK_THROWS_AS(b.nifm.instantiate_nif("nif-anomaly", "m-ffffffffffffffff"), NistError);
  CHECK_THROWS_AS(b.nifm.instantiate_nif("nif-unknown", b.m_anomaly), NistError);
}

TEST_CASE("instantiation failure leaves no trace") {
  Bench b;
  // demands exceeding every node: exhaust cpu everywhere
  for (const auto& node : b.env.node_ids()) {
    ResourceVec all = b.env.available(node);
    all.mem_mib = 0;
    all.gpu_units = 0;
    all.link_bw_mbps = 0;
    CHECK(b.env.try_allocate(node, "filler", "service", "svc-fill", all));
  }
  json before = b.env.state_json();
  try {
    b.nifm.instantiate_nif("nif-anomaly", b.m_anomaly);
    FAIL("expected InsufficientResources");
  } catch (const NistError& e) {
    CHECK(e.code() == ErrorCode::InsufficientResources);
  }
  CHECK(b.env.state_json() == before);
  CHECK(b.nifcm.reservations().empty());
  CHECK(b.nifm.instances().empty());
  CHECK(b.nifcm.components().empty());
}

TEST_CASE("gpu platform models claim a gpu unit on their first component") {
  Bench b;
  std::string m_gpu = b.register_image("nif-relocation", "1.1.0", 0.93, Platform::Gpu, 0.0);
  std::string id = b.nifm.instantiate_nif("nif-relocation", m_gpu);
  CHECK(b.env.allocated(b.nifm.instance(id).node_id).gpu_units == 1);
}

TEST_CASE("reserve subtracts capacity, commit pins it, expiry returns it") {
  Bench b;
  CHECK(b.env.available("edge0").cpu_mc == 4000);
  Reservation res = b.nifcm.reserve({DemandItem{"edge0", ResourceVec{1000, 0, 0, 0}}});
  CHECK(b.env.available("edge0").cpu_mc == 3000);
  CHECK(res.state == ReservationState::Held);
  CHECK(res.expiry == b.env.now() + kReservationTtlMs);

  // an oversized demand fails whole and leaves the ledger unchanged
  try {
    b.nifcm.reserve({DemandItem{"edge0", ResourceVec{5000, 0, 0, 0}}});
    FAIL("expected InsufficientResources");
  } catch (const NistError& e) {
    CHECK(e.code() == ErrorCode::InsufficientResources);
  }
  CHECK(b.env.available("edge0").cpu_mc == 3000);

  // Held reservations lapse with sim time
  b.env.run_to_idle();
  CHECK(b.env.now() >= res.expiry);
  CHECK(b.env.available("edge0").cpu_mc == 4000);
  CHECK_FALSE(b.nifcm.reservation(res.reservation_id).has_value());
  CHECK_THROWS_AS(b.nifcm.commit(res.reservation_id), NistError);

  // Committed reservations never expire
  Reservation res2 = b.nifcm.reserve({DemandItem{"edge0", ResourceVec{500, 0, 0, 0}}});
  b.nifcm.commit(res2.reservation_id);
  b.env.run_to_idle();
  CHECK(b.env.available("edge0").cpu_mc == 3500);
  CHECK(b.nifcm.reservation(res2.reservation_id)->state == ReservationState::Committed);

  // error matrix on stale handles
  CHECK_THROWS_AS(b.nifcm.commit(res2.reservation_id), NistError);   // AlreadyCommitted
  CHECK_THROWS_AS(b.nifcm.release(res2.reservation_id), NistError);  // AlreadyCommitted
  try {
    b.nifcm.release(res2.reservation_id);
  } catch (const NistError& e) {
    CHECK(e.code() == ErrorCode::AlreadyCommitted);
  }
  CHECK_THROWS_AS(b.nifcm.release("r-999999"), NistError);

  // releasing a Held reservation restores capacity immediately
  Reservation res3 = b.nifcm.reserve({DemandItem{"edge0", ResourceVec{200, 0, 0, 0}}});
  CHECK(b.env.available("edge0").cpu_mc == 3300);
  b.nifcm.release(res3.reservation_id);
  CHECK(b.env.available("edge0").cpu_mc == 3500);
  CHECK_THROWS_AS(b.nifcm.release(res3.reservation_id), NistError);
}

TEST_CASE("multi-item reservations are all-or-nothing across nodes") {
  Bench b;
  json before = b.env.state_json();
  // first item fits on edge0, second fits nowhere
  try {
    b.nifcm.reserve({DemandItem{"", ResourceVec{1000, 0, 0, 0}},
                     DemandItem{"", ResourceVec{99999, 0, 0, 0}}});
    FAIL("expected InsufficientResources");
  } catch (const NistError& e) {
    CHECK(e.code() == ErrorCode::InsufficientResources);
  }
  CHECK(b.env.state_json() == before);

  // unpinned demands first-fit by ascending node id, item by item
  Reservation res = b.nifcm.reserve({DemandItem{"", ResourceVec{15900, 0, 0, 0}},
                                     DemandItem{"", ResourceVec{3900, 0, 0, 0}}});
  REQUIRE(res.placed.size() == 2);
  CHECK(res.placed[0].first == "cloud0");  // ascending ids start at cloud0
  CHECK(res.placed[1].first == "edge0");   // cloud0 has 100 mc left, spill over
}

TEST_CASE("refcounts gate teardown and teardown restores the node") {
  Bench b;
  json initial = b.env.state_json();
  std::string id = b.nifm.instantiate_nif("nif-anomaly", b.m_anomaly);
  CHECK(b.nifm.instance(id).refcount == 1);
  CHECK(b.nifm.retain(id) == 2);
  CHECK(b.nifm.release_ref(id) == 1);
  CHECK(b.nifm.instance(id).state == InstanceState::Running);
  CHECK(b.nifm.release_ref(id) == 0);
  CHECK(b.nifm.instance(id).state == InstanceState::Terminated);
  CHECK(b.nifm.instance(id).node_id.empty());
  CHECK(b.env.state_json() == initial);  // allocation fully restored
  CHECK(b.nifcm.components().empty());

  CHECK_THROWS_AS(b.nifm.terminate_nif(id), NistError);  // already gone
  CHECK_THROWS_AS(b.nifm.retain(id), NistError);
  CHECK_THROWS_AS(b.nifm.terminate_nif("i-999999"), NistError);
  try {
    b.nifm.terminate_nif("i-999999");
  } catch (const NistError& e) {
    CHECK(e.code() == ErrorCode::UnknownInstance);
  }
}

TEST_CASE("links consume bandwidth on both endpoint nodes") {
  Bench b;
  std::string a = b.nifm.instantiate_nif("nif-anomaly", b.m_anomaly, "edge0");
  std::string c = b.nifm.instantiate_nif("nif-relocation", b.m_reloc, "edge1");
  json before = b.env.state_json();

  std::string link = b.nifm.connect(a, c, 10);
  CHECK(b.env.allocated("edge0").link_bw_mbps == 10);
  CHECK(b.env.allocated("edge1").link_bw_mbps == 10);
  CHECK(b.nifcm.links_of(a) == std::vector<std::string>{link});

  b.nifcm.disconnect(link);
  CHECK(b.env.state_json() == before);  // budgets identical after disconnect
  CHECK_THROWS_AS(b.nifcm.disconnect(link), NistError);

  // a demand beyond one endpoint's budget is refused with no half-allocation
  std::string big = b.nifm.connect(a, c, 10000);
  b.nifcm.disconnect(big);
  CHECK_THROWS_AS(b.nifm.connect(a, c, 10001), NistError);
  CHECK(b.env.state_json() == before);

  // co-located endpoints draw the budget twice from the same node
  std::string d = b.nifm.instantiate_nif("nif-relocation", b.m_reloc, "edge0");
  std::string same = b.nifm.connect(a, d, 7);
  CHECK(b.env.allocated("edge0").link_bw_mbps == 14);
  b.nifcm.disconnect(same);

  // terminating an endpoint drops its links
  std::string link2 = b.nifm.connect(a, c, 5);
  b.nifm.terminate_nif(a);
  CHECK(b.nifcm.links().empty());
  CHECK(b.env.allocated("edge1").link_bw_mbps == 0);
  (void)link2;
}

TEST_CASE("a held link reservation converts into the link without double counting") {
  Bench b;
  std::string a = b.nifm.instantiate_nif("nif-anomaly", b.m_anomaly, "edge0");
  std::string c = b.nifm.instantiate_nif("nif-relocation", b.m_reloc, "edge1");
  Reservation res = b.nifcm.reserve({DemandItem{"edge0", ResourceVec{0, 0, 0, 10}},
                                     DemandItem{"edge1", ResourceVec{0, 0, 0, 10}}});
  CHECK(b.env.allocated("edge0").link_bw_mbps == 10);
  std::string link = b.nifm.connect(a, c, 10, res.reservation_id);
  CHECK(b.env.allocated("edge0").link_bw_mbps == 10);  // unchanged, hold was consumed
  CHECK(b.env.allocated("edge1").link_bw_mbps == 10);
  CHECK_FALSE(b.nifcm.reservation(res.reservation_id).has_value());
  b.env.run_to_idle();  // the lapsed expiry event must not touch the link
  CHECK(b.env.allocated("edge0").link_bw_mbps == 10);
  b.nifcm.disconnect(link);
  CHECK(b.env.allocated("edge0").link_bw_mbps == 0);
}

TEST_CASE("health verdicts follow the threshold rules") {
  Bench b;
  std::string id = b.nifm.instantiate_nif("nif-anomaly", b.m_anomaly);
  HealthReport r = b.nifm.nif_health(id, 1000);
  CHECK(r.verdict == HealthVerdict::Healthy);
  CHECK(r.learning_kpis.at("accuracy") == 0.92);  // 0.92 ≥ threshold_lower 0.6
  CHECK(r.network_kpis.count("cpu_load") == 1);
  CHECK(r.network_kpis.count("mem_load") == 1);
  CHECK(r.network_kpis.count("latency_ms") == 1);
  CHECK(r.at == 1000);

  // a model below threshold_lower reports BelowThreshold
  std::string m_weak = b.register_image("nif-anomaly", "1.0.1", 0.55, Platform::Cpu, 0.0);
  std::string weak = b.nifm.instantiate_nif("nif-anomaly", m_weak);
  CHECK(b.nifm.nif_health(weak, 2000).verdict == HealthVerdict::BelowThreshold);

  // node fault dominates everything
  b.env.set_fault(b.nifm.instance(id).node_id, true);
  CHECK(b.nifm.nif_health(id, 3000).verdict == HealthVerdict::Failed);
  b.env.set_fault(b.nifm.instance(id).node_id, false);
  CHECK(b.nifm.nif_health(id, 4000).verdict == HealthVerdict::Healthy);

  CHECK_THROWS_AS(b.nifm.nif_health("i-999999", 0), NistError);
}

TEST_CASE("three consecutive below-threshold reports degrade the instance") {
  Bench b;
  std::string m_weak = b.register_image("nif-anomaly", "1.0.1", 0.55, Platform::Cpu, 0.0);
  std::string id = b.nifm.instantiate_nif("nif-anomaly", m_weak);

  CHECK(b.nifm.nif_health(id, 5000).verdict == HealthVerdict::BelowThreshold);
  CHECK(b.nifm.nif_health(id, 10000).verdict == HealthVerdict::BelowThreshold);
  CHECK(b.nifm.instance(id).state == InstanceState::Running);  // two is not enough

  // a healthy report in between resets the streak
  b.nifm.update_config(id, json{{"model_id", b.m_anomaly}});
  CHECK(b.nifm.nif_health(id, 15000).verdict == HealthVerdict::Healthy);
  b.nifm.update_config(id, json{{"model_id", m_weak}});
  CHECK(b.nifm.nif_health(id, 20000).verdict == HealthVerdict::BelowThreshold);
  CHECK(b.nifm.nif_health(id, 25000).verdict == HealthVerdict::BelowThreshold);
  CHECK(b.nifm.instance(id).state == InstanceState::Running);
  CHECK(b.nifm.nif_health(id, 30000).verdict == HealthVerdict::BelowThreshold);
  CHECK(b.nifm.instance(id).state == InstanceState::Degraded);

  // degraded instances keep reporting but never match
  CHECK(b.nifm.nif_health(id, 35000).verdict == HealthVerdict::BelowThreshold);
  CHECK_FALSE(b.nifm.find_instance("nif-anomaly", {}).has_value());
}

TEST_CASE("health reports are strictly ordered per instance") {
  Bench b;
  std::string id = b.nifm.instantiate_nif("nif-anomaly", b.m_anomaly);
  HealthReport r1 = b.nifm.nif_health(id, 1000);
  HealthReport r2 = b.nifm.nif_health(id, 1000);  // same tick, still advances
  HealthReport r3 = b.nifm.nif_health(id, 1000);
  CHECK(r1.at == 1000);
  CHECK(r2.at == 1001);
  CHECK(r3.at == 1002);
  CHECK(b.nifm.nif_health(id, 5000).at == 5000);
}

TEST_CASE("the health loop samples every live instance on its cadence") {
  Bench b;
  std::string id = b.nifm.instantiate_nif("nif-anomaly", b.m_anomaly);
  b.nifm.enable_health_loop(kHealthPeriodMs, 20000);
  b.env.run_to_idle();
  std::vector<LogicalTime> at;
  for (const auto& r : b.nifm.health_reports()) {
    CHECK(r.nif_instance_id == id);
    at.push_back(r.at);
  }
  CHECK(at == std::vector<LogicalTime>{5000, 10000, 15000, 20000});
}

TEST_CASE("image upload is idempotent and checks the registry") {
  Bench b;
  CHECK_FALSE(b.nifcm.has_image(b.m_anomaly));
  b.nifcm.upload_image(b.m_anomaly);
  CHECK(b.nifcm.has_image(b.m_anomaly));
  b.nifcm.upload_image(b.m_anomaly);  // second upload: ack, still one copy
  CHECK(b.nifcm.state_json().at("images").size() == 1);
  CHECK_THROWS_AS(b.nifcm.upload_image("m-ffffffffffffffff"), NistError);
}

TEST_CASE("state dump writes a parseable managers.json") {
  Bench b;
  testsupport::TempDir dir;
  std::string id = b.nifm.instantiate_nif("nif-anomaly", b.m_anomaly);
  b.nifm.dump_state(dir.path());
  std::ifstream in(dir.path() / "state" / "managers.json");
  json doc = json::parse(in);
  CHECK(doc.at("nif_manager").at("instances").contains(id));
  CHECK(doc.at("nifc_manager").at("nifcs").size() == 2);
  CHECK(doc.at("sim").at("nodes").contains("edge0"));
}

TEST_CASE("random lifecycle churn conserves capacity at every step") {
  Bench b;
  json initial = b.env.state_json();
  Rng rng(99);
  std::vector<std::string> live;
  std::vector<std::string> live_links;
  for (int step = 0; step < 200; ++step) {
    int pick = static_cast<int>(rng.uniform_int(0, 5));
    try {
      if (pick == 0) {
        live.push_back(b.nifm.instantiate_nif("nif-anomaly", b.m_anomaly));
      } else if (pick == 1) {
        live.push_back(b.nifm.instantiate_nif("nif-relocation", b.m_reloc));
      } else if (pick == 2 && !live.empty()) {
        b.nifm.retain(live[rng.uniform_int(0, live.size() - 1)]);
      } else if (pick == 3 && !live.empty()) {
        std::size_t i = rng.uniform_int(0, live.size() - 1);
        if (b.nifm.release_ref(live[i]) == 0) live.erase(live.begin() + i);
      } else if (pick == 4 && live.size() >= 2) {
        live_links.push_back(
            b.nifm.connect(live[rng.uniform_int(0, live.size() - 1)],
                           live[rng.uniform_int(0, live.size() - 1)], 5));
      } else if (pick == 5 && !live_links.empty()) {
        std::size_t i = rng.uniform_int(0, live_links.size() - 1);
        // an endpoint teardown may have taken the link down already
        if (b.nifcm.links().count(live_links[i])) b.nifcm.disconnect(live_links[i]);
        live_links.erase(live_links.begin() + i);
      }
    } catch (const NistError& e) {
      CHECK(e.code() == ErrorCode::InsufficientResources);  // only legal refusal
    }
    b.env.audit();
  }
  // drain every reference and verify teardown completeness
  while (!live.empty()) {
    if (b.nifm.release_ref(live.back()) == 0) live.pop_back();
  }
  CHECK(b.nifcm.links().empty());
  CHECK(b.nifcm.components().empty());
  b.env.run_to_idle();  // flush reservation expiry no-ops
  for (const auto& node : b.env.node_ids()) {
    CHECK(b.env.available(node) == b.env.node(node).capacity);
  }
}
