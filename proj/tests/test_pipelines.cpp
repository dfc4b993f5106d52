#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>

#include "nist/pipelines.hpp"
#include "support.hpp"

using namespace nist;
using nlohmann::json;

namespace {

PipelineSpec base_spec(std::uint64_t seed = 42) {
  PipelineSpec spec;
  spec.nif_name = "nif-anomaly";
  spec.metric = LearningMetric::Accuracy;
  spec.threshold_upper = 0.9;
  spec.epoch_budget = 100;
  spec.seed = seed;
  spec.image.version = SemVer{1, 0, 0};
  spec.image.platform = Platform::Cpu;
  spec.image.input_format = "metrics.timeseries.v1";
  return spec;
}

struct Bench {
  SimEnv env{1};
  Catalog catalog;
  PipelineEngine engine{env, catalog};
};

}  // namespace

TEST_CASE("curve parameters come from the documented ranges and draw order") {
  for (std::uint64_t seed : {0ull, 1ull, 42ull, 777ull, 123456789ull}) {
    CurveParams c = derive_curve(seed);
    CHECK(c.s_max >= 0.88);
    CHECK(c.s_max <= 0.99);
    CHECK(c.s0 >= 0.3);
    CHECK(c.s0 <= 0.6);
    CHECK(c.tau >= 5.0);
    CHECK(c.tau <= 30.0);
    CHECK(c.theta >= 0.7);
    CHECK(c.theta <= 0.9);
    CHECK(c.theta * 100.0 == std::round(c.theta * 100.0));  // two decimals
    // same draws as doing it by hand with the shared Rng
    Rng rng(seed);
    CHECK(c.s_max == rng.uniform(0.88, 0.99));
    CHECK(c.s0 == rng.uniform(0.3, 0.6));
  }
}

TEST_CASE("training curve is strictly monotone in the metric's direction") {
  Rng rng(99);
  for (int round = 0; round < 30; ++round) {
    CurveParams c = derive_curve(rng.next());
    for (std::int64_t e = 1; e <= 60; ++e) {
      CHECK(curve_score(c, e) > curve_score(c, e - 1));
      CHECK(oriented_score(c, LearningMetric::Mse, e) < oriented_score(c, LearningMetric::Mse, e - 1));
    }
    CHECK(curve_score(c, 0) == doctest::Approx(c.s0));
    CHECK(curve_score(c, 60) < c.s_max);   // still climbing at finite epochs
    CHECK(curve_score(c, 100000) <= c.s_max);  // saturates at the ceiling
  }
}

TEST_CASE("a reachable threshold succeeds at the closed-form early-stop epoch") {
  Bench b;
  PipelineSpec spec = base_spec(42);
  CurveParams c = derive_curve(spec.seed);
  REQUIRE(c.s_max > spec.threshold_upper);  // seed chosen so success is possible

  // independent early-stop oracle from inverting the curve
  std::int64_t e_star = static_cast<std::int64_t>(
      std::ceil(c.tau * std::log((c.s_max - c.s0) / (c.s_max - spec.threshold_upper))));
  while (curve_score(c, e_star) < spec.threshold_upper) ++e_star;
  while (e_star > 1 && curve_score(c, e_star - 1) >= spec.threshold_upper) --e_star;

  PipelineResult r = b.engine.run_pipeline(spec);
  CHECK(r.status == PipelineStatus::Succeeded);
  CHECK(r.final_score == curve_score(c, e_star));
  CHECK(r.final_score >= spec.threshold_upper);
  REQUIRE(r.model_id.has_value());
  REQUIRE(r.stages.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(r.stages[i].stage == kPipelineStages[i]);
    CHECK(r.stages[i].status == "Succeeded");
  }
  // one stage every 100 ms starting one step after submission
  for (std::size_t i = 1; i < 5; ++i) {
    CHECK(r.stages[i].at - r.stages[i - 1].at == kStageDurationMs);
  }

  // registered image carries the final score and the artifact address
  ModelImage img = b.catalog.get_model(*r.model_id);
  CHECK(img.nif_name == "nif-anomaly");
  CHECK(img.test_score == r.final_score);
  CHECK(img.blob_ref == r.blob_ref);
  CHECK(img.version == SemVer{1, 0, 0});
}

TEST_CASE("identical spec and seed reproduce the result and the artifact digest") {
  Bench b1, b2;
  PipelineResult r1 = b1.engine.run_pipeline(base_spec(42));
  PipelineResult r2 = b2.engine.run_pipeline(base_spec(42));
  CHECK(r1.final_score == r2.final_score);
  CHECK(r1.blob_ref == r2.blob_ref);
  CHECK(r1.model_id == r2.model_id);
  CHECK(r1.stages == r2.stages);

  // a rerun in the same bench registers nothing new (content-addressed hit)
  auto before = b1.catalog.list_models().size();
  PipelineResult r3 = b1.engine.run_pipeline(base_spec(42));
  CHECK(r3.model_id == r1.model_id);
  CHECK(b1.catalog.list_models().size() == before);

  // a different seed diverges
  PipelineResult r4 = b2.engine.run_pipeline(base_spec(43));
  CHECK(r4.final_score != r1.final_score);
}

TEST_CASE("an accuracy threshold above 1 can never be met") {
  Bench b;
  PipelineSpec spec = base_spec(42);
  spec.threshold_upper = 1.01;
  PipelineResult r = b.engine.run_pipeline(spec);
  CHECK(r.status == PipelineStatus::FailedThreshold);
  CHECK(r.final_score == curve_score(derive_curve(42), 100));  // ran the whole budget
  CHECK_FALSE(r.model_id.has_value());
  REQUIRE(r.stages.size() == 3);  // ingestion, training, failed testing
  CHECK(r.stages[2].stage == "testing");
  CHECK(r.stages[2].status == "Failed");
  CHECK(b.catalog.list_models().empty());
}

TEST_CASE("a single epoch below the bar fails the threshold") {
  Bench b;
  PipelineSpec spec = base_spec(42);
  spec.epoch_budget = 1;
  CurveParams c = derive_curve(spec.seed);
  REQUIRE(curve_score(c, 1) < spec.threshold_upper);  // evaluated, not assumed
  PipelineResult r = b.engine.run_pipeline(spec);
  CHECK(r.status == PipelineStatus::FailedThreshold);
  CHECK(r.final_score == curve_score(c, 1));
}

TEST_CASE("loss-like metrics run on the mirrored curve") {
  Bench b;
  PipelineSpec spec = base_spec(42);
  spec.metric = LearningMetric::Mse;
  spec.threshold_upper = 0.2;  // lower is better: succeed once 1 − score ≤ 0.2
  CurveParams c = derive_curve(spec.seed);
  REQUIRE(1.0 - c.s_max < spec.threshold_upper);
  PipelineResult r = b.engine.run_pipeline(spec);
  CHECK(r.status == PipelineStatus::Succeeded);
  CHECK(r.final_score <= spec.threshold_upper);
  ModelImage img = b.catalog.get_model(*r.model_id);
  CHECK(img.metric == LearningMetric::Mse);
  CHECK(img.test_score == r.final_score);
}

TEST_CASE("zero epoch budget is an invalid spec") {
  Bench b;
  PipelineSpec spec = base_spec(42);
  spec.epoch_budget = 0;
  try {
    b.engine.run_pipeline(spec);
    FAIL("expected InvalidSpec");
  } catch (const NistError& e) {
    CHECK(e.code() == ErrorCode::InvalidSpec);
  }
  spec.epoch_budget = 100;
  spec.nif_name.clear();
  CHECK_THROWS_AS(b.engine.run_pipeline(spec), NistError);
}

TEST_CASE("ingestion fails the run when a declared source does not exist") {
  Bench b;
  PipelineSpec spec = base_spec(42);
  spec.data_spec.source_ids = {"ghost.cpu_load"};
  PipelineResult r = b.engine.run_pipeline(spec);
  CHECK(r.status == PipelineStatus::FailedStage);
  REQUIRE(r.stages.size() == 1);
  CHECK(r.stages[0].stage == "data_ingestion");
  CHECK(r.stages[0].status == "Failed");
  CHECK_FALSE(r.model_id.has_value());

  // with the stream registered, the same spec sails through
  Bench ok;
  ok.env.add_node(SimNode{"edge0", NodeTier::Edge, ResourceVec{1000, 1024, 0, 0}, false});
  ok.env.add_default_streams("edge0");
  PipelineSpec spec2 = base_spec(42);
  spec2.data_spec.source_ids = {"edge0.cpu_load"};
  CHECK(ok.engine.run_pipeline(spec2).status == PipelineStatus::Succeeded);
}

TEST_CASE("pipeline_status reports progress snapshots") {
  Bench b;
  std::string run_id = b.engine.start_run(base_spec(42));
  CHECK(b.engine.pipeline_status(run_id).status == PipelineStatus::Running);
  CHECK(b.engine.pipeline_status(run_id).stages.empty());

  b.env.advance(b.env.now() + 2 * kStageDurationMs + 50);  // two stages in
  PipelineResult mid = b.engine.pipeline_status(run_id);
  CHECK(mid.status == PipelineStatus::Running);
  REQUIRE(mid.stages.size() == 2);
  CHECK(mid.stages[0].stage == "data_ingestion");
  CHECK(mid.stages[1].stage == "training");

  b.env.run_to_idle();
  PipelineResult done = b.engine.pipeline_status(run_id);
  CHECK(done.status == PipelineStatus::Succeeded);
  CHECK(done.stages.size() == 5);

  CHECK_THROWS_AS(b.engine.pipeline_status("run-999999"), NistError);
}

TEST_CASE("the artifact blob is self-describing and carries the anomaly threshold") {
  Bench b;
  PipelineResult r = b.engine.run_pipeline(base_spec(42));
  json blob = json::parse(b.catalog.get_blob(r.blob_ref));
  CurveParams c = derive_curve(42);
  CHECK(blob.at("params").at("anomaly_threshold").get<double>() == c.theta);
  CHECK(blob.at("curve").at("s0").get<double>() == c.s0);
  CHECK(blob.at("curve").at("s_max").get<double>() == c.s_max);
  CHECK(blob.at("curve").at("tau").get<double>() == c.tau);
  CHECK(blob.at("seed").get<std::uint64_t>() == 42);
  CHECK(blob.at("final_score").get<double>() == r.final_score);
}

TEST_CASE("runs.log records one line per finished run") {
  testsupport::TempDir dir;
  SimEnv env(1);
  Catalog catalog;
  PipelineEngine engine(env, catalog, dir.path());

  engine.run_pipeline(base_spec(42));
  PipelineSpec failing = base_spec(42);
  failing.threshold_upper = 1.01;
  engine.run_pipeline(failing);

  std::ifstream in(dir.path() / "pipelines" / "runs.log");
  std::vector<json> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(json::parse(line));
  REQUIRE(lines.size() == 2);
  CHECK(lines[0].at("status") == "Succeeded");
  CHECK(lines[0].at("nif_name") == "nif-anomaly");
  CHECK_FALSE(lines[0].at("model_id").is_null());
  CHECK(lines[1].at("status") == "FailedThreshold");
  CHECK(lines[1].at("model_id").is_null());
  CHECK(lines[1].at("stages").size() == 3);
}

TEST_CASE("concurrent runs interleave without corrupting each other") {
  Bench b;
  PipelineSpec s1 = base_spec(42);
  PipelineSpec s2 = base_spec(43);
  s2.nif_name = "nif-relocation";
  s2.threshold_upper = 0.85;  // below the s_max floor, reachable for any seed
  std::vector<std::string> completed;
  std::string id1 = b.engine.start_run(s1, [&](const PipelineResult& r) {
    completed.push_back(r.run_id);
  });
  std::string id2 = b.engine.start_run(s2, [&](const PipelineResult& r) {
    completed.push_back(r.run_id);
  });
  b.env.run_to_idle();
  CHECK(completed == std::vector<std::string>{id1, id2});
  CHECK(b.engine.pipeline_status(id1).status == PipelineStatus::Succeeded);
  CHECK(b.engine.pipeline_status(id2).status == PipelineStatus::Succeeded);
  CHECK(b.engine.pipeline_status(id1).model_id != b.engine.pipeline_status(id2).model_id);
  CHECK(b.catalog.list_models().size() == 2);
}
