#include "nist/pipelines.hpp"

#include <cmath>
#include <fstream>

#include "nist/digest.hpp"

namespace nist {

using nlohmann::json;

const char* pipeline_status_name(PipelineStatus s) {
  switch (s) {
    case PipelineStatus::Running: return "Running";
    case PipelineStatus::Succeeded: return "Succeeded";
    case PipelineStatus::FailedThreshold: return "FailedThreshold";
    case PipelineStatus::FailedStage: return "FailedStage";
  }
  return "Running";
}

CurveParams derive_curve(std::uint64_t seed) {
  Rng rng(seed);
  CurveParams c;
  c.s_max = rng.uniform(0.88, 0.99);
  c.s0 = rng.uniform(0.3, 0.6);
  c.tau = rng.uniform(5.0, 30.0);
  c.theta = std::round(rng.uniform(0.7, 0.9) * 100.0) / 100.0;
  return c;
}

double curve_score(const CurveParams& c, std::int64_t epoch) {
  return c.s_max - (c.s_max - c.s0) * std::exp(-static_cast<double>(epoch) / c.tau);
}

double oriented_score(const CurveParams& c, LearningMetric metric, std::int64_t epoch) {
  double gain = curve_score(c, epoch);
  return metric_higher_is_better(metric) ? gain : 1.0 - gain;
}

PipelineEngine::PipelineEngine(SimEnv& env, Catalog& catalog, std::filesystem::path data_dir)
    : env_(env), catalog_(catalog) {
  if (!data_dir.empty()) {
    runs_log_ = data_dir / "pipelines" / "runs.log";
    std::filesystem::create_directories(runs_log_.parent_path());
  }
}

std::string PipelineEngine::start_run(PipelineSpec spec, CompletionFn on_done) {
  if (spec.nif_name.empty()) {
    throw NistError(ErrorCode::InvalidSpec, "pipeline spec needs a nif_name");
  }
  if (spec.epoch_budget < 1) {
    throw NistError(ErrorCode::InvalidSpec,
                    "epoch_budget must be at least 1, got " +
                        std::to_string(spec.epoch_budget));
  }
  std::string run_id = format_id("run", next_run_++);
  RunState run;
  run.curve = derive_curve(spec.seed);
  run.spec = std::move(spec);
  run.result.run_id = run_id;
  run.on_done = std::move(on_done);
  runs_.emplace(run_id, std::move(run));

  LogicalTime t0 = env_.now();
  for (std::size_t i = 0; i < kPipelineStages.size(); ++i) {
    LogicalTime at = t0 + kStageDurationMs * static_cast<LogicalTime>(i + 1);
    env_.schedule(at, std::string("pipeline.") + kPipelineStages[i],
                  json{{"run_id", run_id}, {"stage", kPipelineStages[i]}},
                  [this, run_id, i](const SimEvent& ev) { dispatch_stage(run_id, i, ev.at); });
  }
  return run_id;
}

PipelineResult PipelineEngine::run_pipeline(PipelineSpec spec) {
  std::string run_id = start_run(std::move(spec));
  while (runs_.at(run_id).result.status == PipelineStatus::Running && !env_.queue_empty()) {
    env_.run_to_idle();
  }
  return runs_.at(run_id).result;
}

PipelineResult PipelineEngine::pipeline_status(const std::string& run_id) const {
  auto it = runs_.find(run_id);
  if (it == runs_.end()) {
    throw NistError(ErrorCode::UnknownRun, "unknown pipeline run '" + run_id + "'");
  }
  return it->second.result;
}

void PipelineEngine::dispatch_stage(const std::string& run_id, std::size_t stage_idx,
                                    LogicalTime at) {
  RunState& run = runs_.at(run_id);
  if (run.result.status != PipelineStatus::Running) return;  // earlier stage failed

  bool ok = true;
  switch (stage_idx) {
    case 0: {  // data_ingestion: pull one window from every declared source
      for (const auto& src : run.spec.data_spec.source_ids) {
        if (!env_.has_stream(src)) {
          ok = false;
          break;
        }
        (void)env_.sample(src, at);
      }
      break;
    }
    case 1: {  // training with early stop at the first threshold-meeting epoch
      double final_score = oriented_score(run.curve, run.spec.metric, 0);
      for (std::int64_t e = 1; e <= run.spec.epoch_budget; ++e) {
        final_score = oriented_score(run.curve, run.spec.metric, e);
        if (metric_meets(run.spec.metric, final_score, run.spec.threshold_upper)) {
          run.met_threshold = true;
          break;
        }
      }
      run.result.final_score = final_score;
      break;
    }
    case 2: {  // testing: the threshold verdict becomes the stage verdict
      ok = run.met_threshold;
      break;
    }
    case 3: {  // packaging: self-describing artifact blob into the blob store
      json blob{{"nif_name", run.spec.nif_name},
                {"seed", run.spec.seed},
                {"metric", learning_metric_name(run.spec.metric)},
                {"final_score", run.result.final_score},
                {"curve", json{{"s0", run.curve.s0},
                               {"s_max", run.curve.s_max},
                               {"tau", run.curve.tau}}},
                {"params", json{{"anomaly_threshold", run.curve.theta}}}};
      run.result.blob_ref = catalog_.put_blob(canonical_dump(blob));
      break;
    }
    case 4: {  // registering
      ModelImage image = run.spec.image;
      image.nif_name = run.spec.nif_name;
      image.metric = run.spec.metric;
      image.test_score = run.result.final_score;
      image.blob_ref = run.result.blob_ref;
      image.model_id.clear();
      try {
        run.result.model_id = catalog_.register_model(std::move(image));
      } catch (const NistError&) {
        ok = false;
      }
      break;
    }
  }

  run.result.stages.push_back(
      StageRecord{kPipelineStages[stage_idx], ok ? "Succeeded" : "Failed", at});
  if (!ok) {
    finalize(run, stage_idx == 2 ? PipelineStatus::FailedThreshold : PipelineStatus::FailedStage);
  } else if (stage_idx + 1 == kPipelineStages.size()) {
    finalize(run, PipelineStatus::Succeeded);
  }
}

void PipelineEngine::finalize(RunState& run, PipelineStatus status) {
  run.result.status = status;
  if (status != PipelineStatus::Succeeded) run.result.model_id.reset();
  if (!runs_log_.empty()) {
    json stages = json::array();
    for (const auto& s : run.result.stages) {
      stages.push_back(json{{"stage", s.stage}, {"status", s.status}, {"at", s.at}});
    }
    json line{{"run_id", run.result.run_id},
              {"nif_name", run.spec.nif_name},
              {"seed", run.spec.seed},
              {"status", pipeline_status_name(status)},
              {"final_score", run.result.final_score},
              {"model_id", run.result.model_id ? json(*run.result.model_id) : json()},
              {"stages", std::move(stages)},
              {"t", env_.now()}};
    std::ofstream out(runs_log_, std::ios::app);
    out << canonical_dump(line) << "\n";
  }
  if (run.on_done) run.on_done(run.result);
}

}  // namespace nist
