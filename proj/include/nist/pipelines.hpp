#pragma once

// Mock MLOps pipeline engine. A run walks the canonical five stages (data
// ingestion, training, testing, packaging, registering) as scheduled sim
// events, one stage per event, and trains along a seeded saturating
// exponential so results are reproducible bit for bit. Successful runs
// register a ModelImage in the catalog; the artifact blob carries the curve
// parameters and the anomaly threshold so knowledge translation can read
// rules back out of it.

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nist/catalog.hpp"
#include "nist/descriptors.hpp"
#include "nist/simenv.hpp"

namespace nist {

inline constexpr std::array<const char*, 5> kPipelineStages = {
    "data_ingestion", "training", "testing", "packaging", "registering"};

// Pause between consecutive stage events in sim time.
inline constexpr LogicalTime kStageDurationMs = 100;

struct PipelineSpec {
  std::string nif_name;
  DataSpec data_spec;  // from the NIFD; ingestion reads these sources
  LearningMetric metric = LearningMetric::Accuracy;
  double threshold_upper = 0.9;
  std::int64_t epoch_budget = 100;  // must be ≥ 1
  std::uint64_t seed = 0;
  // Registration template: version, platform, formats, and dependencies of
  // the image to register; the run fills in test_score and blob_ref.
  ModelImage image;
};

enum class PipelineStatus { Running, Succeeded, FailedThreshold, FailedStage };

const char* pipeline_status_name(PipelineStatus s);

struct StageRecord {
  std::string stage;
  std::string status;  // "Succeeded" | "Failed"
  LogicalTime at = 0;

  bool operator==(const StageRecord&) const = default;
};

struct PipelineResult {
  std::string run_id;
  std::vector<StageRecord> stages;  // prefix of the canonical order while running
  double final_score = 0.0;
  std::optional<std::string> model_id;  // present iff status == Succeeded
  PipelineStatus status = PipelineStatus::Running;
  std::string blob_ref;  // content address of the packaged artifact
};

// Training-curve parameters drawn from a run seed, in this draw order:
// s_max ∈ [0.88, 0.99], s_0 ∈ [0.3, 0.6], τ ∈ [5, 30], θ ∈ [0.7, 0.9]
// (θ rounded to two decimals; it is the anomaly threshold packaged with the
// model, not part of the curve itself).
struct CurveParams {
  double s0 = 0.0;
  double s_max = 0.0;
  double tau = 1.0;
  double theta = 0.8;
};

CurveParams derive_curve(std::uint64_t seed);

// Gain-oriented learning curve: score(e) = s_max − (s_max − s_0)·exp(−e/τ).
double curve_score(const CurveParams& c, std::int64_t epoch);

// Metric-oriented value: the curve itself for higher-better metrics, its
// mirror 1 − score(e) for loss-like metrics.
double oriented_score(const CurveParams& c, LearningMetric metric, std::int64_t epoch);

class PipelineEngine {
 public:
  // data_dir, when set, gets an append-only run log at pipelines/runs.log.
  PipelineEngine(SimEnv& env, Catalog& catalog, std::filesystem::path data_dir = {});

  using CompletionFn = std::function<void(const PipelineResult&)>;

  // Schedules the five stage events starting 100 ms from now and returns the
  // run id immediately; on_done fires from the final stage's sim event.
  // Throws InvalidSpec on a malformed spec (empty nif_name, budget < 1).
  std::string start_run(PipelineSpec spec, CompletionFn on_done = nullptr);

  // Synchronous convenience: starts the run and drives the sim until it
  // finishes. Other due events interleave as usual.
  PipelineResult run_pipeline(PipelineSpec spec);

  PipelineResult pipeline_status(const std::string& run_id) const;  // throws UnknownRun

 private:
  struct RunState {
    PipelineSpec spec;
    CurveParams curve;
    PipelineResult result;
    bool met_threshold = false;
    CompletionFn on_done;
  };

  void dispatch_stage(const std::string& run_id, std::size_t stage_idx, LogicalTime at);
  void finalize(RunState& run, PipelineStatus status);

  SimEnv& env_;
  Catalog& catalog_;
  std::filesystem::path runs_log_;
  std::map<std::string, RunState> runs_;
  std::uint64_t next_run_ = 1;
};

}  // namespace nist
