#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "greytune/surrogate.hpp"

namespace greytune {

enum class TunerMode { TransferOnly, Refit, Random, ShMutate, DefaultOnly };

/// CLI/report names: transfer_only, refit, random, sh_mutate, default_only.
std::string to_string(TunerMode mode);
TunerMode tuner_mode_from_string(const std::string& name);

/// Cost-aware acquisition floor: predicted incremental cost is never taken
/// below one second.
inline constexpr double kMinIncrementalSeconds = 1.0;
inline constexpr int kDefaultPoolSize = 256;

/// Candidate pipelines; index 0 is always the default pipeline.
struct CandidatePool {
  std::vector<PipelineConfig> configs;
  std::uint64_t seed = 0;
};

/// default_config() plus `sampled` distinct seeded samples.
CandidatePool build_pool(int sampled, std::uint64_t seed);

struct Observation {
  int epoch = 0;
  double val_score = 0.0;
  double test_score = 0.0;
  double incremental_seconds = 0.0;
};

struct TunerState {
  CandidatePool pool;
  std::vector<std::vector<Observation>> observed;  // per candidate
  int incumbent_candidate = -1;
  int incumbent_epoch = 0;
  double incumbent_val = 0.0;
  double incumbent_test = 0.0;
  double spent_seconds = 0.0;
  double budget_seconds = 0.0;
  TunerMode mode = TunerMode::TransferOnly;

  int epochs_observed(int candidate) const {
    return static_cast<int>(observed[candidate].size());
  }
  bool exhausted(int candidate) const {
    return epochs_observed(candidate) >= kMaxEpochs;
  }
  double candidate_cum_seconds(int candidate) const;
};

TunerState make_state(CandidatePool pool, TunerMode mode,
                      double budget_seconds);

struct TrajectoryEvent {
  double spent_seconds = 0.0;
  int candidate = -1;
  int epoch = 0;
  double val_score = 0.0;
  double test_score = 0.0;
  double incumbent_val = 0.0;
  double incumbent_test = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryEvent> events;
};

/// Evaluates one pipeline for one more epoch on one dataset. Implementations
/// must be deterministic in replay settings; epoch must always be the last
/// observed epoch for that config plus one.
class Runner {
 public:
  virtual ~Runner() = default;
  // (val_score, test_score, incremental_seconds)
  virtual std::tuple<double, double, double> run_epoch(
      const PipelineConfig& config, int epoch) = 0;
};

/// Closed-form E[max(0, N(mean, variance) - incumbent)].
double expected_improvement(double mean, double variance, double incumbent);

/// Surrogate posteriors for every (candidate, epoch) pair, computed once and
/// reused across steps while the models are fixed.
struct PoolPredictions {
  // [candidate][epoch-1]
  std::vector<std::array<Prediction, kMaxEpochs>> perf;
  std::vector<std::array<double, kMaxEpochs>> cost_seconds;
};

PoolPredictions predict_pool(const GpModel& perf, const GpModel& cost,
                             const std::vector<PipelineConfig>& configs,
                             const MetaFeatures& dataset_meta);

struct AcquisitionScore {
  int candidate = -1;
  double score = 0.0;
};

/// EI at each non-exhausted candidate's next epoch divided by its predicted
/// incremental cost (floored at one second). Exhausted candidates are
/// omitted; an empty result ends the optimization loop.
std::vector<AcquisitionScore> acquisition_scores(const TunerState& state,
                                                 const PoolPredictions& preds);
std::vector<AcquisitionScore> acquisition_scores(
    const TunerState& state, const GpModel& perf, const GpModel& cost,
    const MetaFeatures& dataset_meta);

/// Argmax over scores, ties broken by the lowest candidate index; -1 when
/// the list is empty.
int select_candidate(const std::vector<AcquisitionScore>& scores);

/// One surrogate-guided step: runs the acquisition argmax (ties to the
/// lowest candidate index) for one epoch and folds in the observation. In
/// refit mode both models are additionally refitted with the new row; in
/// transfer-only mode they are never touched.
TunerState step(TunerState state, Runner& runner, GpModel& perf,
                GpModel& cost, const MetaFeatures& dataset_meta);

struct RunSpec {
  TunerMode mode = TunerMode::TransferOnly;
  double budget_seconds = 0.0;
  std::uint64_t seed = 0;
  int pool_size = kDefaultPoolSize;
  /// Replaces the sampled pool (replay harnesses pass the stored configs).
  const std::vector<PipelineConfig>* pool = nullptr;
};

/// Runs one full optimization. perf/cost are required for transfer_only and
/// refit modes (refit clones them; the caller's models are never modified).
/// A step may start only while spent < budget; the final step may overshoot.
Trajectory run(const MetaFeatures& dataset_meta, Runner& runner,
               const RunSpec& spec, const GpModel* perf = nullptr,
               const GpModel* cost = nullptr);

}  // namespace greytune
