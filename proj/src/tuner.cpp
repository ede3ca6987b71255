#include "greytune/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

namespace greytune {
namespace {

constexpr std::array<int, 3> kShRungEpochs = {1, 3, 10};
constexpr int kShEta = 3;
constexpr int kShBracketWidth = 9;  // eta^(rungs-1)

double squared_distance(const EncodedConfig& a, const EncodedConfig& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

}  // namespace

std::string to_string(TunerMode mode) {
  switch (mode) {
    case TunerMode::TransferOnly: return "transfer_only";
    case TunerMode::Refit: return "refit";
    case TunerMode::Random: return "random";
    case TunerMode::ShMutate: return "sh_mutate";
    case TunerMode::DefaultOnly: return "default_only";
  }
  throw std::logic_error("unreachable tuner mode");
}

TunerMode tuner_mode_from_string(const std::string& name) {
  if (name == "transfer_only") return TunerMode::TransferOnly;
  if (name == "refit") return TunerMode::Refit;
  if (name == "random") return TunerMode::Random;
  if (name == "sh_mutate") return TunerMode::ShMutate;
  if (name == "default_only") return TunerMode::DefaultOnly;
  throw DataError("unknown tuner mode: " + name);
}

CandidatePool build_pool(int sampled, std::uint64_t seed) {
  if (sampled < 0) throw DataError("pool size must be non-negative");
  CandidatePool pool;
  pool.seed = seed;
  pool.configs.push_back(default_config());
  std::set<std::string> seen{config_key(pool.configs[0])};
  Rng rng = Rng(seed).fork("pool");
  // The space holds billions of configs, so duplicates are rare; the
  // attempt cap only guards against a degenerate sampler.
  long attempts = 0;
  const long max_attempts = 1000L * (sampled + 1);
  while (static_cast<int>(pool.configs.size()) < sampled + 1) {
    if (++attempts > max_attempts) {
      throw DataError("could not sample enough distinct configs");
    }
    PipelineConfig c = sample_config(rng);
    if (seen.insert(config_key(c)).second) pool.configs.push_back(c);
  }
  return pool;
}

double TunerState::candidate_cum_seconds(int candidate) const {
  double total = 0.0;
  for (const Observation& o : observed[candidate]) {
    total += o.incremental_seconds;
  }
  return total;
}

TunerState make_state(CandidatePool pool, TunerMode mode,
                      double budget_seconds) {
  if (pool.configs.empty()) throw DataError("candidate pool is empty");
  if (!(budget_seconds > 0.0)) throw DataError("budget must be positive");
  TunerState state;
  state.observed.assign(pool.configs.size(), {});
  state.pool = std::move(pool);
  state.mode = mode;
  state.budget_seconds = budget_seconds;
  return state;
}

double expected_improvement(double mean, double variance, double incumbent) {
  if (!(variance > 0.0)) return std::max(0.0, mean - incumbent);
  const double sd = std::sqrt(variance);
  const double z = (mean - incumbent) / sd;
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
  const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
  return sd * (z * cdf + pdf);
}

PoolPredictions predict_pool(const GpModel& perf, const GpModel& cost,
                             const std::vector<PipelineConfig>& configs,
                             const MetaFeatures& dataset_meta) {
  if (perf.target_kind != TargetKind::Score) {
    throw DataError("performance model must predict scores");
  }
  if (cost.target_kind != TargetKind::LogCost) {
    throw DataError("cost model must predict log cost");
  }
  std::vector<SurrogateInput> perf_inputs;
  std::vector<SurrogateInput> cost_inputs;
  perf_inputs.reserve(configs.size() * kMaxEpochs);
  cost_inputs.reserve(configs.size() * kMaxEpochs);
  for (const PipelineConfig& c : configs) {
    const EncodedConfig enc = encode(c);
    for (int epoch = 1; epoch <= kMaxEpochs; ++epoch) {
      perf_inputs.push_back(make_surrogate_input(perf, enc, dataset_meta, epoch));
      cost_inputs.push_back(make_surrogate_input(cost, enc, dataset_meta, epoch));
    }
  }
  const std::vector<Prediction> perf_out = predict_batch(perf, perf_inputs);
  const std::vector<Prediction> cost_out = predict_batch(cost, cost_inputs);

  PoolPredictions preds;
  preds.perf.resize(configs.size());
  preds.cost_seconds.resize(configs.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    for (int e = 0; e < kMaxEpochs; ++e, ++k) {
      preds.perf[i][e] = perf_out[k];
      preds.cost_seconds[i][e] = cost_seconds(cost_out[k]);
    }
  }
  return preds;
}

std::vector<AcquisitionScore> acquisition_scores(
    const TunerState& state, const PoolPredictions& preds) {
  if (preds.perf.size() != state.pool.configs.size()) {
    throw DataError("prediction table does not match the candidate pool");
  }
  std::vector<AcquisitionScore> scores;
  for (int c = 0; c < static_cast<int>(state.pool.configs.size()); ++c) {
    if (state.exhausted(c)) continue;
    const int t = state.epochs_observed(c);
    const Prediction& p = preds.perf[c][t];
    const double ei =
        expected_improvement(p.mean, p.variance, state.incumbent_val);
    const double cum_next = preds.cost_seconds[c][t];
    const double cum_now = t == 0 ? 0.0 : preds.cost_seconds[c][t - 1];
    const double increment =
        std::max(kMinIncrementalSeconds, cum_next - cum_now);
    scores.push_back({c, ei / increment});
  }
  return scores;
}

std::vector<AcquisitionScore> acquisition_scores(
    const TunerState& state, const GpModel& perf, const GpModel& cost,
    const MetaFeatures& dataset_meta) {
  return acquisition_scores(
      state, predict_pool(perf, cost, state.pool.configs, dataset_meta));
}

int select_candidate(const std::vector<AcquisitionScore>& scores) {
  int best = -1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const AcquisitionScore& s : scores) {
    if (s.score > best_score ||
        (s.score == best_score && best >= 0 && s.candidate < best)) {
      best_score = s.score;
      best = s.candidate;
    }
  }
  return best;
}

namespace {

/// Runs the candidate's next epoch and folds the observation into the state
/// and trajectory. Throws before touching the state if the runner fails.
void observe(TunerState& state, Trajectory& trajectory, Runner& runner,
             int candidate) {
  const int epoch = state.epochs_observed(candidate) + 1;
  const auto [val, test, inc_seconds] =
      runner.run_epoch(state.pool.configs[candidate], epoch);
  if (!(inc_seconds > 0.0)) {
    throw DataError("runner returned non-positive incremental seconds");
  }
  if (!(val >= 0.0 && val <= 1.0) || !(test >= 0.0 && test <= 1.0)) {
    throw DataError("runner returned a score outside [0, 1]");
  }
  state.observed[candidate].push_back({epoch, val, test, inc_seconds});
  state.spent_seconds += inc_seconds;
  if (val > state.incumbent_val || state.incumbent_candidate < 0) {
    state.incumbent_candidate = candidate;
    state.incumbent_epoch = epoch;
    state.incumbent_val = val;
    state.incumbent_test = test;
  }
  trajectory.events.push_back({state.spent_seconds, candidate, epoch, val,
                               test, state.incumbent_val,
                               state.incumbent_test});
}

void refit_step(TunerState& state, int candidate, GpModel& perf,
                GpModel& cost, const MetaFeatures& dataset_meta) {
  const Observation& o = state.observed[candidate].back();
  const EncodedConfig enc = encode(state.pool.configs[candidate]);
  const SurrogateInput perf_in =
      make_surrogate_input(perf, enc, dataset_meta, o.epoch);
  const SurrogateInput cost_in =
      make_surrogate_input(cost, enc, dataset_meta, o.epoch);
  perf = refit_with(perf, {{perf_in, o.val_score}});
  cost = refit_with(cost, {{cost_in, state.candidate_cum_seconds(candidate)}});
}

}  // namespace

TunerState step(TunerState state, Runner& runner, GpModel& perf,
                GpModel& cost, const MetaFeatures& dataset_meta) {
  const auto scores = acquisition_scores(state, perf, cost, dataset_meta);
  const int candidate = select_candidate(scores);
  if (candidate < 0) throw DataError("all candidates are exhausted");
  Trajectory scratch;
  observe(state, scratch, runner, candidate);
  if (state.mode == TunerMode::Refit) {
    refit_step(state, candidate, perf, cost, dataset_meta);
  }
  return state;
}

namespace {

void run_guided(TunerState& state, Trajectory& trajectory, Runner& runner,
                const GpModel* perf, const GpModel* cost,
                const MetaFeatures& dataset_meta) {
  if (perf == nullptr || cost == nullptr) {
    throw DataError("surrogate-guided modes need both fitted models");
  }
  const bool refitting = state.mode == TunerMode::Refit;
  GpModel perf_local;
  GpModel cost_local;
  if (refitting) {
    perf_local = *perf;
    cost_local = *cost;
  }
  const GpModel* perf_cur = refitting ? &perf_local : perf;
  const GpModel* cost_cur = refitting ? &cost_local : cost;
  PoolPredictions preds =
      predict_pool(*perf_cur, *cost_cur, state.pool.configs, dataset_meta);
  while (state.spent_seconds < state.budget_seconds) {
    const auto scores = acquisition_scores(state, preds);
    const int candidate = select_candidate(scores);
    if (candidate < 0) break;
    observe(state, trajectory, runner, candidate);
    if (refitting) {
      refit_step(state, candidate, perf_local, cost_local, dataset_meta);
      preds = predict_pool(perf_local, cost_local, state.pool.configs,
                           dataset_meta);
    }
  }
}

void run_random(TunerState& state, Trajectory& trajectory, Runner& runner,
                Rng& rng) {
  while (state.spent_seconds < state.budget_seconds) {
    std::vector<int> open;
    for (int c = 0; c < static_cast<int>(state.pool.configs.size()); ++c) {
      if (!state.exhausted(c)) open.push_back(c);
    }
    if (open.empty()) break;
    observe(state, trajectory, runner, open[rng.index(open.size())]);
  }
}

void run_default_only(TunerState& state, Trajectory& trajectory,
                      Runner& runner) {
  while (state.spent_seconds < state.budget_seconds && !state.exhausted(0)) {
    observe(state, trajectory, runner, 0);
  }
}

/// Nearest non-exhausted pool candidate to the mutant in encoded space,
/// ties to the lowest index. Keeps mutation inside the pool so replay
/// runners can always answer.
int snap_to_pool(const TunerState& state, const PipelineConfig& mutant,
                 const std::vector<char>& taken) {
  const EncodedConfig target = encode(mutant);
  int best = -1;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int c = 0; c < static_cast<int>(state.pool.configs.size()); ++c) {
    if (state.exhausted(c) || taken[c]) continue;
    const double d = squared_distance(encode(state.pool.configs[c]), target);
    if (d < best_dist) {
      best_dist = d;
      best = c;
    }
  }
  return best;
}

void run_sh_mutate(TunerState& state, Trajectory& trajectory, Runner& runner,
                   Rng& rng) {
  std::vector<int> survivors;
  while (state.spent_seconds < state.budget_seconds) {
    // Pick the bracket members: seeded pool order for the first bracket,
    // mutants of the previous bracket's survivors afterwards.
    std::vector<char> taken(state.pool.configs.size(), 0);
    std::vector<int> members;
    if (!survivors.empty()) {
      int source = 0;
      while (static_cast<int>(members.size()) < kShBracketWidth) {
        const PipelineConfig mutant =
            mutate(state.pool.configs[survivors[source]], rng);
        source = (source + 1) % static_cast<int>(survivors.size());
        const int c = snap_to_pool(state, mutant, taken);
        if (c < 0) break;
        taken[c] = 1;
        members.push_back(c);
      }
    }
    if (members.empty()) {
      std::vector<int> order(state.pool.configs.size());
      std::iota(order.begin(), order.end(), 0);
      rng.shuffle(order);
      for (int c : order) {
        if (static_cast<int>(members.size()) >= kShBracketWidth) break;
        if (!state.exhausted(c) && !taken[c]) {
          taken[c] = 1;
          members.push_back(c);
        }
      }
    }
    if (members.empty()) break;

    std::vector<int> alive = members;
    for (int target_epoch : kShRungEpochs) {
      for (int c : alive) {
        while (state.epochs_observed(c) < target_epoch) {
          if (state.spent_seconds >= state.budget_seconds) return;
          observe(state, trajectory, runner, c);
        }
      }
      const int keep =
          (static_cast<int>(alive.size()) + kShEta - 1) / kShEta;
      std::stable_sort(alive.begin(), alive.end(), [&](int a, int b) {
        return state.observed[a][target_epoch - 1].val_score >
               state.observed[b][target_epoch - 1].val_score;
      });
      if (target_epoch == kShRungEpochs[1]) survivors = alive;
      alive.resize(keep);
    }
  }
}

}  // namespace

Trajectory run(const MetaFeatures& dataset_meta, Runner& runner,
               const RunSpec& spec, const GpModel* perf,
               const GpModel* cost) {
  CandidatePool pool;
  if (spec.pool != nullptr) {
    pool.configs = *spec.pool;
    pool.seed = spec.seed;
  } else {
    pool = build_pool(spec.pool_size, spec.seed);
  }
  TunerState state = make_state(std::move(pool), spec.mode,
                                spec.budget_seconds);
  Trajectory trajectory;
  Rng rng = Rng(spec.seed).fork(to_string(spec.mode));
  switch (spec.mode) {
    case TunerMode::TransferOnly:
    case TunerMode::Refit:
      run_guided(state, trajectory, runner, perf, cost, dataset_meta);
      break;
    case TunerMode::Random:
      run_random(state, trajectory, runner, rng);
      break;
    case TunerMode::DefaultOnly:
      run_default_only(state, trajectory, runner);
      break;
    case TunerMode::ShMutate:
      run_sh_mutate(state, trajectory, runner, rng);
      break;
  }
  return trajectory;
}

}  // namespace greytune
