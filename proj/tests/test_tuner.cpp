#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "greytune/tuner.hpp"

using namespace greytune;

namespace {

// Smooth deterministic ground truth shared by the fake runner and the
// meta-dataset generator, so meta-trained surrogates genuinely transfer.
double config_utility(const PipelineConfig& config, int phase) {
  const EncodedConfig enc = encode(config);
  double acc = 0.0;
  for (std::size_t i = 0; i < enc.size(); ++i) {
    acc += 0.8 * std::sin(static_cast<double>(i + 1) * (phase + 1)) * enc[i];
  }
  return 1.0 / (1.0 + std::exp(-acc));
}

double true_val(const PipelineConfig& config, int epoch, double shift) {
  const double u = config_utility(config, 0);
  const double curve = 1.0 - std::exp(-epoch / 4.0);
  return std::clamp(0.1 + 0.4 * u + 0.3 * curve * u + shift, 0.0, 1.0);
}

double epoch_cost(const PipelineConfig& config) {
  return 40.0 + 30.0 * config_utility(config, 1);
}

class SyntheticRunner : public Runner {
 public:
  explicit SyntheticRunner(double shift = 0.0, bool unit_cost = true)
      : shift_(shift), unit_cost_(unit_cost) {}

  std::tuple<double, double, double> run_epoch(const PipelineConfig& config,
                                               int epoch) override {
    int& last = last_epoch_[config_key(config)];
    if (epoch != last + 1) {
      throw std::logic_error("runner asked for a non-contiguous epoch");
    }
    last = epoch;
    ++calls;
    const double val = true_val(config, epoch, shift_);
    const double test = std::clamp(val - 0.01, 0.0, 1.0);
    return {val, test, unit_cost_ ? 1.0 : epoch_cost(config)};
  }

  int calls = 0;

 private:
  double shift_;
  bool unit_cost_;
  std::map<std::string, int> last_epoch_;
};

struct ToyProblem {
  GpModel perf;
  GpModel cost;
  MetaFeatures target_meta;
};

ToyProblem build_toy() {
  std::vector<RunRecord> records;
  std::map<std::string, MetaFeatures> meta;
  Rng rng(411);
  for (int d = 0; d < 3; ++d) {
    const std::string id = "toy" + std::to_string(d);
    meta[id] = MetaFeatures{1000 + 400 * d, 90.0 + 8.0 * d, 0.78 + 0.04 * d,
                            120 + 30 * d};
    const double shift = 0.04 * d - 0.04;
    for (int k = 0; k < 12; ++k) {
      RunRecord r;
      r.dataset_id = id;
      r.config = sample_config(rng);
      double cum = 0.0;
      for (int epoch = 1; epoch <= kMaxEpochs; ++epoch) {
        cum += epoch_cost(r.config);
        const double val = true_val(r.config, epoch, shift);
        r.curve.push_back({epoch, val, std::clamp(val - 0.01, 0.0, 1.0), cum});
      }
      records.push_back(std::move(r));
    }
  }
  FitOptions opts;
  opts.row_cap = 512;
  opts.hyperopt_cap = 128;
  opts.n_starts = 2;
  opts.ascend_top = 1;
  opts.max_iters = 12;
  opts.seed = 3;
  ToyProblem toy{meta_fit(records, meta, TargetKind::Score, opts),
                 meta_fit(records, meta, TargetKind::LogCost, opts),
                 MetaFeatures{1500, 97.0, 0.85, 170}};
  return toy;
}

const ToyProblem& toy() {
  static const ToyProblem t = build_toy();
  return t;
}

std::vector<PipelineConfig> small_pool(int sampled, std::uint64_t seed) {
  return build_pool(sampled, seed).configs;
}

bool same_trajectory(const Trajectory& a, const Trajectory& b) {
  if (a.events.size() != b.events.size()) return false;
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    const TrajectoryEvent& x = a.events[i];
    const TrajectoryEvent& y = b.events[i];
    if (x.spent_seconds != y.spent_seconds || x.candidate != y.candidate ||
        x.epoch != y.epoch || x.val_score != y.val_score ||
        x.test_score != y.test_score || x.incumbent_val != y.incumbent_val ||
        x.incumbent_test != y.incumbent_test) {
      return false;
    }
  }
  return true;
}

void check_invariants(const Trajectory& t, double budget) {
  double prev_spent = 0.0;
  double prev_incumbent = 0.0;
  std::map<int, int> epochs;
  for (const TrajectoryEvent& e : t.events) {
    CHECK(prev_spent < budget);  // a step may start only below budget
    CHECK(e.spent_seconds > prev_spent);
    CHECK(e.incumbent_val >= prev_incumbent);
    CHECK(e.epoch == epochs[e.candidate] + 1);
    epochs[e.candidate] = e.epoch;
    prev_spent = e.spent_seconds;
    prev_incumbent = e.incumbent_val;
  }
}

}  // namespace

TEST_CASE("tuner mode names round-trip") {
  const std::vector<TunerMode> modes = {
      TunerMode::TransferOnly, TunerMode::Refit, TunerMode::Random,
      TunerMode::ShMutate, TunerMode::DefaultOnly};
  const std::vector<std::string> names = {"transfer_only", "refit", "random",
                                          "sh_mutate", "default_only"};
  for (std::size_t i = 0; i < modes.size(); ++i) {
    CHECK(to_string(modes[i]) == names[i]);
    CHECK(tuner_mode_from_string(names[i]) == modes[i]);
  }
  CHECK_THROWS_AS(tuner_mode_from_string("hyperband"), DataError);
}

TEST_CASE("expected improvement closed form") {
  SUBCASE("zero variance reduces to hinge") {
    CHECK(expected_improvement(0.4, 0.0, 0.5) == 0.0);
    CHECK(expected_improvement(0.6, 0.0, 0.5) == doctest::Approx(0.1));
    CHECK(expected_improvement(0.5, -1e-30, 0.5) == 0.0);
  }

  SUBCASE("matches a Monte-Carlo oracle") {
    const double mean = 0.6;
    const double sd = 0.1;
    const double incumbent = 0.5;
    Rng rng(99);
    double acc = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
      acc += std::max(0.0, mean + sd * rng.normal() - incumbent);
    }
    const double mc = acc / n;
    const double ei = expected_improvement(mean, sd * sd, incumbent);
    CHECK(std::abs(ei - mc) < 1e-3);
    CHECK(std::abs(ei - 0.1083) < 1e-3);
  }

  SUBCASE("strictly increasing in mean") {
    double prev = -1.0;
    for (int i = 0; i <= 20; ++i) {
      const double ei =
          expected_improvement(0.05 * i, 0.07 * 0.07, 0.5);
      CHECK(ei > prev);
      prev = ei;
    }
  }

  SUBCASE("never negative") {
    CHECK(expected_improvement(0.1, 1e-4, 0.9) >= 0.0);
    CHECK(expected_improvement(0.1, 1e-4, 0.9) < 1e-6);
  }
}

TEST_CASE("acquisition scores from a prediction table") {
  TunerState state = make_state(
      CandidatePool{small_pool(2, 5), 5}, TunerMode::TransferOnly, 100.0);
  PoolPredictions preds;
  preds.perf.resize(3);
  preds.cost_seconds.resize(3);
  for (int c = 0; c < 3; ++c) {
    for (int e = 0; e < kMaxEpochs; ++e) {
      preds.perf[c][e] = {0.6, 0.01};
      preds.cost_seconds[c][e] = 10.0 * (e + 1);
    }
  }

  SUBCASE("same EI, 10x cost gap scores 10x lower") {
    for (int e = 0; e < kMaxEpochs; ++e) preds.cost_seconds[2][e] = 100.0 * (e + 1);
    const auto scores = acquisition_scores(state, preds);
    REQUIRE(scores.size() == 3);
    CHECK(scores[0].candidate == 0);
    CHECK(scores[0].score == doctest::Approx(scores[2].score * 10.0));
    CHECK(scores[0].score == doctest::Approx(scores[1].score));
  }

  SUBCASE("uses the next epoch and telescoped incremental cost") {
    state.observed[1] = {{1, 0.3, 0.3, 12.0}, {2, 0.35, 0.34, 11.0}};
    state.incumbent_candidate = 1;
    state.incumbent_epoch = 2;
    state.incumbent_val = 0.35;
    preds.perf[1][2] = {0.7, 0.04};
    const auto scores = acquisition_scores(state, preds);
    REQUIRE(scores.size() == 3);
    const double expected_ei = expected_improvement(0.7, 0.04, 0.35);
    // cum at epoch 3 is 30, at epoch 2 is 20
    CHECK(scores[1].score == doctest::Approx(expected_ei / 10.0));
  }

  SUBCASE("incremental cost is floored at one second") {
    preds.cost_seconds[0][0] = 0.2;
    const auto scores = acquisition_scores(state, preds);
    const double ei = expected_improvement(0.6, 0.01, 0.0);
    CHECK(scores[0].score == doctest::Approx(ei / 1.0));
  }

  SUBCASE("exhausted candidates are omitted, all exhausted is empty") {
    for (int e = 1; e <= kMaxEpochs; ++e) {
      state.observed[0].push_back({e, 0.4, 0.4, 1.0});
    }
    auto scores = acquisition_scores(state, preds);
    REQUIRE(scores.size() == 2);
    CHECK(scores[0].candidate == 1);
    for (int c = 1; c < 3; ++c) {
      for (int e = 1; e <= kMaxEpochs; ++e) {
        state.observed[c].push_back({e, 0.4, 0.4, 1.0});
      }
    }
    CHECK(acquisition_scores(state, preds).empty());
  }

  SUBCASE("table size must match the pool") {
    preds.perf.resize(2);
    CHECK_THROWS_AS(acquisition_scores(state, preds), DataError);
  }
}

TEST_CASE("select_candidate breaks ties by lowest index") {
  CHECK(select_candidate({}) == -1);
  CHECK(select_candidate({{4, 1.0}, {2, 1.0}, {7, 1.0}}) == 2);
  CHECK(select_candidate({{4, 1.0}, {2, 3.0}, {7, 1.0}}) == 2);
  CHECK(select_candidate({{0, 0.5}, {1, 0.7}}) == 1);
}

TEST_CASE("acquisition argmax matches an independent recomputation") {
  const ToyProblem& t = toy();
  TunerState state = make_state(
      CandidatePool{small_pool(4, 17), 17}, TunerMode::TransferOnly, 1e6);
  SyntheticRunner runner;
  // Advance a few candidates so next epochs differ across the pool.
  for (int c : {0, 0, 1, 2, 2, 2}) {
    const int epoch = state.epochs_observed(c) + 1;
    auto [val, test, sec] = runner.run_epoch(state.pool.configs[c], epoch);
    state.observed[c].push_back({epoch, val, test, sec});
    if (val > state.incumbent_val) {
      state.incumbent_candidate = c;
      state.incumbent_epoch = epoch;
      state.incumbent_val = val;
      state.incumbent_test = test;
    }
  }

  const auto scores =
      acquisition_scores(state, t.perf, t.cost, t.target_meta);
  REQUIRE(scores.size() == 5);

  int brute_best = -1;
  double brute_score = -1.0;
  for (int c = 0; c < 5; ++c) {
    const int next = state.epochs_observed(c) + 1;
    const EncodedConfig enc = encode(state.pool.configs[c]);
    const Prediction p = predict(
        t.perf, make_surrogate_input(t.perf, enc, t.target_meta, next));
    const double cum_next = cost_seconds(predict(
        t.cost, make_surrogate_input(t.cost, enc, t.target_meta, next)));
    const double cum_now =
        next == 1 ? 0.0
                  : cost_seconds(predict(
                        t.cost, make_surrogate_input(t.cost, enc,
                                                     t.target_meta, next - 1)));
    const double score =
        expected_improvement(p.mean, p.variance, state.incumbent_val) /
        std::max(1.0, cum_next - cum_now);
    CHECK(scores[c].candidate == c);
    CHECK(scores[c].score == doctest::Approx(score).epsilon(1e-9));
    if (score > brute_score) {
      brute_score = score;
      brute_best = c;
    }
  }
  CHECK(select_candidate(scores) == brute_best);
}

TEST_CASE("build_pool puts the default first and samples distinct configs") {
  const CandidatePool pool = build_pool(kDefaultPoolSize, 2024);
  CHECK(pool.configs.size() == kDefaultPoolSize + 1);
  CHECK(config_key(pool.configs[0]) == config_key(default_config()));
  std::set<std::string> keys;
  for (const PipelineConfig& c : pool.configs) keys.insert(config_key(c));
  CHECK(keys.size() == pool.configs.size());

  const CandidatePool again = build_pool(kDefaultPoolSize, 2024);
  for (std::size_t i = 0; i < pool.configs.size(); ++i) {
    CHECK(config_key(pool.configs[i]) == config_key(again.configs[i]));
  }
  const CandidatePool other = build_pool(kDefaultPoolSize, 2025);
  bool any_differs = false;
  for (std::size_t i = 1; i < pool.configs.size(); ++i) {
    any_differs |= config_key(pool.configs[i]) != config_key(other.configs[i]);
  }
  CHECK(any_differs);
}

TEST_CASE("step observes one epoch and keeps the incumbent maximal") {
  const ToyProblem& t = toy();
  GpModel perf = t.perf;
  GpModel cost = t.cost;
  TunerState state = make_state(
      CandidatePool{small_pool(4, 29), 29}, TunerMode::TransferOnly, 1e6);
  SyntheticRunner runner;
  double max_val = 0.0;
  for (int i = 1; i <= 5; ++i) {
    state = step(std::move(state), runner, perf, cost, t.target_meta);
    int total = 0;
    for (int c = 0; c < 5; ++c) total += state.epochs_observed(c);
    CHECK(total == i);
    CHECK(runner.calls == i);
    for (int c = 0; c < 5; ++c) {
      for (const Observation& o : state.observed[c]) {
        max_val = std::max(max_val, o.val_score);
      }
    }
    CHECK(state.incumbent_val == max_val);
    CHECK(state.spent_seconds == doctest::Approx(static_cast<double>(i)));
  }
}

TEST_CASE("transfer-only runs never touch the surrogates") {
  const ToyProblem& t = toy();
  const std::string perf_before = serialize_model(t.perf);
  const std::string cost_before = serialize_model(t.cost);

  const std::vector<PipelineConfig> pool = small_pool(11, 77);
  RunSpec spec;
  spec.mode = TunerMode::TransferOnly;
  spec.budget_seconds = 55.0;
  spec.seed = 7;
  spec.pool = &pool;
  SyntheticRunner runner;
  const Trajectory traj = run(t.target_meta, runner, spec, &t.perf, &t.cost);

  CHECK(traj.events.size() >= 50);
  CHECK(serialize_model(t.perf) == perf_before);
  CHECK(serialize_model(t.cost) == cost_before);
  check_invariants(traj, spec.budget_seconds);

  SyntheticRunner runner2;
  const Trajectory traj2 =
      run(t.target_meta, runner2, spec, &t.perf, &t.cost);
  CHECK(same_trajectory(traj, traj2));
}

TEST_CASE("refit steps grow both training sets by one row") {
  const ToyProblem& t = toy();
  GpModel perf = t.perf;
  GpModel cost = t.cost;
  const auto perf_rows = perf.rows();
  const auto cost_rows = cost.rows();
  TunerState state = make_state(
      CandidatePool{small_pool(4, 41), 41}, TunerMode::Refit, 1e6);
  SyntheticRunner runner;
  for (int i = 1; i <= 5; ++i) {
    state = step(std::move(state), runner, perf, cost, t.target_meta);
    CHECK(perf.rows() == perf_rows + i);
    CHECK(cost.rows() == cost_rows + i);
  }
}

TEST_CASE("refit runs clone the callers' models") {
  const ToyProblem& t = toy();
  const std::string perf_before = serialize_model(t.perf);
  const std::string cost_before = serialize_model(t.cost);
  const std::vector<PipelineConfig> pool = small_pool(5, 53);
  RunSpec spec;
  spec.mode = TunerMode::Refit;
  spec.budget_seconds = 8.0;
  spec.seed = 11;
  spec.pool = &pool;
  SyntheticRunner runner;
  const Trajectory traj = run(t.target_meta, runner, spec, &t.perf, &t.cost);
  CHECK(traj.events.size() == 8);
  CHECK(serialize_model(t.perf) == perf_before);
  CHECK(serialize_model(t.cost) == cost_before);
  check_invariants(traj, spec.budget_seconds);
}

TEST_CASE("default_only trains candidate zero for ten epochs") {
  RunSpec spec;
  spec.mode = TunerMode::DefaultOnly;
  spec.budget_seconds = 1e6;
  spec.seed = 1;
  SyntheticRunner runner;
  const MetaFeatures meta{1200, 90.0, 0.8, 140};
  const Trajectory traj = run(meta, runner, spec);
  REQUIRE(traj.events.size() == 10);
  for (int i = 0; i < 10; ++i) {
    CHECK(traj.events[i].candidate == 0);
    CHECK(traj.events[i].epoch == i + 1);
  }
  check_invariants(traj, spec.budget_seconds);
}

TEST_CASE("a budget below one epoch still allows exactly one event") {
  RunSpec spec;
  spec.mode = TunerMode::DefaultOnly;
  spec.budget_seconds = 0.5;  // unit-cost runner: one epoch costs 1.0
  spec.seed = 1;
  SyntheticRunner runner;
  const Trajectory traj = run(MetaFeatures{1200, 90.0, 0.8, 140}, runner, spec);
  REQUIRE(traj.events.size() == 1);
  CHECK(traj.events[0].spent_seconds == doctest::Approx(1.0));
}

TEST_CASE("random mode is seed-deterministic and budget-bounded") {
  const std::vector<PipelineConfig> pool = small_pool(9, 61);
  RunSpec spec;
  spec.mode = TunerMode::Random;
  spec.budget_seconds = 40.0;
  spec.seed = 5;
  spec.pool = &pool;
  const MetaFeatures meta{1200, 90.0, 0.8, 140};

  SyntheticRunner r1;
  SyntheticRunner r2;
  const Trajectory a = run(meta, r1, spec, nullptr, nullptr);
  const Trajectory b = run(meta, r2, spec, nullptr, nullptr);
  CHECK(same_trajectory(a, b));
  CHECK(a.events.size() == 40);
  check_invariants(a, spec.budget_seconds);

  spec.seed = 6;
  SyntheticRunner r3;
  const Trajectory c = run(meta, r3, spec, nullptr, nullptr);
  bool differs = false;
  for (std::size_t i = 0; i < c.events.size(); ++i) {
    differs |= c.events[i].candidate != a.events[i].candidate;
  }
  CHECK(differs);

  // With budget past the whole pool, the loop stops once all are exhausted.
  spec.budget_seconds = 1e6;
  SyntheticRunner r4;
  const Trajectory full = run(meta, r4, spec, nullptr, nullptr);
  CHECK(full.events.size() == pool.size() * kMaxEpochs);
}

TEST_CASE("sh_mutate runs halving brackets over epochs 1, 3, 10") {
  const std::vector<PipelineConfig> pool = small_pool(19, 83);
  RunSpec spec;
  spec.mode = TunerMode::ShMutate;
  // One full bracket: 9 at epoch 1, 3 promoted through epoch 3, 1 through
  // epoch 10 = 9 + 6 + 7 = 22 unit-cost epochs.
  spec.budget_seconds = 22.0;
  spec.seed = 13;
  spec.pool = &pool;
  const MetaFeatures meta{1200, 90.0, 0.8, 140};
  SyntheticRunner runner;
  const Trajectory traj = run(meta, runner, spec, nullptr, nullptr);
  REQUIRE(traj.events.size() == 22);
  check_invariants(traj, spec.budget_seconds);

  std::map<int, int> max_epoch;
  for (const TrajectoryEvent& e : traj.events) {
    max_epoch[e.candidate] = std::max(max_epoch[e.candidate], e.epoch);
  }
  int rung0 = 0;
  int rung1 = 0;
  int rung2 = 0;
  for (const auto& [candidate, epoch] : max_epoch) {
    ++rung0;
    if (epoch >= 3) ++rung1;
    if (epoch >= 10) ++rung2;
  }
  CHECK(rung0 == 9);
  CHECK(rung1 == 3);
  CHECK(rung2 == 1);

  // The promoted candidates are the top third by epoch-1 score.
  std::vector<std::pair<double, int>> first_epoch;
  for (const TrajectoryEvent& e : traj.events) {
    if (e.epoch == 1) first_epoch.push_back({e.val_score, e.candidate});
  }
  std::sort(first_epoch.rbegin(), first_epoch.rend());
  for (int i = 0; i < 3; ++i) {
    CHECK(max_epoch[first_epoch[i].second] >= 3);
  }
}

TEST_CASE("sh_mutate keeps mutating within the pool across brackets") {
  const std::vector<PipelineConfig> pool = small_pool(19, 83);
  RunSpec spec;
  spec.mode = TunerMode::ShMutate;
  spec.budget_seconds = 70.0;  // a bit over three brackets
  spec.seed = 13;
  spec.pool = &pool;
  const MetaFeatures meta{1200, 90.0, 0.8, 140};
  SyntheticRunner runner;
  const Trajectory traj = run(meta, runner, spec, nullptr, nullptr);
  check_invariants(traj, spec.budget_seconds);
  CHECK(traj.events.size() >= 66);
  for (const TrajectoryEvent& e : traj.events) {
    CHECK(e.candidate >= 0);
    CHECK(e.candidate < static_cast<int>(pool.size()));
  }

  SyntheticRunner runner2;
  const Trajectory again = run(meta, runner2, spec, nullptr, nullptr);
  CHECK(same_trajectory(traj, again));
}

TEST_CASE("sh_mutate drains a tiny pool and terminates") {
  const std::vector<PipelineConfig> pool = small_pool(3, 97);
  RunSpec spec;
  spec.mode = TunerMode::ShMutate;
  spec.budget_seconds = 1e6;
  spec.seed = 3;
  spec.pool = &pool;
  SyntheticRunner runner;
  const Trajectory traj =
      run(MetaFeatures{1200, 90.0, 0.8, 140}, runner, spec, nullptr, nullptr);
  CHECK(traj.events.size() == pool.size() * kMaxEpochs);
  check_invariants(traj, spec.budget_seconds);
}

TEST_CASE("runner failures propagate and leave the callers state intact") {
  class ExplodingRunner : public Runner {
   public:
    std::tuple<double, double, double> run_epoch(const PipelineConfig&,
                                                 int) override {
      throw std::runtime_error("gpu fell over");
    }
  };
  const ToyProblem& t = toy();
  GpModel perf = t.perf;
  GpModel cost = t.cost;
  TunerState state = make_state(
      CandidatePool{small_pool(3, 19), 19}, TunerMode::TransferOnly, 100.0);
  ExplodingRunner runner;
  CHECK_THROWS_WITH(
      static_cast<void>(step(state, runner, perf, cost, t.target_meta)),
      "gpu fell over");
  CHECK(state.spent_seconds == 0.0);
  for (int c = 0; c < 4; ++c) CHECK(state.epochs_observed(c) == 0);

  RunSpec spec;
  spec.mode = TunerMode::Random;
  spec.budget_seconds = 10.0;
  spec.seed = 2;
  CHECK_THROWS_AS(run(t.target_meta, runner, spec), std::runtime_error);
}

TEST_CASE("malformed runner outputs are rejected") {
  class BadRunner : public Runner {
   public:
    explicit BadRunner(double val, double seconds)
        : val_(val), seconds_(seconds) {}
    std::tuple<double, double, double> run_epoch(const PipelineConfig&,
                                                 int) override {
      return {val_, 0.5, seconds_};
    }
    double val_;
    double seconds_;
  };
  RunSpec spec;
  spec.mode = TunerMode::DefaultOnly;
  spec.budget_seconds = 10.0;
  const MetaFeatures meta{1200, 90.0, 0.8, 140};
  BadRunner negative_cost(0.5, -1.0);
  CHECK_THROWS_AS(run(meta, negative_cost, spec), DataError);
  BadRunner out_of_range(1.5, 1.0);
  CHECK_THROWS_AS(run(meta, out_of_range, spec), DataError);
}

TEST_CASE("run validates its inputs") {
  SyntheticRunner runner;
  const MetaFeatures meta{1200, 90.0, 0.8, 140};

  RunSpec spec;
  spec.mode = TunerMode::Random;
  spec.budget_seconds = 0.0;
  CHECK_THROWS_AS(run(meta, runner, spec), DataError);
  spec.budget_seconds = -5.0;
  CHECK_THROWS_AS(run(meta, runner, spec), DataError);

  spec.budget_seconds = 10.0;
  const std::vector<PipelineConfig> empty;
  spec.pool = &empty;
  CHECK_THROWS_AS(run(meta, runner, spec), DataError);

  spec.pool = nullptr;
  spec.mode = TunerMode::TransferOnly;
  CHECK_THROWS_AS(run(meta, runner, spec, nullptr, nullptr), DataError);

  const ToyProblem& t = toy();
  spec.pool_size = 2;
  // swapped models: target kinds are checked
  CHECK_THROWS_AS(run(meta, runner, spec, &t.cost, &t.perf), DataError);
}
