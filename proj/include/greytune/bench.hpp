#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "greytune/tuner.hpp"

namespace greytune {

/// In-memory meta-dataset: one learning curve per (dataset, config), plus
/// the per-dataset meta-features. Immutable once loaded.
class TabularStore {
 public:
  void add_meta_features(const std::string& dataset_id,
                         const MetaFeatures& features);
  void add_record(RunRecord record);

  const RunRecord* find(const std::string& dataset_id,
                        const std::string& key) const;
  bool has_dataset(const std::string& dataset_id) const;

  /// Dataset ids in insertion order.
  const std::vector<std::string>& dataset_ids() const { return order_; }
  const std::vector<RunRecord>& records() const { return records_; }
  const std::map<std::string, MetaFeatures>& meta_features() const {
    return meta_;
  }

  /// The dataset's configs in stored order, except that the default
  /// pipeline is moved to index 0 when present (the tuner's index-0 arm).
  std::vector<PipelineConfig> configs_for(const std::string& dataset_id) const;

  std::int64_t size() const {
    return static_cast<std::int64_t>(records_.size());
  }

 private:
  std::vector<RunRecord> records_;
  std::map<std::string, std::map<std::string, std::size_t>> index_;
  std::map<std::string, MetaFeatures> meta_;
  std::vector<std::string> order_;
};

/// Parses a line-delimited meta-dataset file: dataset header records
/// (dataset_id + the four meta-features) and one run record per epoch
/// (dataset_id, flat config fields, epoch, val_score, test_score,
/// cum_seconds). Headers must precede their runs; epochs must arrive in
/// order. Structural problems raise DataError with the line number.
TabularStore load_meta_dataset(const std::filesystem::path& path);

void save_meta_dataset(const TabularStore& store,
                       const std::filesystem::path& path);

/// Replays stored curves as a Runner; run_epoch returns the telescoped
/// incremental seconds. Queries outside the store raise DataError.
class ReplayRunner : public Runner {
 public:
  ReplayRunner(const TabularStore& store, std::string dataset_id);
  std::tuple<double, double, double> run_epoch(const PipelineConfig& config,
                                               int epoch) override;

 private:
  const TabularStore& store_;
  std::string dataset_id_;
};

inline constexpr int kGridPoints = 100;

struct GridRow {
  std::string mode;
  double grid_seconds = 0.0;
  double mean_val = 0.0;
  double sem_val = 0.0;
  double mean_test = 0.0;
  double sem_test = 0.0;

  bool operator==(const GridRow&) const = default;
};

/// Per-epoch aggregate of the stored curve of the pipeline each run
/// returned as its final incumbent. best_epoch is the cross-dataset mean
/// of the returned incumbent's epoch, repeated on each of the mode's rows.
struct BestPipelineRow {
  std::string mode;
  int epoch = 0;
  double mean_val = 0.0;
  double sem_val = 0.0;
  double mean_test = 0.0;
  double sem_test = 0.0;
  double best_epoch = 0.0;

  bool operator==(const BestPipelineRow&) const = default;
};

struct TrajectoryKey {
  std::string mode;
  std::string dataset_id;
  std::uint64_t seed = 0;
};

struct BenchReport {
  double budget_seconds = 0.0;
  std::vector<std::string> modes;
  std::vector<std::string> dataset_ids;
  std::vector<std::uint64_t> seeds;
  std::vector<std::pair<TrajectoryKey, Trajectory>> trajectories;
  std::vector<GridRow> grid;
  std::vector<BestPipelineRow> best_pipeline;
};

struct BenchOptions {
  int grid_points = kGridPoints;
  /// Surrogate fit options for the per-fold meta-fits. The row cap
  /// defaults lower than fit_gp's so a full benchmark stays desk-sized.
  FitOptions fit;

  BenchOptions() { fit.row_cap = 2048; }
};

/// Leave-one-dataset-out protocol: meta-fits score and cost surrogates on
/// all other datasets, then runs every (mode, seed) against the held-out
/// dataset's replay runner. Seeds are averaged within a dataset before the
/// cross-dataset mean and standard error.
BenchReport lodo_benchmark(const TabularStore& store,
                           const std::vector<TunerMode>& modes,
                           double budget_seconds,
                           const std::vector<std::uint64_t>& seeds,
                           const BenchOptions& options = {});

/// Incumbent val/test carried forward to a grid time point: the last event
/// with spent_seconds <= grid_seconds, or zeros before the first event.
std::pair<double, double> incumbent_at(const Trajectory& trajectory,
                                       double grid_seconds);

/// Seeded stand-in benchmark: every dataset shares one config grid (the
/// default pipeline first) and one smooth ground-truth score function, so
/// good configs transfer across datasets by construction; per-dataset
/// shifts and observation noise (sigma 0.02) keep datasets distinct.
TabularStore synth_benchmark(int n_datasets = 12, int configs_per_dataset = 60,
                             std::uint64_t seed = 0);

enum class ReportFormat { Csv, JsonLines };

struct ReportRows {
  std::vector<GridRow> grid;
  std::vector<BestPipelineRow> best_pipeline;

  bool operator==(const ReportRows&) const = default;
};

/// Writes the aggregated rows; the header documents every column. Doubles
/// are written in shortest round-trip form, so load_report reproduces the
/// emitted values exactly.
void emit_report(const BenchReport& report, const std::filesystem::path& path,
                 ReportFormat format);
ReportRows load_report(const std::filesystem::path& path, ReportFormat format);

}  // namespace greytune
