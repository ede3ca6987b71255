#include "greytune/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "greytune/corpus.hpp"

namespace greytune {
namespace {

std::string describe(const std::string& dataset_id, const std::string& key) {
  return dataset_id + " | " + key;
}

}  // namespace

void TabularStore::add_meta_features(const std::string& dataset_id,
                                     const MetaFeatures& features) {
  if (dataset_id.empty()) throw DataError("dataset id is empty");
  if (features.token_size <= 0 || features.sample_length <= 0.0 ||
      features.qa_length_ratio <= 0.0 || features.vocab_size <= 0) {
    throw DataError("non-positive meta-features for dataset " + dataset_id);
  }
  if (!meta_.emplace(dataset_id, features).second) {
    throw DataError("duplicate meta-features for dataset " + dataset_id);
  }
  order_.push_back(dataset_id);
}

void TabularStore::add_record(RunRecord record) {
  validate_run_record(record);
  if (meta_.find(record.dataset_id) == meta_.end()) {
    throw DataError("run record for unknown dataset " + record.dataset_id);
  }
  const std::string key = config_key(record.config);
  auto& per_dataset = index_[record.dataset_id];
  if (per_dataset.find(key) != per_dataset.end()) {
    throw DataError("duplicate run record " +
                    describe(record.dataset_id, key));
  }
  per_dataset.emplace(key, records_.size());
  records_.push_back(std::move(record));
}

const RunRecord* TabularStore::find(const std::string& dataset_id,
                                    const std::string& key) const {
  const auto ds = index_.find(dataset_id);
  if (ds == index_.end()) return nullptr;
  const auto it = ds->second.find(key);
  return it == ds->second.end() ? nullptr : &records_[it->second];
}

bool TabularStore::has_dataset(const std::string& dataset_id) const {
  return meta_.find(dataset_id) != meta_.end();
}

std::vector<PipelineConfig> TabularStore::configs_for(
    const std::string& dataset_id) const {
  if (!has_dataset(dataset_id)) {
    throw DataError("unknown dataset " + dataset_id);
  }
  std::vector<PipelineConfig> configs;
  const std::string default_key = config_key(default_config());
  std::size_t default_at = std::string::npos;
  for (const RunRecord& r : records_) {
    if (r.dataset_id != dataset_id) continue;
    if (config_key(r.config) == default_key) default_at = configs.size();
    configs.push_back(r.config);
  }
  if (default_at != std::string::npos && default_at != 0) {
    std::rotate(configs.begin(), configs.begin() + default_at,
                configs.begin() + default_at + 1);
  }
  return configs;
}

namespace {

[[noreturn]] void line_error(std::size_t line, const std::string& what) {
  throw DataError("line " + std::to_string(line) + ": " + what);
}

double number_field(const json& j, const char* field, std::size_t line) {
  const auto it = j.find(field);
  if (it == j.end()) line_error(line, std::string("missing field '") + field + "'");
  if (!it->is_number()) {
    line_error(line, std::string("field '") + field + "' must be a number");
  }
  return it->get<double>();
}

std::int64_t int_field(const json& j, const char* field, std::size_t line) {
  const auto it = j.find(field);
  if (it == j.end()) line_error(line, std::string("missing field '") + field + "'");
  if (!it->is_number_integer()) {
    line_error(line, std::string("field '") + field + "' must be an integer");
  }
  return it->get<std::int64_t>();
}

std::string string_field(const json& j, const char* field, std::size_t line) {
  const auto it = j.find(field);
  if (it == j.end()) line_error(line, std::string("missing field '") + field + "'");
  if (!it->is_string()) {
    line_error(line, std::string("field '") + field + "' must be a string");
  }
  return it->get<std::string>();
}

struct OpenCurve {
  RunRecord record;
  std::size_t first_line = 0;
};

}  // namespace

TabularStore load_meta_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());

  TabularStore store;
  // Curves are assembled across lines, keyed by (dataset, config), and
  // appended to the store in first-seen order once the file is read.
  std::map<std::pair<std::string, std::string>, OpenCurve> open;
  std::vector<const OpenCurve*> arrival;

  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.empty()) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      line_error(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) line_error(line_no, "record must be a JSON object");

    if (j.contains("epoch")) {
      RunRecord partial;
      partial.dataset_id = string_field(j, "dataset_id", line_no);
      const std::int64_t epoch = int_field(j, "epoch", line_no);
      CurvePoint point;
      point.epoch = static_cast<int>(epoch);
      point.val_score = number_field(j, "val_score", line_no);
      point.test_score = number_field(j, "test_score", line_no);
      point.cum_seconds = number_field(j, "cum_seconds", line_no);
      for (const char* k :
           {"dataset_id", "epoch", "val_score", "test_score", "cum_seconds"}) {
        j.erase(k);
      }
      ParsedConfig parsed;
      try {
        parsed = parse_config(j);
      } catch (const DataError& e) {
        line_error(line_no, e.what());
      }
      for (const std::string& flag : parsed.flags) line_error(line_no, flag);
      partial.config = parsed.config;
      if (!store.has_dataset(partial.dataset_id)) {
        line_error(line_no,
                   "run record for unknown dataset " + partial.dataset_id +
                       " (headers must precede runs)");
      }

      const std::string key = config_key(partial.config);
      const auto map_key = std::make_pair(partial.dataset_id, key);
      auto it = open.find(map_key);
      if (it == open.end()) {
        if (point.epoch != 1) {
          line_error(line_no, "record " + describe(partial.dataset_id, key) +
                                  " starts at epoch " +
                                  std::to_string(point.epoch));
        }
        partial.curve.push_back(point);
        auto [inserted, ok] =
            open.emplace(map_key, OpenCurve{std::move(partial), line_no});
        arrival.push_back(&inserted->second);
      } else {
        const int expected =
            it->second.record.curve.back().epoch + 1;
        if (point.epoch == 1) {
          line_error(line_no,
                     "duplicate run record " +
                         describe(partial.dataset_id, key) +
                         " (first seen at line " +
                         std::to_string(it->second.first_line) + ")");
        }
        if (point.epoch != expected) {
          line_error(line_no, "epoch " + std::to_string(point.epoch) +
                                  " out of order for record " +
                                  describe(partial.dataset_id, key) +
                                  " (expected " + std::to_string(expected) +
                                  ")");
        }
        it->second.record.curve.push_back(point);
      }
    } else if (j.contains("token_size")) {
      const std::string id = string_field(j, "dataset_id", line_no);
      MetaFeatures mf;
      mf.token_size = int_field(j, "token_size", line_no);
      mf.sample_length = number_field(j, "sample_length", line_no);
      mf.qa_length_ratio = number_field(j, "qa_length_ratio", line_no);
      mf.vocab_size = int_field(j, "vocab_size", line_no);
      if (j.size() != 5) line_error(line_no, "unexpected extra fields");
      try {
        store.add_meta_features(id, mf);
      } catch (const DataError& e) {
        line_error(line_no, e.what());
      }
    } else {
      line_error(line_no, "record is neither a dataset header nor a run record");
    }
  }

  for (const OpenCurve* curve : arrival) {
    store.add_record(curve->record);
  }
  return store;
}

void save_meta_dataset(const TabularStore& store,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const std::string& id : store.dataset_ids()) {
    out << meta_features_to_json(id, store.meta_features().at(id)).dump()
        << "\n";
  }
  for (const RunRecord& r : store.records()) {
    for (const CurvePoint& p : r.curve) {
      json j = serialize_config(r.config);
      j["dataset_id"] = r.dataset_id;
      j["epoch"] = p.epoch;
      j["val_score"] = p.val_score;
      j["test_score"] = p.test_score;
      j["cum_seconds"] = p.cum_seconds;
      out << j.dump() << "\n";
    }
  }
  if (!out) throw DataError("failed writing " + path.string());
}

ReplayRunner::ReplayRunner(const TabularStore& store, std::string dataset_id)
    : store_(store), dataset_id_(std::move(dataset_id)) {
  if (!store_.has_dataset(dataset_id_)) {
    throw DataError("unknown dataset " + dataset_id_);
  }
}

std::tuple<double, double, double> ReplayRunner::run_epoch(
    const PipelineConfig& config, int epoch) {
  const std::string key = config_key(config);
  const RunRecord* record = store_.find(dataset_id_, key);
  if (record == nullptr) {
    throw DataError("no stored run for " + describe(dataset_id_, key));
  }
  if (epoch < 1 || epoch > static_cast<int>(record->curve.size())) {
    throw DataError("epoch " + std::to_string(epoch) +
                    " beyond the stored curve of " +
                    describe(dataset_id_, key));
  }
  const CurvePoint& point = record->curve[epoch - 1];
  const double previous = epoch == 1 ? 0.0 : record->curve[epoch - 2].cum_seconds;
  return {point.val_score, point.test_score, point.cum_seconds - previous};
}

std::pair<double, double> incumbent_at(const Trajectory& trajectory,
                                       double grid_seconds) {
  double val = 0.0;
  double test = 0.0;
  for (const TrajectoryEvent& e : trajectory.events) {
    if (e.spent_seconds > grid_seconds) break;
    val = e.incumbent_val;
    test = e.incumbent_test;
  }
  return {val, test};
}

namespace {

struct MeanSem {
  double mean = 0.0;
  double sem = 0.0;
};

MeanSem mean_sem(const std::vector<double>& xs) {
  MeanSem out;
  const std::size_t n = xs.size();
  if (n == 0) return out;
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / static_cast<double>(n);
  if (n < 2) return out;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  out.sem = sd / std::sqrt(static_cast<double>(n));
  return out;
}

double mean_of(const std::vector<double>& xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  return xs.empty() ? 0.0 : sum / static_cast<double>(xs.size());
}

/// The pipeline and epoch a finished run would hand back: the observation
/// that last raised the incumbent (the first event for a never-raised one).
std::pair<int, int> final_incumbent(const Trajectory& trajectory) {
  if (trajectory.events.empty()) {
    throw DataError("empty trajectory has no incumbent");
  }
  int candidate = trajectory.events[0].candidate;
  int epoch = trajectory.events[0].epoch;
  for (std::size_t k = 1; k < trajectory.events.size(); ++k) {
    if (trajectory.events[k].incumbent_val >
        trajectory.events[k - 1].incumbent_val) {
      candidate = trajectory.events[k].candidate;
      epoch = trajectory.events[k].epoch;
    }
  }
  return {candidate, epoch};
}

}  // namespace

BenchReport lodo_benchmark(const TabularStore& store,
                           const std::vector<TunerMode>& modes,
                           double budget_seconds,
                           const std::vector<std::uint64_t>& seeds,
                           const BenchOptions& options) {
  const std::vector<std::string>& datasets = store.dataset_ids();
  if (datasets.size() < 2) {
    throw DataError("leave-one-dataset-out needs at least 2 datasets");
  }
  if (!(budget_seconds > 0.0)) throw DataError("budget must be positive");
  if (modes.empty()) throw DataError("no modes given");
  if (seeds.empty()) throw DataError("no seeds given");
  if (options.grid_points < 2) throw DataError("grid needs at least 2 points");

  const bool needs_models =
      std::any_of(modes.begin(), modes.end(), [](TunerMode m) {
        return m == TunerMode::TransferOnly || m == TunerMode::Refit;
      });

  BenchReport report;
  report.budget_seconds = budget_seconds;
  for (TunerMode m : modes) report.modes.push_back(to_string(m));
  report.dataset_ids = datasets;
  report.seeds = seeds;

  for (const std::string& held_out : datasets) {
    std::vector<RunRecord> training;
    std::map<std::string, MetaFeatures> training_meta;
    for (const RunRecord& r : store.records()) {
      if (r.dataset_id != held_out) training.push_back(r);
    }
    for (const auto& [id, mf] : store.meta_features()) {
      if (id != held_out) training_meta.emplace(id, mf);
    }

    GpModel perf;
    GpModel cost;
    if (needs_models) {
      FitOptions fit = options.fit;
      fit.seed = options.fit.seed ^ fnv1a64(held_out);
      perf = meta_fit(training, training_meta, TargetKind::Score, fit);
      cost = meta_fit(training, training_meta, TargetKind::LogCost, fit);
    }

    const std::vector<PipelineConfig> pool = store.configs_for(held_out);
    const MetaFeatures& target_meta = store.meta_features().at(held_out);
    for (TunerMode mode : modes) {
      const bool guided =
          mode == TunerMode::TransferOnly || mode == TunerMode::Refit;
      for (std::uint64_t seed : seeds) {
        ReplayRunner runner(store, held_out);
        RunSpec spec;
        spec.mode = mode;
        spec.budget_seconds = budget_seconds;
        spec.seed = seed;
        spec.pool = &pool;
        Trajectory trajectory =
            run(target_meta, runner, spec, guided ? &perf : nullptr,
                guided ? &cost : nullptr);
        report.trajectories.push_back(
            {{to_string(mode), held_out, seed}, std::move(trajectory)});
      }
    }
  }

  // Aggregation: seeds averaged within each dataset first; mean and SEM
  // taken across datasets.
  const auto trajectory_of = [&](const std::string& mode,
                                 const std::string& dataset,
                                 std::uint64_t seed) -> const Trajectory& {
    for (const auto& [key, t] : report.trajectories) {
      if (key.mode == mode && key.dataset_id == dataset && key.seed == seed) {
        return t;
      }
    }
    throw DataError("missing trajectory for " + mode + " on " + dataset);
  };

  for (const std::string& mode : report.modes) {
    for (int i = 0; i < options.grid_points; ++i) {
      const double g = budget_seconds * static_cast<double>(i) /
                       static_cast<double>(options.grid_points - 1);
      std::vector<double> vals;
      std::vector<double> tests;
      for (const std::string& dataset : datasets) {
        std::vector<double> seed_vals;
        std::vector<double> seed_tests;
        for (std::uint64_t seed : seeds) {
          const auto [v, t] = incumbent_at(trajectory_of(mode, dataset, seed), g);
          seed_vals.push_back(v);
          seed_tests.push_back(t);
        }
        vals.push_back(mean_of(seed_vals));
        tests.push_back(mean_of(seed_tests));
      }
      const MeanSem val = mean_sem(vals);
      const MeanSem test = mean_sem(tests);
      report.grid.push_back({mode, g, val.mean, val.sem, test.mean, test.sem});
    }
  }

  for (const std::string& mode : report.modes) {
    // Per dataset: seed-averaged stored curve of the returned pipeline.
    std::vector<std::vector<double>> val_curves;
    std::vector<std::vector<double>> test_curves;
    std::vector<double> best_epochs;
    for (const std::string& dataset : datasets) {
      const std::vector<PipelineConfig> pool = store.configs_for(dataset);
      std::vector<std::vector<double>> seed_vals;
      std::vector<std::vector<double>> seed_tests;
      std::vector<double> seed_epochs;
      for (std::uint64_t seed : seeds) {
        const auto [candidate, epoch] =
            final_incumbent(trajectory_of(mode, dataset, seed));
        const RunRecord* record =
            store.find(dataset, config_key(pool[candidate]));
        std::vector<double> vals;
        std::vector<double> tests;
        for (const CurvePoint& p : record->curve) {
          vals.push_back(p.val_score);
          tests.push_back(p.test_score);
        }
        seed_vals.push_back(std::move(vals));
        seed_tests.push_back(std::move(tests));
        seed_epochs.push_back(static_cast<double>(epoch));
      }
      std::size_t max_len = 0;
      for (const auto& c : seed_vals) max_len = std::max(max_len, c.size());
      std::vector<double> val_curve;
      std::vector<double> test_curve;
      for (std::size_t e = 0; e < max_len; ++e) {
        std::vector<double> v;
        std::vector<double> t;
        for (std::size_t s = 0; s < seed_vals.size(); ++s) {
          if (e < seed_vals[s].size()) {
            v.push_back(seed_vals[s][e]);
            t.push_back(seed_tests[s][e]);
          }
        }
        val_curve.push_back(mean_of(v));
        test_curve.push_back(mean_of(t));
      }
      val_curves.push_back(std::move(val_curve));
      test_curves.push_back(std::move(test_curve));
      best_epochs.push_back(mean_of(seed_epochs));
    }
    const double best_epoch = mean_of(best_epochs);
    std::size_t max_len = 0;
    for (const auto& c : val_curves) max_len = std::max(max_len, c.size());
    for (std::size_t e = 0; e < max_len; ++e) {
      std::vector<double> v;
      std::vector<double> t;
      for (std::size_t d = 0; d < val_curves.size(); ++d) {
        if (e < val_curves[d].size()) {
          v.push_back(val_curves[d][e]);
          t.push_back(test_curves[d][e]);
        }
      }
      const MeanSem val = mean_sem(v);
      const MeanSem test = mean_sem(t);
      report.best_pipeline.push_back({mode, static_cast<int>(e) + 1, val.mean,
                                      val.sem, test.mean, test.sem,
                                      best_epoch});
    }
  }

  return report;
}

TabularStore synth_benchmark(int n_datasets, int configs_per_dataset,
                             std::uint64_t seed) {
  if (n_datasets < 2) throw DataError("need at least 2 datasets");
  if (configs_per_dataset < 1) throw DataError("need at least 1 config");

  Rng root(seed);
  Rng cfg_rng = root.fork("configs");
  Rng weight_rng = root.fork("weights");
  Rng meta_rng = root.fork("meta");
  Rng pert_rng = root.fork("perturbation");
  Rng noise_rng = root.fork("noise");

  // One shared config grid, default pipeline first, so transfer across
  // datasets is measurable on identical candidates.
  std::vector<PipelineConfig> grid{default_config()};
  std::set<std::string> seen{config_key(grid[0])};
  while (static_cast<int>(grid.size()) < configs_per_dataset) {
    PipelineConfig c = sample_config(cfg_rng);
    if (seen.insert(config_key(c)).second) grid.push_back(c);
  }

  // Standardize each encoded dimension over the grid before weighting;
  // otherwise wide-range coordinates saturate the score function and the
  // shared structure collapses to a constant.
  std::array<double, kEncodedDim> dim_mean{};
  std::array<double, kEncodedDim> dim_scale{};
  {
    std::vector<EncodedConfig> encoded;
    for (const PipelineConfig& c : grid) encoded.push_back(encode(c));
    for (int i = 0; i < kEncodedDim; ++i) {
      double mean = 0.0;
      for (const EncodedConfig& e : encoded) mean += e[i];
      mean /= static_cast<double>(encoded.size());
      double var = 0.0;
      for (const EncodedConfig& e : encoded) {
        var += (e[i] - mean) * (e[i] - mean);
      }
      var /= static_cast<double>(encoded.size());
      dim_mean[i] = mean;
      dim_scale[i] = var > 1e-18 ? std::sqrt(var) : 0.0;
    }
  }

  std::array<double, kEncodedDim> weights;
  const double weight_scale = 1.5 / std::sqrt(static_cast<double>(kEncodedDim));
  for (double& w : weights) w = weight_scale * weight_rng.normal();

  TabularStore store;
  std::vector<MetaFeatures> metas;
  std::vector<double> shifts;
  for (int d = 0; d < n_datasets; ++d) {
    MetaFeatures mf;
    mf.token_size = 600 + static_cast<std::int64_t>(meta_rng.index(1800));
    mf.sample_length = 60.0 + 80.0 * meta_rng.real01();
    mf.qa_length_ratio = 0.55 + 0.6 * meta_rng.real01();
    mf.vocab_size = 10 * (30 + static_cast<std::int64_t>(meta_rng.index(270)));
    char name[16];
    std::snprintf(name, sizeof(name), "synth%02d", d);
    store.add_meta_features(name, mf);
    metas.push_back(mf);
    shifts.push_back(0.05 * pert_rng.normal());
  }

  const double rise_scale = 1.0 - std::exp(-kMaxEpochs / 3.5);
  for (int d = 0; d < n_datasets; ++d) {
    char name[16];
    std::snprintf(name, sizeof(name), "synth%02d", d);
    const MetaFeatures& mf = metas[d];
    for (const PipelineConfig& config : grid) {
      const EncodedConfig enc = encode(config);
      double lin = 0.0;
      for (int i = 0; i < kEncodedDim; ++i) {
        if (dim_scale[i] > 0.0) {
          lin += weights[i] * (enc[i] - dim_mean[i]) / dim_scale[i];
        }
      }
      lin += 0.3 * (static_cast<double>(mf.token_size) / 2000.0 - 0.75);
      const double plateau = 0.25 + 0.55 / (1.0 + std::exp(-lin));
      const double config_shift = 0.03 * pert_rng.normal();

      const double epoch_seconds =
          (20.0 + 6.0 * std::log2(static_cast<double>(config.lora_rank)) +
           9.0 * config.grad_accum) *
          (0.5 + static_cast<double>(mf.token_size) / 2000.0);

      RunRecord r;
      r.dataset_id = name;
      r.config = config;
      for (int epoch = 1; epoch <= kMaxEpochs; ++epoch) {
        const double rise = (1.0 - std::exp(-epoch / 3.5)) / rise_scale;
        const double mean_score = plateau * rise + shifts[d] + config_shift;
        CurvePoint p;
        p.epoch = epoch;
        p.val_score = std::clamp(mean_score + 0.02 * noise_rng.normal(), 0.0, 1.0);
        p.test_score = std::clamp(mean_score + 0.02 * noise_rng.normal(), 0.0, 1.0);
        p.cum_seconds = epoch_seconds * epoch;
        r.curve.push_back(p);
      }
      store.add_record(std::move(r));
    }
  }
  return store;
}

namespace {

constexpr const char* kCsvColumns =
    "row_type,mode,grid_seconds,epoch,mean_val,sem_val,mean_test,sem_test,"
    "best_epoch";
constexpr const char* kReportSchema = "greytune-bench-report";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cell);
      cell.clear();
    } else {
      cell.push_back(ch);
    }
  }
  cells.push_back(cell);
  return cells;
}

double parse_double(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    line_error(line, "bad number '" + s + "'");
  }
}

}  // namespace

void emit_report(const BenchReport& report, const std::filesystem::path& path,
                 ReportFormat format) {
  if (report.grid.empty()) throw DataError("report has no rows");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());

  if (format == ReportFormat::Csv) {
    out << "# benchmark report: incumbent-over-time grid and the returned\n"
           "# pipelines' stored curves\n"
           "# columns: " << kCsvColumns << "\n"
           "# grid rows: incumbent val/test carried forward to grid_seconds;\n"
           "#   epoch and best_epoch are empty\n"
           "# best_pipeline rows: per-epoch stored curve of each run's\n"
           "#   returned pipeline; grid_seconds is empty; best_epoch is the\n"
           "#   mean epoch of the returned incumbents\n"
           "# aggregation: seeds averaged within dataset, then mean over\n"
           "#   datasets; sem = sample sd / sqrt(n_datasets)\n";
    out << kCsvColumns << "\n";
    for (const GridRow& r : report.grid) {
      out << "grid," << r.mode << ',' << format_double(r.grid_seconds) << ",,"
          << format_double(r.mean_val) << ',' << format_double(r.sem_val)
          << ',' << format_double(r.mean_test) << ','
          << format_double(r.sem_test) << ",\n";
    }
    for (const BestPipelineRow& r : report.best_pipeline) {
      out << "best_pipeline," << r.mode << ",," << r.epoch << ','
          << format_double(r.mean_val) << ',' << format_double(r.sem_val)
          << ',' << format_double(r.mean_test) << ','
          << format_double(r.sem_test) << ',' << format_double(r.best_epoch)
          << "\n";
    }
  } else {
    json header;
    header["schema"] = kReportSchema;
    header["version"] = 1;
    header["budget_seconds"] = report.budget_seconds;
    header["modes"] = report.modes;
    header["n_datasets"] = report.dataset_ids.size();
    header["seeds"] = report.seeds;
    out << header.dump() << "\n";
    for (const GridRow& r : report.grid) {
      json j;
      j["row_type"] = "grid";
      j["mode"] = r.mode;
      j["grid_seconds"] = r.grid_seconds;
      j["mean_val"] = r.mean_val;
      j["sem_val"] = r.sem_val;
      j["mean_test"] = r.mean_test;
      j["sem_test"] = r.sem_test;
      out << j.dump() << "\n";
    }
    for (const BestPipelineRow& r : report.best_pipeline) {
      json j;
      j["row_type"] = "best_pipeline";
      j["mode"] = r.mode;
      j["epoch"] = r.epoch;
      j["mean_val"] = r.mean_val;
      j["sem_val"] = r.sem_val;
      j["mean_test"] = r.mean_test;
      j["sem_test"] = r.sem_test;
      j["best_epoch"] = r.best_epoch;
      out << j.dump() << "\n";
    }
  }
  if (!out) throw DataError("failed writing " + path.string());
}

ReportRows load_report(const std::filesystem::path& path,
                       ReportFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  ReportRows rows;
  std::string text;
  std::size_t line_no = 0;

  if (format == ReportFormat::Csv) {
    bool saw_columns = false;
    while (std::getline(in, text)) {
      ++line_no;
      if (text.empty() || text[0] == '#') continue;
      if (!saw_columns) {
        if (text != kCsvColumns) line_error(line_no, "unexpected column row");
        saw_columns = true;
        continue;
      }
      const std::vector<std::string> cells = split_csv(text);
      if (cells.size() != 9) line_error(line_no, "expected 9 cells");
      if (cells[0] == "grid") {
        rows.grid.push_back({cells[1], parse_double(cells[2], line_no),
                             parse_double(cells[4], line_no),
                             parse_double(cells[5], line_no),
                             parse_double(cells[6], line_no),
                             parse_double(cells[7], line_no)});
      } else if (cells[0] == "best_pipeline") {
        rows.best_pipeline.push_back(
            {cells[1], static_cast<int>(parse_double(cells[3], line_no)),
             parse_double(cells[4], line_no), parse_double(cells[5], line_no),
             parse_double(cells[6], line_no), parse_double(cells[7], line_no),
             parse_double(cells[8], line_no)});
      } else {
        line_error(line_no, "unknown row type '" + cells[0] + "'");
      }
    }
    if (!saw_columns) throw DataError("no column row in " + path.string());
  } else {
    bool saw_header = false;
    while (std::getline(in, text)) {
      ++line_no;
      if (text.empty()) continue;
      json j;
      try {
        j = json::parse(text);
      } catch (const json::parse_error& e) {
        line_error(line_no, std::string("malformed JSON: ") + e.what());
      }
      if (!saw_header) {
        if (!j.is_object() || j.value("schema", "") != kReportSchema) {
          line_error(line_no, "missing report header");
        }
        saw_header = true;
        continue;
      }
      const std::string row_type = string_field(j, "row_type", line_no);
      if (row_type == "grid") {
        rows.grid.push_back({string_field(j, "mode", line_no),
                             number_field(j, "grid_seconds", line_no),
                             number_field(j, "mean_val", line_no),
                             number_field(j, "sem_val", line_no),
                             number_field(j, "mean_test", line_no),
                             number_field(j, "sem_test", line_no)});
      } else if (row_type == "best_pipeline") {
        rows.best_pipeline.push_back(
            {string_field(j, "mode", line_no),
             static_cast<int>(int_field(j, "epoch", line_no)),
             number_field(j, "mean_val", line_no),
             number_field(j, "sem_val", line_no),
             number_field(j, "mean_test", line_no),
             number_field(j, "sem_test", line_no),
             number_field(j, "best_epoch", line_no)});
      } else {
        line_error(line_no, "unknown row type '" + row_type + "'");
      }
    }
    if (!saw_header) throw DataError("no report header in " + path.string());
  }
  return rows;
}

}  // namespace greytune
