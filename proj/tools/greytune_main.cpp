#include <CLI11.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "greytune/bench.hpp"
#include "greytune/common.hpp"
#include "greytune/corpus.hpp"
#include "greytune/jsonl.hpp"
#include "greytune/surrogate.hpp"
#include "greytune/teacher.hpp"
#include "greytune/tuner.hpp"

namespace fs = std::filesystem;
using namespace greytune;

namespace {

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string first_nonempty_line(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    const auto b = line.find_last_not_of(" \t\r");
    return line.substr(a, b - a + 1);
  }
  return {};
}

TunerMode mode_from_flag(const std::string& name) {
  try {
    return tuner_mode_from_string(name);
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
}

std::vector<std::string> split_csv_flag(const std::string& value) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& value) {
  std::vector<std::uint64_t> seeds;
  for (const std::string& part : split_csv_flag(value)) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw UsageError("bad seed \"" + part + "\" in --seeds");
    }
  }
  if (seeds.empty()) throw UsageError("--seeds is empty");
  return seeds;
}

ReportFormat resolve_format(const fs::path& path, const std::string& flag) {
  if (flag == "csv") return ReportFormat::Csv;
  if (flag == "jsonl") return ReportFormat::JsonLines;
  const std::string ext = path.extension().string();
  return (ext == ".jsonl" || ext == ".ndjson") ? ReportFormat::JsonLines
                                               : ReportFormat::Csv;
}

/// External runner spoken to over a one-request-per-epoch pipe protocol:
/// the request JSON arrives on the child's stdin, the reply is read from
/// its stdout. The child is expected to checkpoint per epoch; each call
/// names the config and the epoch to produce.
class SubprocessRunner : public Runner {
 public:
  explicit SubprocessRunner(std::string command) : command_(std::move(command)) {
    const std::string stem =
        "greytune_runner_" + std::to_string(::getpid()) + "_";
    request_path_ = fs::temp_directory_path() / (stem + "req.json");
    response_path_ = fs::temp_directory_path() / (stem + "resp.json");
  }

  ~SubprocessRunner() override {
    std::error_code ec;
    fs::remove(request_path_, ec);
    fs::remove(response_path_, ec);
  }

  std::tuple<double, double, double> run_epoch(const PipelineConfig& config,
                                               int epoch) override {
    json request = serialize_config(config);
    request["epoch"] = epoch;
    {
      std::ofstream out(request_path_);
      out << request.dump() << '\n';
    }
    const std::string cmd = command_ + " < " + request_path_.string() + " > " +
                            response_path_.string();
    const int status = std::system(cmd.c_str());
    if (status != 0) {
      const std::string detail =
          WIFEXITED(status)
              ? "exit code " + std::to_string(WEXITSTATUS(status))
              : "wait status " + std::to_string(status);
      throw TeacherError("runner command failed (" + detail + "): " +
                         command_);
    }
    json reply;
    try {
      reply = json::parse(read_text_file(response_path_));
    } catch (const json::parse_error& e) {
      throw TeacherError(std::string("runner reply is not JSON: ") + e.what());
    }
    for (const char* key : {"val_score", "test_score", "seconds"}) {
      if (!reply.contains(key) || !reply[key].is_number()) {
        throw TeacherError(std::string("runner reply lacks numeric \"") + key +
                           "\"");
      }
    }
    return {reply["val_score"].get<double>(), reply["test_score"].get<double>(),
            reply["seconds"].get<double>()};
  }

 private:
  std::string command_;
  fs::path request_path_;
  fs::path response_path_;
};

struct GenerateArgs {
  std::string input;
  std::string out;
  std::string dataset_id;
  std::string title;
  std::string meta_out;
  std::string mode = "replay";
  std::string fixtures;
  std::string endpoint;
  std::uint64_t seed = 0;
};

void cmd_generate(const GenerateArgs& args) {
  TeacherMode mode = TeacherMode::Replay;
  if (args.mode == "live") mode = TeacherMode::Live;
  if (args.mode == "record") mode = TeacherMode::Record;
  if (mode != TeacherMode::Live && args.fixtures.empty()) {
    throw UsageError("--fixtures is required in replay and record modes");
  }

  TeacherEndpoint endpoint;
  if (!args.endpoint.empty()) {
    endpoint.mode = mode;
    endpoint.fixture_path = args.fixtures;
    endpoint.base_url = args.endpoint;
    if (const char* token = std::getenv("TEACHER_API_TOKEN")) {
      endpoint.auth_token = token;
    }
  } else {
    endpoint = TeacherClient::endpoint_from_env(mode, args.fixtures);
  }

  const std::string document = read_text_file(args.input);
  const std::string dataset_id = args.dataset_id.empty()
                                     ? fs::path(args.input).stem().string()
                                     : args.dataset_id;
  const std::string title =
      args.title.empty() ? first_nonempty_line(document) : args.title;
  if (title.empty()) {
    throw DataError("input has no usable first line; pass --title");
  }

  TeacherClient client(endpoint);
  GenerateStats stats;
  const QaDataset dataset =
      generate_qa_dataset(document, dataset_id, title, client, args.seed,
                          &stats);
  save_dataset(args.out, dataset);
  const MetaFeatures mf = compute_meta_features(dataset);
  if (!args.meta_out.empty()) {
    save_meta_features(args.meta_out, {{dataset_id, mf}});
  }

  std::printf("dataset %s: %d fragments, %d facts (%d skipped), %zu/%zu/%zu "
              "train/val/test pairs\n",
              dataset_id.c_str(), stats.fragments, stats.facts_total,
              stats.facts_skipped, dataset.train.size(), dataset.val.size(),
              dataset.test.size());
  std::printf("meta-features: token_size=%lld sample_length=%s "
              "qa_length_ratio=%s vocab_size=%lld\n",
              static_cast<long long>(mf.token_size),
              format_double(mf.sample_length).c_str(),
              format_double(mf.qa_length_ratio).c_str(),
              static_cast<long long>(mf.vocab_size));
}

struct MetaFeaturesArgs {
  std::vector<std::string> datasets;
  std::string out;
};

void cmd_metafeatures(const MetaFeaturesArgs& args) {
  std::vector<std::pair<std::string, MetaFeatures>> rows;
  for (const std::string& path : args.datasets) {
    const QaDataset dataset = load_dataset(path);
    rows.emplace_back(dataset.dataset_id, compute_meta_features(dataset));
  }
  if (args.out.empty()) {
    for (const auto& [id, mf] : rows) {
      std::printf("%s\n", meta_features_to_json(id, mf).dump().c_str());
    }
    return;
  }
  save_meta_features(args.out, rows);
  std::printf("wrote %zu meta-feature rows to %s\n", rows.size(),
              args.out.c_str());
}

struct MetatrainArgs {
  std::string meta_dataset;
  std::string out_dir;
  int row_cap = 4096;
  std::uint64_t seed = 0;
};

std::string norm_stats_digest(const GpModel& score, const GpModel& cost) {
  std::ostringstream s;
  for (const GpModel* m : {&score, &cost}) {
    for (double v : m->meta_stats.mean) s << format_double(v) << ' ';
    for (double v : m->meta_stats.scale) s << format_double(v) << ' ';
    s << format_double(m->target_stats.mean) << ' '
      << format_double(m->target_stats.scale) << '\n';
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(fnv1a64(s.str())));
  return hex;
}

void cmd_metatrain(const MetatrainArgs& args) {
  if (args.row_cap < 1) throw UsageError("--row-cap must be positive");
  const TabularStore store = load_meta_dataset(args.meta_dataset);
  FitOptions opts;
  opts.row_cap = args.row_cap;
  opts.seed = args.seed;
  const GpModel score = meta_fit(store.records(), store.meta_features(),
                                 TargetKind::Score, opts);
  const GpModel cost = meta_fit(store.records(), store.meta_features(),
                                TargetKind::LogCost, opts);

  const fs::path dir(args.out_dir);
  fs::create_directories(dir);
  save_model(score, dir / "score.model");
  save_model(cost, dir / "cost.model");
  const json manifest = {{"seed", args.seed},
                         {"row_cap", args.row_cap},
                         {"expanded_rows", score.fit_info.rows_total},
                         {"score_rows", score.rows()},
                         {"cost_rows", cost.rows()},
                         {"norm_stats_digest", norm_stats_digest(score, cost)}};
  std::ofstream manifest_out(dir / "manifest.json");
  if (!manifest_out) {
    throw DataError("cannot write " + (dir / "manifest.json").string());
  }
  manifest_out << manifest.dump(2) << '\n';

  std::printf("score model: %lld rows (lml %s)\n",
              static_cast<long long>(score.rows()),
              format_double(score.fit_info.final_lml).c_str());
  std::printf("cost model: %lld rows (lml %s)\n",
              static_cast<long long>(cost.rows()),
              format_double(cost.fit_info.final_lml).c_str());
  std::printf("wrote score.model, cost.model, manifest.json to %s\n",
              args.out_dir.c_str());
}

struct OptimizeArgs {
  std::string meta_dataset;
  std::string dataset;
  std::string mode = "transfer_only";
  double budget_seconds = 18000.0;
  std::uint64_t seed = 0;
  std::string models_dir;
  std::string out;
  std::string runner_cmd;
  std::string meta_features_path;
  int pool_size = kDefaultPoolSize;
};

void write_trajectory(const fs::path& path, const Trajectory& trajectory,
                      const OptimizeArgs& args) {
  std::vector<json> lines;
  lines.push_back({{"dataset_id", args.dataset},
                   {"mode", args.mode},
                   {"budget_seconds", args.budget_seconds},
                   {"seed", args.seed}});
  for (const TrajectoryEvent& e : trajectory.events) {
    lines.push_back({{"spent_seconds", e.spent_seconds},
                     {"candidate", e.candidate},
                     {"epoch", e.epoch},
                     {"val_score", e.val_score},
                     {"test_score", e.test_score},
                     {"incumbent_val", e.incumbent_val},
                     {"incumbent_test", e.incumbent_test}});
  }
  write_jsonl(path, lines);
}

void print_trajectory_summary(const OptimizeArgs& args,
                              const Trajectory& trajectory) {
  double spent = 0.0;
  double incumbent_val = 0.0;
  double incumbent_test = 0.0;
  if (!trajectory.events.empty()) {
    const TrajectoryEvent& last = trajectory.events.back();
    spent = last.spent_seconds;
    incumbent_val = last.incumbent_val;
    incumbent_test = last.incumbent_test;
  }
  std::printf("%s on %s: %zu epochs run, %s of %s s spent, incumbent val %s "
              "test %s\n",
              args.mode.c_str(), args.dataset.c_str(),
              trajectory.events.size(), format_double(spent).c_str(),
              format_double(args.budget_seconds).c_str(),
              format_double(incumbent_val).c_str(),
              format_double(incumbent_test).c_str());
}

void cmd_optimize(const OptimizeArgs& args) {
  if (!(args.budget_seconds > 0.0)) {
    throw UsageError("budget must be positive");
  }
  if (args.pool_size < 0) throw UsageError("--pool-size must be non-negative");
  const TunerMode mode = mode_from_flag(args.mode);
  const bool guided =
      mode == TunerMode::TransferOnly || mode == TunerMode::Refit;

  GpModel score;
  GpModel cost;
  if (guided) {
    if (args.models_dir.empty()) {
      throw UsageError("--models is required for mode " + args.mode);
    }
    const fs::path dir(args.models_dir);
    score = load_model(dir / "score.model");
    cost = load_model(dir / "cost.model");
  }

  RunSpec spec;
  spec.mode = mode;
  spec.budget_seconds = args.budget_seconds;
  spec.seed = args.seed;
  spec.pool_size = args.pool_size;

  Trajectory trajectory;
  if (!args.runner_cmd.empty()) {
    if (args.meta_features_path.empty()) {
      throw UsageError("--meta-features is required with --runner-cmd");
    }
    const auto rows = load_meta_features(args.meta_features_path);
    const MetaFeatures* mf = nullptr;
    for (const auto& [id, features] : rows) {
      if (id == args.dataset) mf = &features;
    }
    if (!mf) {
      throw DataError("no meta-features for dataset " + args.dataset + " in " +
                      args.meta_features_path);
    }
    SubprocessRunner runner(args.runner_cmd);
    trajectory = run(*mf, runner, spec, guided ? &score : nullptr,
                     guided ? &cost : nullptr);
  } else {
    if (args.meta_dataset.empty()) {
      throw UsageError("--meta-dataset is required unless --runner-cmd is set");
    }
    const TabularStore store = load_meta_dataset(args.meta_dataset);
    if (!store.has_dataset(args.dataset)) {
      throw DataError("unknown dataset " + args.dataset + " in " +
                      args.meta_dataset);
    }
    const std::vector<PipelineConfig> pool = store.configs_for(args.dataset);
    spec.pool = &pool;
    ReplayRunner runner(store, args.dataset);
    trajectory = run(store.meta_features().at(args.dataset), runner, spec,
                     guided ? &score : nullptr, guided ? &cost : nullptr);
  }

  if (!args.out.empty()) write_trajectory(args.out, trajectory, args);
  print_trajectory_summary(args, trajectory);
}

struct BenchmarkArgs {
  std::string meta_dataset;
  std::string modes = "transfer_only,refit,random,sh_mutate,default_only";
  double budget_seconds = 18000.0;
  std::string seeds = "1,2,3";
  std::string out;
  std::string format;
  int row_cap = 2048;
  std::uint64_t fit_seed = 0;
  int grid_points = kGridPoints;
};

void cmd_benchmark(const BenchmarkArgs& args) {
  if (!(args.budget_seconds > 0.0)) {
    throw UsageError("budget must be positive");
  }
  std::vector<TunerMode> modes;
  for (const std::string& name : split_csv_flag(args.modes)) {
    modes.push_back(mode_from_flag(name));
  }
  if (modes.empty()) throw UsageError("--modes is empty");
  const std::vector<std::uint64_t> seeds = parse_seed_list(args.seeds);
  if (args.row_cap < 1) throw UsageError("--row-cap must be positive");
  if (args.grid_points < 2) throw UsageError("--grid-points must be >= 2");

  const TabularStore store = load_meta_dataset(args.meta_dataset);
  BenchOptions options;
  options.grid_points = args.grid_points;
  options.fit.row_cap = args.row_cap;
  options.fit.seed = args.fit_seed;
  const BenchReport report =
      lodo_benchmark(store, modes, args.budget_seconds, seeds, options);
  emit_report(report, args.out, resolve_format(args.out, args.format));

  std::printf("lodo over %zu datasets, %zu seeds, budget %s s\n",
              report.dataset_ids.size(), report.seeds.size(),
              format_double(report.budget_seconds).c_str());
  for (const std::string& mode : report.modes) {
    const GridRow* final_row = nullptr;
    for (const GridRow& row : report.grid) {
      if (row.mode == mode &&
          (!final_row || row.grid_seconds > final_row->grid_seconds)) {
        final_row = &row;
      }
    }
    if (!final_row) continue;
    std::printf("%s: val %s +/- %s, test %s +/- %s\n", mode.c_str(),
                format_double(final_row->mean_val).c_str(),
                format_double(final_row->sem_val).c_str(),
                format_double(final_row->mean_test).c_str(),
                format_double(final_row->sem_test).c_str());
  }
  std::printf("wrote %s\n", args.out.c_str());
}

struct SynthArgs {
  std::string out;
  int datasets = 12;
  int configs = 60;
  std::uint64_t seed = 0;
};

void cmd_synth(const SynthArgs& args) {
  const TabularStore store =
      synth_benchmark(args.datasets, args.configs, args.seed);
  save_meta_dataset(store, args.out);
  std::printf("wrote %zu datasets, %zu run records to %s\n",
              store.dataset_ids().size(), store.records().size(),
              args.out.c_str());
}

struct ReportArgs {
  std::string in;
  std::string format;
};

void cmd_report(const ReportArgs& args) {
  const ReportRows rows =
      load_report(args.in, resolve_format(args.in, args.format));
  std::vector<std::string> mode_order;
  std::map<std::string, const GridRow*> final_row;
  for (const GridRow& row : rows.grid) {
    auto [it, inserted] = final_row.emplace(row.mode, &row);
    if (inserted) {
      mode_order.push_back(row.mode);
    } else if (row.grid_seconds > it->second->grid_seconds) {
      it->second = &row;
    }
  }
  std::printf("final incumbents:\n");
  for (const std::string& mode : mode_order) {
    const GridRow* row = final_row.at(mode);
    std::printf("  %s: val %s +/- %s, test %s +/- %s (at %s s)\n",
                mode.c_str(), format_double(row->mean_val).c_str(),
                format_double(row->sem_val).c_str(),
                format_double(row->mean_test).c_str(),
                format_double(row->sem_test).c_str(),
                format_double(row->grid_seconds).c_str());
  }
  if (rows.best_pipeline.empty()) return;
  std::printf("best pipeline curves:\n");
  for (const BestPipelineRow& row : rows.best_pipeline) {
    std::printf("  %s epoch %d: val %s +/- %s, test %s +/- %s (best epoch %s)\n",
                row.mode.c_str(), row.epoch,
                format_double(row.mean_val).c_str(),
                format_double(row.sem_val).c_str(),
                format_double(row.mean_test).c_str(),
                format_double(row.sem_test).c_str(),
                format_double(row.best_epoch).c_str());
  }
}

constexpr const char* kReportSchemaNote =
    "Report files: CSV with '#'-prefixed doc lines and columns "
    "row_type,mode,grid_seconds,epoch,mean_val,sem_val,mean_test,sem_test,"
    "best_epoch, or JSON lines opened by a schema header record. Extension "
    ".jsonl/.ndjson selects JSON lines unless --format overrides.";

constexpr const char* kStoreSchemaNote =
    "Meta-dataset file: JSON lines; a header per dataset {dataset_id, "
    "token_size, sample_length, qa_length_ratio, vocab_size} followed by one "
    "record per (config, epoch) holding the config fields plus {dataset_id, "
    "epoch, val_score, test_score, cum_seconds}.";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grey-box finetuning pipeline optimizer: builds QA datasets "
               "from documents, meta-trains GP surrogates on stored runs, and "
               "tunes pipelines under a simulated time budget."};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  GenerateArgs generate_args;
  auto* generate = app.add_subcommand(
      "generate", "Generate a QA dataset from a plain-text document via the "
                  "teacher endpoint");
  generate->add_option("--input", generate_args.input,
                       "Plain-text document to generate from")
      ->required();
  generate->add_option("--out", generate_args.out, "Dataset file to write")
      ->required();
  generate->add_option("--dataset-id", generate_args.dataset_id,
                       "Dataset identifier (default: input file stem)");
  generate->add_option("--title", generate_args.title,
                       "Document title (default: first non-empty input line)");
  generate->add_option("--meta-out", generate_args.meta_out,
                       "Also write the dataset's meta-features record here");
  generate->add_option("--mode", generate_args.mode,
                       "Teacher transport: replay answers from fixtures, "
                       "record forwards and saves fixtures, live forwards")
      ->check(CLI::IsMember({"replay", "record", "live"}))
      ->capture_default_str();
  generate->add_option("--fixtures", generate_args.fixtures,
                       "Fixture file (read in replay mode, written in record "
                       "mode)");
  generate->add_option("--endpoint", generate_args.endpoint,
                       "Chat-completion base URL (default: $TEACHER_BASE_URL; "
                       "token from $TEACHER_API_TOKEN)");
  generate->add_option("--seed", generate_args.seed,
                       "Seed for the per-fact 10/1/1 split")
      ->capture_default_str();
  generate->footer(
      "Dataset file: JSON lines; header {dataset_id, key_topic, title, "
      "tokenizer_id}, then {dataset_id, split, fact_id, question, answer} per "
      "pair. Meta-features file: one record per dataset {dataset_id, "
      "token_size, sample_length, qa_length_ratio, vocab_size}.");
  generate->callback([&] { cmd_generate(generate_args); });

  MetaFeaturesArgs metafeatures_args;
  auto* metafeatures = app.add_subcommand(
      "metafeatures", "Compute meta-features of generated dataset files");
  metafeatures->add_option("--dataset", metafeatures_args.datasets,
                           "Dataset file (repeatable)")
      ->required();
  metafeatures->add_option("--out", metafeatures_args.out,
                           "Meta-features file to write (default: print one "
                           "record per line)");
  metafeatures->footer(
      "Meta-features are computed over the training split with the bundled "
      "tokenizer; vocab_size is reported to the nearest 10.");
  metafeatures->callback([&] { cmd_metafeatures(metafeatures_args); });

  MetatrainArgs metatrain_args;
  auto* metatrain = app.add_subcommand(
      "metatrain", "Meta-train the score and cost surrogates on a "
                   "meta-dataset of stored runs");
  metatrain->add_option("--meta-dataset", metatrain_args.meta_dataset,
                        "Meta-dataset file of stored runs")
      ->required();
  metatrain->add_option("--out", metatrain_args.out_dir,
                        "Directory for score.model, cost.model, manifest.json")
      ->required();
  metatrain->add_option("--row-cap", metatrain_args.row_cap,
                        "Training rows kept after stratified subsampling")
      ->capture_default_str();
  metatrain->add_option("--seed", metatrain_args.seed,
                        "Seed for subsampling and hyperparameter starts")
      ->capture_default_str();
  metatrain->footer(
      std::string("Model files are binary GP snapshots reloadable by "
                  "optimize. manifest.json records {seed, row_cap, "
                  "expanded_rows, score_rows, cost_rows, norm_stats_digest}. ") +
      kStoreSchemaNote);
  metatrain->callback([&] { cmd_metatrain(metatrain_args); });

  OptimizeArgs optimize_args;
  auto* optimize = app.add_subcommand(
      "optimize", "Run one tuning session against a replayed or external "
                  "runner");
  optimize->add_option("--meta-dataset", optimize_args.meta_dataset,
                       "Meta-dataset file; its stored curves answer each "
                       "epoch request (replay, the default)");
  optimize->add_option("--dataset", optimize_args.dataset,
                       "Target dataset id")
      ->required();
  optimize->add_option("--mode", optimize_args.mode,
                       "transfer_only, refit, random, sh_mutate, or "
                       "default_only")
      ->capture_default_str();
  optimize->add_option("--budget-seconds", optimize_args.budget_seconds,
                       "Simulated time budget (consumes stored seconds, not "
                       "wall clock)")
      ->capture_default_str();
  optimize->add_option("--seed", optimize_args.seed, "Run seed")
      ->capture_default_str();
  optimize->add_option("--models", optimize_args.models_dir,
                       "Model directory from metatrain (required for "
                       "transfer_only and refit)");
  optimize->add_option("--out", optimize_args.out,
                       "Trajectory file to write (JSON lines)");
  optimize->add_option("--runner-cmd", optimize_args.runner_cmd,
                       "Evaluate epochs via this command instead of replay; "
                       "request on its stdin, reply on its stdout");
  optimize->add_option("--meta-features", optimize_args.meta_features_path,
                       "Meta-features file naming the target dataset "
                       "(required with --runner-cmd)");
  optimize->add_option("--pool-size", optimize_args.pool_size,
                       "Sampled candidate pool size with --runner-cmd "
                       "(replay uses the stored configs)")
      ->capture_default_str();
  optimize->footer(
      "Trajectory file: header {dataset_id, mode, budget_seconds, seed}, then "
      "one record per epoch {spent_seconds, candidate, epoch, val_score, "
      "test_score, incumbent_val, incumbent_test}. Runner protocol: request "
      "{config fields..., epoch} on stdin, reply {val_score, test_score, "
      "seconds} on stdout.");
  optimize->callback([&] { cmd_optimize(optimize_args); });

  BenchmarkArgs benchmark_args;
  auto* benchmark = app.add_subcommand(
      "benchmark", "Leave-one-dataset-out comparison of tuning modes over a "
                   "meta-dataset");
  benchmark->add_option("--meta-dataset", benchmark_args.meta_dataset,
                        "Meta-dataset file of stored runs")
      ->required();
  benchmark->add_option("--modes", benchmark_args.modes,
                        "Comma-separated tuning modes")
      ->capture_default_str();
  benchmark->add_option("--budget-seconds", benchmark_args.budget_seconds,
                        "Simulated time budget per run")
      ->capture_default_str();
  benchmark->add_option("--seeds", benchmark_args.seeds,
                        "Comma-separated run seeds")
      ->capture_default_str();
  benchmark->add_option("--out", benchmark_args.out, "Report file to write")
      ->required();
  benchmark->add_option("--format", benchmark_args.format,
                        "Report format (default: by extension)")
      ->check(CLI::IsMember({"csv", "jsonl"}));
  benchmark->add_option("--row-cap", benchmark_args.row_cap,
                        "Row cap of the per-fold surrogate fits")
      ->capture_default_str();
  benchmark->add_option("--fit-seed", benchmark_args.fit_seed,
                        "Base seed of the per-fold surrogate fits")
      ->capture_default_str();
  benchmark->add_option("--grid-points", benchmark_args.grid_points,
                        "Time-grid resolution of the report")
      ->capture_default_str();
  benchmark->footer(std::string(kReportSchemaNote) + " " + kStoreSchemaNote);
  benchmark->callback([&] { cmd_benchmark(benchmark_args); });

  SynthArgs synth_args;
  auto* synth = app.add_subcommand(
      "synth", "Write a synthetic meta-dataset with a planted transfer "
               "signal");
  synth->add_option("--out", synth_args.out, "Meta-dataset file to write")
      ->required();
  synth->add_option("--datasets", synth_args.datasets, "Number of datasets")
      ->capture_default_str();
  synth->add_option("--configs", synth_args.configs,
                    "Configs per dataset (shared grid, default pipeline "
                    "first)")
      ->capture_default_str();
  synth->add_option("--seed", synth_args.seed, "Generator seed")
      ->capture_default_str();
  synth->footer(kStoreSchemaNote);
  synth->callback([&] { cmd_synth(synth_args); });

  ReportArgs report_args;
  auto* report = app.add_subcommand(
      "report", "Summarize an emitted benchmark report");
  report->add_option("--in", report_args.in, "Report file to read")
      ->required();
  report->add_option("--format", report_args.format,
                     "Report format (default: by extension)")
      ->check(CLI::IsMember({"csv", "jsonl"}));
  report->footer(kReportSchemaNote);
  report->callback([&] { cmd_report(report_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const TeacherError& e) {
    std::fprintf(stderr, "teacher error: %s\n", e.what());
    return 3;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  }
  return 0;
}
