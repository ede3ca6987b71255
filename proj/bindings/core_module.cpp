#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "greytune/bench.hpp"
#include "greytune/corpus.hpp"
#include "greytune/searchspace.hpp"
#include "greytune/surrogate.hpp"
#include "greytune/teacher.hpp"
#include "greytune/tuner.hpp"

namespace py = pybind11;
using namespace greytune;

namespace {

PipelineConfig config_from_dict(const py::dict& d) {
  json rec = json::object();
  for (auto item : d) {
    const std::string key = py::cast<std::string>(item.first);
    const py::handle v = item.second;
    if (py::isinstance<py::bool_>(v)) {
      rec[key] = py::cast<bool>(v);
    } else if (py::isinstance<py::int_>(v)) {
      rec[key] = py::cast<long long>(v);
    } else if (py::isinstance<py::float_>(v)) {
      rec[key] = py::cast<double>(v);
    } else if (v.is_none()) {
      rec[key] = nullptr;
    } else {
      rec[key] = py::cast<std::string>(py::str(v));
    }
  }
  return parse_config(rec).config;
}

py::dict config_to_dict(const PipelineConfig& c) {
  const json rec = serialize_config(c);
  py::dict d;
  for (const auto& [key, value] : rec.items()) {
    if (value.is_string()) {
      d[key.c_str()] = value.get<std::string>();
    } else if (value.is_boolean()) {
      d[key.c_str()] = value.get<bool>();
    } else if (value.is_number_integer()) {
      d[key.c_str()] = value.get<long long>();
    } else {
      d[key.c_str()] = value.get<double>();
    }
  }
  return d;
}

MetaFeatures meta_from_dict(const py::dict& d) {
  for (const char* key :
       {"token_size", "sample_length", "qa_length_ratio", "vocab_size"}) {
    if (!d.contains(key)) {
      throw DataError(std::string("meta-features dict lacks \"") + key + "\"");
    }
  }
  MetaFeatures mf;
  mf.token_size = py::cast<std::int64_t>(d["token_size"]);
  mf.sample_length = py::cast<double>(d["sample_length"]);
  mf.qa_length_ratio = py::cast<double>(d["qa_length_ratio"]);
  mf.vocab_size = py::cast<std::int64_t>(d["vocab_size"]);
  return mf;
}

py::dict meta_to_dict(const MetaFeatures& mf) {
  py::dict d;
  d["token_size"] = mf.token_size;
  d["sample_length"] = mf.sample_length;
  d["qa_length_ratio"] = mf.qa_length_ratio;
  d["vocab_size"] = mf.vocab_size;
  return d;
}

ChatExchange exchange_from_dict(const py::dict& d) {
  ChatExchange ex;
  ex.system = py::cast<std::string>(d["system"]);
  ex.user = py::cast<std::string>(d["user"]);
  if (d.contains("max_new_tokens")) {
    ex.max_new_tokens = py::cast<int>(d["max_new_tokens"]);
  }
  if (d.contains("parallel_hint")) {
    ex.parallel_hint = py::cast<int>(d["parallel_hint"]);
  }
  return ex;
}

py::dict event_to_dict(const TrajectoryEvent& e) {
  py::dict d;
  d["spent_seconds"] = e.spent_seconds;
  d["candidate"] = e.candidate;
  d["epoch"] = e.epoch;
  d["val_score"] = e.val_score;
  d["test_score"] = e.test_score;
  d["incumbent_val"] = e.incumbent_val;
  d["incumbent_test"] = e.incumbent_test;
  return d;
}

py::dict grid_row_to_dict(const GridRow& r) {
  py::dict d;
  d["mode"] = r.mode;
  d["grid_seconds"] = r.grid_seconds;
  d["mean_val"] = r.mean_val;
  d["sem_val"] = r.sem_val;
  d["mean_test"] = r.mean_test;
  d["sem_test"] = r.sem_test;
  return d;
}

py::dict best_row_to_dict(const BestPipelineRow& r) {
  py::dict d;
  d["mode"] = r.mode;
  d["epoch"] = r.epoch;
  d["mean_val"] = r.mean_val;
  d["sem_val"] = r.sem_val;
  d["mean_test"] = r.mean_test;
  d["sem_test"] = r.sem_test;
  d["best_epoch"] = r.best_epoch;
  return d;
}

PromptKind prompt_kind_from_string(const std::string& kind) {
  if (kind == "facts") return PromptKind::Facts;
  if (kind == "qa") return PromptKind::Qa;
  if (kind == "key_topic") return PromptKind::KeyTopic;
  if (kind == "grading") return PromptKind::Grading;
  throw DataError("unknown prompt kind: " + kind);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Grey-box pipeline tuning core";

  py::register_exception<UsageError>(m, "UsageError");
  py::register_exception<DataError>(m, "DataError");
  py::register_exception<TeacherError>(m, "TeacherError");

  // Search space.
  m.def("default_config", [] { return config_to_dict(default_config()); });
  m.def(
      "sample_config",
      [](std::uint64_t seed) {
        Rng rng(seed);
        return config_to_dict(sample_config(rng));
      },
      py::arg("seed"));
  m.def(
      "validate_config",
      [](const py::dict& d) { return validate(config_from_dict(d)); },
      py::arg("config"));
  m.def(
      "encode_config",
      [](const py::dict& d) {
        const EncodedConfig e = encode(config_from_dict(d));
        return std::vector<double>(e.begin(), e.end());
      },
      py::arg("config"));
  m.def(
      "mutate_config",
      [](const py::dict& d, std::uint64_t seed) {
        Rng rng(seed);
        return config_to_dict(mutate(config_from_dict(d), rng));
      },
      py::arg("config"), py::arg("seed"));

  // Corpus.
  m.def("tokenize",
        [](const std::string& text) { return tokenize(text); },
        py::arg("text"));
  m.def("chunk_text",
        [](const std::string& document, std::int64_t target_tokens) {
          return chunk_text(document, target_tokens);
        },
        py::arg("document"), py::arg("target_tokens") = 2000);
  m.def("augmentation_count", &augmentation_count, py::arg("ltrain"),
        py::arg("batch"), py::arg("grad_accum"));
  m.def(
      "dataset_meta_features",
      [](const std::string& dataset_path) {
        return meta_to_dict(compute_meta_features(load_dataset(dataset_path)));
      },
      py::arg("dataset_path"));

  // Teacher.
  m.def(
      "render_prompt",
      [](const std::string& kind,
         const std::map<std::string, std::string>& bindings) {
        const ChatExchange ex =
            render_prompt(prompt_kind_from_string(kind), bindings);
        py::dict d;
        d["system"] = ex.system;
        d["user"] = ex.user;
        d["max_new_tokens"] = ex.max_new_tokens;
        d["parallel_hint"] = ex.parallel_hint;
        return d;
      },
      py::arg("kind"), py::arg("bindings"));
  m.def("select_eval_indices", &select_eval_indices, py::arg("dataset_id"),
        py::arg("split"), py::arg("split_size"), py::arg("eval_seed"));
  m.def(
      "write_fixtures",
      [](const std::string& path,
         const std::vector<std::pair<py::dict, std::string>>& entries) {
        std::vector<std::pair<ChatExchange, json>> out;
        out.reserve(entries.size());
        for (const auto& [exchange, content] : entries) {
          out.emplace_back(exchange_from_dict(exchange),
                           make_chat_response(content));
        }
        write_fixture_file(path, out);
      },
      py::arg("path"), py::arg("entries"));
  m.def(
      "generate_dataset",
      [](const std::string& document, const std::string& dataset_id,
         const std::string& title, const std::string& fixtures_path,
         const std::string& out_path, std::uint64_t seed) {
        TeacherEndpoint endpoint;
        endpoint.mode = TeacherMode::Replay;
        endpoint.fixture_path = fixtures_path;
        TeacherClient client(endpoint);
        GenerateStats stats;
        const QaDataset ds = generate_qa_dataset(document, dataset_id, title,
                                                 client, seed, &stats);
        save_dataset(out_path, ds);
        py::dict d;
        d["key_topic"] = ds.key_topic;
        d["fragments"] = stats.fragments;
        d["facts_total"] = stats.facts_total;
        d["facts_skipped"] = stats.facts_skipped;
        d["train_pairs"] = ds.train.size();
        d["val_pairs"] = ds.val.size();
        d["test_pairs"] = ds.test.size();
        return d;
      },
      py::arg("document"), py::arg("dataset_id"), py::arg("title"),
      py::arg("fixtures_path"), py::arg("out_path"), py::arg("seed") = 0);

  // Surrogates.
  py::class_<GpModel>(m, "Surrogate")
      .def_static("load",
                  [](const std::string& path) { return load_model(path); },
                  py::arg("path"))
      .def_property_readonly("target_kind",
                             [](const GpModel& g) {
                               return g.target_kind == TargetKind::Score
                                          ? "score"
                                          : "log_cost";
                             })
      .def_property_readonly("rows",
                             [](const GpModel& g) { return g.rows(); })
      .def(
          "predict",
          [](const GpModel& g, const py::dict& config, const py::dict& meta,
             int epoch) {
            const SurrogateInput x = make_surrogate_input(
                g, encode(config_from_dict(config)), meta_from_dict(meta),
                epoch);
            const Prediction p = predict(g, x);
            return py::make_tuple(p.mean, p.variance);
          },
          py::arg("config"), py::arg("meta_features"), py::arg("epoch"));
  m.def(
      "meta_train",
      [](const std::string& store_path, const std::string& out_dir,
         int row_cap, std::uint64_t seed) {
        const TabularStore store = load_meta_dataset(store_path);
        FitOptions opts;
        opts.row_cap = row_cap;
        opts.seed = seed;
        const GpModel score = meta_fit(store.records(), store.meta_features(),
                                       TargetKind::Score, opts);
        const GpModel cost = meta_fit(store.records(), store.meta_features(),
                                      TargetKind::LogCost, opts);
        std::filesystem::create_directories(out_dir);
        const std::filesystem::path dir(out_dir);
        save_model(score, dir / "score.model");
        save_model(cost, dir / "cost.model");
        py::dict d;
        d["score_rows"] = score.rows();
        d["cost_rows"] = cost.rows();
        d["expanded_rows"] = score.fit_info.rows_total;
        d["score_lml"] = score.fit_info.final_lml;
        d["cost_lml"] = cost.fit_info.final_lml;
        return d;
      },
      py::arg("store_path"), py::arg("out_dir"), py::arg("row_cap") = 4096,
      py::arg("seed") = 0);

  // Tuner.
  m.def("expected_improvement", &expected_improvement, py::arg("mean"),
        py::arg("variance"), py::arg("incumbent"));
  m.def(
      "optimize_replay",
      [](const std::string& store_path, const std::string& dataset,
         const std::string& mode, double budget_seconds, std::uint64_t seed,
         const std::string& models_dir) {
        const TunerMode tuner_mode = tuner_mode_from_string(mode);
        const bool guided = tuner_mode == TunerMode::TransferOnly ||
                            tuner_mode == TunerMode::Refit;
        GpModel score;
        GpModel cost;
        if (guided) {
          if (models_dir.empty()) {
            throw UsageError("mode " + mode + " needs models_dir");
          }
          const std::filesystem::path dir(models_dir);
          score = load_model(dir / "score.model");
          cost = load_model(dir / "cost.model");
        }
        const TabularStore store = load_meta_dataset(store_path);
        if (!store.has_dataset(dataset)) {
          throw DataError("unknown dataset " + dataset + " in " + store_path);
        }
        const std::vector<PipelineConfig> pool = store.configs_for(dataset);
        RunSpec spec;
        spec.mode = tuner_mode;
        spec.budget_seconds = budget_seconds;
        spec.seed = seed;
        spec.pool = &pool;
        ReplayRunner runner(store, dataset);
        const Trajectory trajectory =
            run(store.meta_features().at(dataset), runner, spec,
                guided ? &score : nullptr, guided ? &cost : nullptr);
        py::list events;
        for (const TrajectoryEvent& e : trajectory.events) {
          events.append(event_to_dict(e));
        }
        return events;
      },
      py::arg("store_path"), py::arg("dataset"), py::arg("mode"),
      py::arg("budget_seconds"), py::arg("seed") = 0,
      py::arg("models_dir") = "");

  // Benchmark.
  m.def(
      "synth_store",
      [](const std::string& out_path, int datasets, int configs,
         std::uint64_t seed) {
        const TabularStore store = synth_benchmark(datasets, configs, seed);
        save_meta_dataset(store, out_path);
        py::dict d;
        d["datasets"] = store.dataset_ids().size();
        d["records"] = store.records().size();
        return d;
      },
      py::arg("out_path"), py::arg("datasets") = 12, py::arg("configs") = 60,
      py::arg("seed") = 0);
  m.def(
      "benchmark_replay",
      [](const std::string& store_path, const std::vector<std::string>& modes,
         double budget_seconds, const std::vector<std::uint64_t>& seeds,
         int row_cap, std::uint64_t fit_seed, int grid_points) {
        std::vector<TunerMode> parsed;
        parsed.reserve(modes.size());
        for (const std::string& name : modes) {
          parsed.push_back(tuner_mode_from_string(name));
        }
        const TabularStore store = load_meta_dataset(store_path);
        BenchOptions options;
        options.grid_points = grid_points;
        options.fit.row_cap = row_cap;
        options.fit.seed = fit_seed;
        const BenchReport report =
            lodo_benchmark(store, parsed, budget_seconds, seeds, options);
        py::dict d;
        d["budget_seconds"] = report.budget_seconds;
        d["dataset_ids"] = report.dataset_ids;
        py::list grid;
        for (const GridRow& row : report.grid) {
          grid.append(grid_row_to_dict(row));
        }
        d["grid"] = grid;
        py::list best;
        for (const BestPipelineRow& row : report.best_pipeline) {
          best.append(best_row_to_dict(row));
        }
        d["best_pipeline"] = best;
        return d;
      },
      py::arg("store_path"), py::arg("modes"), py::arg("budget_seconds"),
      py::arg("seeds"), py::arg("row_cap") = 2048, py::arg("fit_seed") = 0,
      py::arg("grid_points") = kGridPoints);
}
