#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "greytune/surrogate.hpp"

using namespace greytune;

namespace {

FitOptions small_opts(std::uint64_t seed) {
  FitOptions opts;
  opts.hyperopt_cap = 96;
  opts.n_starts = 4;
  opts.ascend_top = 2;
  opts.max_iters = 8;
  opts.seed = seed;
  return opts;
}

// Random rows shaped like real surrogate inputs.
Eigen::MatrixXd random_inputs(int n, Rng& rng) {
  Eigen::MatrixXd X(n, kSurrogateDim);
  for (int i = 0; i < n; ++i) {
    const PipelineConfig c = sample_config(rng);
    const EncodedConfig e = encode(c);
    for (int j = 0; j < kEncodedDim; ++j) X(i, j) = e[j];
    for (int j = 0; j < 4; ++j) X(i, kEncodedDim + j) = rng.normal();
    X(i, kSurrogateDim - 1) = (1 + rng.index(10)) / 10.0;
  }
  return X;
}

Eigen::VectorXd one_input(Rng& rng) {
  return random_inputs(1, rng).row(0).transpose();
}

Eigen::VectorXd smooth_targets(const Eigen::MatrixXd& X, Rng& rng) {
  Eigen::VectorXd y(X.rows());
  for (int i = 0; i < X.rows(); ++i) {
    y[i] = 0.4 + 0.2 * std::sin(X(i, 2)) + 0.1 * X(i, kSurrogateDim - 1) +
           0.05 * std::tanh(X(i, kEncodedDim)) + 0.01 * rng.normal();
  }
  return y;
}

GpModel fitted_toy(std::uint64_t seed, int n = 60) {
  Rng rng(seed);
  const Eigen::MatrixXd X = random_inputs(n, rng);
  const Eigen::VectorXd y = smooth_targets(X, rng);
  return fit_gp(X, y, TargetKind::Score, small_opts(seed));
}

// Posterior by explicit dense inverse, sharing nothing with the model's
// factorization path.
Prediction dense_reference(const GpModel& m, const Eigen::VectorXd& row) {
  Eigen::MatrixXd K =
      matern52(m.X, m.X, m.log_lengthscale, m.log_signal_var);
  K.diagonal().array() += std::exp(m.log_noise_var) + kJitter;
  const Eigen::MatrixXd Kinv = K.inverse();
  const Eigen::VectorXd k =
      matern52(m.X, row.transpose(), m.log_lengthscale, m.log_signal_var)
          .col(0);
  Prediction p;
  p.mean = m.target_stats.mean + m.target_stats.scale * k.dot(Kinv * m.y);
  const double var =
      std::exp(m.log_signal_var) - k.dot(Kinv * k);
  p.variance =
      m.target_stats.scale * m.target_stats.scale * std::max(0.0, var);
  return p;
}

std::vector<RunRecord> toy_records(int n_datasets, int n_configs,
                                   int epochs, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<RunRecord> records;
  for (int d = 0; d < n_datasets; ++d) {
    for (int c = 0; c < n_configs; ++c) {
      RunRecord r;
      r.dataset_id = "ds" + std::to_string(d);
      r.config = sample_config(rng);
      double cum = 0.0;
      for (int e = 1; e <= epochs; ++e) {
        cum += 50.0 + 10.0 * rng.real01();
        const double s =
            std::clamp(0.3 + 0.05 * e + 0.02 * rng.normal(), 0.0, 1.0);
        r.curve.push_back({e, s, s, cum});
      }
      records.push_back(std::move(r));
    }
  }
  return records;
}

std::map<std::string, MetaFeatures> toy_meta(int n_datasets) {
  std::map<std::string, MetaFeatures> meta;
  for (int d = 0; d < n_datasets; ++d) {
    MetaFeatures f;
    f.token_size = 1000 + 700 * d;
    f.sample_length = 80.0 + 15.0 * d;
    f.qa_length_ratio = 0.8 + 0.1 * d;
    f.vocab_size = 100 + 20 * d;
    meta["ds" + std::to_string(d)] = f;
  }
  return meta;
}

}  // namespace

TEST_CASE("defaults match the fitting contract") {
  const FitOptions opts;
  CHECK(opts.row_cap == 4096);
  CHECK(opts.n_starts == 8);
  CHECK(kSurrogateDim == 24);
}

TEST_CASE("posterior matches a dense-inverse reference at 30 probes") {
  const GpModel m = fitted_toy(11);
  Rng rng(99);
  for (int t = 0; t < 30; ++t) {
    const Eigen::VectorXd probe = one_input(rng);
    const Prediction fast = predict_row(m, probe);
    const Prediction slow = dense_reference(m, probe);
    CHECK(std::abs(fast.mean - slow.mean) < 1e-8);
    CHECK(std::abs(fast.variance - slow.variance) < 1e-8);
  }
}

TEST_CASE("factorized marginal likelihood matches the direct formula") {
  const GpModel m = fitted_toy(12, 20);
  Eigen::MatrixXd K = matern52(m.X, m.X, m.log_lengthscale, m.log_signal_var);
  K.diagonal().array() += std::exp(m.log_noise_var) + kJitter;
  const double direct = -0.5 * m.y.dot(K.inverse() * m.y) -
                        0.5 * std::log(K.determinant()) -
                        0.5 * m.rows() * std::log(2.0 * M_PI);
  CHECK(std::abs(log_marginal_likelihood(m) - direct) < 1e-8);
}

TEST_CASE("analytic gradient agrees with finite differences") {
  Rng rng(5);
  const Eigen::MatrixXd X = random_inputs(25, rng);
  Eigen::VectorXd y = smooth_targets(X, rng);
  y = (y.array() - y.mean()).matrix();

  Eigen::VectorXd theta(kSurrogateDim + 2);
  for (int j = 0; j < kSurrogateDim; ++j) theta[j] = 0.3 * rng.normal();
  theta[kSurrogateDim] = -0.5;
  theta[kSurrogateDim + 1] = std::log(0.05);

  const auto [lml, grad] = lml_with_gradient(X, y, theta);
  CHECK(std::isfinite(lml));
  const double h = 1e-5;
  for (const int j : {0, 2, 7, kEncodedDim, kSurrogateDim - 1, kSurrogateDim,
                      kSurrogateDim + 1}) {
    Eigen::VectorXd up = theta, dn = theta;
    up[j] += h;
    dn[j] -= h;
    const double fd = (lml_with_gradient(X, y, up).first -
                       lml_with_gradient(X, y, dn).first) /
                      (2.0 * h);
    CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
  }
}

TEST_CASE("fitting keeps the best of the seeded starts") {
  // Three curves whose targets are collinear in the learning-rate entry.
  std::vector<RunRecord> records;
  for (const double lr : {-6.0, -5.5, -5.0}) {
    RunRecord r;
    r.dataset_id = "ds0";
    r.config = default_config();
    r.config.log10_lr = lr;
    r.curve.push_back({1, 0.5 + 0.05 * (lr + 6.0), 0.5, 100.0});
    records.push_back(std::move(r));
  }
  const GpModel m =
      meta_fit(records, toy_meta(1), TargetKind::Score, small_opts(3));
  REQUIRE(m.fit_info.start_lmls.size() == 4);
  for (const double start : m.fit_info.start_lmls) {
    CHECK(m.fit_info.final_lml >= start - 1e-12);
  }
}

TEST_CASE("same seed gives byte-identical models") {
  const std::vector<RunRecord> records = toy_records(3, 6, 5, 21);
  const auto meta = toy_meta(3);
  const GpModel a = meta_fit(records, meta, TargetKind::Score, small_opts(77));
  const GpModel b = meta_fit(records, meta, TargetKind::Score, small_opts(77));
  CHECK(serialize_model(a) == serialize_model(b));
  const GpModel c = meta_fit(records, meta, TargetKind::Score, small_opts(78));
  CHECK(serialize_model(a) != serialize_model(c));
}

TEST_CASE("meta-feature z-scoring recovers mean zero and unit scale") {
  const std::vector<RunRecord> records = toy_records(5, 4, 3, 33);
  const auto meta = toy_meta(5);
  const GpModel m = meta_fit(records, meta, TargetKind::Score, small_opts(1));

  std::array<double, 4> sum{}, sumsq{};
  for (const auto& [id, f] : meta) {
    const std::array<double, 4> raw = {
        static_cast<double>(f.token_size), f.sample_length, f.qa_length_ratio,
        static_cast<double>(f.vocab_size)};
    for (int j = 0; j < 4; ++j) {
      const double z = (raw[j] - m.meta_stats.mean[j]) / m.meta_stats.scale[j];
      sum[j] += z;
      sumsq[j] += z * z;
    }
  }
  for (int j = 0; j < 4; ++j) {
    CHECK(std::abs(sum[j] / 5.0) < 1e-10);
    CHECK(std::abs(std::sqrt(sumsq[j] / 5.0) - 1.0) < 1e-10);
  }
}

TEST_CASE("row expansion and the stratified cap") {
  SUBCASE("one row per observed epoch") {
    const std::vector<RunRecord> records = toy_records(2, 3, 7, 8);
    const GpModel m =
        meta_fit(records, toy_meta(2), TargetKind::Score, small_opts(2));
    CHECK(m.rows() == 2 * 3 * 7);
    CHECK(m.fit_info.rows_total == 2 * 3 * 7);
  }

  SUBCASE("cap subsamples uniformly per dataset") {
    FitOptions opts = small_opts(4);
    opts.row_cap = 100;
    // 100 + 50 + 50 rows -> quotas 50 / 25 / 25.
    std::vector<RunRecord> records;
    auto add = [&](const std::string& id, int configs, int epochs,
                   std::uint64_t seed) {
      for (const RunRecord& r : toy_records(1, configs, epochs, seed)) {
        RunRecord copy = r;
        copy.dataset_id = id;
        records.push_back(copy);
      }
    };
    add("a", 10, 10, 1);
    add("b", 10, 5, 2);
    add("c", 5, 10, 3);
    std::map<std::string, MetaFeatures> meta;
    meta["a"] = toy_meta(3).at("ds0");
    meta["b"] = toy_meta(3).at("ds1");
    meta["c"] = toy_meta(3).at("ds2");

    const GpModel m = meta_fit(records, meta, TargetKind::Score, opts);
    CHECK(m.rows() == 100);
    CHECK(m.fit_info.rows_total == 200);

    // Count kept rows per dataset by their distinct z-scored meta columns.
    std::map<double, int> per_dataset;
    for (int i = 0; i < m.rows(); ++i) per_dataset[m.X(i, kEncodedDim)]++;
    REQUIRE(per_dataset.size() == 3);
    std::multiset<int> counts;
    for (const auto& [z, c] : per_dataset) counts.insert(c);
    CHECK(counts == std::multiset<int>{25, 25, 50});
  }
}

TEST_CASE("meta_fit rejects bad inputs") {
  const auto meta = toy_meta(2);
  CHECK_THROWS_AS(meta_fit({}, meta, TargetKind::Score, small_opts(0)),
                  DataError);

  std::vector<RunRecord> records = toy_records(2, 2, 3, 1);
  records[0].dataset_id = "unknown";
  try {
    meta_fit(records, meta, TargetKind::Score, small_opts(0));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("unknown") != std::string::npos);
  }

  std::vector<RunRecord> bad = toy_records(1, 1, 3, 2);
  bad[0].curve[1].val_score = std::nan("");
  try {
    meta_fit(bad, toy_meta(1), TargetKind::Score, small_opts(0));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("ds0") != std::string::npos);
  }

  std::vector<RunRecord> tiny = toy_records(1, 1, 1, 3);
  CHECK_THROWS_AS(meta_fit(tiny, toy_meta(1), TargetKind::Score, small_opts(0)),
                  DataError);
}

TEST_CASE("interpolation and prior reversion") {
  const GpModel base = fitted_toy(44, 40);
  Eigen::VectorXd ls = Eigen::VectorXd::Zero(kSurrogateDim);
  const GpModel m = with_hyperparameters(base, ls, 0.0, std::log(1e-10));

  for (const int i : {0, 7, 39}) {
    const double natural =
        m.target_stats.mean + m.target_stats.scale * m.y[i];
    const Prediction p = predict_row(m, m.X.row(i).transpose());
    CHECK(std::abs(p.mean - natural) < 1e-6);
  }

  Eigen::VectorXd far = m.X.row(0).transpose();
  far.array() += 30.0;
  const Prediction p = predict_row(m, far);
  const double prior = m.target_stats.scale * m.target_stats.scale * 1.0;
  CHECK(std::abs(p.variance - prior) < 1e-3 * prior);
}

TEST_CASE("log-cost models work in seconds") {
  const std::vector<RunRecord> records = toy_records(3, 8, 10, 55);
  const GpModel m =
      meta_fit(records, toy_meta(3), TargetKind::LogCost, small_opts(9));
  const SurrogateInput x =
      make_surrogate_input(m, encode(records[0].config), toy_meta(3).at("ds0"),
                           10);
  const Prediction p = predict(m, x);
  // Ten epochs at ~50-60s each; the prediction lives on the log scale.
  const double seconds = cost_seconds(p);
  CHECK(seconds > 300.0);
  CHECK(seconds < 900.0);
}

TEST_CASE("make_surrogate_input applies stored stats and checks the epoch") {
  const std::vector<RunRecord> records = toy_records(2, 3, 4, 13);
  const auto meta = toy_meta(2);
  const GpModel m = meta_fit(records, meta, TargetKind::Score, small_opts(5));
  const SurrogateInput x =
      make_surrogate_input(m, encode(default_config()), meta.at("ds0"), 3);
  CHECK(x.fidelity_norm == doctest::Approx(0.3));
  for (int j = 0; j < 4; ++j) CHECK(std::isfinite(x.meta_features_z[j]));
  CHECK_THROWS_AS(
      make_surrogate_input(m, encode(default_config()), meta.at("ds0"), 0),
      DataError);
  CHECK_THROWS_AS(
      make_surrogate_input(m, encode(default_config()), meta.at("ds0"), 11),
      DataError);
}

TEST_CASE("predict validates dimensions") {
  const GpModel m = fitted_toy(3, 30);
  CHECK_THROWS_AS(predict_row(m, Eigen::VectorXd::Zero(5)), DataError);

  Rng rng(1);
  const Eigen::MatrixXd X = (Eigen::MatrixXd(3, 2) << 0, 0, 1, 0, 0, 1).finished();
  const Eigen::VectorXd y = (Eigen::VectorXd(3) << 0.1, 0.2, 0.3).finished();
  const GpModel toy2d = fit_gp(X, y, TargetKind::Score, small_opts(0));
  SurrogateInput full{};
  full.encoded_config = encode(default_config());
  full.fidelity_norm = 0.5;
  CHECK_THROWS_AS(predict(toy2d, full), DataError);
}

TEST_CASE("batch prediction equals pointwise prediction") {
  const std::vector<RunRecord> records = toy_records(3, 5, 6, 71);
  const auto meta = toy_meta(3);
  const GpModel m = meta_fit(records, meta, TargetKind::Score, small_opts(6));
  std::vector<SurrogateInput> xs;
  Rng rng(2);
  for (int i = 0; i < 25; ++i) {
    xs.push_back(make_surrogate_input(
        m, encode(sample_config(rng)),
        meta.at("ds" + std::to_string(rng.index(3))), 1 + (int)rng.index(10)));
  }
  const std::vector<Prediction> batch = predict_batch(m, xs);
  REQUIRE(batch.size() == xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Prediction p = predict(m, xs[i]);
    CHECK(std::abs(batch[i].mean - p.mean) < 1e-10);
    CHECK(std::abs(batch[i].variance - p.variance) < 1e-10);
  }
}

TEST_CASE("prediction is immutable state") {
  const GpModel m = fitted_toy(87, 25);
  const std::string before = serialize_model(m);
  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    predict_row(m, one_input(rng));
  }
  CHECK(serialize_model(m) == before);
}

TEST_CASE("refit appends rows without touching the input model") {
  const std::vector<RunRecord> records = toy_records(3, 6, 5, 91);
  const auto meta = toy_meta(3);
  const GpModel m = meta_fit(records, meta, TargetKind::Score, small_opts(7));
  const std::string before = serialize_model(m);

  Rng rng(4);
  std::vector<std::pair<SurrogateInput, double>> rows;
  for (int i = 0; i < 3; ++i) {
    rows.push_back({make_surrogate_input(m, encode(sample_config(rng)),
                                         meta.at("ds0"), 1 + (int)rng.index(10)),
                    0.4 + 0.1 * rng.real01()});
  }
  const GpModel next = refit_with(m, rows, 100);
  CHECK(serialize_model(m) == before);
  CHECK(next.rows() == m.rows() + 3);
  CHECK(next.appended_rows == 3);

  SUBCASE("appended factorization still reconstructs the kernel") {
    Eigen::MatrixXd K = matern52(next.X, next.X, next.log_lengthscale,
                                 next.log_signal_var);
    K.diagonal().array() += std::exp(next.log_noise_var) + kJitter;
    const Eigen::MatrixXd L = next.chol;
    const double err = (L * L.transpose() - K).norm() / K.norm();
    CHECK(err < 1e-8);
  }

  SUBCASE("empty append is the identity") {
    const GpModel same = refit_with(m, {}, 100);
    Rng prng(5);
    for (int i = 0; i < 5; ++i) {
      const Eigen::VectorXd probe = one_input(prng);
      const Prediction a = predict_row(m, probe);
      const Prediction b = predict_row(same, probe);
      CHECK(a.mean == b.mean);
      CHECK(a.variance == b.variance);
    }
  }
}

TEST_CASE("refit pulls predictions toward appended targets") {
  const GpModel base = fitted_toy(14, 30);
  const GpModel quiet = with_hyperparameters(
      base, base.log_lengthscale, base.log_signal_var, std::log(1e-9));

  Rng rng(6);
  Eigen::VectorXd probe = one_input(rng);
  SurrogateInput x{};
  for (int j = 0; j < kEncodedDim; ++j) x.encoded_config[j] = probe[j];
  for (int j = 0; j < 4; ++j) x.meta_features_z[j] = probe[kEncodedDim + j];
  x.fidelity_norm = probe[kSurrogateDim - 1];

  const double target = 0.77;
  const GpModel next = refit_with(quiet, {{x, target}}, 100);
  CHECK(std::abs(predict_row(next, probe).mean - target) < 1e-4);
}

TEST_CASE("appending rows never increases posterior variance") {
  const GpModel m = fitted_toy(15, 30);
  Rng rng(7);
  std::vector<Eigen::VectorXd> probes;
  for (int i = 0; i < 20; ++i) probes.push_back(one_input(rng));

  std::vector<std::pair<SurrogateInput, double>> rows;
  for (int i = 0; i < 4; ++i) {
    const Eigen::VectorXd r = one_input(rng);
    SurrogateInput x{};
    for (int j = 0; j < kEncodedDim; ++j) x.encoded_config[j] = r[j];
    for (int j = 0; j < 4; ++j) x.meta_features_z[j] = r[kEncodedDim + j];
    x.fidelity_norm = r[kSurrogateDim - 1];
    rows.push_back({x, 0.5});
  }
  const GpModel next = refit_with(m, rows, 1000);
  for (const auto& probe : probes) {
    CHECK(predict_row(next, probe).variance <=
          predict_row(m, probe).variance + 1e-9);
  }
}

TEST_CASE("refit re-tunes hyperparameters on schedule") {
  const GpModel m = fitted_toy(16, 25);
  Rng rng(8);
  auto make_row = [&] {
    const Eigen::VectorXd r = one_input(rng);
    SurrogateInput x{};
    for (int j = 0; j < kEncodedDim; ++j) x.encoded_config[j] = r[j];
    for (int j = 0; j < 4; ++j) x.meta_features_z[j] = r[kEncodedDim + j];
    x.fidelity_norm = r[kSurrogateDim - 1];
    return std::pair<SurrogateInput, double>{x, 0.4 + 0.2 * rng.real01()};
  };

  // Below the threshold the hyperparameters are reused bit-for-bit.
  GpModel cur = m;
  for (int i = 0; i < 9; ++i) cur = refit_with(cur, {make_row()}, 10);
  CHECK(cur.appended_rows == 9);
  CHECK((cur.log_lengthscale.array() == m.log_lengthscale.array()).all());
  CHECK(cur.log_signal_var == m.log_signal_var);
  CHECK(cur.log_noise_var == m.log_noise_var);

  // The tenth appended row crosses the multiple and re-tunes.
  const GpModel tuned = refit_with(cur, {make_row()}, 10);
  CHECK(tuned.appended_rows == 10);
  CHECK(std::isfinite(log_marginal_likelihood(tuned)));
  Rng prng(9);
  const Prediction p = predict_row(tuned, one_input(prng));
  CHECK(std::isfinite(p.mean));
  CHECK(p.variance >= 0.0);

  CHECK_THROWS_AS(refit_with(m, {make_row()}, 0), DataError);
}

TEST_CASE("log-cost refit rejects non-positive seconds") {
  const std::vector<RunRecord> records = toy_records(2, 4, 4, 31);
  const auto meta = toy_meta(2);
  const GpModel m = meta_fit(records, meta, TargetKind::LogCost, small_opts(8));
  const SurrogateInput x =
      make_surrogate_input(m, encode(default_config()), meta.at("ds0"), 1);
  CHECK_THROWS_AS(refit_with(m, {{x, -5.0}}, 10), DataError);
  CHECK_NOTHROW(refit_with(m, {{x, 120.0}}, 10));
}

TEST_CASE("model files round-trip bit-for-bit") {
  const auto dir = std::filesystem::temp_directory_path() / "greytune_tests";
  std::filesystem::create_directories(dir);
  const auto path = dir / "model.bin";

  const std::vector<RunRecord> records = toy_records(3, 5, 6, 61);
  const GpModel m =
      meta_fit(records, toy_meta(3), TargetKind::Score, small_opts(10));
  save_model(m, path);
  const GpModel loaded = load_model(path);
  CHECK(serialize_model(loaded) == serialize_model(m));

  Rng rng(10);
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd probe = one_input(rng);
    const Prediction a = predict_row(m, probe);
    const Prediction b = predict_row(loaded, probe);
    CHECK(a.mean == b.mean);
    CHECK(a.variance == b.variance);
  }

  SUBCASE("wrong magic") {
    const auto bad = dir / "not_a_model.bin";
    std::ofstream(bad, std::ios::binary) << "something else entirely";
    CHECK_THROWS_AS(load_model(bad), DataError);
  }

  SUBCASE("truncated file") {
    const std::string bytes = serialize_model(m);
    const auto cut = dir / "truncated.bin";
    std::ofstream(cut, std::ios::binary)
        << bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_AS(load_model(cut), DataError);
  }
}

TEST_CASE("an 1800-run meta-dataset caps at 4096 rows") {
  // 30 datasets x 60 configs x 10 epochs = 18,000 rows before the cap.
  const std::vector<RunRecord> records = toy_records(30, 60, 10, 123);
  auto meta = toy_meta(30);
  FitOptions opts;
  opts.seed = 123;
  opts.hyperopt_cap = 64;
  opts.n_starts = 1;
  opts.ascend_top = 1;
  opts.max_iters = 0;
  const GpModel m = meta_fit(records, meta, TargetKind::Score, opts);
  CHECK(m.rows() == 4096);
  CHECK(m.fit_info.rows_total == 18000);
}
