#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "greytune/corpus.hpp"
#include "greytune/records.hpp"

namespace greytune {

enum class TargetKind { Score, LogCost };

/// Input dimension: encoded config (19) + z-scored meta-features (4) +
/// normalized fidelity epoch/10 (1).
inline constexpr int kSurrogateDim = kEncodedDim + 4 + 1;

inline constexpr double kJitter = 1e-8;

struct SurrogateInput {
  EncodedConfig encoded_config;
  std::array<double, 4> meta_features_z;
  double fidelity_norm;
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

/// For LogCost models: predicted seconds at the input's fidelity.
inline double cost_seconds(const Prediction& p) { return std::exp(p.mean); }

/// z-scoring statistics of the meta-dataset's meta-features (one vector per
/// dataset, population standard deviation; scale 1 when degenerate).
struct MetaStats {
  std::array<double, 4> mean{};
  std::array<double, 4> scale{1.0, 1.0, 1.0, 1.0};
};

struct TargetStats {
  double mean = 0.0;
  double scale = 1.0;
};

struct FitOptions {
  int row_cap = 4096;
  /// Hyperparameters are tuned on a stratified subset of at most this many
  /// rows, then the model conditions on the full capped set.
  int hyperopt_cap = 512;
  int n_starts = 8;
  /// How many of the seeded starts continue into gradient ascent (the rest
  /// contribute their initial log marginal likelihood only).
  int ascend_top = 2;
  int max_iters = 20;
  std::uint64_t seed = 0;
};

/// Log marginal likelihoods on the hyperparameter-tuning subset.
struct FitInfo {
  std::vector<double> start_lmls;
  double final_lml = 0.0;
  std::int64_t rows_total = 0;
};

/// Matern-5/2 ARD Gaussian process. Immutable once fitted; predictions are
/// const and thread-safe. chol/alpha are derived state recomputed from
/// (X, y, hyperparameters) on load.
struct GpModel {
  TargetKind target_kind = TargetKind::Score;
  Eigen::MatrixXd X;  // n x kSurrogateDim
  Eigen::VectorXd y;  // normalized targets
  Eigen::VectorXd log_lengthscale;
  double log_signal_var = 0.0;
  double log_noise_var = 0.0;
  MetaStats meta_stats;
  TargetStats target_stats;
  std::uint64_t fit_seed = 0;
  FitInfo fit_info;
  int appended_rows = 0;

  Eigen::MatrixXd chol;  // lower factor of K + (noise + jitter) I
  Eigen::VectorXd alpha;

  std::int64_t rows() const { return X.rows(); }
};

/// Matern-5/2 ARD kernel matrix between row sets A and B.
Eigen::MatrixXd matern52(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                         const Eigen::VectorXd& log_lengthscale,
                         double log_signal_var);

/// Fits a GP to raw rows: normalizes targets, tunes hyperparameters by
/// seeded multi-start ascent on the log marginal likelihood, conditions on
/// all rows. `groups` (optional, one label per row) stratifies the
/// hyperparameter subset. meta_stats are left as identity.
GpModel fit_gp(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
               TargetKind kind, const FitOptions& opts,
               const std::vector<std::string>* groups = nullptr);

/// Expands each record into one row per observed epoch (targets: val_score,
/// or log cumulative seconds), z-scores meta-features over the datasets
/// present, stratified-subsamples to row_cap, and fits. Every dataset_id
/// must have meta-features in `meta`.
GpModel meta_fit(const std::vector<RunRecord>& records,
                 const std::map<std::string, MetaFeatures>& meta,
                 TargetKind kind, const FitOptions& opts);

/// Applies the model's stored z-scoring to raw meta-features.
SurrogateInput make_surrogate_input(const GpModel& model,
                                    const EncodedConfig& encoded,
                                    const MetaFeatures& features, int epoch);

Prediction predict(const GpModel& model, const SurrogateInput& x);

/// Posterior at a raw row of the model's own input dimension (predict is
/// this plus SurrogateInput assembly).
Prediction predict_row(const GpModel& model, const Eigen::VectorXd& row);

/// One triangular solve with many right-hand sides; same values as predict
/// applied elementwise.
std::vector<Prediction> predict_batch(const GpModel& model,
                                      const std::vector<SurrogateInput>& xs);

/// Returns a new model conditioned on the old rows plus new_rows; the input
/// model is unmodified. Targets are in natural units (score, or cumulative
/// seconds for LogCost models). Hyperparameters are re-tuned from their
/// current values whenever the cumulative appended-row count crosses a
/// multiple of reoptimize_every, otherwise reused.
GpModel refit_with(const GpModel& model,
                   const std::vector<std::pair<SurrogateInput, double>>& new_rows,
                   int reoptimize_every = 10);

/// Same kernel and data, different hyperparameters, reconditioned.
GpModel with_hyperparameters(const GpModel& model,
                             const Eigen::VectorXd& log_lengthscale,
                             double log_signal_var, double log_noise_var);

/// Log marginal likelihood of the conditioned set, from the stored factor.
double log_marginal_likelihood(const GpModel& model);

/// Log marginal likelihood of (X, y) and its gradient at theta =
/// [log_lengthscale (d), log_signal_var, log_noise_var]. Diagnostic surface
/// for the fitter's internals.
std::pair<double, Eigen::VectorXd> lml_with_gradient(
    const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
    const Eigen::VectorXd& theta);

void save_model(const GpModel& model, const std::filesystem::path& path);
GpModel load_model(const std::filesystem::path& path);
std::string serialize_model(const GpModel& model);

}  // namespace greytune
