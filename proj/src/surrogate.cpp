#include "greytune/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "greytune/common.hpp"

namespace greytune {

namespace {

constexpr double kLogTwoPi = 1.8378770664093453;

struct Bounds {
  double lo, hi;
};
constexpr Bounds kLengthscaleBounds{-5.0, 8.0};
constexpr Bounds kSignalBounds{-8.0, 6.0};
constexpr Bounds kNoiseBounds{-16.0, 2.0};

double clamp(double v, const Bounds& b) { return std::clamp(v, b.lo, b.hi); }

// theta layout: [log_lengthscale (d), log_signal_var, log_noise_var]
void clamp_theta(Eigen::VectorXd& theta) {
  const int d = static_cast<int>(theta.size()) - 2;
  for (int j = 0; j < d; ++j) theta[j] = clamp(theta[j], kLengthscaleBounds);
  theta[d] = clamp(theta[d], kSignalBounds);
  theta[d + 1] = clamp(theta[d + 1], kNoiseBounds);
}

Eigen::MatrixXd scaled_sq_dists(const Eigen::MatrixXd& A,
                                const Eigen::MatrixXd& B,
                                const Eigen::VectorXd& log_lengthscale) {
  const Eigen::VectorXd inv_ls = (-log_lengthscale.array()).exp().matrix();
  const Eigen::MatrixXd As = A * inv_ls.asDiagonal();
  const Eigen::MatrixXd Bs = B * inv_ls.asDiagonal();
  const Eigen::VectorXd a2 = As.rowwise().squaredNorm();
  const Eigen::VectorXd b2 = Bs.rowwise().squaredNorm();
  Eigen::MatrixXd r2 = -2.0 * As * Bs.transpose();
  r2.colwise() += a2;
  r2.rowwise() += b2.transpose();
  return r2.cwiseMax(0.0);
}

// Holds the pieces of one marginal-likelihood evaluation that the gradient
// reuses.
struct LmlEval {
  double lml;
  Eigen::MatrixXd K_signal;  // noise-free kernel
  Eigen::MatrixXd S;         // sqrt(5) * scaled distance
  Eigen::LLT<Eigen::MatrixXd> llt;
  Eigen::VectorXd alpha;
  bool ok;
};

LmlEval eval_lml(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                 const Eigen::VectorXd& theta) {
  const int d = static_cast<int>(X.cols());
  const int n = static_cast<int>(X.rows());
  LmlEval ev;
  ev.ok = false;
  ev.lml = -std::numeric_limits<double>::infinity();

  const Eigen::VectorXd log_ls = theta.head(d);
  const double sf2 = std::exp(theta[d]);
  const double sn2 = std::exp(theta[d + 1]);

  ev.S = (5.0 * scaled_sq_dists(X, X, log_ls)).cwiseSqrt();
  ev.K_signal = (sf2 * (1.0 + ev.S.array() + ev.S.array().square() / 3.0) *
                 (-ev.S.array()).exp())
                    .matrix();
  Eigen::MatrixXd K = ev.K_signal;
  K.diagonal().array() += sn2 + kJitter;
  ev.llt.compute(K);
  if (ev.llt.info() != Eigen::Success) return ev;
  ev.alpha = ev.llt.solve(y);
  const double log_det =
      ev.llt.matrixLLT().diagonal().array().log().sum();
  ev.lml = -0.5 * y.dot(ev.alpha) - log_det - 0.5 * n * kLogTwoPi;
  ev.ok = true;
  return ev;
}

// d(lml)/d(theta) via 0.5 tr((alpha alpha^T - K^-1) dK/dtheta).
Eigen::VectorXd lml_gradient(const Eigen::MatrixXd& X,
                             const Eigen::VectorXd& theta, const LmlEval& ev) {
  const int d = static_cast<int>(X.cols());
  const int n = static_cast<int>(X.rows());
  const double sf2 = std::exp(theta[d]);
  const double sn2 = std::exp(theta[d + 1]);

  Eigen::MatrixXd B = -ev.llt.solve(Eigen::MatrixXd::Identity(n, n));
  B.noalias() += ev.alpha * ev.alpha.transpose();

  Eigen::VectorXd grad(d + 2);
  grad[d] = 0.5 * B.cwiseProduct(ev.K_signal).sum();
  grad[d + 1] = 0.5 * sn2 * B.trace();

  // dk/dlog(l_j) = sf2 * (5/3)(1+s)e^{-s} * ((x_j - x'_j)/l_j)^2
  const Eigen::MatrixXd W =
      (B.array() * sf2 * (5.0 / 3.0) * (1.0 + ev.S.array()) *
       (-ev.S.array()).exp())
          .matrix();
  const Eigen::VectorXd inv_ls = (-theta.head(d).array()).exp().matrix();
  const Eigen::MatrixXd Xs = X * inv_ls.asDiagonal();
  const Eigen::VectorXd w = W.rowwise().sum();
  const Eigen::MatrixXd WXs = W * Xs;
  for (int j = 0; j < d; ++j) {
    const auto col = Xs.col(j);
    grad[j] = col.array().square().matrix().dot(w) - col.dot(WXs.col(j));
  }
  return grad;
}

struct AscentResult {
  Eigen::VectorXd theta;
  double lml;
};

AscentResult ascend(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                    Eigen::VectorXd theta, int max_iters) {
  constexpr double kLr = 0.08;
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  Eigen::VectorXd m = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(theta.size());

  AscentResult best{theta, -std::numeric_limits<double>::infinity()};
  for (int it = 1; it <= max_iters; ++it) {
    const LmlEval ev = eval_lml(X, y, theta);
    if (!ev.ok) break;
    if (ev.lml > best.lml) best = {theta, ev.lml};
    const Eigen::VectorXd g = lml_gradient(X, theta, ev);
    m = kBeta1 * m + (1.0 - kBeta1) * g;
    v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g);
    const double mc = 1.0 - std::pow(kBeta1, it);
    const double vc = 1.0 - std::pow(kBeta2, it);
    theta += (kLr / mc) *
             (m.array() / ((v.array() / vc).sqrt() + kEps)).matrix();
    clamp_theta(theta);
  }
  const double last = eval_lml(X, y, theta).lml;
  if (last > best.lml) best = {theta, last};
  return best;
}

/// Sorted row indices, at most `cap`, with per-group quotas assigned by
/// largest remainder. Groups are visited in lexicographic order.
std::vector<int> stratified_subsample(const std::vector<std::string>& groups,
                                      int cap, Rng& rng) {
  const int n = static_cast<int>(groups.size());
  std::vector<int> selected;
  if (n <= cap) {
    selected.resize(n);
    std::iota(selected.begin(), selected.end(), 0);
    return selected;
  }

  std::map<std::string, std::vector<int>> by_group;
  for (int i = 0; i < n; ++i) by_group[groups[i]].push_back(i);

  struct Quota {
    std::string id;
    int base;
    double remainder;
  };
  std::vector<Quota> quotas;
  int assigned = 0;
  for (const auto& [id, rows] : by_group) {
    const double exact =
        static_cast<double>(cap) * static_cast<double>(rows.size()) / n;
    const int base = static_cast<int>(exact);
    quotas.push_back({id, base, exact - base});
    assigned += base;
  }
  std::stable_sort(quotas.begin(), quotas.end(),
                   [](const Quota& a, const Quota& b) {
                     return a.remainder > b.remainder;
                   });
  for (int k = 0; k < cap - assigned; ++k) quotas[k].base += 1;
  std::map<std::string, int> quota_of;
  for (const auto& q : quotas) quota_of[q.id] = q.base;

  for (auto& [id, rows] : by_group) {
    rng.shuffle(rows);
    rows.resize(quota_of[id]);
    selected.insert(selected.end(), rows.begin(), rows.end());
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

void condition(GpModel& model) {
  Eigen::MatrixXd K = matern52(model.X, model.X, model.log_lengthscale,
                               model.log_signal_var);
  K.diagonal().array() += std::exp(model.log_noise_var) + kJitter;
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() != Eigen::Success) {
    throw DataError("kernel matrix is not positive definite");
  }
  model.chol = llt.matrixL();
  model.alpha = llt.solve(model.y);
}

Eigen::VectorXd pack_theta(const GpModel& model) {
  Eigen::VectorXd theta(model.log_lengthscale.size() + 2);
  theta.head(model.log_lengthscale.size()) = model.log_lengthscale;
  theta[model.log_lengthscale.size()] = model.log_signal_var;
  theta[model.log_lengthscale.size() + 1] = model.log_noise_var;
  return theta;
}

void unpack_theta(const Eigen::VectorXd& theta, GpModel& model) {
  const int d = static_cast<int>(theta.size()) - 2;
  model.log_lengthscale = theta.head(d);
  model.log_signal_var = theta[d];
  model.log_noise_var = theta[d + 1];
}

/// Tunes hyperparameters from the current value only (used by refit).
void retune_from_current(GpModel& model, int max_iters, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> idx(model.rows());
  std::iota(idx.begin(), idx.end(), 0);
  const int cap = 512;
  if (static_cast<int>(idx.size()) > cap) {
    rng.shuffle(idx);
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
  }
  Eigen::MatrixXd Xs(idx.size(), model.X.cols());
  Eigen::VectorXd ys(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    Xs.row(i) = model.X.row(idx[i]);
    ys[i] = model.y[idx[i]];
  }
  const AscentResult r = ascend(Xs, ys, pack_theta(model), max_iters);
  unpack_theta(r.theta, model);
}

Eigen::VectorXd input_row(const SurrogateInput& x) {
  Eigen::VectorXd row(kSurrogateDim);
  for (int j = 0; j < kEncodedDim; ++j) row[j] = x.encoded_config[j];
  for (int j = 0; j < 4; ++j) row[kEncodedDim + j] = x.meta_features_z[j];
  row[kSurrogateDim - 1] = x.fidelity_norm;
  if (!row.allFinite()) {
    throw DataError("surrogate input has non-finite components");
  }
  if (!(x.fidelity_norm > 0.0 && x.fidelity_norm <= 1.0)) {
    throw DataError("fidelity_norm must lie in (0, 1]");
  }
  return row;
}

double normalize_target(const GpModel& model, double natural) {
  double t = natural;
  if (model.target_kind == TargetKind::LogCost) {
    if (!(natural > 0.0)) {
      throw DataError("cost target must be positive, got " +
                      format_double(natural));
    }
    t = std::log(natural);
  }
  if (!std::isfinite(t)) throw DataError("non-finite target");
  return (t - model.target_stats.mean) / model.target_stats.scale;
}

Prediction predict_normalized(const GpModel& model, const Eigen::VectorXd& k_star,
                              double prior_var) {
  const Eigen::VectorXd v =
      model.chol.triangularView<Eigen::Lower>().solve(k_star);
  Prediction p;
  p.mean = model.target_stats.mean +
           model.target_stats.scale * k_star.dot(model.alpha);
  const double var = prior_var - v.squaredNorm();
  p.variance =
      model.target_stats.scale * model.target_stats.scale * std::max(0.0, var);
  return p;
}

}  // namespace

Eigen::MatrixXd matern52(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                         const Eigen::VectorXd& log_lengthscale,
                         double log_signal_var) {
  const Eigen::MatrixXd S =
      (5.0 * scaled_sq_dists(A, B, log_lengthscale)).cwiseSqrt();
  return (std::exp(log_signal_var) *
          (1.0 + S.array() + S.array().square() / 3.0) * (-S.array()).exp())
      .matrix();
}

GpModel fit_gp(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
               TargetKind kind, const FitOptions& opts,
               const std::vector<std::string>* groups) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  if (n < 2) throw DataError("need at least 2 rows to fit a surrogate");
  if (y.size() != n) throw DataError("X and y row counts differ");
  if (groups && static_cast<int>(groups->size()) != n) {
    throw DataError("group labels and rows differ in count");
  }
  if (!X.allFinite() || !y.allFinite()) {
    throw DataError("non-finite training data");
  }

  GpModel model;
  model.target_kind = kind;
  model.fit_seed = opts.seed;
  model.X = X;
  model.target_stats.mean = y.mean();
  const double var = (y.array() - model.target_stats.mean).square().mean();
  model.target_stats.scale = var > 1e-24 ? std::sqrt(var) : 1.0;
  model.y = (y.array() - model.target_stats.mean) / model.target_stats.scale;

  Rng rng(opts.seed);
  Rng subset_rng = rng.fork("hyperopt_subset");
  const std::vector<std::string> ungrouped(groups ? 0 : n, "all");
  const std::vector<int> sub = stratified_subsample(
      groups ? *groups : ungrouped, std::max(2, opts.hyperopt_cap), subset_rng);
  Eigen::MatrixXd Xh(sub.size(), d);
  Eigen::VectorXd yh(sub.size());
  for (std::size_t i = 0; i < sub.size(); ++i) {
    Xh.row(i) = model.X.row(sub[i]);
    yh[i] = model.y[sub[i]];
  }

  Rng start_rng = rng.fork("hyperopt_starts");
  std::vector<Eigen::VectorXd> starts;
  for (int k = 0; k < std::max(1, opts.n_starts); ++k) {
    Eigen::VectorXd theta(d + 2);
    if (k == 0) {
      theta.head(d).setZero();
      theta[d] = 0.0;
      theta[d + 1] = std::log(0.01);
    } else {
      for (int j = 0; j < d; ++j) theta[j] = 0.8 * start_rng.normal();
      theta[d] = 0.5 * start_rng.normal();
      theta[d + 1] = std::log(0.01) + 1.2 * start_rng.normal();
    }
    clamp_theta(theta);
    starts.push_back(theta);
  }

  std::vector<double> start_lmls(starts.size());
  for (std::size_t k = 0; k < starts.size(); ++k) {
    start_lmls[k] = eval_lml(Xh, yh, starts[k]).lml;
  }
  std::vector<std::size_t> order(starts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return start_lmls[a] > start_lmls[b];
  });

  Eigen::VectorXd best_theta = starts[order[0]];
  double best_lml = start_lmls[order[0]];
  const int n_ascend =
      std::min<int>(std::max(1, opts.ascend_top), static_cast<int>(starts.size()));
  for (int k = 0; k < n_ascend; ++k) {
    const AscentResult r =
        ascend(Xh, yh, starts[order[k]], opts.max_iters);
    if (r.lml > best_lml) {
      best_lml = r.lml;
      best_theta = r.theta;
    }
  }
  if (!std::isfinite(best_lml)) {
    throw DataError("marginal likelihood is non-finite at every start");
  }

  unpack_theta(best_theta, model);
  model.fit_info.start_lmls = start_lmls;
  model.fit_info.final_lml = best_lml;
  model.fit_info.rows_total = n;
  condition(model);
  return model;
}

GpModel meta_fit(const std::vector<RunRecord>& records,
                 const std::map<std::string, MetaFeatures>& meta,
                 TargetKind kind, const FitOptions& opts) {
  if (records.empty()) throw DataError("no run records to fit on");

  std::set<std::string> dataset_ids;
  for (const RunRecord& r : records) {
    validate_run_record(r);
    if (!meta.count(r.dataset_id)) {
      throw DataError("no meta-features for dataset " + r.dataset_id);
    }
    dataset_ids.insert(r.dataset_id);
  }

  MetaStats stats;
  {
    std::array<double, 4> sum{}, sumsq{};
    for (const auto& id : dataset_ids) {
      const MetaFeatures& f = meta.at(id);
      const std::array<double, 4> raw = {
          static_cast<double>(f.token_size), f.sample_length,
          f.qa_length_ratio, static_cast<double>(f.vocab_size)};
      for (int j = 0; j < 4; ++j) {
        sum[j] += raw[j];
        sumsq[j] += raw[j] * raw[j];
      }
    }
    const double m = static_cast<double>(dataset_ids.size());
    for (int j = 0; j < 4; ++j) {
      stats.mean[j] = sum[j] / m;
      const double var = sumsq[j] / m - stats.mean[j] * stats.mean[j];
      stats.scale[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
  }

  std::vector<Eigen::VectorXd> rows;
  std::vector<double> targets;
  std::vector<std::string> groups;
  for (const RunRecord& r : records) {
    const EncodedConfig enc = encode(r.config);
    const MetaFeatures& f = meta.at(r.dataset_id);
    const std::array<double, 4> raw = {
        static_cast<double>(f.token_size), f.sample_length, f.qa_length_ratio,
        static_cast<double>(f.vocab_size)};
    for (const CurvePoint& p : r.curve) {
      Eigen::VectorXd row(kSurrogateDim);
      for (int j = 0; j < kEncodedDim; ++j) row[j] = enc[j];
      for (int j = 0; j < 4; ++j) {
        row[kEncodedDim + j] = (raw[j] - stats.mean[j]) / stats.scale[j];
      }
      row[kSurrogateDim - 1] = p.epoch / 10.0;
      const double t = kind == TargetKind::Score ? p.val_score
                                                 : std::log(p.cum_seconds);
      if (!std::isfinite(t) || !row.allFinite()) {
        throw DataError("non-finite surrogate target in record " +
                        record_name(r));
      }
      rows.push_back(std::move(row));
      targets.push_back(t);
      groups.push_back(r.dataset_id);
    }
  }
  if (rows.size() < 2) {
    throw DataError("need at least 2 rows to fit a surrogate");
  }

  Rng cap_rng = Rng(opts.seed).fork("row_cap");
  const std::vector<int> keep =
      stratified_subsample(groups, std::max(2, opts.row_cap), cap_rng);
  Eigen::MatrixXd X(keep.size(), kSurrogateDim);
  Eigen::VectorXd y(keep.size());
  std::vector<std::string> kept_groups(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    X.row(i) = rows[keep[i]];
    y[i] = targets[keep[i]];
    kept_groups[i] = groups[keep[i]];
  }

  GpModel model = fit_gp(X, y, kind, opts, &kept_groups);
  model.meta_stats = stats;
  model.fit_info.rows_total = static_cast<std::int64_t>(rows.size());
  return model;
}

SurrogateInput make_surrogate_input(const GpModel& model,
                                    const EncodedConfig& encoded,
                                    const MetaFeatures& features, int epoch) {
  if (epoch < 1 || epoch > 10) {
    throw DataError("epoch must be 1..10, got " + std::to_string(epoch));
  }
  SurrogateInput x;
  x.encoded_config = encoded;
  const std::array<double, 4> raw = {
      static_cast<double>(features.token_size), features.sample_length,
      features.qa_length_ratio, static_cast<double>(features.vocab_size)};
  for (int j = 0; j < 4; ++j) {
    x.meta_features_z[j] =
        (raw[j] - model.meta_stats.mean[j]) / model.meta_stats.scale[j];
  }
  x.fidelity_norm = epoch / 10.0;
  return x;
}

Prediction predict_row(const GpModel& model, const Eigen::VectorXd& row) {
  if (row.size() != model.X.cols()) {
    throw DataError("surrogate input dimension mismatch: expected " +
                    std::to_string(model.X.cols()) + ", got " +
                    std::to_string(row.size()));
  }
  const Eigen::MatrixXd k_star = matern52(
      model.X, row.transpose(), model.log_lengthscale, model.log_signal_var);
  return predict_normalized(model, k_star.col(0),
                            std::exp(model.log_signal_var));
}

Prediction predict(const GpModel& model, const SurrogateInput& x) {
  return predict_row(model, input_row(x));
}

std::vector<Prediction> predict_batch(const GpModel& model,
                                      const std::vector<SurrogateInput>& xs) {
  if (xs.empty()) return {};
  if (model.X.cols() != kSurrogateDim) {
    throw DataError("surrogate input dimension mismatch: expected " +
                    std::to_string(model.X.cols()) + ", got " +
                    std::to_string(kSurrogateDim));
  }
  Eigen::MatrixXd P(xs.size(), kSurrogateDim);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    P.row(i) = input_row(xs[i]);
  }
  const Eigen::MatrixXd K_star = matern52(model.X, P, model.log_lengthscale,
                                          model.log_signal_var);
  const Eigen::MatrixXd V =
      model.chol.triangularView<Eigen::Lower>().solve(K_star);
  const double prior_var = std::exp(model.log_signal_var);
  const double scale = model.target_stats.scale;
  std::vector<Prediction> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out[i].mean = model.target_stats.mean + scale * K_star.col(i).dot(model.alpha);
    out[i].variance = scale * scale *
                      std::max(0.0, prior_var - V.col(i).squaredNorm());
  }
  return out;
}

GpModel refit_with(const GpModel& model,
                   const std::vector<std::pair<SurrogateInput, double>>& new_rows,
                   int reoptimize_every) {
  if (reoptimize_every < 1) {
    throw DataError("reoptimize_every must be at least 1");
  }
  if (model.X.cols() != kSurrogateDim) {
    throw DataError("refit requires full-dimension surrogate inputs");
  }
  GpModel next = model;
  if (new_rows.empty()) return next;

  const double noise = std::exp(next.log_noise_var) + kJitter;
  for (const auto& [x, natural] : new_rows) {
    const Eigen::VectorXd row = input_row(x);
    const double t = normalize_target(next, natural);
    const std::int64_t n = next.rows();

    const Eigen::MatrixXd k_new = matern52(
        next.X, row.transpose(), next.log_lengthscale, next.log_signal_var);
    const Eigen::VectorXd l =
        next.chol.triangularView<Eigen::Lower>().solve(k_new.col(0));
    const double diag = std::exp(next.log_signal_var) + noise - l.squaredNorm();
    const double lam = std::sqrt(std::max(diag, kJitter));

    next.X.conservativeResize(n + 1, Eigen::NoChange);
    next.X.row(n) = row;
    next.y.conservativeResize(n + 1);
    next.y[n] = t;
    next.chol.conservativeResize(n + 1, n + 1);
    next.chol.row(n).head(n) = l;
    next.chol.col(n).head(n).setZero();
    next.chol(n, n) = lam;
  }
  const int before = next.appended_rows;
  next.appended_rows += static_cast<int>(new_rows.size());

  if (next.appended_rows / reoptimize_every > before / reoptimize_every) {
    retune_from_current(next, 15,
                        next.fit_seed ^ fnv1a64("refit") ^
                            static_cast<std::uint64_t>(next.appended_rows));
    condition(next);
  } else {
    next.alpha = next.chol.triangularView<Eigen::Lower>()
                     .transpose()
                     .solve(next.chol.triangularView<Eigen::Lower>().solve(next.y));
  }
  return next;
}

GpModel with_hyperparameters(const GpModel& model,
                             const Eigen::VectorXd& log_lengthscale,
                             double log_signal_var, double log_noise_var) {
  if (log_lengthscale.size() != model.X.cols()) {
    throw DataError("lengthscale dimension mismatch");
  }
  GpModel next = model;
  next.log_lengthscale = log_lengthscale;
  next.log_signal_var = log_signal_var;
  next.log_noise_var = log_noise_var;
  condition(next);
  return next;
}

double log_marginal_likelihood(const GpModel& model) {
  const double log_det =
      model.chol.diagonal().array().log().sum();
  return -0.5 * model.y.dot(model.alpha) - log_det -
         0.5 * static_cast<double>(model.rows()) * kLogTwoPi;
}

std::pair<double, Eigen::VectorXd> lml_with_gradient(
    const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
    const Eigen::VectorXd& theta) {
  if (theta.size() != X.cols() + 2) {
    throw DataError("theta must have one entry per input dimension plus two");
  }
  const LmlEval ev = eval_lml(X, y, theta);
  if (!ev.ok) {
    return {ev.lml, Eigen::VectorXd::Zero(theta.size())};
  }
  return {ev.lml, lml_gradient(X, theta, ev)};
}

std::string serialize_model(const GpModel& model) {
  std::ostringstream os(std::ios::binary);
  bin::write_str(os, "greytune-gp");
  bin::write_u64(os, 1);
  bin::write_u64(os, model.target_kind == TargetKind::Score ? 0 : 1);
  bin::write_u64(os, model.fit_seed);
  bin::write_u64(os, static_cast<std::uint64_t>(model.appended_rows));
  const auto d = static_cast<std::uint64_t>(model.X.cols());
  const auto n = static_cast<std::uint64_t>(model.X.rows());
  bin::write_u64(os, d);
  bin::write_u64(os, n);
  for (std::uint64_t i = 0; i < n; ++i) {
    for (std::uint64_t j = 0; j < d; ++j) bin::write_f64(os, model.X(i, j));
  }
  for (std::uint64_t i = 0; i < n; ++i) bin::write_f64(os, model.y[i]);
  for (std::uint64_t j = 0; j < d; ++j) {
    bin::write_f64(os, model.log_lengthscale[j]);
  }
  bin::write_f64(os, model.log_signal_var);
  bin::write_f64(os, model.log_noise_var);
  for (int j = 0; j < 4; ++j) bin::write_f64(os, model.meta_stats.mean[j]);
  for (int j = 0; j < 4; ++j) bin::write_f64(os, model.meta_stats.scale[j]);
  bin::write_f64(os, model.target_stats.mean);
  bin::write_f64(os, model.target_stats.scale);
  bin::write_u64(os, model.fit_info.start_lmls.size());
  for (const double v : model.fit_info.start_lmls) bin::write_f64(os, v);
  bin::write_f64(os, model.fit_info.final_lml);
  bin::write_u64(os, static_cast<std::uint64_t>(model.fit_info.rows_total));
  return os.str();
}

void save_model(const GpModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  const std::string bytes = serialize_model(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

GpModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  if (bin::read_str(in) != "greytune-gp") {
    throw DataError(path.string() + " is not a surrogate model file");
  }
  if (bin::read_u64(in) != 1) {
    throw DataError(path.string() + ": unsupported model version");
  }
  GpModel model;
  model.target_kind =
      bin::read_u64(in) == 0 ? TargetKind::Score : TargetKind::LogCost;
  model.fit_seed = bin::read_u64(in);
  model.appended_rows = static_cast<int>(bin::read_u64(in));
  const std::uint64_t d = bin::read_u64(in);
  const std::uint64_t n = bin::read_u64(in);
  if (d == 0 || d > 4096 || n == 0 || n > (1ull << 24)) {
    throw DataError(path.string() + ": implausible model dimensions");
  }
  model.X.resize(n, d);
  for (std::uint64_t i = 0; i < n; ++i) {
    for (std::uint64_t j = 0; j < d; ++j) model.X(i, j) = bin::read_f64(in);
  }
  model.y.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) model.y[i] = bin::read_f64(in);
  model.log_lengthscale.resize(d);
  for (std::uint64_t j = 0; j < d; ++j) {
    model.log_lengthscale[j] = bin::read_f64(in);
  }
  model.log_signal_var = bin::read_f64(in);
  model.log_noise_var = bin::read_f64(in);
  for (int j = 0; j < 4; ++j) model.meta_stats.mean[j] = bin::read_f64(in);
  for (int j = 0; j < 4; ++j) model.meta_stats.scale[j] = bin::read_f64(in);
  model.target_stats.mean = bin::read_f64(in);
  model.target_stats.scale = bin::read_f64(in);
  const std::uint64_t n_starts = bin::read_u64(in);
  if (n_starts > 1024) throw DataError(path.string() + ": corrupt start count");
  model.fit_info.start_lmls.resize(n_starts);
  for (std::uint64_t k = 0; k < n_starts; ++k) {
    model.fit_info.start_lmls[k] = bin::read_f64(in);
  }
  model.fit_info.final_lml = bin::read_f64(in);
  model.fit_info.rows_total = static_cast<std::int64_t>(bin::read_u64(in));
  if (!in) throw DataError(path.string() + ": truncated model file");
  condition(model);
  return model;
}

}  // namespace greytune
