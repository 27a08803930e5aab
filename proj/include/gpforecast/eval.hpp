#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpforecast/data.hpp"
#include "gpforecast/errors.hpp"
#include "gpforecast/gp.hpp"
#include "gpforecast/optimizer.hpp"
#include "gpforecast/transform.hpp"

namespace gpforecast {

inline double rmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& actual) {
  if (pred.size() != actual.size()) {
    throw DimensionMismatch("rmse: length mismatch");
  }
  if (pred.size() == 0) throw EmptyInput("rmse: empty input");
  return std::sqrt((pred - actual).squaredNorm() /
                   static_cast<double>(pred.size()));
}

// Mean absolute error.
inline double mad(const Eigen::VectorXd& pred, const Eigen::VectorXd& actual) {
  if (pred.size() != actual.size()) {
    throw DimensionMismatch("mad: length mismatch");
  }
  if (pred.size() == 0) throw EmptyInput("mad: empty input");
  return (pred - actual).cwiseAbs().mean();
}

// RMSE and MAD on the transformed (log1p, centered) and count scales.
struct MetricReport {
  double rmse_transformed = 0.0;
  double mad_transformed = 0.0;
  double rmse_counts = 0.0;
  double mad_counts = 0.0;
  std::size_t n = 0;
};

inline MetricReport make_metric_report(const Eigen::VectorXd& pred_transformed,
                                       const Eigen::VectorXd& actual_counts,
                                       const TransformState& state) {
  const Eigen::VectorXd actual_transformed = apply(actual_counts, state);
  const Eigen::VectorXd pred_counts = inverse(pred_transformed, state);
  MetricReport r;
  r.rmse_transformed = rmse(pred_transformed, actual_transformed);
  r.mad_transformed = mad(pred_transformed, actual_transformed);
  r.rmse_counts = rmse(pred_counts, actual_counts);
  r.mad_counts = mad(pred_counts, actual_counts);
  r.n = static_cast<std::size_t>(pred_transformed.size());
  return r;
}

struct PipelineConfig {
  int restarts = 5;
  std::uint32_t seed = 0;
  double tol = 1e-5;
  int max_iters = 300;
};

// Per-fold training artifacts, kept so leakage is observable: none of these
// may change when only the fold's own rows are perturbed.
struct FoldDetail {
  std::array<double, HyperParams::kCount> theta_log{};
  double transform_center = 0.0;
  CovariateStats covariate_stats;
  double final_nll = 0.0;
};

struct MetricAggregate {
  double mean = 0.0;
  double stdev = 0.0;
};

struct CvReport {
  std::vector<MetricReport> per_fold;
  std::vector<FoldDetail> details;
  MetricAggregate rmse_transformed, mad_transformed, rmse_counts, mad_counts;
  int k = 0;
};

namespace detail {

inline MetricAggregate aggregate(const std::vector<MetricReport>& folds,
                                 double MetricReport::*field) {
  MetricAggregate a;
  const double n = static_cast<double>(folds.size());
  for (const auto& f : folds) a.mean += f.*field;
  a.mean /= n;
  double ss = 0.0;
  for (const auto& f : folds) {
    const double d = f.*field - a.mean;
    ss += d * d;
  }
  a.stdev = std::sqrt(ss / n);
  return a;
}

inline RawRecord destandardize_row(const Dataset& d, std::size_t i) {
  const InputPoint& p = d.points[i];
  const CovariateStats& s = d.covariate_stats;
  return RawRecord{d.periods[i], d.counts[i],
                   p.rainfall * s.stdev[0] + s.mean[0],
                   p.humidity * s.stdev[1] + s.mean[1],
                   p.temperature * s.stdev[2] + s.mean[2]};
}

}  // namespace detail

// Blocked k-fold cross validation over a time-ordered series: the series is
// cut into k contiguous blocks, and each fold trains the full pipeline
// (standardization, transform, hyperparameter fit) on the complement before
// scoring the block. Fold sizes differ by at most one.
inline CvReport blocked_kfold(const Dataset& dataset, int k,
                              const PipelineConfig& config = {}) {
  if (k < 2) throw Error("blocked_kfold: k must be >= 2");
  const std::size_t n = dataset.size();
  if (n < 2 * static_cast<std::size_t>(k)) {
    throw TooFewRows("blocked_kfold: need at least 2k rows, got " +
                     std::to_string(n));
  }

  // Work from raw covariates so each fold standardizes from its own
  // training rows only.
  std::vector<RawRecord> raw;
  raw.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    raw.push_back(detail::destandardize_row(dataset, i));
  }

  CvReport report;
  report.k = k;
  const std::size_t base = n / static_cast<std::size_t>(k);
  const std::size_t extra = n % static_cast<std::size_t>(k);
  std::size_t begin = 0;
  for (int fold = 0; fold < k; ++fold) {
    const std::size_t size =
        base + (static_cast<std::size_t>(fold) < extra ? 1 : 0);
    const std::size_t end = begin + size;

    std::vector<std::size_t> train_idx;
    train_idx.reserve(n - size);
    for (std::size_t i = 0; i < n; ++i) {
      if (i < begin || i >= end) train_idx.push_back(i);
    }

    std::vector<RawRecord> train_rows;
    train_rows.reserve(train_idx.size());
    for (std::size_t i : train_idx) train_rows.push_back(raw[i]);
    const CovariateStats stats =
        compute_covariate_stats(train_rows, train_rows.size());

    std::vector<InputPoint> train_points, test_points;
    Eigen::VectorXd train_counts(static_cast<Eigen::Index>(train_idx.size()));
    Eigen::VectorXd test_counts(static_cast<Eigen::Index>(size));
    for (std::size_t j = 0; j < train_idx.size(); ++j) {
      const std::size_t i = train_idx[j];
      train_points.push_back(standardize_point(dataset.points[i].t, raw[i], stats));
      train_counts[static_cast<Eigen::Index>(j)] =
          static_cast<double>(dataset.counts[i]);
    }
    for (std::size_t i = begin; i < end; ++i) {
      test_points.push_back(standardize_point(dataset.points[i].t, raw[i], stats));
      test_counts[static_cast<Eigen::Index>(i - begin)] =
          static_cast<double>(dataset.counts[i]);
    }

    auto [targets, state] = forward(train_counts);
    const OptimResult opt =
        fit_hyperparams(train_points, targets, config.restarts, config.seed,
                        config.tol, config.max_iters);
    const TrainedModel model = fit(train_points, targets, opt.theta, state);
    const Prediction pred = predict(model, test_points);

    report.per_fold.push_back(make_metric_report(pred.mean, test_counts, state));
    report.details.push_back(FoldDetail{opt.theta.log_array(), state.center,
                                        stats, opt.final_nll});
    begin = end;
  }

  report.rmse_transformed =
      detail::aggregate(report.per_fold, &MetricReport::rmse_transformed);
  report.mad_transformed =
      detail::aggregate(report.per_fold, &MetricReport::mad_transformed);
  report.rmse_counts =
      detail::aggregate(report.per_fold, &MetricReport::rmse_counts);
  report.mad_counts =
      detail::aggregate(report.per_fold, &MetricReport::mad_counts);
  return report;
}

// Seasonal-naive stand-in: each test month is predicted by the transformed
// value observed 12 months earlier in the combined series, falling back to
// the last training value when the series does not reach that far back.
inline MetricReport persistence_baseline(const Dataset& train,
                                         const Dataset& test) {
  if (train.size() == 0 || test.size() == 0) {
    throw EmptyData("persistence_baseline: empty split");
  }
  auto [train_vals, state] = forward(train.counts_vector());
  const Eigen::VectorXd test_counts = test.counts_vector();
  const Eigen::VectorXd test_vals = apply(test_counts, state);

  const Eigen::Index n_train = train_vals.size();
  Eigen::VectorXd pred(test_vals.size());
  for (Eigen::Index j = 0; j < test_vals.size(); ++j) {
    const Eigen::Index lag = n_train + j - 12;
    if (lag < 0) {
      pred[j] = train_vals[n_train - 1];
    } else if (lag < n_train) {
      pred[j] = train_vals[lag];
    } else {
      pred[j] = test_vals[lag - n_train];
    }
  }
  return make_metric_report(pred, test_counts, state);
}

// --- Report serialization ---

inline nlohmann::ordered_json to_json(const MetricReport& r) {
  return nlohmann::ordered_json{{"n", r.n},
                                {"rmse_transformed", r.rmse_transformed},
                                {"mad_transformed", r.mad_transformed},
                                {"rmse_counts", r.rmse_counts},
                                {"mad_counts", r.mad_counts}};
}

inline nlohmann::ordered_json to_json(const CvReport& r) {
  nlohmann::ordered_json j;
  j["k"] = r.k;
  auto agg = [](const MetricAggregate& a) {
    return nlohmann::ordered_json{{"mean", a.mean}, {"std", a.stdev}};
  };
  j["rmse_transformed"] = agg(r.rmse_transformed);
  j["mad_transformed"] = agg(r.mad_transformed);
  j["rmse_counts"] = agg(r.rmse_counts);
  j["mad_counts"] = agg(r.mad_counts);
  j["folds"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.per_fold.size(); ++i) {
    nlohmann::ordered_json f = to_json(r.per_fold[i]);
    f["fold"] = i;
    f["final_nll"] = r.details[i].final_nll;
    f["transform_center"] = r.details[i].transform_center;
    f["theta_log"] = r.details[i].theta_log;
    j["folds"].push_back(f);
  }
  return j;
}

// Flat CSV, one row per fold.
inline void write_cv_csv(std::ostream& out, const CvReport& r) {
  out << "fold,n,rmse_transformed,mad_transformed,rmse_counts,mad_counts\n";
  for (std::size_t i = 0; i < r.per_fold.size(); ++i) {
    const MetricReport& f = r.per_fold[i];
    out << i << ',' << f.n << ',' << detail::format_double(f.rmse_transformed)
        << ',' << detail::format_double(f.mad_transformed) << ','
        << detail::format_double(f.rmse_counts) << ','
        << detail::format_double(f.mad_counts) << "\n";
  }
}

}  // namespace gpforecast
