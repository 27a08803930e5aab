#pragma once

#include <Eigen/Core>
#include <cmath>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include "gpforecast/errors.hpp"
#include "gpforecast/kernels.hpp"
#include "gpforecast/linalg.hpp"
#include "gpforecast/transform.hpp"

namespace gpforecast {

// Frozen state of an exact GP fit. The independent-noise term sits on the
// Gram diagonal (through the kernel's delta component), so the stored factor
// is already of K(X,X) + sigma_n^2 I.
struct TrainedModel {
  std::vector<InputPoint> train_points;
  Eigen::VectorXd targets;  // transformed, centered
  HyperParams theta;
  CholeskyFactor factor;
  Eigen::VectorXd alpha;  // (K + sigma_n^2 I)^{-1} targets
  TransformState transform_state;

  Eigen::Index size() const { return targets.size(); }
};

struct Prediction {
  Eigen::VectorXd mean;      // transformed scale
  Eigen::VectorXd variance;  // latent-function variance, clamped at 0
  Eigen::VectorXd lower95;
  Eigen::VectorXd upper95;
  int clamped = 0;  // entries whose variance went negative in floating point
  std::optional<Eigen::MatrixXd> full_cov;
};

inline double jitter_budget(const SymmetricMatrix& k) {
  return 1e-4 * k.mean_diagonal();
}

inline TrainedModel fit(std::vector<InputPoint> points,
                        const Eigen::VectorXd& targets,
                        const HyperParams& theta,
                        const TransformState& transform_state = {}) {
  if (points.empty()) throw EmptyData("fit: no training points");
  if (static_cast<Eigen::Index>(points.size()) != targets.size()) {
    throw DimensionMismatch("fit: points/targets length mismatch");
  }
  GramResult g = gram(points, theta, /*want_grads=*/false);
  CholeskyFactor factor = cholesky(g.matrix, jitter_budget(g.matrix));
  Eigen::VectorXd alpha = solve_system(factor, targets);
  return TrainedModel{std::move(points), targets, theta, std::move(factor),
                      std::move(alpha), transform_state};
}

inline Prediction predict(const TrainedModel& model,
                          const std::vector<InputPoint>& stars,
                          bool full_cov = false) {
  if (stars.empty()) throw EmptyData("predict: no prediction points");
  const Eigen::MatrixXd k_train_star =
      cross_gram(model.train_points, stars, model.theta);  // n x m

  Prediction out;
  out.mean = k_train_star.transpose() * model.alpha;

  // predictive variance through one triangular solve: var = k** - ||L^{-1} k*||^2
  const Eigen::MatrixXd v = solve_lower_cols(model.factor, k_train_star);
  const Eigen::Index m = static_cast<Eigen::Index>(stars.size());
  out.variance.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& s = stars[static_cast<std::size_t>(i)];
    double var = composite(s, s, /*same_index=*/false, model.theta) -
                 v.col(i).squaredNorm();
    if (var < 0.0) {
      var = 0.0;
      ++out.clamped;
    }
    out.variance[i] = var;
  }

  const Eigen::VectorXd half_width =
      (1.96 * out.variance.array().sqrt()).matrix();
  out.lower95 = out.mean - half_width;
  out.upper95 = out.mean + half_width;

  if (full_cov) {
    out.full_cov = cross_gram(stars, stars, model.theta) - v.transpose() * v;
  }
  return out;
}

// -1/2 y^T alpha - 1/2 log|K + sigma_n^2 I| - n/2 log(2 pi)
inline double log_marginal_likelihood(const TrainedModel& model) {
  const double n = static_cast<double>(model.size());
  return -0.5 * model.targets.dot(model.alpha) - 0.5 * log_det(model.factor) -
         0.5 * n * std::log(2.0 * std::numbers::pi);
}

// d LML / d log(theta_m) = 1/2 tr((alpha alpha^T - K^{-1}) dK/d log theta_m)
inline Eigen::Matrix<double, HyperParams::kCount, 1> lml_gradient(
    const TrainedModel& model) {
  GramResult g = gram(model.train_points, model.theta, /*want_grads=*/true);
  const Eigen::Index n = model.size();
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd k_inv = solve_system_cols(model.factor, identity);

  Eigen::Matrix<double, HyperParams::kCount, 1> grad;
  for (std::size_t m = 0; m < HyperParams::kCount; ++m) {
    const Eigen::MatrixXd& dk = g.grads[m].mat();
    const double data_term = model.alpha.dot(dk * model.alpha);
    const double trace_term = k_inv.cwiseProduct(dk).sum();
    grad[static_cast<Eigen::Index>(m)] = 0.5 * (data_term - trace_term);
  }
  return grad;
}

}  // namespace gpforecast
