#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <vector>

#include "gpforecast/errors.hpp"
#include "gpforecast/gp.hpp"
#include "gpforecast/kernels.hpp"

namespace gpforecast {

struct BfgsOutcome {
  Eigen::VectorXd x;
  double fx = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // objective at each accepted iterate
};

struct OptimResult {
  HyperParams theta;
  double final_nll = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  bool converged = false;
  int restart_index = 0;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;
using Gradient = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// BFGS with backtracking line search (Armijo constant 1e-4, backtrack factor
// 0.5). The inverse-Hessian approximation is updated only when the curvature
// condition s^T y > 1e-10 holds. Terminates on gradient max-norm < tol, on
// max_iters, or when the line search cannot find a decreasing step.
inline BfgsOutcome bfgs_minimize(const Objective& objective,
                                 const Gradient& gradient,
                                 const Eigen::VectorXd& x0, double tol,
                                 int max_iters) {
  constexpr double kArmijo = 1e-4;
  constexpr double kBacktrack = 0.5;
  constexpr double kCurvatureMin = 1e-10;
  constexpr int kMaxBacktracks = 60;

  const Eigen::Index n = x0.size();
  BfgsOutcome out;
  out.x = x0;
  out.fx = objective(out.x);
  if (!std::isfinite(out.fx)) {
    throw NonFiniteObjective("bfgs_minimize: objective non-finite at x0");
  }
  out.trace.push_back(out.fx);

  Eigen::VectorXd grad = gradient(out.x);
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);

  for (out.iterations = 0; out.iterations < max_iters; ++out.iterations) {
    if (grad.lpNorm<Eigen::Infinity>() < tol) {
      out.converged = true;
      return out;
    }

    Eigen::VectorXd direction = -(h_inv * grad);
    double slope = direction.dot(grad);
    if (!(slope < 0.0)) {
      // Approximation lost descent; restart from steepest descent.
      h_inv.setIdentity();
      direction = -grad;
      slope = direction.dot(grad);
    }

    double step = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    int backtracks = 0;
    for (; backtracks < kMaxBacktracks; ++backtracks) {
      f_new = objective(out.x + step * direction);
      if (std::isfinite(f_new) && f_new <= out.fx + kArmijo * step * slope) {
        break;
      }
      step *= kBacktrack;
    }
    if (backtracks == kMaxBacktracks) {
      return out;  // line-search failure; converged stays false
    }

    const Eigen::VectorXd s = step * direction;
    const Eigen::VectorXd x_new = out.x + s;
    const Eigen::VectorXd grad_new = gradient(x_new);
    const Eigen::VectorXd y = grad_new - grad;

    const double sy = s.dot(y);
    if (sy > kCurvatureMin) {
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = h_inv * y;
      h_inv += (s * s.transpose()) * (rho * rho * y.dot(hy) + rho) -
               rho * (hy * s.transpose() + s * hy.transpose());
    }

    out.x = x_new;
    out.fx = f_new;
    grad = grad_new;
    out.trace.push_back(out.fx);
  }

  out.converged = grad.lpNorm<Eigen::Infinity>() < tol;
  return out;
}

namespace detail {

// Uniform draw in [-0.5, 0.5), deterministic across platforms.
inline double jitter_draw(std::mt19937& rng) {
  return static_cast<double>(rng()) / 4294967296.0 - 0.5;
}

inline double median_pairwise_distance(const std::vector<InputPoint>& points) {
  std::vector<double> d;
  d.reserve(points.size() * (points.size() - 1) / 2);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      d.push_back(euclidean_distance(points[i], points[j]));
    }
  }
  if (d.empty()) return 1.0;
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid),
                   d.end());
  const double med = d[mid];
  return med > 0.0 ? med : 1.0;
}

}  // namespace detail

// Scale-matched starting point: signal variances split the target variance,
// length scales start at the median pairwise input distance, the period at
// 12 months.
inline HyperParams canonical_start(const std::vector<InputPoint>& points,
                                   const Eigen::VectorXd& targets) {
  const double mean = targets.size() > 0 ? targets.mean() : 0.0;
  double var =
      targets.size() > 0 ? (targets.array() - mean).square().mean() : 0.0;
  if (!(var > 0.0)) var = 1.0;  // degenerate (constant) targets
  const double sd = std::sqrt(var);
  const double med = detail::median_pairwise_distance(points);

  HyperParams h;
  h.log_sigma1 = 0.5 * std::log(var / 3.0);
  h.log_l1 = std::log(med);
  h.log_sigma2 = 0.5 * std::log(var / 3.0);
  h.log_l2 = std::log(med);
  h.log_p = std::log(12.0);
  h.log_lper = 0.0;
  h.log_sigma3 = std::log(var / 3.0);
  h.log_alpha = 0.0;
  h.log_l3 = std::log(med);
  h.log_sigmaf = 0.5 * std::log(var / 3.0);
  h.log_l4 = std::log(med);
  h.log_sigman = std::log(0.1 * sd);
  return h;
}

// Floor on log sigma_n; keeps the Gram matrix invertible while allowing the
// near-interpolating regime.
inline double noise_floor(const Eigen::VectorXd& targets) {
  const double mean = targets.size() > 0 ? targets.mean() : 0.0;
  double var =
      targets.size() > 0 ? (targets.array() - mean).square().mean() : 0.0;
  if (!(var > 0.0)) var = 1.0;
  return std::log(1e-6 * std::sqrt(var));
}

namespace detail {

// One-entry memo shared by the objective and gradient closures; BFGS asks
// for both at the same point, and each evaluation is a full refit.
struct NllCache {
  bool valid = false;
  Eigen::VectorXd x;
  double nll = 0.0;
  TrainedModel model;
};

inline HyperParams decode_theta(const Eigen::VectorXd& x, double floor_log_sn) {
  std::array<double, HyperParams::kCount> a;
  for (std::size_t i = 0; i < HyperParams::kCount; ++i) {
    a[i] = x[static_cast<Eigen::Index>(i)];
  }
  a[slot::sigman] = std::max(a[slot::sigman], floor_log_sn);
  return HyperParams::from_log_array(a);
}

}  // namespace detail

// Negative log marginal likelihood of the training set as a function of the
// 12 log-hyperparameters, with the sigma_n floor applied inside. Returns
// +inf where the Gram matrix cannot be factorized.
struct NllProblem {
  std::vector<InputPoint> points;
  Eigen::VectorXd targets;
  double floor_log_sn;
  std::shared_ptr<detail::NllCache> cache =
      std::make_shared<detail::NllCache>();

  double evaluate(const Eigen::VectorXd& x) const {
    if (cache->valid && cache->x == x) return cache->nll;
    cache->valid = false;
    double nll = std::numeric_limits<double>::infinity();
    try {
      TrainedModel model =
          fit(points, targets, detail::decode_theta(x, floor_log_sn));
      nll = -log_marginal_likelihood(model);
      if (std::isfinite(nll)) {
        cache->x = x;
        cache->nll = nll;
        cache->model = std::move(model);
        cache->valid = true;
      }
    } catch (const NotPositiveDefinite&) {
    } catch (const Error&) {
    }
    return nll;
  }

  Eigen::VectorXd gradient_at(const Eigen::VectorXd& x) const {
    if (!(cache->valid && cache->x == x)) evaluate(x);
    if (!cache->valid) {
      throw NonFiniteObjective("NllProblem: gradient at infeasible point");
    }
    Eigen::VectorXd g = -lml_gradient(cache->model);
    if (x[slot::sigman] < floor_log_sn) {
      g[slot::sigman] = 0.0;  // objective is flat below the floor
    }
    return g;
  }

  Objective objective() const {
    return [*this](const Eigen::VectorXd& x) { return evaluate(x); };
  }

  Gradient gradient() const {
    return [*this](const Eigen::VectorXd& x) { return gradient_at(x); };
  }
};

// Maximizes the log marginal likelihood by BFGS from the canonical start
// plus (restarts - 1) jittered starts, returning the best final value.
// Deterministic given (data, restarts, seed).
inline OptimResult fit_hyperparams(const std::vector<InputPoint>& points,
                                   const Eigen::VectorXd& targets,
                                   int restarts, std::uint32_t seed,
                                   double tol = 1e-5, int max_iters = 300) {
  if (restarts < 1) throw Error("fit_hyperparams: restarts must be >= 1");
  if (points.empty()) throw EmptyData("fit_hyperparams: no training points");
  if (static_cast<Eigen::Index>(points.size()) != targets.size()) {
    throw DimensionMismatch("fit_hyperparams: points/targets length mismatch");
  }

  const HyperParams start = canonical_start(points, targets);
  const double floor_log_sn = noise_floor(targets);
  NllProblem problem{points, targets, floor_log_sn};

  const auto start_array = start.log_array();
  Eigen::VectorXd x0(HyperParams::kCount);
  for (std::size_t i = 0; i < HyperParams::kCount; ++i) {
    x0[static_cast<Eigen::Index>(i)] = start_array[i];
  }

  std::mt19937 rng(seed);
  bool have_best = false;
  OptimResult best;
  for (int r = 0; r < restarts; ++r) {
    Eigen::VectorXd x_start = x0;
    if (r > 0) {
      for (Eigen::Index i = 0; i < x_start.size(); ++i) {
        x_start[i] += detail::jitter_draw(rng);
      }
    }
    try {
      BfgsOutcome run = bfgs_minimize(problem.objective(), problem.gradient(),
                                      x_start, tol, max_iters);
      if (!std::isfinite(run.fx)) continue;
      if (!have_best || run.fx < best.final_nll) {
        best.theta = detail::decode_theta(run.x, floor_log_sn);
        best.final_nll = run.fx;
        best.iterations = run.iterations;
        best.converged = run.converged;
        best.restart_index = r;
        have_best = true;
      }
    } catch (const NonFiniteObjective&) {
      continue;
    }
  }
  if (!have_best) {
    throw AllRestartsFailed("fit_hyperparams: every restart failed");
  }
  return best;
}

}  // namespace gpforecast
