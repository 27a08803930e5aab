#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "gpforecast/errors.hpp"
#include "gpforecast/linalg.hpp"

namespace gpforecast {

// One monthly observation site in input space: running month index plus the
// three standardized climate covariates.
struct InputPoint {
  double t = 0.0;            // running month index, 1-based
  double rainfall = 0.0;     // z-score of total monthly rainfall
  double humidity = 0.0;     // z-score of mean relative humidity
  double temperature = 0.0;  // z-score of mean surface air temperature
};

inline double squared_distance(const InputPoint& a, const InputPoint& b) {
  const double dt = a.t - b.t;
  const double dr = a.rainfall - b.rainfall;
  const double dh = a.humidity - b.humidity;
  const double dm = a.temperature - b.temperature;
  return dt * dt + dr * dr + dh * dh + dm * dm;
}

inline double euclidean_distance(const InputPoint& a, const InputPoint& b) {
  return std::sqrt(squared_distance(a, b));
}

// The periodic factor acts on the calendar axis only.
inline double time_distance(const InputPoint& a, const InputPoint& b) {
  return std::abs(a.t - b.t);
}

// The 12 kernel hyperparameters, stored as logarithms so that optimization
// is unconstrained while the natural-scale values stay positive.
struct HyperParams {
  static constexpr std::size_t kCount = 12;

  double log_sigma1 = 0.0;  // Matern magnitude
  double log_l1 = 0.0;      // Matern length scale
  double log_sigma2 = 0.0;  // seasonal SE magnitude
  double log_l2 = 0.0;      // seasonal SE length scale
  double log_p = 0.0;       // period (months)
  double log_lper = 0.0;    // periodic length scale
  double log_sigma3 = 0.0;  // rational quadratic magnitude
  double log_alpha = 0.0;   // rational quadratic scale mixture
  double log_l3 = 0.0;      // rational quadratic length scale
  double log_sigmaf = 0.0;  // correlated-noise SE magnitude
  double log_l4 = 0.0;      // correlated-noise SE length scale
  double log_sigman = 0.0;  // independent noise magnitude

  std::array<double, kCount> log_array() const {
    return {log_sigma1, log_l1,     log_sigma2, log_l2,
            log_p,      log_lper,   log_sigma3, log_alpha,
            log_l3,     log_sigmaf, log_l4,     log_sigman};
  }

  static HyperParams from_log_array(const std::array<double, kCount>& v) {
    HyperParams h;
    h.log_sigma1 = v[0];
    h.log_l1 = v[1];
    h.log_sigma2 = v[2];
    h.log_l2 = v[3];
    h.log_p = v[4];
    h.log_lper = v[5];
    h.log_sigma3 = v[6];
    h.log_alpha = v[7];
    h.log_l3 = v[8];
    h.log_sigmaf = v[9];
    h.log_l4 = v[10];
    h.log_sigman = v[11];
    return h;
  }

  std::array<double, kCount> naturals() const {
    std::array<double, kCount> n = log_array();
    for (double& v : n) v = std::exp(v);
    return n;
  }

  // Natural-scale values must be strictly positive and finite.
  void validate() const {
    for (double v : naturals()) {
      if (!std::isfinite(v) || !(v > 0.0)) {
        throw Error("HyperParams: natural-scale value not positive finite");
      }
    }
  }
};

// Natural-scale slot names, in the storage order of HyperParams.
inline constexpr std::array<std::string_view, HyperParams::kCount> kParamNames =
    {"sigma1", "l1", "sigma2", "l2",     "p",  "lper",
     "sigma3", "alpha", "l3",  "sigmaf", "l4", "sigman"};

namespace slot {
inline constexpr std::size_t sigma1 = 0, l1 = 1, sigma2 = 2, l2 = 3, p = 4,
                             lper = 5, sigma3 = 6, alpha = 7, l3 = 8,
                             sigmaf = 9, l4 = 10, sigman = 11;
}  // namespace slot

namespace detail {

// Scalar kernels on a precomputed distance. Gradients are taken with respect
// to the *logarithm* of each parameter.

inline constexpr double kSqrt5 = 2.2360679774997896964091736687747;

struct ValueGrad2 {
  double value;
  double d_log_a;
  double d_log_b;
};

inline double matern52_r(double r, double sigma, double l) {
  const double s = kSqrt5 * r / l;
  return sigma * sigma * (1.0 + s + s * s / 3.0) * std::exp(-s);
}

inline ValueGrad2 matern52_r_grad(double r, double sigma, double l) {
  const double s = kSqrt5 * r / l;
  const double e = std::exp(-s);
  const double v = sigma * sigma * (1.0 + s + s * s / 3.0) * e;
  // d/dlog l: s scales as 1/l, so ds/dlog l = -s.
  const double dl = sigma * sigma * e * s * s * (1.0 + s) / 3.0;
  return {v, 2.0 * v, dl};
}

inline double squared_exp_r(double r, double sigma, double l) {
  const double z = r / l;
  return sigma * sigma * std::exp(-0.5 * z * z);
}

inline ValueGrad2 squared_exp_r_grad(double r, double sigma, double l) {
  const double z = r / l;
  const double v = sigma * sigma * std::exp(-0.5 * z * z);
  return {v, 2.0 * v, v * z * z};
}

// Folding dt by the period keeps periodic(dt + p) == periodic(dt) exact:
// fmod is exact in IEEE arithmetic and sin(2u) is unchanged by the fold.
inline double periodic_dt(double dt, double p, double lper) {
  const double rem = std::fmod(std::abs(dt), p);
  const double u = std::numbers::pi * rem / p;
  const double s = std::sin(u);
  return std::exp(-2.0 * s * s / (lper * lper));
}

inline ValueGrad2 periodic_dt_grad(double dt, double p, double lper) {
  const double adt = std::abs(dt);
  const double rem = std::fmod(adt, p);
  const double u = std::numbers::pi * rem / p;
  const double s = std::sin(u);
  const double inv_l2 = 1.0 / (lper * lper);
  const double v = std::exp(-2.0 * s * s * inv_l2);
  // d/dlog p uses the unfolded angle in the prefactor; sin(2u) itself is
  // invariant under the fold.
  const double u_full = std::numbers::pi * adt / p;
  const double dp = v * 2.0 * u_full * std::sin(2.0 * u) * inv_l2;
  const double dlper = v * 4.0 * s * s * inv_l2;
  return {v, dp, dlper};
}

struct ValueGrad3 {
  double value;
  double d_log_sigma;
  double d_log_alpha;
  double d_log_l;
};

// Magnitude enters unsquared, matching the printed form of the kernel.
inline double rational_quadratic_r(double r, double sigma, double alpha,
                                   double l) {
  const double b = 1.0 + r * r / (2.0 * alpha * l * l);
  return sigma * std::pow(b, -alpha);
}

inline ValueGrad3 rational_quadratic_r_grad(double r, double sigma,
                                            double alpha, double l) {
  const double b = 1.0 + r * r / (2.0 * alpha * l * l);
  const double v = sigma * std::pow(b, -alpha);
  const double dl = v * (r * r / (l * l)) / b;
  const double dalpha = v * alpha * ((b - 1.0) / b - std::log(b));
  return {v, v, dalpha, dl};
}

}  // namespace detail

// --- Leaf covariance functions (natural-scale parameters) ---

inline double matern52(const InputPoint& a, const InputPoint& b, double sigma1,
                       double l1) {
  return detail::matern52_r(euclidean_distance(a, b), sigma1, l1);
}

inline double squared_exp(const InputPoint& a, const InputPoint& b,
                          double sigma, double l) {
  return detail::squared_exp_r(euclidean_distance(a, b), sigma, l);
}

inline double periodic(const InputPoint& a, const InputPoint& b, double p,
                       double lper) {
  return detail::periodic_dt(time_distance(a, b), p, lper);
}

inline double seasonal(const InputPoint& a, const InputPoint& b, double sigma2,
                       double l2, double p, double lper) {
  return squared_exp(a, b, sigma2, l2) * periodic(a, b, p, lper);
}

inline double rational_quadratic(const InputPoint& a, const InputPoint& b,
                                 double sigma3, double alpha, double l3) {
  return detail::rational_quadratic_r(euclidean_distance(a, b), sigma3, alpha,
                                      l3);
}

// The delta term fires on identical dataset index, never on coordinate
// equality, so duplicate covariate rows stay distinguishable and test points
// never receive the noise spike.
inline double noise_kernel(const InputPoint& a, const InputPoint& b,
                           bool same_index, double sigmaf, double l4,
                           double sigman) {
  double v = detail::squared_exp_r(euclidean_distance(a, b), sigmaf, l4);
  if (same_index) v += sigman * sigman;
  return v;
}

// --- Kernel composition tree ---

enum class KernelVariant {
  kMatern52,
  kSquaredExp,
  kPeriodic,
  kRationalQuadratic,
  kWhiteNoise,
  kSum,
  kProduct,
};

// A composition tree over the leaf kernels. Leaves own disjoint slots of the
// hyperparameter vector; Sum and Product combine children.
struct KernelNode {
  KernelVariant variant;
  std::vector<KernelNode> children;
  std::vector<std::size_t> param_slots;

  double eval(const InputPoint& a, const InputPoint& b, bool same_index,
              const std::array<double, HyperParams::kCount>& nat) const {
    switch (variant) {
      case KernelVariant::kMatern52:
        return detail::matern52_r(euclidean_distance(a, b),
                                  nat[param_slots[0]], nat[param_slots[1]]);
      case KernelVariant::kSquaredExp:
        return detail::squared_exp_r(euclidean_distance(a, b),
                                     nat[param_slots[0]], nat[param_slots[1]]);
      case KernelVariant::kPeriodic:
        return detail::periodic_dt(time_distance(a, b), nat[param_slots[0]],
                                   nat[param_slots[1]]);
      case KernelVariant::kRationalQuadratic:
        return detail::rational_quadratic_r(
            euclidean_distance(a, b), nat[param_slots[0]], nat[param_slots[1]],
            nat[param_slots[2]]);
      case KernelVariant::kWhiteNoise: {
        const double s = nat[param_slots[0]];
        return same_index ? s * s : 0.0;
      }
      case KernelVariant::kSum: {
        double v = 0.0;
        for (const KernelNode& c : children) v += c.eval(a, b, same_index, nat);
        return v;
      }
      case KernelVariant::kProduct: {
        double v = 1.0;
        for (const KernelNode& c : children) v *= c.eval(a, b, same_index, nat);
        return v;
      }
    }
    return 0.0;
  }

  // Accumulates mult * d k(a,b) / d log(theta_m) into out[m] and returns the
  // node value. Products route the usual rule through the multiplier.
  double eval_grad(const InputPoint& a, const InputPoint& b, bool same_index,
                   const std::array<double, HyperParams::kCount>& nat,
                   double mult,
                   std::array<double, HyperParams::kCount>& out) const {
    switch (variant) {
      case KernelVariant::kMatern52: {
        const auto g = detail::matern52_r_grad(
            euclidean_distance(a, b), nat[param_slots[0]], nat[param_slots[1]]);
        out[param_slots[0]] += mult * g.d_log_a;
        out[param_slots[1]] += mult * g.d_log_b;
        return g.value;
      }
      case KernelVariant::kSquaredExp: {
        const auto g = detail::squared_exp_r_grad(
            euclidean_distance(a, b), nat[param_slots[0]], nat[param_slots[1]]);
        out[param_slots[0]] += mult * g.d_log_a;
        out[param_slots[1]] += mult * g.d_log_b;
        return g.value;
      }
      case KernelVariant::kPeriodic: {
        const auto g = detail::periodic_dt_grad(
            time_distance(a, b), nat[param_slots[0]], nat[param_slots[1]]);
        out[param_slots[0]] += mult * g.d_log_a;
        out[param_slots[1]] += mult * g.d_log_b;
        return g.value;
      }
      case KernelVariant::kRationalQuadratic: {
        const auto g = detail::rational_quadratic_r_grad(
            euclidean_distance(a, b), nat[param_slots[0]], nat[param_slots[1]],
            nat[param_slots[2]]);
        out[param_slots[0]] += mult * g.d_log_sigma;
        out[param_slots[1]] += mult * g.d_log_alpha;
        out[param_slots[2]] += mult * g.d_log_l;
        return g.value;
      }
      case KernelVariant::kWhiteNoise: {
        const double s = nat[param_slots[0]];
        const double v = same_index ? s * s : 0.0;
        out[param_slots[0]] += mult * 2.0 * v;
        return v;
      }
      case KernelVariant::kSum: {
        double v = 0.0;
        for (const KernelNode& c : children) {
          v += c.eval_grad(a, b, same_index, nat, mult, out);
        }
        return v;
      }
      case KernelVariant::kProduct: {
        std::vector<double> vals(children.size());
        double v = 1.0;
        for (std::size_t i = 0; i < children.size(); ++i) {
          vals[i] = children[i].eval(a, b, same_index, nat);
          v *= vals[i];
        }
        for (std::size_t i = 0; i < children.size(); ++i) {
          double rest = mult;
          for (std::size_t j = 0; j < children.size(); ++j) {
            if (j != i) rest *= vals[j];
          }
          children[i].eval_grad(a, b, same_index, nat, rest, out);
        }
        return v;
      }
    }
    return 0.0;
  }
};

// The full covariance: Matern + SE*periodic + rational quadratic + (SE noise
// + independent noise), over the 12 hyperparameter slots.
inline const KernelNode& composite_kernel_tree() {
  static const KernelNode tree = [] {
    KernelNode matern{KernelVariant::kMatern52, {}, {slot::sigma1, slot::l1}};
    KernelNode season_se{KernelVariant::kSquaredExp, {}, {slot::sigma2, slot::l2}};
    KernelNode season_per{KernelVariant::kPeriodic, {}, {slot::p, slot::lper}};
    KernelNode season{KernelVariant::kProduct,
                      {std::move(season_se), std::move(season_per)},
                      {}};
    KernelNode rq{KernelVariant::kRationalQuadratic,
                  {},
                  {slot::sigma3, slot::alpha, slot::l3}};
    KernelNode noise_se{KernelVariant::kSquaredExp, {}, {slot::sigmaf, slot::l4}};
    KernelNode noise_delta{KernelVariant::kWhiteNoise, {}, {slot::sigman}};
    KernelNode root{KernelVariant::kSum, {}, {}};
    root.children.push_back(std::move(matern));
    root.children.push_back(std::move(season));
    root.children.push_back(std::move(rq));
    root.children.push_back(std::move(noise_se));
    root.children.push_back(std::move(noise_delta));
    return root;
  }();
  return tree;
}

inline double composite(const InputPoint& a, const InputPoint& b,
                        bool same_index, const HyperParams& theta) {
  return composite_kernel_tree().eval(a, b, same_index, theta.naturals());
}

struct GramResult {
  SymmetricMatrix matrix;
  std::vector<SymmetricMatrix> grads;  // d matrix / d log(theta_m), 0 or 12
};

// Gram matrix over one point set; the delta term fires on the diagonal only.
inline GramResult gram(const std::vector<InputPoint>& points,
                       const HyperParams& theta, bool want_grads) {
  if (points.empty()) throw EmptyData("gram: empty point list");
  theta.validate();
  const auto nat = theta.naturals();
  const KernelNode& tree = composite_kernel_tree();
  const Eigen::Index n = static_cast<Eigen::Index>(points.size());

  Eigen::MatrixXd k(n, n);
  std::vector<Eigen::MatrixXd> g;
  if (want_grads) g.assign(HyperParams::kCount, Eigen::MatrixXd(n, n));

  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const bool same = (i == j);
      if (want_grads) {
        std::array<double, HyperParams::kCount> dk{};
        const double v =
            tree.eval_grad(points[i], points[j], same, nat, 1.0, dk);
        k(i, j) = v;
        k(j, i) = v;
        for (std::size_t m = 0; m < HyperParams::kCount; ++m) {
          g[m](i, j) = dk[m];
          g[m](j, i) = dk[m];
        }
      } else {
        const double v = tree.eval(points[i], points[j], same, nat);
        k(i, j) = v;
        k(j, i) = v;
      }
    }
  }

  GramResult result{SymmetricMatrix(std::move(k)), {}};
  if (want_grads) {
    result.grads.reserve(HyperParams::kCount);
    for (auto& gm : g) result.grads.emplace_back(std::move(gm));
  }
  return result;
}

// Rectangular kernel matrix; the delta term never fires across point sets.
inline Eigen::MatrixXd cross_gram(const std::vector<InputPoint>& rows,
                                  const std::vector<InputPoint>& cols,
                                  const HyperParams& theta) {
  if (rows.empty() || cols.empty()) {
    throw EmptyData("cross_gram: empty point list");
  }
  theta.validate();
  const auto nat = theta.naturals();
  const KernelNode& tree = composite_kernel_tree();
  Eigen::MatrixXd k(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(cols.size()));
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    for (Eigen::Index j = 0; j < k.cols(); ++j) {
      k(i, j) = tree.eval(rows[static_cast<std::size_t>(i)],
                          cols[static_cast<std::size_t>(j)], false, nat);
    }
  }
  return k;
}

}  // namespace gpforecast
