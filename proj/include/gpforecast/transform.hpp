#pragma once

#include <Eigen/Core>
#include <cmath>
#include <utility>

#include "gpforecast/errors.hpp"

namespace gpforecast {

// Response warping: counts are mapped through log(1 + y) and centered about
// the training mean, so the GP can assume a zero prior mean.
struct TransformState {
  double center = 0.0;
};

namespace detail {
inline void require_nonnegative(const Eigen::VectorXd& counts,
                                const char* where) {
  for (Eigen::Index i = 0; i < counts.size(); ++i) {
    if (!(counts[i] >= 0.0)) {
      throw NegativeCount(std::string(where) + ": negative count at index " +
                          std::to_string(i));
    }
  }
}
}  // namespace detail

inline std::pair<Eigen::VectorXd, TransformState> forward(
    const Eigen::VectorXd& counts) {
  detail::require_nonnegative(counts, "forward");
  Eigen::VectorXd v = counts.array().log1p();
  TransformState state{v.size() > 0 ? v.mean() : 0.0};
  v.array() -= state.center;
  return {std::move(v), state};
}

// Transforms further counts with the training center held fixed.
inline Eigen::VectorXd apply(const Eigen::VectorXd& counts,
                             const TransformState& state) {
  detail::require_nonnegative(counts, "apply");
  return counts.array().log1p() - state.center;
}

// Plug-in back-transform to the count scale (the count-scale median, not the
// lognormal mean). Monotone, so interval endpoints keep their ordering.
// Values below -center clamp to zero.
inline Eigen::VectorXd inverse(const Eigen::VectorXd& values,
                               const TransformState& state) {
  return (values.array() + state.center)
      .unaryExpr([](double v) { return std::expm1(v); })
      .max(0.0);
}

}  // namespace gpforecast
