#pragma once

#include <cmath>

#include <Eigen/Core>

#include "smood/error.hpp"

namespace smood {

/// Root-mean-square error divided by the target range y_max - y_min.
template <typename DerivedP, typename DerivedT>
double nrmse(const Eigen::MatrixBase<DerivedP>& predictions,
             const Eigen::MatrixBase<DerivedT>& targets, double y_min, double y_max) {
  if (!(y_max > y_min)) throw DegenerateRange("nrmse: y_max must exceed y_min");
  if (predictions.size() != targets.size())
    throw DimensionMismatch("nrmse", static_cast<std::size_t>(targets.size()),
                            static_cast<std::size_t>(predictions.size()));
  if (targets.size() == 0) throw InvalidArgument("nrmse: no samples");
  const double mse = (predictions.template cast<double>() - targets.template cast<double>())
                         .squaredNorm() /
                     static_cast<double>(targets.size());
  return std::sqrt(mse) / (y_max - y_min);
}

/// Percentage decrease of error from `pre` to `post`; negative when post > pre.
inline double decr_err(double pre_nrmse, double post_nrmse) {
  if (!(pre_nrmse > 0.0)) throw InvalidArgument("decr_err: pre-NRMSE must be positive");
  return (pre_nrmse - post_nrmse) / pre_nrmse * 100.0;
}

/// Surrogate-only speedup over the oracle, T_o / T_s.
inline double speedup_pure(double oracle_seconds, double surrogate_seconds) {
  if (!(surrogate_seconds > 0.0)) throw InvalidArgument("speedup_pure: T_s must be positive");
  return oracle_seconds / surrogate_seconds;
}

/// Hybrid speedup T_o / (T_d + p T_s + (1 - p) T_o), all times per query.
inline double speedup_hybrid(double oracle_seconds, double surrogate_seconds,
                             double detector_seconds, double surrogate_fraction) {
  if (!(surrogate_fraction >= 0.0 && surrogate_fraction <= 1.0))
    throw InvalidArgument("speedup_hybrid: p must lie in [0, 1]");
  if (oracle_seconds < 0.0 || surrogate_seconds < 0.0 || detector_seconds < 0.0)
    throw InvalidArgument("speedup_hybrid: negative time");
  const double denom = detector_seconds + surrogate_fraction * surrogate_seconds +
                       (1.0 - surrogate_fraction) * oracle_seconds;
  if (!(denom > 0.0)) throw InvalidArgument("speedup_hybrid: zero denominator");
  return oracle_seconds / denom;
}

}  // namespace smood
