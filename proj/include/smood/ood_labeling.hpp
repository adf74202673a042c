#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace smood {

/// Percentile-bootstrap interval for the `level` quantile of an error sample.
struct ConfidenceInterval {
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.99;
  std::size_t resamples = 0;
};

/// Resamples the (sorted) errors with replacement `resamples` times, takes the
/// `level` quantile of each resample, and returns the (1-level)/2 and
/// 1-(1-level)/2 quantiles of those statistics.
ConfidenceInterval bootstrap_ci(const Eigen::Ref<const Eigen::VectorXd>& errors, double level = 0.99,
                                std::size_t resamples = 2000, std::uint64_t seed = 0);

struct OodLabelSet {
  std::vector<bool> is_ood;
  ConfidenceInterval ci;
  std::size_t ood_count = 0;

  std::size_t size() const { return is_ood.size(); }
  double ratio() const {
    return is_ood.empty() ? 0.0 : static_cast<double>(ood_count) / static_cast<double>(is_ood.size());
  }
};

/// A sample is OOD when its error strictly exceeds ci.upper.
OodLabelSet label_ood(const Eigen::Ref<const Eigen::VectorXd>& errors, const ConfidenceInterval& ci);

}  // namespace smood
