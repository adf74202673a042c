#pragma once

#include <vector>

#include <Eigen/Core>

namespace smood {

/// Five-number summary (type 7 quartiles) plus mean, as drawn in a box plot.
struct BoxStats {
  std::size_t count = 0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

BoxStats box_stats(std::vector<double> values);

/// Principal components of column-standardised features (population std; a
/// constant column is only centred). Each component's largest-magnitude
/// loading is positive.
struct PcaResult {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
  Eigen::MatrixXd loadings;  ///< features x components, orthonormal columns
  Eigen::MatrixXd scores;    ///< rows x components
  Eigen::VectorXd explained_variance_ratio;
};

PcaResult pca(const Eigen::MatrixXd& F, std::size_t components = 2);

}  // namespace smood
