#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace smood {

struct NeighborSigmaConfig {
  std::size_t n_neighbors = 8;
  double sigma_t = 0.0;  ///< set by calibrate_sigma_t

  static std::vector<std::size_t> default_grid() { return {4, 8, 12, 16, 20}; }
  void validate() const;
};

/// Indices of the n reference rows closest to `query`, ordered by (distance, target).
std::vector<std::size_t> nearest_neighbors(const Eigen::Ref<const Eigen::RowVectorXd>& query,
                                           const Eigen::MatrixXd& reference_X,
                                           const Eigen::VectorXd& reference_y, std::size_t n);

/// Population std of |y_hat - y_j| over the n nearest reference configurations.
double neighbor_sigma(const Eigen::Ref<const Eigen::RowVectorXd>& query, double y_hat,
                      const Eigen::MatrixXd& reference_X, const Eigen::VectorXd& reference_y,
                      std::size_t n);

/// neighbor_sigma for every n in `grid`, sharing one neighbour search.
std::vector<double> neighbor_sigma_grid(const Eigen::Ref<const Eigen::RowVectorXd>& query, double y_hat,
                                        const Eigen::MatrixXd& reference_X, const Eigen::VectorXd& reference_y,
                                        const std::vector<std::size_t>& grid);

Eigen::VectorXd neighbor_sigma_rows(const Eigen::MatrixXd& queries, const Eigen::VectorXd& y_hat,
                                    const Eigen::MatrixXd& reference_X, const Eigen::VectorXd& reference_y,
                                    std::size_t n);

/// Linear-interpolation quantile (default 95th percentile) of at least 20 values.
double calibrate_sigma_t(std::vector<double> sigmas, double level = 0.95);

/// OOD iff sigma >= sigma_t.
inline bool baseline_detect(double sigma, double sigma_t) { return sigma >= sigma_t; }

struct NeighborTuning {
  std::size_t best = 0;
  std::vector<std::size_t> grid;
  std::vector<double> mean_correlation;  ///< per grid entry, averaged over folds
};

/// Picks the grid entry whose sigma best correlates (Pearson) with |error|, averaged
/// over `folds` shuffled folds. A fold with constant sigma or error scores -1.
/// Ties go to the earliest (smallest) grid entry.
NeighborTuning baseline_tune_neighbors(const std::vector<std::size_t>& grid,
                                       const std::vector<Eigen::VectorXd>& sigma_by_grid,
                                       const Eigen::VectorXd& abs_errors, std::size_t folds = 5,
                                       std::uint64_t seed = 0);

}  // namespace smood
