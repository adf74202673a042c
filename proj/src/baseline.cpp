#include "smood/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "smood/dataset.hpp"
#include "smood/error.hpp"
#include "smood/parallel.hpp"
#include "smood/stats.hpp"

namespace smood {

void NeighborSigmaConfig::validate() const {
  if (n_neighbors < 2) throw InvalidArgument("NeighborSigmaConfig: n_neighbors must be >= 2");
  if (sigma_t < 0.0 || !std::isfinite(sigma_t)) throw InvalidArgument("NeighborSigmaConfig: bad sigma_t");
}

std::vector<std::size_t> nearest_neighbors(const Eigen::Ref<const Eigen::RowVectorXd>& query,
                                           const Eigen::MatrixXd& reference_X,
                                           const Eigen::VectorXd& reference_y, std::size_t n) {
  if (query.size() != reference_X.cols())
    throw DimensionMismatch("nearest_neighbors", static_cast<std::size_t>(reference_X.cols()),
                            static_cast<std::size_t>(query.size()));
  if (static_cast<std::size_t>(reference_X.rows()) < n)
    throw InvalidArgument("nearest_neighbors: reference set has " + std::to_string(reference_X.rows()) +
                          " rows, need " + std::to_string(n));
  struct Cand {
    double d;
    double y;
    std::size_t i;
    bool operator<(const Cand& o) const {
      if (d != o.d) return d < o.d;
      if (y != o.y) return y < o.y;
      return i < o.i;
    }
  };
  std::vector<Cand> c(static_cast<std::size_t>(reference_X.rows()));
  for (Eigen::Index r = 0; r < reference_X.rows(); ++r)
    c[static_cast<std::size_t>(r)] = {(reference_X.row(r) - query).squaredNorm(), reference_y(r),
                                      static_cast<std::size_t>(r)};
  std::partial_sort(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(n), c.end());
  std::vector<std::size_t> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = c[k].i;
  return out;
}

double neighbor_sigma(const Eigen::Ref<const Eigen::RowVectorXd>& query, double y_hat,
                      const Eigen::MatrixXd& reference_X, const Eigen::VectorXd& reference_y,
                      std::size_t n) {
  if (n < 2) throw InvalidArgument("neighbor_sigma: n_neighbors must be >= 2");
  const auto idx = nearest_neighbors(query, reference_X, reference_y, n);
  Eigen::VectorXd diff(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) diff(static_cast<Eigen::Index>(k)) = std::abs(y_hat - reference_y(static_cast<Eigen::Index>(idx[k])));
  return std::sqrt(population_variance(diff));
}

std::vector<double> neighbor_sigma_grid(const Eigen::Ref<const Eigen::RowVectorXd>& query, double y_hat,
                                        const Eigen::MatrixXd& reference_X, const Eigen::VectorXd& reference_y,
                                        const std::vector<std::size_t>& grid) {
  if (grid.empty()) return {};
  const std::size_t widest = *std::max_element(grid.begin(), grid.end());
  if (*std::min_element(grid.begin(), grid.end()) < 2)
    throw InvalidArgument("neighbor_sigma_grid: n_neighbors must be >= 2");
  // The first n of the sorted widest set are exactly the n nearest.
  const auto idx = nearest_neighbors(query, reference_X, reference_y, widest);
  std::vector<double> out;
  out.reserve(grid.size());
  for (auto n : grid) {
    Eigen::VectorXd diff(static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k)
      diff(static_cast<Eigen::Index>(k)) = std::abs(y_hat - reference_y(static_cast<Eigen::Index>(idx[k])));
    out.push_back(std::sqrt(population_variance(diff)));
  }
  return out;
}

Eigen::VectorXd neighbor_sigma_rows(const Eigen::MatrixXd& queries, const Eigen::VectorXd& y_hat,
                                    const Eigen::MatrixXd& reference_X, const Eigen::VectorXd& reference_y,
                                    std::size_t n) {
  if (y_hat.size() != queries.rows())
    throw DimensionMismatch("neighbor_sigma_rows", static_cast<std::size_t>(queries.rows()),
                            static_cast<std::size_t>(y_hat.size()));
  Eigen::VectorXd out(queries.rows());
  parallel_for(static_cast<std::size_t>(queries.rows()), [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    out(r) = neighbor_sigma(queries.row(r), y_hat(r), reference_X, reference_y, n);
  });
  return out;
}

double calibrate_sigma_t(std::vector<double> sigmas, double level) {
  if (sigmas.size() < 20)
    throw InvalidArgument("calibrate_sigma_t: need >= 20 validation sigmas, got " + std::to_string(sigmas.size()));
  for (double s : sigmas)
    if (!(s >= 0.0) || !std::isfinite(s)) throw InvalidArgument("calibrate_sigma_t: invalid sigma");
  const double t = quantile(std::move(sigmas), level);
  if (!(t > 0.0)) throw DegenerateRange("calibrate_sigma_t: threshold is zero");
  return t;
}

NeighborTuning baseline_tune_neighbors(const std::vector<std::size_t>& grid,
                                       const std::vector<Eigen::VectorXd>& sigma_by_grid,
                                       const Eigen::VectorXd& abs_errors, std::size_t folds,
                                       std::uint64_t seed) {
  if (grid.empty()) throw InvalidArgument("baseline_tune_neighbors: empty grid");
  if (sigma_by_grid.size() != grid.size())
    throw DimensionMismatch("baseline_tune_neighbors", grid.size(), sigma_by_grid.size());
  const auto n = static_cast<std::size_t>(abs_errors.size());
  for (const auto& s : sigma_by_grid)
    if (static_cast<std::size_t>(s.size()) != n)
      throw DimensionMismatch("baseline_tune_neighbors sigma", n, static_cast<std::size_t>(s.size()));
  const auto split = kfold_split(n, folds, seed);

  NeighborTuning out;
  out.grid = grid;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double total = 0.0;
    for (const auto& f : split) {
      Eigen::VectorXd s(static_cast<Eigen::Index>(f.validation.size()));
      Eigen::VectorXd e(s.size());
      for (std::size_t i = 0; i < f.validation.size(); ++i) {
        s(static_cast<Eigen::Index>(i)) = sigma_by_grid[g](static_cast<Eigen::Index>(f.validation[i]));
        e(static_cast<Eigen::Index>(i)) = abs_errors(static_cast<Eigen::Index>(f.validation[i]));
      }
      const double r = pearson(s, e);
      total += std::isnan(r) ? -1.0 : r;
    }
    out.mean_correlation.push_back(total / static_cast<double>(split.size()));
  }
  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g) {
    const bool better = out.mean_correlation[g] > out.mean_correlation[best] ||
                        (out.mean_correlation[g] == out.mean_correlation[best] && grid[g] < grid[best]);
    if (better) best = g;
  }
  out.best = grid[best];
  return out;
}

}  // namespace smood
