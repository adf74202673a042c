#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace smood {

enum class OversampleMethod { Smote, BorderlineSmote };

std::string_view to_string(OversampleMethod m);
OversampleMethod oversample_method_from_string(std::string_view name);

struct OversampleConfig {
  OversampleMethod method = OversampleMethod::BorderlineSmote;
  std::size_t k = 5;     ///< minority nearest neighbours used for interpolation
  double ratio = 1.0;    ///< target minority / majority count after resampling
  std::uint64_t seed = 0;

  void validate() const;
};

/// Where a synthetic row came from: x_seed + u (x_neighbor - x_seed).
struct SyntheticOrigin {
  std::size_t seed_row = 0;
  std::size_t neighbor_row = 0;
  double u = 0.0;
};

/// Original rows (unchanged, original order) followed by synthetic minority rows.
struct OversampleResult {
  Eigen::MatrixXd X;
  std::vector<bool> labels;
  std::vector<SyntheticOrigin> origins;  ///< one per synthetic row

  std::size_t synthetic_count() const { return origins.size(); }
};

/// Synthesises minority (label true) rows until minority >= ceil(ratio * majority).
/// BorderlineSmote only seeds from minority rows whose k nearest neighbours
/// (whole data set) are majority in a fraction within [0.5, 1); when no such
/// row exists it falls back to every minority row.
OversampleResult oversample(const Eigen::MatrixXd& X, const std::vector<bool>& labels,
                            const OversampleConfig& config);

/// Indices of the k nearest rows of `candidates` (by Euclidean distance, ties by
/// index) to row `query` of X, excluding `query` itself.
std::vector<std::size_t> nearest_rows(const Eigen::MatrixXd& X, std::size_t query,
                                      const std::vector<std::size_t>& candidates, std::size_t k);

}  // namespace smood
