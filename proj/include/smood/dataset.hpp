#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace smood {

/// Axis-aligned box of admissible design vectors.
struct DesignSpace {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  static DesignSpace box(std::size_t dims, double lo, double hi);
  static DesignSpace unit(std::size_t dims) { return box(dims, 0.0, 1.0); }

  std::size_t dims() const { return static_cast<std::size_t>(lo.size()); }
  bool contains(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Throws InvalidArgument unless dims >= 1 and lo < hi componentwise.
  void validate() const;
};

enum class SampleSource { Oracle, File };

/// Per-dimension z-score parameters for inputs plus the raw target range.
struct NormalizationStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
  double y_min = 0.0;
  double y_max = 0.0;

  double y_range() const { return y_max - y_min; }
};

/// Samples are stored row-wise: X is n x dims, y has n entries.
struct Dataset {
  DesignSpace space;
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<SampleSource> source;
  std::optional<NormalizationStats> norm;

  std::size_t size() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t dims() const { return space.dims(); }
  bool empty() const { return size() == 0; }

  Dataset subset(std::span<const std::size_t> rows) const;
  /// Throws InvalidArgument when the dataset cannot be trained on.
  void require_trainable(const char* who) const;
};

Dataset make_dataset(DesignSpace space, Eigen::MatrixXd X, Eigen::VectorXd y,
                     SampleSource source = SampleSource::Oracle);

/// Latin hypercube design: n x dims, one point per stratum per dimension.
Eigen::MatrixXd lhs_sample(const DesignSpace& space, std::size_t n, std::uint64_t seed);

NormalizationStats normalize_fit(const Dataset& data);
Eigen::MatrixXd normalize_apply(const NormalizationStats& stats, const Eigen::MatrixXd& X);
Eigen::VectorXd normalize_point(const NormalizationStats& stats,
                                const Eigen::Ref<const Eigen::VectorXd>& x);
Eigen::MatrixXd denormalize(const NormalizationStats& stats, const Eigen::MatrixXd& Z);

void save_normalization(const NormalizationStats& stats, const std::filesystem::path& path);
NormalizationStats load_normalization(const std::filesystem::path& path);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Shuffled k-fold partition of 0..n-1; validation sizes differ by at most one.
std::vector<Fold> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

/// Header `x0,...,x{d-1},y`. Without an explicit space the bounding box of the
/// data is used (unit interval on degenerate or empty dimensions).
Dataset load_csv(const std::filesystem::path& path,
                 const std::optional<DesignSpace>& space = std::nullopt);
void save_csv(const Dataset& data, const std::filesystem::path& path);

}  // namespace smood
