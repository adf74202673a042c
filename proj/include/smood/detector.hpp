#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "smood/dataset.hpp"
#include "smood/gbdt.hpp"
#include "smood/oversample.hpp"

namespace smood {

/// Oversampler x booster sweep. Cell order is lexicographic in the field order
/// below, n_estimators fastest.
struct DetectorGrid {
  std::vector<OversampleMethod> methods;
  std::vector<std::size_t> ks;
  std::vector<double> ratios;
  std::vector<double> learning_rates;
  std::vector<std::size_t> n_estimators;

  static DetectorGrid full();
  static DetectorGrid desk();

  std::size_t size() const;
  std::pair<OversampleConfig, GbdtConfig> cell(std::size_t index, const GbdtConfig& base) const;
};

struct DetectorCvRecord {
  std::size_t cell = 0;
  std::size_t fold = 0;
  double aupr = 0.0;
  bool failed = false;
  std::string message;
  std::size_t train_rows = 0;              ///< fold training rows before oversampling
  std::size_t train_rows_oversampled = 0;
  std::size_t validation_rows = 0;
  std::size_t validation_scored = 0;       ///< equals validation_rows: validation is never resampled
};

struct DetectorSearchResult {
  OversampleConfig oversample;
  GbdtConfig gbdt;
  std::size_t best_cell = 0;
  double best_score = 0.0;          ///< mean validation AUPR of the winner
  std::vector<double> cell_scores;  ///< -inf for failed cells
  std::vector<DetectorCvRecord> table;  ///< |grid| x k rows, cell-major
};

/// k folds with each class spread as evenly as kfold_split spreads it.
std::vector<Fold> stratified_kfold(const std::vector<bool>& labels, std::size_t k, std::uint64_t seed);

/// Oversamples the training rows, then fits the booster.
DetectorModel train_detector(const Eigen::MatrixXd& F, const std::vector<bool>& labels,
                             const OversampleConfig& oversample, const GbdtConfig& gbdt);

/// Stratified k-fold search maximising mean validation AUPR. Oversampling touches
/// only the training part of each fold. Ties go to the earlier cell.
DetectorSearchResult detector_cv_tune(const Eigen::MatrixXd& F, const std::vector<bool>& labels,
                                      const DetectorGrid& grid, std::size_t k, std::uint64_t seed,
                                      const GbdtConfig& base = {});

std::string detector_cv_table_csv(const DetectorGrid& grid, const DetectorSearchResult& result);

}  // namespace smood
