#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "smood/baseline.hpp"
#include "smood/dataset.hpp"
#include "smood/detector.hpp"
#include "smood/fnn.hpp"
#include "smood/gp.hpp"
#include "smood/oracle.hpp"
#include "smood/sensitivity.hpp"

namespace smood {

enum class SurrogateKind { Fnn, Gp };

struct DoeConfig {
  std::size_t train_size = 1500;
  std::size_t test_size = 1000;
  DesignSpace train_box;  ///< biased sub-box the training design is drawn from
};

struct FnnStageConfig {
  FnnGrid grid = FnnGrid::desk();
  std::size_t cv_folds = 5;
  std::size_t oof_folds = 10;  ///< out-of-fold predictions used for OOD labelling
  double holdout_fraction = 0.1;
};

struct GpStageConfig {
  std::size_t max_train = 400;  ///< rows used to fit hyperparameters
  GpFitOptions fit;
  std::size_t oof_folds = 10;
};

struct LabelConfig {
  double level = 0.99;
  std::size_t resamples = 2000;
};

struct DetectorStageConfig {
  DetectorGrid grid = DetectorGrid::desk();
  std::size_t cv_folds = 5;
  std::size_t max_depth = 3;
  std::size_t min_samples_leaf = 5;
};

struct BaselineConfig {
  std::vector<std::size_t> grid = NeighborSigmaConfig::default_grid();
  double quantile = 0.95;
  std::size_t folds = 5;
};

/// Everything a run needs. Loaded from a JSON document whose top-level keys are
/// the module sections; any unknown key anywhere is rejected.
struct PipelineConfig {
  std::uint64_t seed = 0;
  DesignSpace space;
  OracleSpec oracle;
  DoeConfig doe;
  SurrogateKind surrogate = SurrogateKind::Fnn;
  FnnStageConfig fnn;
  GpStageConfig gp;
  PerturbationSpec sensitivity;
  LabelConfig labeling;
  DetectorStageConfig detector;
  BaselineConfig baseline;
  double risk_threshold = 0.5;

  /// Canonical JSON text; its SHA-256 is the run's config hash.
  std::string canonical() const;
};

PipelineConfig parse_config(const std::string& text, const std::string& source = "<config>");
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace smood
