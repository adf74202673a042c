#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "smood/sensitivity.hpp"

namespace smood {

struct GbdtConfig {
  double learning_rate = 0.1;
  std::size_t n_estimators = 100;
  std::size_t max_depth = 3;
  std::size_t min_samples_leaf = 5;
  std::uint64_t seed = 0;  ///< recorded only; exact greedy splitting draws nothing

  void validate() const;
};

/// Internal node when feature >= 0: x[feature] <= threshold goes left.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  ///< leaf contribution to the logit, shrinkage included
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  ///< nodes[0] is the root

  double eval(const double* x) const;
};

/// Logit-additive ensemble over the fixed feature order SA, SV, JA, JV.
struct DetectorModel {
  double base_score = 0.0;
  std::vector<RegressionTree> trees;
  GbdtConfig config;
  std::size_t train_rows = 0;
  std::size_t train_positives = 0;
  std::vector<double> loss_trace;  ///< mean logistic loss before stage 1, after each stage

  std::size_t feature_count() const { return kProfileFeatureNames.size(); }
};

double sigmoid(double z);

/// Labels: true = OOD. Rows of F follow the profile feature order.
DetectorModel gbdt_train(const Eigen::MatrixXd& F, const std::vector<bool>& labels,
                         const GbdtConfig& config);

double gbdt_logit(const DetectorModel& model, const double* features);
double gbdt_predict_proba(const DetectorModel& model, const SensitivityProfile& profile);
double gbdt_predict_proba(const DetectorModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& features);
Eigen::VectorXd gbdt_predict_proba_rows(const DetectorModel& model, const Eigen::MatrixXd& F);

double logistic_loss(const Eigen::VectorXd& logits, const std::vector<bool>& labels);

void save_detector(const DetectorModel& model, const std::filesystem::path& path);
DetectorModel load_detector(const std::filesystem::path& path);

}  // namespace smood
