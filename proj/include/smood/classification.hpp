#pragma once

#include <vector>

#include <Eigen/Core>

namespace smood {

/// Predicted positive (OOD) iff score >= threshold.
struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// One point per unique score, thresholds descending, so recall is nondecreasing.
struct PrCurve {
  std::vector<PrPoint> points;
  double aupr = 0.0;
};

PrCurve pr_curve(const Eigen::VectorXd& scores, const std::vector<bool>& labels);

/// Step-wise sum over achievable points: sum (R_i - R_{i-1}) P_i with R_0 = 0.
double aupr(const PrCurve& curve);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  bool precision_undefined = false;  ///< no predictions for the class; precision reported as 0
  bool recall_undefined = false;     ///< no true members of the class; recall reported as 0
  std::size_t support = 0;
};

struct ClassificationReport {
  ClassMetrics id;
  ClassMetrics ood;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;  ///< OOD is the positive class
  double threshold = 0.5;
};

ClassificationReport classification_report(const std::vector<bool>& predicted_ood,
                                           const std::vector<bool>& labels);
ClassificationReport classification_report(const Eigen::VectorXd& scores, const std::vector<bool>& labels,
                                           double threshold = 0.5);

}  // namespace smood
