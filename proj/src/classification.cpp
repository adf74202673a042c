#include "smood/classification.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "smood/error.hpp"

namespace smood {

PrCurve pr_curve(const Eigen::VectorXd& scores, const std::vector<bool>& labels) {
  const auto n = labels.size();
  if (static_cast<std::size_t>(scores.size()) != n)
    throw DimensionMismatch("pr_curve", n, static_cast<std::size_t>(scores.size()));
  if (!scores.allFinite()) throw InvalidArgument("pr_curve: non-finite score");
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  if (positives == 0 || positives == n) throw InvalidArgument("pr_curve: single-class labels");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores(static_cast<Eigen::Index>(a)) > scores(static_cast<Eigen::Index>(b));
  });
  PrCurve curve;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (labels[order[i]] ? tp : fp) += 1;
    const double s = scores(static_cast<Eigen::Index>(order[i]));
    if (i + 1 < n && scores(static_cast<Eigen::Index>(order[i + 1])) == s) continue;
    curve.points.push_back({s, static_cast<double>(tp) / static_cast<double>(tp + fp),
                            static_cast<double>(tp) / static_cast<double>(positives)});
  }
  curve.aupr = aupr(curve);
  return curve;
}

double aupr(const PrCurve& curve) {
  double area = 0.0, prev = 0.0;
  for (const auto& p : curve.points) {
    area += (p.recall - prev) * p.precision;
    prev = p.recall;
  }
  return area;
}

namespace {

ClassMetrics class_metrics(std::size_t tp, std::size_t fp, std::size_t fn) {
  ClassMetrics m;
  m.support = tp + fn;
  m.precision_undefined = tp + fp == 0;
  m.recall_undefined = tp + fn == 0;
  m.precision = m.precision_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  m.recall = m.recall_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  return m;
}

}  // namespace

ClassificationReport classification_report(const std::vector<bool>& predicted_ood,
                                           const std::vector<bool>& labels) {
  if (predicted_ood.size() != labels.size())
    throw DimensionMismatch("classification_report", labels.size(), predicted_ood.size());
  ClassificationReport r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) (predicted_ood[i] ? r.tp : r.fn) += 1;
    else (predicted_ood[i] ? r.fp : r.tn) += 1;
  }
  r.ood = class_metrics(r.tp, r.fp, r.fn);
  r.id = class_metrics(r.tn, r.fn, r.fp);
  r.macro_precision = (r.id.precision + r.ood.precision) / 2.0;
  r.macro_recall = (r.id.recall + r.ood.recall) / 2.0;
  return r;
}

ClassificationReport classification_report(const Eigen::VectorXd& scores, const std::vector<bool>& labels,
                                           double threshold) {
  if (static_cast<std::size_t>(scores.size()) != labels.size())
    throw DimensionMismatch("classification_report", labels.size(), static_cast<std::size_t>(scores.size()));
  std::vector<bool> pred(labels.size());
  for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = scores(static_cast<Eigen::Index>(i)) >= threshold;
  auto r = classification_report(pred, labels);
  r.threshold = threshold;
  return r;
}

}  // namespace smood
