#include "smood/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "smood/classification.hpp"
#include "smood/error.hpp"
#include "smood/io.hpp"
#include "smood/parallel.hpp"
#include "smood/random.hpp"

namespace smood {

DetectorGrid DetectorGrid::full() {
  DetectorGrid g;
  g.methods = {OversampleMethod::Smote, OversampleMethod::BorderlineSmote};
  g.ks = {5, 10, 15};
  g.ratios = {0.25, 0.5, 0.75, 1.0};
  for (double s : {1e-3, 1e-2, 1e-1}) {
    g.learning_rates.push_back(s);
    g.learning_rates.push_back(5.0 * s);
  }
  g.n_estimators = {100, 250, 500};
  return g;
}

DetectorGrid DetectorGrid::desk() {
  DetectorGrid g;
  g.methods = {OversampleMethod::Smote, OversampleMethod::BorderlineSmote};
  g.ks = {5};
  g.ratios = {0.5, 1.0};
  g.learning_rates = {0.05, 0.1};
  g.n_estimators = {100};
  return g;
}

std::size_t DetectorGrid::size() const {
  return methods.size() * ks.size() * ratios.size() * learning_rates.size() * n_estimators.size();
}

std::pair<OversampleConfig, GbdtConfig> DetectorGrid::cell(std::size_t index, const GbdtConfig& base) const {
  if (index >= size()) throw InvalidArgument("DetectorGrid::cell: index out of range");
  GbdtConfig g = base;
  OversampleConfig o;
  g.n_estimators = n_estimators[index % n_estimators.size()];
  index /= n_estimators.size();
  g.learning_rate = learning_rates[index % learning_rates.size()];
  index /= learning_rates.size();
  o.ratio = ratios[index % ratios.size()];
  index /= ratios.size();
  o.k = ks[index % ks.size()];
  index /= ks.size();
  o.method = methods[index];
  return {o, g};
}

std::vector<Fold> stratified_kfold(const std::vector<bool>& labels, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  if (pos.size() < k || neg.size() < k)
    throw InvalidArgument("stratified_kfold: each class needs >= " + std::to_string(k) + " rows (have " +
                          std::to_string(pos.size()) + " positive, " + std::to_string(neg.size()) +
                          " negative)");
  std::vector<Fold> out(k);
  std::size_t stream = 0;
  for (const auto* cls : {&pos, &neg}) {
    const auto split = kfold_split(cls->size(), k, child_seed(seed, stream++));
    for (std::size_t f = 0; f < k; ++f) {
      for (auto i : split[f].train) out[f].train.push_back((*cls)[i]);
      for (auto i : split[f].validation) out[f].validation.push_back((*cls)[i]);
    }
  }
  for (auto& f : out) {
    std::sort(f.train.begin(), f.train.end());
    std::sort(f.validation.begin(), f.validation.end());
  }
  return out;
}

DetectorModel train_detector(const Eigen::MatrixXd& F, const std::vector<bool>& labels,
                             const OversampleConfig& oversample_config, const GbdtConfig& gbdt) {
  const auto aug = oversample(F, labels, oversample_config);
  return gbdt_train(aug.X, aug.labels, gbdt);
}

namespace {

std::pair<Eigen::MatrixXd, std::vector<bool>> take_rows(const Eigen::MatrixXd& F, const std::vector<bool>& labels,
                                                        const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), F.cols());
  std::vector<bool> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    X.row(static_cast<Eigen::Index>(i)) = F.row(static_cast<Eigen::Index>(rows[i]));
    y[i] = labels[rows[i]];
  }
  return {std::move(X), std::move(y)};
}

}  // namespace

DetectorSearchResult detector_cv_tune(const Eigen::MatrixXd& F, const std::vector<bool>& labels,
                                      const DetectorGrid& grid, std::size_t k, std::uint64_t seed,
                                      const GbdtConfig& base) {
  if (grid.size() == 0) throw InvalidArgument("detector_cv_tune: empty grid");
  if (static_cast<std::size_t>(F.rows()) != labels.size())
    throw DimensionMismatch("detector_cv_tune labels", static_cast<std::size_t>(F.rows()), labels.size());
  const auto folds = stratified_kfold(labels, k, seed);
  const std::size_t cells = grid.size();

  DetectorSearchResult result;
  result.table.resize(cells * k);
  parallel_for(cells * k, [&](std::size_t job) {
    const std::size_t c = job / k, f = job % k;
    auto& rec = result.table[job];
    rec.cell = c;
    rec.fold = f;
    rec.train_rows = folds[f].train.size();
    rec.validation_rows = folds[f].validation.size();
    try {
      auto [os, gb] = grid.cell(c, base);
      os.seed = child_seed(seed, 1000 + job);
      const auto [Xt, yt] = take_rows(F, labels, folds[f].train);
      const auto [Xv, yv] = take_rows(F, labels, folds[f].validation);
      const auto aug = oversample(Xt, yt, os);
      rec.train_rows_oversampled = aug.labels.size();
      const auto model = gbdt_train(aug.X, aug.labels, gb);
      const Eigen::VectorXd scores = gbdt_predict_proba_rows(model, Xv);
      rec.validation_scored = static_cast<std::size_t>(scores.size());
      rec.aupr = pr_curve(scores, yv).aupr;
    } catch (const Error& e) {
      rec.failed = true;
      rec.aupr = -std::numeric_limits<double>::infinity();
      rec.message = e.what();
    }
  });

  result.cell_scores.assign(cells, 0.0);
  for (const auto& rec : result.table) {
    if (rec.failed) result.cell_scores[rec.cell] = -std::numeric_limits<double>::infinity();
    else if (std::isfinite(result.cell_scores[rec.cell]))
      result.cell_scores[rec.cell] += rec.aupr / static_cast<double>(k);
  }
  result.best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < cells; ++c) {
    if (result.cell_scores[c] > result.best_score) {
      result.best_score = result.cell_scores[c];
      result.best_cell = c;
    }
  }
  if (!std::isfinite(result.best_score))
    throw TrainingAborted("detector_cv_tune: every grid cell failed (" + result.table.front().message + ")");
  std::tie(result.oversample, result.gbdt) = grid.cell(result.best_cell, base);
  result.oversample.seed = child_seed(seed, 999);
  return result;
}

std::string detector_cv_table_csv(const DetectorGrid& grid, const DetectorSearchResult& result) {
  std::ostringstream out;
  out << "cell,fold,method,k,ratio,learning_rate,n_estimators,train_rows,train_rows_oversampled,"
         "validation_rows,aupr,status\n";
  for (const auto& rec : result.table) {
    const auto [os, gb] = grid.cell(rec.cell, GbdtConfig{});
    out << rec.cell << ',' << rec.fold << ',' << to_string(os.method) << ',' << os.k << ','
        << format_double(os.ratio) << ',' << format_double(gb.learning_rate) << ',' << gb.n_estimators << ','
        << rec.train_rows << ',' << rec.train_rows_oversampled << ',' << rec.validation_rows << ','
        << (rec.failed ? std::string("nan") : format_double(rec.aupr)) << ','
        << (rec.failed ? "failed" : "ok") << '\n';
  }
  return out.str();
}

}  // namespace smood
