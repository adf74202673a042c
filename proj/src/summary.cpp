#include "smood/summary.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "smood/error.hpp"
#include "smood/stats.hpp"

namespace smood {

BoxStats box_stats(std::vector<double> values) {
  BoxStats b;
  b.count = values.size();
  if (values.empty()) return b;
  std::sort(values.begin(), values.end());
  b.min = values.front();
  b.max = values.back();
  b.q1 = sorted_quantile(values, 0.25);
  b.median = sorted_quantile(values, 0.5);
  b.q3 = sorted_quantile(values, 0.75);
  b.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  return b;
}

PcaResult pca(const Eigen::MatrixXd& F, std::size_t components) {
  if (F.rows() < 2) throw InvalidArgument("pca: needs at least 2 rows");
  if (components < 1 || components > static_cast<std::size_t>(F.cols()))
    throw InvalidArgument("pca: component count out of range");
  PcaResult r;
  r.mean = F.colwise().mean().transpose();
  Eigen::MatrixXd Z = F.rowwise() - r.mean.transpose();
  r.scale = (Z.array().square().colwise().sum() / static_cast<double>(F.rows())).sqrt().transpose();
  for (Eigen::Index j = 0; j < Z.cols(); ++j) {
    if (!(r.scale(j) > 0.0)) r.scale(j) = 1.0;
    Z.col(j) /= r.scale(j);
  }
  const Eigen::MatrixXd cov = Z.transpose() * Z / static_cast<double>(F.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw FitError("pca: eigendecomposition failed");
  const Eigen::VectorXd values = eig.eigenvalues().cwiseMax(0.0);  // ascending
  const double total = values.sum();
  const auto k = static_cast<Eigen::Index>(components);
  const Eigen::Index d = F.cols();
  r.loadings.resize(d, k);
  r.explained_variance_ratio.resize(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    r.loadings.col(c) = v;
    r.explained_variance_ratio(c) = total > 0.0 ? values(d - 1 - c) / total : 0.0;
  }
  r.scores = Z * r.loadings;
  return r;
}

}  // namespace smood
