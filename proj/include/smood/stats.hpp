#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "smood/error.hpp"

namespace smood {

template <typename Derived>
typename Derived::Scalar mean(const Eigen::MatrixBase<Derived>& v) {
  return v.size() == 0 ? typename Derived::Scalar(0) : v.mean();
}

/// Population variance (divides by n), two-pass.
template <typename Derived>
typename Derived::Scalar population_variance(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  if (v.size() == 0) return Scalar(0);
  const Scalar m = v.mean();
  return (v.array() - m).square().sum() / static_cast<Scalar>(v.size());
}

/// Linear-interpolation quantile of already sorted values (R type 7).
inline double sorted_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InvalidArgument("quantile of empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile level outside [0, 1]");
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  return sorted_quantile(values, p);
}

template <typename Derived>
double quantile(const Eigen::MatrixBase<Derived>& v, double p) {
  std::vector<double> values(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) values[static_cast<std::size_t>(i)] = v(i);
  return quantile(std::move(values), p);
}

/// Pearson correlation; returns NaN when either side has zero variance.
template <typename DerivedA, typename DerivedB>
double pearson(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) throw DimensionMismatch("pearson", a.size(), b.size());
  const Eigen::ArrayXd ca = a.template cast<double>().array() - a.template cast<double>().mean();
  const Eigen::ArrayXd cb = b.template cast<double>().array() - b.template cast<double>().mean();
  const double saa = ca.square().sum();
  const double sbb = cb.square().sum();
  if (saa <= 0.0 || sbb <= 0.0) return std::nan("");
  return (ca * cb).sum() / std::sqrt(saa * sbb);
}

}  // namespace smood
