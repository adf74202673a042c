#include "doctest.h"
#include "smood/ood_labeling.hpp"
#include "smood/random.hpp"
#include "smood/stats.hpp"

using namespace smood;

namespace {

Eigen::VectorXd normal_errors(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd e(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = 1.0 + 0.1 * standard_normal(rng);
  return e;
}

}  // namespace

TEST_CASE("bootstrap interval brackets the sample quantile and is seeded") {
  const auto e = normal_errors(500, 1);
  const auto ci = bootstrap_ci(e, 0.99, 1000, 42);
  CHECK(ci.lower <= ci.upper);
  CHECK(ci.level == 0.99);
  CHECK(ci.resamples == 1000u);
  const double q = quantile(e, 0.99);
  CHECK(ci.lower <= q);
  CHECK(q <= ci.upper);
  const auto again = bootstrap_ci(e, 0.99, 1000, 42);
  CHECK(again.lower == ci.lower);
  CHECK(again.upper == ci.upper);
  CHECK(bootstrap_ci(e, 0.5, 1000, 43).lower != bootstrap_ci(e, 0.5, 1000, 44).lower);
}

TEST_CASE("constant errors give a degenerate interval") {
  const auto ci = bootstrap_ci(Eigen::VectorXd::Constant(50, 0.25), 0.95, 200, 3);
  CHECK(ci.lower == 0.25);
  CHECK(ci.upper == 0.25);
}

TEST_CASE("coverage of the true 99th percentile on a reduced Monte-Carlo run") {
  // Normal(1, 0.1): q99 = 1 + 0.1 * 2.3263478740.
  const double truth = 1.0 + 0.1 * 2.3263478740408408;
  int covered = 0;
  const int reps = 60;
  for (int r = 0; r < reps; ++r) {
    const auto ci = bootstrap_ci(normal_errors(500, 1000 + r), 0.99, 500, 77 + r);
    covered += ci.lower <= truth && truth <= ci.upper;
  }
  CHECK(covered >= 54);
}

TEST_CASE("labels use a strict comparison against the upper bound") {
  ConfidenceInterval ci{0.0, 1.0, 0.99, 10};
  const Eigen::Vector4d e(0.5, 1.0, 1.0000001, 3.0);
  const auto labels = label_ood(e, ci);
  CHECK(labels.is_ood == std::vector<bool>{false, false, true, true});
  CHECK(labels.ood_count == 2u);
  CHECK(labels.ratio() == 0.5);
  CHECK(labels.ci.upper == 1.0);
}

TEST_CASE("invalid bootstrap arguments are rejected") {
  const auto e = normal_errors(10, 2);
  CHECK_THROWS_AS(bootstrap_ci(e, 1.0, 100, 0), InvalidArgument);
  CHECK_THROWS_AS(bootstrap_ci(e, 0.99, 0, 0), InvalidArgument);
  CHECK_THROWS_AS(bootstrap_ci(Eigen::VectorXd(0), 0.99, 100, 0), InvalidArgument);
  Eigen::VectorXd bad = e;
  bad(3) = std::nan("");
  CHECK_THROWS_AS(bootstrap_ci(bad, 0.99, 100, 0), InvalidArgument);
}
