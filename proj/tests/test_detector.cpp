#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "doctest.h"
#include "smood/baseline.hpp"
#include "smood/classification.hpp"
#include "smood/detector.hpp"
#include "smood/gbdt.hpp"
#include "smood/oversample.hpp"
#include "smood/random.hpp"
#include "smood/stats.hpp"

using namespace smood;

namespace {

struct Labeled {
  Eigen::MatrixXd X;
  std::vector<bool> y;
};

// Majority blob around the origin, minority blob shifted along every axis.
Labeled blobs(std::size_t majority, std::size_t minority, double shift, std::uint64_t seed,
              Eigen::Index dims = 4) {
  Rng rng(seed);
  Labeled d;
  d.X.resize(static_cast<Eigen::Index>(majority + minority), dims);
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    const bool pos = static_cast<std::size_t>(i) >= majority;
    for (Eigen::Index j = 0; j < dims; ++j) d.X(i, j) = standard_normal(rng) + (pos ? shift : 0.0);
    d.y.push_back(pos);
  }
  return d;
}

// k nearest candidate rows of `q` by (distance, index), excluding q.
std::vector<std::size_t> brute_nearest(const Eigen::MatrixXd& X, std::size_t q, const std::vector<std::size_t>& cand,
                                       std::size_t k) {
  std::vector<std::pair<double, std::size_t>> d;
  for (auto c : cand)
    if (c != q) d.push_back({(X.row(static_cast<Eigen::Index>(c)) - X.row(static_cast<Eigen::Index>(q))).squaredNorm(), c});
  std::sort(d.begin(), d.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(d[i].second);
  return out;
}

double brute_ap(const Eigen::VectorXd& s, const std::vector<bool>& y) {
  // Mean over positives of the precision at the threshold equal to their score.
  double sum = 0.0;
  int positives = 0;
  for (Eigen::Index j = 0; j < s.size(); ++j) {
    if (!y[static_cast<std::size_t>(j)]) continue;
    ++positives;
    int tp = 0, pred = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (s(i) >= s(j)) {
        ++pred;
        tp += y[static_cast<std::size_t>(i)];
      }
    sum += static_cast<double>(tp) / pred;
  }
  return sum / positives;
}

std::size_t depth(const RegressionTree& t, int node = 0) {
  const auto& n = t.nodes[static_cast<std::size_t>(node)];
  if (n.feature < 0) return 0;
  return 1 + std::max(depth(t, n.left), depth(t, n.right));
}

}  // namespace

TEST_CASE("smote rows lie on segments to one of the k nearest minority rows") {
  const auto d = blobs(60, 12, 1.0, 1, 3);
  std::vector<std::size_t> minority;
  for (std::size_t i = 0; i < d.y.size(); ++i)
    if (d.y[i]) minority.push_back(i);
  for (auto method : {OversampleMethod::Smote, OversampleMethod::BorderlineSmote}) {
    const OversampleConfig cfg{method, 4, 0.75, 5};
    const auto r = oversample(d.X, d.y, cfg);
    CHECK(r.X.topRows(d.X.rows()) == d.X);
    CHECK(r.synthetic_count() == 45u - 12u);
    CHECK(static_cast<std::size_t>(std::count(r.labels.begin(), r.labels.end(), true)) == 45u);
    for (std::size_t s = 0; s < r.synthetic_count(); ++s) {
      const auto& o = r.origins[s];
      CHECK(d.y[o.seed_row]);
      CHECK(o.u > 0.0);
      CHECK(o.u < 1.0);
      const auto nn = brute_nearest(d.X, o.seed_row, minority, cfg.k);
      CHECK(std::find(nn.begin(), nn.end(), o.neighbor_row) != nn.end());
      const Eigen::RowVectorXd expect =
          d.X.row(static_cast<Eigen::Index>(o.seed_row)) +
          o.u * (d.X.row(static_cast<Eigen::Index>(o.neighbor_row)) - d.X.row(static_cast<Eigen::Index>(o.seed_row)));
      CHECK((r.X.row(d.X.rows() + static_cast<Eigen::Index>(s)) - expect).norm() < 1e-12);
    }
  }
}

TEST_CASE("borderline seeds are exactly the minority rows in danger") {
  const auto d = blobs(80, 15, 1.0, 2, 2);
  std::vector<std::size_t> all(d.y.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const std::size_t k = 5;
  std::set<std::size_t> danger;
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    if (!d.y[i]) continue;
    const auto nn = brute_nearest(d.X, i, all, k);
    const auto maj = std::count_if(nn.begin(), nn.end(), [&](std::size_t j) { return !d.y[j]; });
    const double frac = static_cast<double>(maj) / static_cast<double>(k);
    if (frac >= 0.5 && frac < 1.0) danger.insert(i);
  }
  REQUIRE_FALSE(danger.empty());
  const auto r = oversample(d.X, d.y, {OversampleMethod::BorderlineSmote, k, 1.0, 3});
  for (const auto& o : r.origins) CHECK(danger.count(o.seed_row) == 1);
}

TEST_CASE("borderline falls back to every minority row when none is in danger") {
  const auto d = blobs(40, 8, 50.0, 3, 2);
  const auto r = oversample(d.X, d.y, {OversampleMethod::BorderlineSmote, 3, 1.0, 4});
  std::set<std::size_t> seeds;
  for (const auto& o : r.origins) seeds.insert(o.seed_row);
  CHECK(seeds.size() > 1u);
  for (auto s : seeds) CHECK(d.y[s]);
}

TEST_CASE("oversampling edge cases") {
  const auto d = blobs(20, 4, 1.0, 4, 2);
  // Ratio already met: the input comes back untouched, whatever k is.
  const auto same = oversample(d.X, d.y, {OversampleMethod::Smote, 10, 0.2, 0});
  CHECK(same.synthetic_count() == 0u);
  CHECK(same.X == d.X);
  CHECK_THROWS_AS(oversample(d.X, d.y, {OversampleMethod::Smote, 4, 1.0, 0}), InvalidArgument);
  CHECK_NOTHROW(oversample(d.X, d.y, {OversampleMethod::Smote, 3, 1.0, 0}));
  CHECK_THROWS_AS(oversample(d.X, std::vector<bool>(24, false), {}), InvalidArgument);
  CHECK_THROWS_AS((OversampleConfig{OversampleMethod::Smote, 5, 1.5, 0}.validate()), InvalidArgument);
  CHECK(oversample_method_from_string("BorderlineSmote") == OversampleMethod::BorderlineSmote);
  CHECK_THROWS_AS(oversample_method_from_string("ADASYN"), InvalidArgument);
}

TEST_CASE("boosting starts at the prior log-odds and drives the loss down") {
  const auto d = blobs(150, 50, 2.5, 5);
  const GbdtConfig cfg{0.1, 60, 3, 5, 0};
  const auto m = gbdt_train(d.X, d.y, cfg);
  const double p = 50.0 / 200.0;
  CHECK(m.base_score == doctest::Approx(std::log(p / (1.0 - p))).epsilon(1e-12));
  REQUIRE(m.loss_trace.size() == 61u);
  CHECK(m.loss_trace.front() == doctest::Approx(-(p * std::log(p) + (1 - p) * std::log(1 - p))).epsilon(1e-12));
  for (std::size_t i = 1; i < m.loss_trace.size(); ++i) CHECK(m.loss_trace[i] <= m.loss_trace[i - 1] + 1e-12);
  for (const auto& t : m.trees) CHECK(depth(t) <= 3u);

  Eigen::VectorXd logits(d.X.rows());
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    const Eigen::RowVectorXd row = d.X.row(i);
    logits(i) = gbdt_logit(m, row.data());
  }
  CHECK(logistic_loss(logits, d.y) == doctest::Approx(m.loss_trace.back()).epsilon(1e-12));
  const Eigen::VectorXd prob = gbdt_predict_proba_rows(m, d.X);
  CHECK((prob.array() > 0.0).all());
  CHECK((prob.array() < 1.0).all());
}

TEST_CASE("boosting separates a separable problem") {
  const auto d = blobs(100, 100, 20.0, 6);
  const auto m = gbdt_train(d.X, d.y, {0.5, 50, 3, 5, 0});
  const Eigen::VectorXd prob = gbdt_predict_proba_rows(m, d.X);
  for (Eigen::Index i = 0; i < prob.size(); ++i) CHECK((prob(i) >= 0.5) == d.y[static_cast<std::size_t>(i)]);
  CHECK(m.loss_trace.back() < 0.05);
}

TEST_CASE("boosting rejects unusable input") {
  const auto d = blobs(10, 10, 1.0, 7);
  CHECK_THROWS_AS(gbdt_train(d.X, std::vector<bool>(20, true), {}), InvalidArgument);
  CHECK_THROWS_AS(gbdt_train(d.X.leftCols(3), d.y, {}), DimensionMismatch);
  Eigen::MatrixXd bad = d.X;
  bad(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(gbdt_train(bad, d.y, {}), InvalidArgument);
  CHECK_THROWS_AS((GbdtConfig{0.0, 10, 3, 5, 0}.validate()), InvalidArgument);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(sigmoid(0.0) == 0.5);
}

TEST_CASE("detector model round trips and rejects corrupt files") {
  const auto d = blobs(60, 30, 1.5, 8);
  const auto m = gbdt_train(d.X, d.y, {0.2, 25, 3, 5, 9});
  const auto path = std::filesystem::temp_directory_path() / "smood_unit_detector.txt";
  save_detector(m, path);
  const auto back = load_detector(path);
  CHECK(gbdt_predict_proba_rows(back, d.X) == gbdt_predict_proba_rows(m, d.X));
  CHECK(back.loss_trace == m.loss_trace);
  CHECK(back.config.n_estimators == 25u);

  std::ofstream(path) << "smood-detector v2\n";
  CHECK_THROWS_AS(load_detector(path), ParseError);
}

TEST_CASE("aupr equals a brute-force average precision on small random instances") {
  Rng rng(31);
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t n = 2 + uniform_index(rng, 19);
    Eigen::VectorXd s(static_cast<Eigen::Index>(n));
    std::vector<bool> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s(static_cast<Eigen::Index>(i)) = static_cast<double>(uniform_index(rng, 6)) / 5.0;  // forces ties
      y[i] = uniform01(rng) < 0.4;
    }
    y[0] = true;
    y[1] = false;
    const auto c = pr_curve(s, y);
    CHECK(std::abs(c.aupr - brute_ap(s, y)) < 1e-12);
    for (std::size_t i = 1; i < c.points.size(); ++i) {
      CHECK(c.points[i].threshold < c.points[i - 1].threshold);
      CHECK(c.points[i].recall >= c.points[i - 1].recall);
    }
    CHECK(c.points.back().recall == 1.0);
  }
  CHECK_THROWS_AS(pr_curve(Eigen::Vector2d(0.1, 0.2), {true, true}), InvalidArgument);
}

TEST_CASE("classification report counts and flags") {
  const std::vector<bool> truth{true, true, false, false, false, true};
  const Eigen::VectorXd score = (Eigen::VectorXd(6) << 0.9, 0.2, 0.6, 0.1, 0.5, 0.5).finished();
  const auto r = classification_report(score, truth, 0.5);
  CHECK(r.tp == 2u);
  CHECK(r.fn == 1u);
  CHECK(r.fp == 2u);
  CHECK(r.tn == 1u);
  CHECK(r.ood.recall == doctest::Approx(2.0 / 3.0));
  CHECK(r.ood.precision == doctest::Approx(0.5));
  CHECK(r.id.recall == doctest::Approx(1.0 / 3.0));
  CHECK(r.id.precision == doctest::Approx(0.5));
  CHECK(r.macro_recall == doctest::Approx(0.5));
  CHECK(r.ood.support == 3u);

  const auto none = classification_report(std::vector<bool>(4, false), {true, false, false, false});
  CHECK(none.ood.precision_undefined);
  CHECK(none.ood.precision == 0.0);
  CHECK(none.id.recall == 1.0);
  CHECK_FALSE(none.id.precision_undefined);
}

TEST_CASE("nearest neighbours and sigma match a brute-force scan") {
  Rng rng(12);
  Eigen::MatrixXd R(60, 3);
  Eigen::VectorXd ry(60);
  for (Eigen::Index i = 0; i < R.rows(); ++i) {
    // Integer grid coordinates create distance ties.
    for (Eigen::Index j = 0; j < 3; ++j) R(i, j) = static_cast<double>(uniform_index(rng, 4));
    ry(i) = static_cast<double>(uniform_index(rng, 5));
  }
  for (int q = 0; q < 20; ++q) {
    Eigen::RowVectorXd x(3);
    for (Eigen::Index j = 0; j < 3; ++j) x(j) = static_cast<double>(uniform_index(rng, 4));
    const double yhat = uniform(rng, 0.0, 4.0);
    std::vector<std::size_t> order(60);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double da = (R.row(static_cast<Eigen::Index>(a)) - x).squaredNorm();
      const double db = (R.row(static_cast<Eigen::Index>(b)) - x).squaredNorm();
      if (da != db) return da < db;
      if (ry(static_cast<Eigen::Index>(a)) != ry(static_cast<Eigen::Index>(b)))
        return ry(static_cast<Eigen::Index>(a)) < ry(static_cast<Eigen::Index>(b));
      return a < b;
    });
    for (std::size_t n : {4u, 9u}) {
      const auto got = nearest_neighbors(x, R, ry, n);
      CHECK(got == std::vector<std::size_t>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n)));
      Eigen::VectorXd dev(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) dev(static_cast<Eigen::Index>(i)) = std::abs(yhat - ry(static_cast<Eigen::Index>(order[i])));
      CHECK(neighbor_sigma(x, yhat, R, ry, n) == doctest::Approx(std::sqrt(population_variance(dev))).epsilon(1e-12));
    }
    const auto grid = neighbor_sigma_grid(x, yhat, R, ry, {4, 9, 20});
    CHECK(grid[2] == doctest::Approx(neighbor_sigma(x, yhat, R, ry, 20)).epsilon(1e-12));
  }
}

TEST_CASE("sigma threshold calibration") {
  std::vector<double> s(20);
  std::iota(s.begin(), s.end(), 0.0);
  std::reverse(s.begin(), s.end());
  CHECK(calibrate_sigma_t(s, 0.95) == doctest::Approx(18.05));
  CHECK_THROWS_AS(calibrate_sigma_t(std::vector<double>(19, 1.0)), InvalidArgument);
  CHECK_THROWS_AS(calibrate_sigma_t(std::vector<double>(30, 0.0)), DegenerateRange);
  CHECK(baseline_detect(2.0, 2.0));
  CHECK_FALSE(baseline_detect(1.999, 2.0));
}

TEST_CASE("neighbour count tuning picks the best correlated entry, smallest on ties") {
  Rng rng(4);
  Eigen::VectorXd err(100), noise(100);
  for (Eigen::Index i = 0; i < 100; ++i) {
    err(i) = uniform01(rng);
    noise(i) = uniform01(rng);
  }
  const Eigen::VectorXd good = 2.0 * err.array() + 1.0;
  const Eigen::VectorXd mixed = err + noise;
  auto t = baseline_tune_neighbors({4, 8, 12}, {noise, mixed, good}, err, 5, 1);
  CHECK(t.best == 12u);
  CHECK(t.mean_correlation[2] == doctest::Approx(1.0));
  t = baseline_tune_neighbors({4, 8, 12}, {good, good, noise}, err, 5, 1);
  CHECK(t.best == 4u);
  // Constant sigma scores -1 in every fold.
  t = baseline_tune_neighbors({4, 8}, {Eigen::VectorXd::Ones(100), noise}, err, 5, 1);
  CHECK(t.mean_correlation[0] == -1.0);
}

TEST_CASE("stratified folds spread each class evenly") {
  std::vector<bool> y(53, false);
  for (std::size_t i = 0; i < 53; i += 5) y[i] = true;  // 11 positives
  const auto folds = stratified_kfold(y, 5, 9);
  std::vector<int> seen(53, 0);
  for (const auto& f : folds) {
    const auto pos = std::count_if(f.validation.begin(), f.validation.end(), [&](std::size_t i) { return y[i]; });
    CHECK(pos >= 2);
    CHECK(pos <= 3);
    for (auto i : f.validation) ++seen[i];
    CHECK(f.train.size() + f.validation.size() == 53u);
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
  CHECK_THROWS_AS(stratified_kfold(std::vector<bool>{true, true, false, false, false, false}, 3, 0), InvalidArgument);
}

TEST_CASE("detector search oversamples only the training folds") {
  const auto d = blobs(150, 25, 2.0, 10);
  DetectorGrid g;
  g.methods = {OversampleMethod::Smote, OversampleMethod::BorderlineSmote};
  g.ks = {3};
  g.ratios = {0.5, 1.0};
  g.learning_rates = {0.1};
  g.n_estimators = {20};
  CHECK(g.size() == 4u);
  const auto r = detector_cv_tune(d.X, d.y, g, 5, 11);
  REQUIRE(r.table.size() == 20u);
  for (const auto& rec : r.table) {
    CHECK_FALSE(rec.failed);
    CHECK(rec.validation_scored == rec.validation_rows);
    CHECK(rec.train_rows + rec.validation_rows == 175u);
    CHECK(rec.train_rows_oversampled > rec.train_rows);
  }
  CHECK(r.best_score == *std::max_element(r.cell_scores.begin(), r.cell_scores.end()));
  CHECK(r.best_score > 0.8);
  const auto again = detector_cv_tune(d.X, d.y, g, 5, 11);
  CHECK(again.cell_scores == r.cell_scores);

  // A k larger than any training fold allows fails per cell, not globally.
  g.ks = {3, 40};
  const auto partial = detector_cv_tune(d.X, d.y, g, 5, 11);
  CHECK(std::isinf(partial.cell_scores.back()));
  CHECK(partial.oversample.k == 3u);
}

TEST_CASE("detector grids") {
  CHECK(DetectorGrid::full().size() == 2u * 3u * 4u * 6u * 3u);
  const auto desk = DetectorGrid::desk();
  const auto [os, gb] = desk.cell(desk.size() - 1, {});
  CHECK(os.method == desk.methods.back());
  CHECK(gb.n_estimators == desk.n_estimators.back());
  CHECK_THROWS_AS(desk.cell(desk.size(), {}), InvalidArgument);
}
