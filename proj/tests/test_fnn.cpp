#include <filesystem>

#include "doctest.h"
#include "smood/dataset.hpp"
#include "smood/fnn.hpp"
#include "smood/metrics.hpp"
#include "smood/random.hpp"

using namespace smood;

namespace {

FnnModel<double> random_model(Rng& rng, std::size_t d) {
  std::vector<DenseLayer<double>> layers;
  std::size_t fan_in = d;
  const std::size_t hidden = 1 + uniform_index(rng, 3);
  for (std::size_t l = 0; l <= hidden; ++l) {
    const std::size_t out = l == hidden ? 1 : 3 + uniform_index(rng, 12);
    DenseLayer<double> L;
    L.weight.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(fan_in));
    L.bias.resize(static_cast<Eigen::Index>(out));
    for (Eigen::Index i = 0; i < L.weight.size(); ++i) L.weight.data()[i] = standard_normal(rng);
    for (Eigen::Index i = 0; i < L.bias.size(); ++i) L.bias(i) = 0.5 * standard_normal(rng);
    layers.push_back(std::move(L));
    fan_in = out;
  }
  return FnnModel<double>(std::move(layers));
}

// Hidden activation pattern at x, used to stay away from ReLU kinks.
std::vector<bool> pattern(const FnnModel<double>& m, const Eigen::VectorXd& x) {
  std::vector<bool> p;
  Eigen::VectorXd a = x;
  for (std::size_t l = 0; l + 1 < m.layers().size(); ++l) {
    const Eigen::VectorXd z = m.layers()[l].weight * a + m.layers()[l].bias;
    for (Eigen::Index i = 0; i < z.size(); ++i) p.push_back(z(i) > 0.0);
    a = z.cwiseMax(0.0);
  }
  return p;
}

}  // namespace

TEST_CASE("analytic input gradient matches central differences away from kinks") {
  Rng rng(2024);
  const double h = 1e-6;
  int checked = 0;
  while (checked < 100) {
    const std::size_t d = 1 + uniform_index(rng, 6);
    const auto model = random_model(rng, d);
    Eigen::VectorXd x(static_cast<Eigen::Index>(d));
    for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = standard_normal(rng);

    const auto base = pattern(model, x);
    Eigen::VectorXd fd(x.size());
    bool near_kink = false;
    for (Eigen::Index j = 0; j < x.size() && !near_kink; ++j) {
      Eigen::VectorXd a = x, b = x;
      a(j) += h;
      b(j) -= h;
      near_kink = pattern(model, a) != base || pattern(model, b) != base;
      fd(j) = (predict(model, a) - predict(model, b)) / (2.0 * h);
    }
    if (near_kink) continue;
    const Eigen::VectorXd g = jacobian(model, x);
    const double scale = std::max(g.norm(), 1e-8);
    CHECK((g - fd).norm() / scale < 1e-4);
    ++checked;
  }
}

TEST_CASE("batched gradients equal per-point gradients") {
  Rng rng(3);
  const auto model = random_model(rng, 4);
  Eigen::MatrixXd X(20, 4);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = standard_normal(rng);
  const Eigen::MatrixXd J = jacobian_rows(model, X);
  const Eigen::VectorXd y = predict_rows(model, X);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Eigen::VectorXd xi = X.row(i).transpose();
    CHECK((J.row(i).transpose() - jacobian(model, xi)).norm() < 1e-12);
    CHECK(y(i) == doctest::Approx(predict(model, xi)).epsilon(1e-14));
  }
}

TEST_CASE("the network is exactly linear on a segment with a fixed activation pattern") {
  Rng rng(8);
  int segments = 0;
  while (segments < 20) {
    const auto model = random_model(rng, 3);
    Eigen::VectorXd x1(3), dir(3);
    for (int j = 0; j < 3; ++j) {
      x1(j) = standard_normal(rng);
      dir(j) = standard_normal(rng);
    }
    const Eigen::VectorXd x2 = x1 + 1e-3 * dir;
    const auto p = pattern(model, x1);
    bool fixed = true;
    for (int s = 1; s <= 10 && fixed; ++s) fixed = pattern(model, x1 + (s / 10.0) * (x2 - x1)) == p;
    if (!fixed) continue;
    const double f1 = predict(model, x1), f2 = predict(model, x2);
    for (int s = 0; s < 8; ++s) {
      const double a = uniform01(rng);
      const Eigen::VectorXd xa = (1.0 - a) * x1 + a * x2;
      CHECK(std::abs(predict(model, xa) - ((1.0 - a) * f1 + a * f2)) < 1e-9);
    }
    ++segments;
  }
}

TEST_CASE("a fully dead first layer gives a constant output and zero gradient") {
  DenseLayer<double> hidden{Eigen::MatrixXd::Constant(4, 2, 0.1), Eigen::VectorXd::Constant(4, -10.0)};
  DenseLayer<double> out{Eigen::MatrixXd::Constant(1, 4, 2.0), Eigen::VectorXd::Constant(1, 0.75)};
  const FnnModel<double> model({hidden, out});
  const Eigen::Vector2d x(1.0, -2.0);
  CHECK(predict(model, x) == 0.75);
  CHECK(jacobian(model, x).isZero(0.0));
}

TEST_CASE("architecture and training config validation") {
  FnnArchitecture a;
  a.input_dim = 3;
  CHECK_NOTHROW(a.validate());
  a.hidden_widths = {64, 32, 128};
  CHECK_THROWS_AS(a.validate(), InvalidArgument);
  a.hidden_widths = {32, 48, 128};
  CHECK_THROWS_AS(a.validate(), InvalidArgument);
  a.hidden_widths = {32, 64};
  CHECK_THROWS_AS(a.validate(), InvalidArgument);

  TrainConfig c;
  c.batch_size = 24;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  c.epochs = 40;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("grid sizes follow the factor counts") {
  // 56 non-decreasing width triples over six powers of two.
  CHECK(FnnGrid::full().size() == 56u * 8u * 8u * 5u * 10u);
  const auto desk = FnnGrid::desk();
  CHECK(desk.size() == 18u);
  const auto [arch, cfg] = desk.cell(desk.size() - 1, 4, {});
  CHECK(arch.input_dim == 4u);
  CHECK(cfg.epochs == 100u);
  CHECK(cfg.weight_decay == 1e-3);
}

TEST_CASE("training fits a smooth target and round trips through disk") {
  const auto space = DesignSpace::unit(2);
  const Eigen::MatrixXd X = lhs_sample(space, 300, 1);
  Eigen::VectorXd y(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) y(i) = 3.0 * X(i, 0) - X(i, 1) * X(i, 1) + 10.0;
  FnnArchitecture arch;
  arch.input_dim = 2;
  TrainConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.epochs = 100;
  cfg.seed = 5;
  const auto model = train_fnn(X, y, arch, cfg);
  const auto& rec = model.record();
  REQUIRE(rec.train_loss.size() == 100u);
  CHECK(rec.train_loss.back() < rec.train_loss.front());
  CHECK(rec.best_epoch >= 1u);
  CHECK(nrmse(predict_rows(model, X), y, y.minCoeff(), y.maxCoeff()) < 0.05);

  // Same seed, same model.
  const auto again = train_fnn(X, y, arch, cfg);
  CHECK(predict_rows(again, X) == predict_rows(model, X));

  const auto path = std::filesystem::temp_directory_path() / "smood_unit_fnn_model.txt";
  save_fnn(model, path);
  const auto back = load_fnn(path);
  CHECK(predict_rows(back, X) == predict_rows(model, X));
}

TEST_CASE("cv grid search records one row per cell and fold") {
  const auto space = DesignSpace::unit(2);
  const Eigen::MatrixXd X = lhs_sample(space, 120, 2);
  const Eigen::VectorXd y = X.col(0) + X.col(1);
  FnnGrid g;
  g.widths = {{32, 32, 32}};
  g.learning_rates = {1e-3, 1e-2};
  g.weight_decays = {1e-4};
  g.batch_sizes = {32};
  g.epochs = {50};
  const auto r = grid_search_cv(X, y, y.minCoeff(), y.maxCoeff(), g, 3, 7);
  CHECK(r.table.size() == 6u);
  CHECK(r.cell_scores.size() == 2u);
  CHECK(r.best_score == *std::min_element(r.cell_scores.begin(), r.cell_scores.end()));
  CHECK(r.config.learning_rate == g.learning_rates[r.best_cell]);
}
