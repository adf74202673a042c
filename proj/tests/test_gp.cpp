#include <filesystem>
#include <numbers>

#include <Eigen/LU>

#include "doctest.h"
#include "smood/dataset.hpp"
#include "smood/gp.hpp"
#include "smood/random.hpp"

using namespace smood;

namespace {

struct Problem {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

Problem toy(std::size_t n, std::uint64_t seed) {
  Problem p;
  p.X = lhs_sample(DesignSpace::unit(2), n, seed);
  p.y.resize(p.X.rows());
  for (Eigen::Index i = 0; i < p.X.rows(); ++i)
    p.y(i) = std::sin(4.0 * p.X(i, 0)) + p.X(i, 1) * p.X(i, 1);
  return p;
}

// Log marginal likelihood from a dense inverse and LU determinant.
double direct_lml(const RbfKernel<double>& k, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      K(i, j) = k.signal_variance *
                    std::exp(-(X.row(i) - X.row(j)).squaredNorm() / (2.0 * k.lengthscale * k.lengthscale)) +
                (i == j ? k.noise_variance : 0.0);
  const Eigen::VectorXd yc = y.array() - y.mean();
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
  return -0.5 * yc.dot(lu.solve(yc)) - 0.5 * std::log(lu.determinant()) -
         0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

}  // namespace

TEST_CASE("noiseless posterior interpolates and keeps variance non-negative") {
  const auto p = toy(30, 4);
  RbfKernel<double> k{0.3, 1.5, 0.0};
  const auto m = gp_condition(k, p.X, p.y);
  const auto fit = gp_predict_rows(m, p.X);
  for (Eigen::Index i = 0; i < p.X.rows(); ++i)
    CHECK(std::abs(fit[static_cast<std::size_t>(i)].mean - p.y(i)) < 1e-6);

  const Eigen::MatrixXd probe = lhs_sample(DesignSpace::box(2, -0.2, 1.2), 200, 9);
  for (const auto& pr : gp_predict_rows(m, probe)) {
    CHECK(pr.stddev >= 0.0);
    CHECK(std::isfinite(pr.mean));
  }
}

TEST_CASE("posterior mean matches the dense formula") {
  const auto p = toy(25, 6);
  RbfKernel<double> k{0.4, 0.8, 1e-3};
  const auto m = gp_condition(k, p.X, p.y);
  Eigen::MatrixXd K = kernel_matrix(k, p.X, p.X);
  K.diagonal().array() += k.noise_variance + m.jitter;
  const Eigen::VectorXd w = K.fullPivLu().solve((p.y.array() - p.y.mean()).matrix());
  const Eigen::Vector2d x(0.37, 0.81);
  double mean = p.y.mean();
  for (Eigen::Index i = 0; i < p.X.rows(); ++i)
    mean += w(i) * kernel_eval(k, Eigen::VectorXd(p.X.row(i).transpose()), Eigen::VectorXd(x));
  CHECK(gp_predict(m, x).mean == doctest::Approx(mean).epsilon(1e-9));
}

TEST_CASE("log marginal likelihood matches a direct dense evaluation") {
  const auto p = toy(20, 2);
  for (const RbfKernel<double>& k : {RbfKernel<double>{0.2, 1.0, 1e-2}, RbfKernel<double>{0.7, 2.5, 1e-1},
                                     RbfKernel<double>{1.3, 0.3, 5e-3}}) {
    CHECK(gp_log_marginal_likelihood(k, p.X, p.y) == doctest::Approx(direct_lml(k, p.X, p.y)).epsilon(1e-8));
  }
}

TEST_CASE("log marginal likelihood gradient matches finite differences in log space") {
  const auto p = toy(20, 3);
  const RbfKernel<double> k{0.45, 1.2, 2e-2};
  Eigen::Vector3d g;
  gp_log_marginal_likelihood(k, p.X, p.y, &g);
  const Eigen::Vector3d theta(std::log(k.lengthscale), std::log(k.signal_variance), std::log(k.noise_variance));
  const double h = 1e-5;
  for (int j = 0; j < 3; ++j) {
    Eigen::Vector3d a = theta, b = theta;
    a(j) += h;
    b(j) -= h;
    auto make = [](const Eigen::Vector3d& t) {
      return RbfKernel<double>{std::exp(t(0)), std::exp(t(1)), std::exp(t(2))};
    };
    const double fd = (gp_log_marginal_likelihood(make(a), p.X, p.y) -
                       gp_log_marginal_likelihood(make(b), p.X, p.y)) /
                      (2.0 * h);
    CHECK(g(j) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("multi-restart fit improves on its starts and is seed deterministic") {
  const auto p = toy(40, 5);
  GpFitOptions opt;
  opt.restarts = 3;
  opt.max_iterations = 60;
  const auto a = gp_fit(p.X, p.y, opt, 13);
  const auto b = gp_fit(p.X, p.y, opt, 13);
  CHECK(a.kernel.lengthscale == b.kernel.lengthscale);
  CHECK(a.log_marginal_likelihood == b.log_marginal_likelihood);
  CHECK(a.log_marginal_likelihood >= gp_log_marginal_likelihood({1.0, 1.0, 1e-2}, p.X, p.y));

  // More restarts see a superset of the same starting points.
  opt.restarts = 6;
  CHECK(gp_fit(p.X, p.y, opt, 13).log_marginal_likelihood >= a.log_marginal_likelihood - 1e-9);
}

TEST_CASE("fixed noise is honoured when noise is not optimised") {
  const auto p = toy(30, 8);
  GpFitOptions opt;
  opt.restarts = 2;
  opt.optimize_noise = false;
  opt.noise_variance = 0.0;
  const auto m = gp_fit(p.X, p.y, opt, 1);
  CHECK(m.kernel.noise_variance == 0.0);
}

TEST_CASE("invalid kernels and shapes are rejected") {
  const auto p = toy(5, 1);
  CHECK_THROWS_AS(gp_condition({-1.0, 1.0, 0.0}, p.X, p.y), InvalidArgument);
  CHECK_THROWS_AS(gp_condition({1.0, 1.0, 0.0}, p.X, Eigen::VectorXd::Zero(4)), InvalidArgument);
  const auto m = gp_condition({1.0, 1.0, 0.0}, p.X, p.y);
  CHECK_THROWS_AS(gp_predict(m, Eigen::VectorXd::Zero(3)), DimensionMismatch);
}

TEST_CASE("gp artifact round trips") {
  GpArtifact a;
  a.kernel = {0.123456789, 2.5, 1e-7};
  a.training_file = "train.csv";
  a.training_rows = {0, 4, 9, 1499};
  a.log_marginal_likelihood = -12.25;
  const auto path = std::filesystem::temp_directory_path() / "smood_unit_gp.txt";
  save_gp(a, path);
  const auto b = load_gp(path);
  CHECK(b.kernel.lengthscale == a.kernel.lengthscale);
  CHECK(b.kernel.noise_variance == a.kernel.noise_variance);
  CHECK(b.training_rows == a.training_rows);
  CHECK(b.training_file == a.training_file);
  CHECK(b.log_marginal_likelihood == a.log_marginal_likelihood);
}
