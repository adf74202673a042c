#include "smood/gp.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>

#include "smood/io.hpp"
#include "smood/parallel.hpp"
#include "smood/random.hpp"

namespace smood {

namespace {

constexpr int kMaxJitterEscalations = 6;

struct Factorised {
  Eigen::LLT<Eigen::MatrixXd> chol;
  double jitter = 0.0;
};

std::optional<Factorised> factorise(Eigen::MatrixXd K, double noise) {
  const Eigen::Index n = K.rows();
  K.diagonal().array() += noise;
  Factorised f;
  f.chol.compute(K);
  if (f.chol.info() == Eigen::Success) return f;
  double jitter = 1e-10 * K.trace() / static_cast<double>(n);
  for (int attempt = 0; attempt < kMaxJitterEscalations; ++attempt, jitter *= 2.0) {
    Eigen::MatrixXd Kj = K;
    Kj.diagonal().array() += jitter;
    f.chol.compute(Kj);
    if (f.chol.info() == Eigen::Success) {
      f.jitter = jitter;
      return f;
    }
  }
  return std::nullopt;
}

double log_det(const Eigen::LLT<Eigen::MatrixXd>& chol) {
  return 2.0 * chol.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

RbfKernel<double> from_log(const Eigen::Vector3d& theta, bool optimize_noise, double fixed_noise) {
  return {std::exp(theta(0)), std::exp(theta(1)), optimize_noise ? std::exp(theta(2)) : fixed_noise};
}

}  // namespace

GpModel gp_condition(const RbfKernel<double>& kernel, const Eigen::MatrixXd& X,
                     const Eigen::VectorXd& y) {
  kernel.validate();
  if (X.rows() < 1 || X.rows() != y.size())
    throw InvalidArgument("gp_condition: inputs and targets must be non-empty and aligned");
  GpModel m;
  m.kernel = kernel;
  m.X = X;
  m.y = y;
  m.y_offset = y.mean();
  auto f = factorise(kernel_matrix(kernel, X, X), kernel.noise_variance);
  if (!f) throw FitError("gp_condition: covariance not positive definite after maximum jitter");
  m.chol = std::move(f->chol);
  m.jitter = f->jitter;
  const Eigen::VectorXd yc = y.array() - m.y_offset;
  m.alpha = m.chol.solve(yc);
  m.log_marginal_likelihood = -0.5 * yc.dot(m.alpha) - 0.5 * log_det(m.chol) -
                              0.5 * static_cast<double>(X.rows()) * std::log(2.0 * std::numbers::pi);
  return m;
}

double gp_log_marginal_likelihood(const RbfKernel<double>& kernel, const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y, Eigen::Vector3d* grad) {
  kernel.validate();
  const Eigen::Index n = X.rows();
  const Eigen::MatrixXd D2 = squared_distances(X, X);
  const Eigen::MatrixXd Kf =
      (kernel.signal_variance * (-D2.array() / (2.0 * kernel.lengthscale * kernel.lengthscale)).exp())
          .matrix();
  auto f = factorise(Kf, kernel.noise_variance);
  if (!f) throw FitError("gp_log_marginal_likelihood: covariance not positive definite");
  const Eigen::VectorXd yc = y.array() - y.mean();
  const Eigen::VectorXd alpha = f->chol.solve(yc);
  const double lml = -0.5 * yc.dot(alpha) - 0.5 * log_det(f->chol) -
                     0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  if (grad) {
    const Eigen::MatrixXd Kinv = f->chol.solve(Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd W = alpha * alpha.transpose() - Kinv;
    const double ell2 = kernel.lengthscale * kernel.lengthscale;
    (*grad)(0) = 0.5 * (W.array() * Kf.array() * D2.array()).sum() / ell2;
    (*grad)(1) = 0.5 * (W.array() * Kf.array()).sum();
    (*grad)(2) = 0.5 * kernel.noise_variance * W.trace();
  }
  return lml;
}

GpModel gp_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GpFitOptions& options,
               std::uint64_t seed) {
  if (X.rows() < 2) throw InvalidArgument("gp_fit: needs at least 2 training samples");
  if (X.rows() != y.size()) throw DimensionMismatch("gp_fit", X.rows(), y.size());
  if (options.restarts < 1) throw InvalidArgument("gp_fit: restarts must be >= 1");
  if (!options.optimize_noise && options.noise_variance < 0.0)
    throw InvalidArgument("gp_fit: noise variance must be >= 0");

  double var_y = (y.array() - y.mean()).square().mean();
  if (!(var_y > 0.0)) var_y = 1.0;
  const double scale = std::sqrt(static_cast<double>(X.cols()));
  const Eigen::Vector3d lower(std::log(1e-3 * scale), std::log(1e-4 * var_y), std::log(1e-10 * var_y));
  const Eigen::Vector3d upper(std::log(1e3 * scale), std::log(1e4 * var_y), std::log(var_y));

  Rng rng(seed);
  std::vector<Eigen::Vector3d> starts(options.restarts);
  for (auto& s : starts) {
    s(0) = uniform(rng, std::log(0.1 * scale), std::log(10.0 * scale));
    s(1) = uniform(rng, std::log(0.1 * var_y), std::log(10.0 * var_y));
    s(2) = uniform(rng, std::log(1e-6 * var_y), std::log(1e-1 * var_y));
  }

  const bool opt_noise = options.optimize_noise;
  const double fixed_noise = options.noise_variance;
  auto evaluate = [&](const Eigen::Vector3d& theta, Eigen::Vector3d& g) -> std::optional<double> {
    try {
      const double v = gp_log_marginal_likelihood(from_log(theta, opt_noise, fixed_noise), X, y, &g);
      if (!std::isfinite(v) || !g.allFinite()) return std::nullopt;
      if (!opt_noise) g(2) = 0.0;
      return v;
    } catch (const FitError&) {
      return std::nullopt;
    }
  };

  struct Outcome {
    Eigen::Vector3d theta;
    double lml = -std::numeric_limits<double>::infinity();
    bool ok = false;
  };
  std::vector<Outcome> outcomes(starts.size());

  parallel_for(starts.size(), [&](std::size_t r) {
    Eigen::Vector3d theta = starts[r].cwiseMax(lower).cwiseMin(upper);
    Eigen::Vector3d g;
    auto f = evaluate(theta, g);
    if (!f) return;
    double step = 1e-2 / std::max(1.0, g.norm());
    for (std::size_t it = 0; it < options.max_iterations; ++it) {
      bool accepted = false;
      while (step > 1e-12) {
        const Eigen::Vector3d cand = (theta + step * g).cwiseMax(lower).cwiseMin(upper);
        const Eigen::Vector3d move = cand - theta;
        if (move.norm() < 1e-12) break;
        Eigen::Vector3d gc;
        const auto fc = evaluate(cand, gc);
        if (fc && *fc >= *f + 1e-4 * g.dot(move)) {
          const double gain = *fc - *f;
          theta = cand;
          f = fc;
          g = gc;
          step *= 2.0;
          accepted = true;
          if (gain < 1e-9 * (1.0 + std::abs(*f))) it = options.max_iterations;
          break;
        }
        step *= 0.5;
      }
      if (!accepted || g.lpNorm<Eigen::Infinity>() < 1e-6) break;
    }
    outcomes[r] = {theta, *f, true};
  });

  std::size_t best = outcomes.size();
  for (std::size_t r = 0; r < outcomes.size(); ++r)
    if (outcomes[r].ok && (best == outcomes.size() || outcomes[r].lml > outcomes[best].lml)) best = r;
  if (best == outcomes.size())
    throw FitError("gp_fit: every restart failed to factorise the covariance");

  GpModel m = gp_condition(from_log(outcomes[best].theta, opt_noise, fixed_noise), X, y);
  m.best_restart = best;
  return m;
}

GpPrediction gp_predict(const GpModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != model.X.cols())
    throw DimensionMismatch("gp_predict", static_cast<std::size_t>(model.X.cols()),
                            static_cast<std::size_t>(x.size()));
  return gp_predict_rows(model, x.transpose())[0];
}

std::vector<GpPrediction> gp_predict_rows(const GpModel& model, const Eigen::MatrixXd& X) {
  if (X.cols() != model.X.cols())
    throw DimensionMismatch("gp_predict", static_cast<std::size_t>(model.X.cols()),
                            static_cast<std::size_t>(X.cols()));
  const Eigen::MatrixXd Ks = kernel_matrix(model.kernel, model.X, X);  // n_train x m
  const Eigen::VectorXd mu = (Ks.transpose() * model.alpha).array() + model.y_offset;
  const Eigen::MatrixXd V = model.chol.matrixL().solve(Ks);
  const Eigen::VectorXd explained = V.colwise().squaredNorm().transpose();
  std::vector<GpPrediction> out(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    double var = model.kernel.signal_variance - explained(i) + model.kernel.noise_variance;
    auto& p = out[static_cast<std::size_t>(i)];
    p.mean = mu(i);
    if (var < 0.0) {
      var = 0.0;
      p.clamped = true;
    }
    p.stddev = std::sqrt(var);
  }
  return out;
}

void save_gp(const GpArtifact& a, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "smood-gp v1\n";
  out << "kernel rbf " << format_double(a.kernel.lengthscale) << ' '
      << format_double(a.kernel.signal_variance) << ' ' << format_double(a.kernel.noise_variance)
      << "\n";
  out << "lml " << format_double(a.log_marginal_likelihood) << "\n";
  out << "training_file " << a.training_file << "\n";
  out << "training_rows " << a.training_rows.size();
  for (auto r : a.training_rows) out << ' ' << r;
  out << "\n";
  write_file(path, out.str());
}

GpArtifact load_gp(const std::filesystem::path& path) {
  const std::string src = path.string();
  std::istringstream in(read_file(path));
  std::string line, tok, kind, a, b, c;
  GpArtifact art;
  if (!std::getline(in, line) || line != "smood-gp v1") throw ParseError(src, 1, "bad header");
  if (!(in >> tok >> kind >> a >> b >> c) || tok != "kernel" || kind != "rbf")
    throw ParseError(src, 2, "kernel line");
  const auto pa = parse_double(a), pb = parse_double(b), pc = parse_double(c);
  if (!pa || !pb || !pc) throw ParseError(src, 2, "kernel parameters");
  art.kernel = {*pa, *pb, *pc};
  art.kernel.validate();
  if (!(in >> tok >> a) || tok != "lml" || !parse_double(a)) throw ParseError(src, 3, "lml");
  art.log_marginal_likelihood = *parse_double(a);
  if (!(in >> tok >> art.training_file) || tok != "training_file")
    throw ParseError(src, 4, "training_file");
  std::size_t count = 0;
  if (!(in >> tok >> count) || tok != "training_rows") throw ParseError(src, 5, "training_rows");
  art.training_rows.resize(count);
  for (auto& r : art.training_rows)
    if (!(in >> r)) throw ParseError(src, 5, "training row index");
  return art;
}

}  // namespace smood
