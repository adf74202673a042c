#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "smood/error.hpp"

namespace smood {

/// Isotropic squared-exponential kernel
/// k(x, x') = signal_variance * exp(-|x - x'|^2 / (2 lengthscale^2)).
template <typename Scalar>
struct RbfKernel {
  Scalar lengthscale = Scalar(1);
  Scalar signal_variance = Scalar(1);
  Scalar noise_variance = Scalar(0);

  void validate() const {
    if (!(lengthscale > Scalar(0)) || !(signal_variance > Scalar(0)) ||
        !(noise_variance >= Scalar(0)))
      throw InvalidArgument("RbfKernel: lengthscale and signal variance must be > 0, noise >= 0");
  }
};

template <typename Scalar, typename DA, typename DB>
Scalar kernel_eval(const RbfKernel<Scalar>& k, const Eigen::MatrixBase<DA>& a,
                   const Eigen::MatrixBase<DB>& b) {
  if (a.size() != b.size())
    throw DimensionMismatch("kernel_eval", static_cast<std::size_t>(a.size()),
                            static_cast<std::size_t>(b.size()));
  const Scalar r2 = (a.template cast<Scalar>() - b.template cast<Scalar>()).squaredNorm();
  return k.signal_variance * std::exp(-r2 / (Scalar(2) * k.lengthscale * k.lengthscale));
}

/// Squared Euclidean distances between the rows of A and the rows of B.
template <typename DA, typename DB>
Eigen::MatrixXd squared_distances(const Eigen::MatrixBase<DA>& A, const Eigen::MatrixBase<DB>& B) {
  const Eigen::VectorXd a2 = A.rowwise().squaredNorm();
  const Eigen::RowVectorXd b2 = B.rowwise().squaredNorm().transpose();
  Eigen::MatrixXd D = (-2.0 * A * B.transpose()).eval();
  D.colwise() += a2;
  D.rowwise() += b2;
  return D.cwiseMax(0.0);
}

/// Noise-free cross-covariance between the rows of A and the rows of B.
template <typename DA, typename DB>
Eigen::MatrixXd kernel_matrix(const RbfKernel<double>& k, const Eigen::MatrixBase<DA>& A,
                              const Eigen::MatrixBase<DB>& B) {
  return (k.signal_variance *
          (-squared_distances(A, B).array() / (2.0 * k.lengthscale * k.lengthscale)).exp())
      .matrix();
}

/// Exact GP posterior with a constant mean equal to the training-target mean.
struct GpModel {
  RbfKernel<double> kernel;
  Eigen::MatrixXd X;  ///< training inputs, one row per sample
  Eigen::VectorXd y;  ///< raw training targets
  double y_offset = 0.0;
  double jitter = 0.0;  ///< diagonal added beyond noise_variance to factorise
  Eigen::LLT<Eigen::MatrixXd> chol;  ///< of K + (noise + jitter) I
  Eigen::VectorXd alpha;             ///< (K + noise I)^-1 (y - y_offset)
  double log_marginal_likelihood = 0.0;
  std::size_t best_restart = 0;
};

/// Builds the posterior for fixed hyperparameters. Jitter escalates from
/// 1e-10 * trace / n, doubling, at most six times; throws FitError beyond that.
GpModel gp_condition(const RbfKernel<double>& kernel, const Eigen::MatrixXd& X,
                     const Eigen::VectorXd& y);

/// Log marginal likelihood (centred targets). When `grad` is non-null it
/// receives d LML / d(log lengthscale, log signal_variance, log noise_variance).
/// Throws FitError when the covariance cannot be factorised.
double gp_log_marginal_likelihood(const RbfKernel<double>& kernel, const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y, Eigen::Vector3d* grad = nullptr);

struct GpFitOptions {
  std::size_t restarts = 10;
  bool optimize_noise = true;
  double noise_variance = 0.0;  ///< used as-is when optimize_noise is false
  std::size_t max_iterations = 150;
};

/// Multi-restart gradient ascent on the log marginal likelihood over log
/// hyperparameters. Restart starting points are drawn sequentially from `seed`,
/// so fewer restarts always see a prefix of the same starts.
GpModel gp_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GpFitOptions& options,
               std::uint64_t seed);

struct GpPrediction {
  double mean = 0.0;
  double stddev = 0.0;
  bool clamped = false;  ///< predictive variance came out negative and was set to 0
};

GpPrediction gp_predict(const GpModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);
std::vector<GpPrediction> gp_predict_rows(const GpModel& model, const Eigen::MatrixXd& X);

/// Persisted form: hyperparameters plus a reference to the training rows.
struct GpArtifact {
  RbfKernel<double> kernel;
  std::string training_file;
  std::vector<std::size_t> training_rows;
  double log_marginal_likelihood = 0.0;
};

void save_gp(const GpArtifact& artifact, const std::filesystem::path& path);
GpArtifact load_gp(const std::filesystem::path& path);

}  // namespace smood
