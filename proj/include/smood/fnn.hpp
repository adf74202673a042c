#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "smood/error.hpp"

namespace smood {

/// One affine map `W a + b`. W is out x in.
template <typename Scalar>
struct DenseLayer {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> weight;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> bias;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;  ///< coefficient of the summed squared weights
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  /// Fraction held out for best-epoch selection when no validation set is given.
  double holdout_fraction = 0.1;

  void validate() const;
};

/// Provenance kept alongside trained parameters.
struct TrainingRecord {
  TrainConfig config;
  std::vector<double> train_loss;  ///< per-epoch mean batch MSE (standardised targets)
  std::vector<double> val_loss;    ///< per-epoch validation MSE (standardised targets)
  std::size_t best_epoch = 0;      ///< 1-based, 0 when the model was not trained here
  double best_val_mse = 0.0;
};

/// ReLU multilayer perceptron with a scalar affine output. Every layer but the
/// last is followed by ReLU.
template <typename Scalar>
class FnnModel {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  FnnModel() = default;
  explicit FnnModel(std::vector<DenseLayer<Scalar>> layers, TrainingRecord record = {})
      : layers_(std::move(layers)), record_(std::move(record)) {
    if (layers_.empty()) throw InvalidArgument("FnnModel needs at least one layer");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& L = layers_[l];
      if (L.bias.size() != L.weight.rows())
        throw DimensionMismatch("FnnModel layer " + std::to_string(l) + " bias",
                                static_cast<std::size_t>(L.weight.rows()),
                                static_cast<std::size_t>(L.bias.size()));
      if (l > 0 && L.weight.cols() != layers_[l - 1].weight.rows())
        throw DimensionMismatch("FnnModel layer " + std::to_string(l) + " input",
                                static_cast<std::size_t>(layers_[l - 1].weight.rows()),
                                static_cast<std::size_t>(L.weight.cols()));
      if (!L.weight.allFinite() || !L.bias.allFinite())
        throw InvalidArgument("FnnModel: non-finite parameter in layer " + std::to_string(l));
    }
    if (layers_.back().weight.rows() != 1)
      throw InvalidArgument("FnnModel: output layer must have a single unit");
  }

  std::size_t input_dim() const {
    return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.cols());
  }
  std::size_t hidden_layers() const { return layers_.empty() ? 0 : layers_.size() - 1; }
  const std::vector<DenseLayer<Scalar>>& layers() const { return layers_; }
  const TrainingRecord& record() const { return record_; }

  Scalar squared_weight_norm() const {
    Scalar s(0);
    for (const auto& L : layers_) s += L.weight.squaredNorm();
    return s;
  }

  template <typename Other>
  FnnModel<Other> cast() const {
    std::vector<DenseLayer<Other>> out;
    for (const auto& L : layers_)
      out.push_back({L.weight.template cast<Other>(), L.bias.template cast<Other>()});
    return FnnModel<Other>(std::move(out), record_);
  }

  void check_input(std::size_t got) const {
    if (got != input_dim()) throw DimensionMismatch("FnnModel input", input_dim(), got);
  }

 private:
  std::vector<DenseLayer<Scalar>> layers_;
  TrainingRecord record_;
};

/// Forward pass for a batch stored column-wise (d x n). Returns a length-n vector.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> predict_columns(const FnnModel<Scalar>& model,
                                                         const Eigen::MatrixBase<Derived>& A0) {
  model.check_input(static_cast<std::size_t>(A0.rows()));
  using Matrix = typename FnnModel<Scalar>::Matrix;
  const auto& layers = model.layers();
  Matrix A = A0.template cast<Scalar>();
  for (std::size_t l = 0; l + 1 < layers.size(); ++l)
    A = ((layers[l].weight * A).colwise() + layers[l].bias).cwiseMax(Scalar(0));
  const auto& out = layers.back();
  return ((out.weight * A).array() + out.bias(0)).matrix().transpose();
}

/// Batch prediction for row-stored inputs (n x d).
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> predict_rows(const FnnModel<Scalar>& model,
                                                      const Eigen::MatrixBase<Derived>& X) {
  return predict_columns(model, X.transpose());
}

template <typename Scalar, typename Derived>
Scalar predict(const FnnModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x) {
  static_assert(Derived::ColsAtCompileTime == 1, "predict expects a column vector");
  return predict_columns(model, x)(0);
}

/// Input gradients for a column-stored batch (d x n). Column j of the result is
/// the gradient of the output at input column j. ReLU' is taken as 0 at 0.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> jacobian_columns(
    const FnnModel<Scalar>& model, const Eigen::MatrixBase<Derived>& A0) {
  model.check_input(static_cast<std::size_t>(A0.rows()));
  using Matrix = typename FnnModel<Scalar>::Matrix;
  const auto& layers = model.layers();
  const std::size_t hidden = layers.size() - 1;
  std::vector<Matrix> masks;
  masks.reserve(hidden);
  Matrix A = A0.template cast<Scalar>();
  for (std::size_t l = 0; l < hidden; ++l) {
    Matrix Z = (layers[l].weight * A).colwise() + layers[l].bias;
    masks.push_back((Z.array() > Scalar(0)).template cast<Scalar>().matrix());
    A = Z.cwiseMax(Scalar(0));
  }
  const auto n = A0.cols();
  Matrix G = layers.back().weight.transpose().replicate(1, n);
  for (std::size_t l = hidden; l-- > 0;) {
    G = G.cwiseProduct(masks[l]);
    G = layers[l].weight.transpose() * G;
  }
  return G;
}

/// Row-stored batch (n x d) -> n x d matrix of gradients.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> jacobian_rows(
    const FnnModel<Scalar>& model, const Eigen::MatrixBase<Derived>& X) {
  return jacobian_columns(model, X.transpose()).transpose();
}

template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> jacobian(const FnnModel<Scalar>& model,
                                                  const Eigen::MatrixBase<Derived>& x) {
  static_assert(Derived::ColsAtCompileTime == 1, "jacobian expects a column vector");
  return jacobian_columns(model, x).col(0);
}

/// Hidden-layer widths for training: three powers of two in [32, 1024],
/// non-decreasing from input to output.
struct FnnArchitecture {
  std::vector<std::size_t> hidden_widths{32, 64, 128};
  std::size_t input_dim = 0;

  void validate() const;
  std::string label() const;  ///< e.g. "32-64-128"
};

/// He-initialised model for the architecture.
FnnModel<double> init_fnn(const FnnArchitecture& arch, std::uint64_t seed);

/// Adam on MSE + weight_decay * sum ||W||^2 over standardised targets. Returns
/// the snapshot with the lowest validation MSE; target scaling is folded back
/// into the output layer so the model predicts raw targets.
FnnModel<double> train_fnn(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const Eigen::MatrixXd& X_val, const Eigen::VectorXd& y_val,
                           const FnnArchitecture& arch, const TrainConfig& config);

/// As above, holding out `config.holdout_fraction` of the rows for selection.
FnnModel<double> train_fnn(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const FnnArchitecture& arch, const TrainConfig& config);

/// Search grid. Cells enumerate lexicographically in the order
/// (widths, learning_rate, weight_decay, batch_size, epochs).
struct FnnGrid {
  std::vector<std::vector<std::size_t>> widths;
  std::vector<double> learning_rates;
  std::vector<double> weight_decays;
  std::vector<std::size_t> batch_sizes;
  std::vector<std::size_t> epochs;

  /// The complete published sweep (tens of thousands of cells).
  static FnnGrid full();
  /// Small default suitable for a desktop run.
  static FnnGrid desk();

  std::size_t size() const;
  std::pair<FnnArchitecture, TrainConfig> cell(std::size_t index, std::size_t input_dim,
                                               const TrainConfig& base) const;
};

struct CvRecord {
  std::size_t cell = 0;
  std::size_t fold = 0;
  double score = 0.0;  ///< NRMSE for the FNN search, AUPR for detector tuning
  bool failed = false;
  std::string message;
};

struct FnnSearchResult {
  FnnArchitecture arch;
  TrainConfig config;
  std::size_t best_cell = 0;
  double best_score = 0.0;          ///< mean validation NRMSE of the winner
  std::vector<double> cell_scores;  ///< +inf for failed cells
  std::vector<CvRecord> table;      ///< |grid| x k rows, cell-major
};

/// k-fold grid search minimising mean validation NRMSE (normalised by
/// y_max - y_min). A training failure marks its cell failed instead of aborting.
FnnSearchResult grid_search_cv(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double y_min,
                               double y_max, const FnnGrid& grid, std::size_t k,
                               std::uint64_t seed, const TrainConfig& base = {});

std::string cv_table_csv(const FnnGrid& grid, const FnnSearchResult& result, std::size_t input_dim);

void save_fnn(const FnnModel<double>& model, const std::filesystem::path& path);
FnnModel<double> load_fnn(const std::filesystem::path& path);

}  // namespace smood
