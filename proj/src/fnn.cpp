#include "smood/fnn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "smood/dataset.hpp"
#include "smood/io.hpp"
#include "smood/metrics.hpp"
#include "smood/parallel.hpp"
#include "smood/random.hpp"

namespace smood {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

bool is_pow2(std::size_t v) { return v != 0 && std::has_single_bit(v); }

struct AdamState {
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
};

struct Gradients {
  std::vector<Eigen::MatrixXd> dw;
  std::vector<Eigen::VectorXd> db;
};

// Data-term MSE and its gradients for one batch (columns are samples).
double batch_gradients(const std::vector<DenseLayer<double>>& layers, const Eigen::MatrixXd& A0,
                       const Eigen::RowVectorXd& target, Gradients& g) {
  const std::size_t L = layers.size();
  std::vector<Eigen::MatrixXd> acts(L);  // input to layer l
  std::vector<Eigen::MatrixXd> pre(L - 1);
  acts[0] = A0;
  for (std::size_t l = 0; l + 1 < L; ++l) {
    pre[l] = (layers[l].weight * acts[l]).colwise() + layers[l].bias;
    acts[l + 1] = pre[l].cwiseMax(0.0);
  }
  const Eigen::RowVectorXd out =
      (layers[L - 1].weight * acts[L - 1]).array() + layers[L - 1].bias(0);
  const Eigen::RowVectorXd resid = out - target;
  const double n = static_cast<double>(A0.cols());
  const double loss = resid.squaredNorm() / n;

  Eigen::MatrixXd delta = (2.0 / n) * resid;
  for (std::size_t l = L; l-- > 0;) {
    g.dw[l].noalias() = delta * acts[l].transpose();
    g.db[l] = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = layers[l].weight.transpose() * delta;
      delta = back.cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return loss;
}

double mse_on(const std::vector<DenseLayer<double>>& layers, const Eigen::MatrixXd& A0,
              const Eigen::RowVectorXd& target) {
  Eigen::MatrixXd A = A0;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l)
    A = ((layers[l].weight * A).colwise() + layers[l].bias).cwiseMax(0.0);
  const Eigen::RowVectorXd out = (layers.back().weight * A).array() + layers.back().bias(0);
  return (out - target).squaredNorm() / static_cast<double>(A0.cols());
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw InvalidArgument("TrainConfig: learning rate must be positive");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
    throw InvalidArgument("TrainConfig: weight decay must be >= 0");
  if (!is_pow2(batch_size) || batch_size < 8 || batch_size > 128)
    throw InvalidArgument("TrainConfig: batch size must be a power of 2 in [8, 128]");
  if (epochs < 50 || epochs > 500)
    throw InvalidArgument("TrainConfig: epochs must lie in [50, 500], got " +
                          std::to_string(epochs));
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw InvalidArgument("TrainConfig: holdout fraction must lie in (0, 1)");
}

void FnnArchitecture::validate() const {
  if (input_dim < 1) throw InvalidArgument("FnnArchitecture: input_dim must be >= 1");
  if (hidden_widths.size() != 3)
    throw InvalidArgument("FnnArchitecture: exactly three hidden layers are required");
  for (std::size_t i = 0; i < hidden_widths.size(); ++i) {
    const auto w = hidden_widths[i];
    if (!is_pow2(w) || w < 32 || w > 1024)
      throw InvalidArgument("FnnArchitecture: width " + std::to_string(w) +
                            " is not a power of 2 in [32, 1024]");
    if (i > 0 && w < hidden_widths[i - 1])
      throw InvalidArgument("FnnArchitecture: widths must be non-decreasing");
  }
}

std::string FnnArchitecture::label() const {
  std::string s;
  for (std::size_t i = 0; i < hidden_widths.size(); ++i) {
    if (i) s += '-';
    s += std::to_string(hidden_widths[i]);
  }
  return s;
}

FnnModel<double> init_fnn(const FnnArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(seed);
  std::vector<DenseLayer<double>> layers;
  std::size_t fan_in = arch.input_dim;
  auto make = [&](std::size_t out) {
    DenseLayer<double> L;
    L.weight.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(fan_in));
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < L.weight.size(); ++i) L.weight.data()[i] = scale * standard_normal(rng);
    L.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out));
    layers.push_back(std::move(L));
    fan_in = out;
  };
  for (auto w : arch.hidden_widths) make(w);
  make(1);
  return FnnModel<double>(std::move(layers));
}

FnnModel<double> train_fnn(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const Eigen::MatrixXd& X_val, const Eigen::VectorXd& y_val,
                           const FnnArchitecture& arch, const TrainConfig& config) {
  config.validate();
  arch.validate();
  if (X.rows() == 0) throw InvalidArgument("train_fnn: empty training set");
  if (X.rows() != y.size())
    throw DimensionMismatch("train_fnn targets", static_cast<std::size_t>(X.rows()),
                            static_cast<std::size_t>(y.size()));
  if (static_cast<std::size_t>(X.cols()) != arch.input_dim)
    throw DimensionMismatch("train_fnn inputs", arch.input_dim, static_cast<std::size_t>(X.cols()));
  if (X_val.rows() == 0 || X_val.cols() != X.cols() || X_val.rows() != y_val.size())
    throw InvalidArgument("train_fnn: validation set is empty or misshapen");

  const double y_mean = y.mean();
  double y_scale = std::sqrt((y.array() - y_mean).square().mean());
  if (!(y_scale > 0.0)) y_scale = 1.0;

  const Eigen::MatrixXd A_train = X.transpose();
  const Eigen::RowVectorXd t_train = ((y.array() - y_mean) / y_scale).matrix().transpose();
  const Eigen::MatrixXd A_val = X_val.transpose();
  const Eigen::RowVectorXd t_val = ((y_val.array() - y_mean) / y_scale).matrix().transpose();

  auto layers = init_fnn(arch, child_seed(config.seed, 1)).layers();
  const std::size_t L = layers.size();
  AdamState adam;
  Gradients grad;
  for (const auto& layer : layers) {
    adam.mw.push_back(Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()));
    adam.vw.push_back(adam.mw.back());
    adam.mb.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
    adam.vb.push_back(adam.mb.back());
    grad.dw.push_back(adam.mw.back());
    grad.db.push_back(adam.mb.back());
  }

  TrainingRecord record;
  record.config = config;
  record.best_val_mse = std::numeric_limits<double>::infinity();
  auto best = layers;

  Rng shuffle_rng(child_seed(config.seed, 2));
  const auto n = static_cast<std::size_t>(X.rows());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Eigen::MatrixXd A_batch;
  Eigen::RowVectorXd t_batch;
  double beta1_t = 1.0, beta2_t = 1.0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, n - start);
      A_batch.resize(A_train.rows(), static_cast<Eigen::Index>(len));
      t_batch.resize(static_cast<Eigen::Index>(len));
      for (std::size_t j = 0; j < len; ++j) {
        A_batch.col(static_cast<Eigen::Index>(j)) = A_train.col(order[start + j]);
        t_batch(static_cast<Eigen::Index>(j)) = t_train(order[start + j]);
      }
      const double loss = batch_gradients(layers, A_batch, t_batch, grad);
      if (!std::isfinite(loss))
        throw TrainingAborted("train_fnn: non-finite loss at epoch " + std::to_string(epoch));
      epoch_loss += loss;
      ++batches;

      beta1_t *= kAdamBeta1;
      beta2_t *= kAdamBeta2;
      const double step = config.learning_rate * std::sqrt(1.0 - beta2_t) / (1.0 - beta1_t);
      for (std::size_t l = 0; l < L; ++l) {
        grad.dw[l] += 2.0 * config.weight_decay * layers[l].weight;
        adam.mw[l] = kAdamBeta1 * adam.mw[l] + (1.0 - kAdamBeta1) * grad.dw[l];
        adam.vw[l] = kAdamBeta2 * adam.vw[l] + (1.0 - kAdamBeta2) * grad.dw[l].cwiseAbs2();
        adam.mb[l] = kAdamBeta1 * adam.mb[l] + (1.0 - kAdamBeta1) * grad.db[l];
        adam.vb[l] = kAdamBeta2 * adam.vb[l] + (1.0 - kAdamBeta2) * grad.db[l].cwiseAbs2();
        layers[l].weight.array() -=
            step * adam.mw[l].array() / (adam.vw[l].array().sqrt() + kAdamEps);
        layers[l].bias.array() -= step * adam.mb[l].array() / (adam.vb[l].array().sqrt() + kAdamEps);
      }
    }
    const double train_loss = epoch_loss / static_cast<double>(batches);
    const double val_loss = mse_on(layers, A_val, t_val);
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
      throw TrainingAborted("train_fnn: non-finite loss at epoch " + std::to_string(epoch));
    record.train_loss.push_back(train_loss);
    record.val_loss.push_back(val_loss);
    if (val_loss < record.best_val_mse) {
      record.best_val_mse = val_loss;
      record.best_epoch = epoch;
      best = layers;
    }
  }

  best.back().weight *= y_scale;
  best.back().bias = best.back().bias * y_scale;
  best.back().bias(0) += y_mean;
  return FnnModel<double>(std::move(best), std::move(record));
}

FnnModel<double> train_fnn(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const FnnArchitecture& arch, const TrainConfig& config) {
  config.validate();
  const auto n = static_cast<std::size_t>(X.rows());
  if (n == 0) throw InvalidArgument("train_fnn: empty training set");
  if (n < 10) return train_fnn(X, y, X, y, arch, config);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(child_seed(config.seed, 3));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::round(config.holdout_fraction * static_cast<double>(n))));
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> fit(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(fit.begin(), fit.end());
  Eigen::MatrixXd Xf(static_cast<Eigen::Index>(fit.size()), X.cols());
  Eigen::VectorXd yf(static_cast<Eigen::Index>(fit.size()));
  Eigen::MatrixXd Xv(static_cast<Eigen::Index>(val.size()), X.cols());
  Eigen::VectorXd yv(static_cast<Eigen::Index>(val.size()));
  for (std::size_t i = 0; i < fit.size(); ++i) {
    Xf.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(fit[i]));
    yf(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(fit[i]));
  }
  for (std::size_t i = 0; i < val.size(); ++i) {
    Xv.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(val[i]));
    yv(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(val[i]));
  }
  return train_fnn(Xf, yf, Xv, yv, arch, config);
}

FnnGrid FnnGrid::full() {
  FnnGrid g;
  const std::vector<std::size_t> widths{32, 64, 128, 256, 512, 1024};
  for (std::size_t a = 0; a < widths.size(); ++a)
    for (std::size_t b = a; b < widths.size(); ++b)
      for (std::size_t c = b; c < widths.size(); ++c)
        g.widths.push_back({widths[a], widths[b], widths[c]});
  for (int e = -4; e <= -1; ++e) {
    const double s = std::pow(10.0, e);
    g.learning_rates.push_back(s);
    g.learning_rates.push_back(3.0 * s);
    g.weight_decays.push_back(s);
    g.weight_decays.push_back(5.0 * s);
  }
  g.batch_sizes = {8, 16, 32, 64, 128};
  for (std::size_t e = 50; e <= 500; e += 50) g.epochs.push_back(e);
  return g;
}

FnnGrid FnnGrid::desk() {
  FnnGrid g;
  g.widths = {{32, 64, 128}};
  g.learning_rates = {1e-3, 3e-3, 1e-2};
  g.weight_decays = {1e-4, 5e-4, 1e-3};
  g.batch_sizes = {32};
  g.epochs = {50, 100};
  return g;
}

std::size_t FnnGrid::size() const {
  return widths.size() * learning_rates.size() * weight_decays.size() * batch_sizes.size() *
         epochs.size();
}

std::pair<FnnArchitecture, TrainConfig> FnnGrid::cell(std::size_t index, std::size_t input_dim,
                                                      const TrainConfig& base) const {
  if (index >= size()) throw InvalidArgument("FnnGrid::cell: index out of range");
  std::size_t r = index;
  const std::size_t ie = r % epochs.size();
  r /= epochs.size();
  const std::size_t ib = r % batch_sizes.size();
  r /= batch_sizes.size();
  const std::size_t iw = r % weight_decays.size();
  r /= weight_decays.size();
  const std::size_t il = r % learning_rates.size();
  r /= learning_rates.size();
  FnnArchitecture arch{widths[r], input_dim};
  TrainConfig cfg = base;
  cfg.learning_rate = learning_rates[il];
  cfg.weight_decay = weight_decays[iw];
  cfg.batch_size = batch_sizes[ib];
  cfg.epochs = epochs[ie];
  return {arch, cfg};
}

FnnSearchResult grid_search_cv(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double y_min,
                               double y_max, const FnnGrid& grid, std::size_t k,
                               std::uint64_t seed, const TrainConfig& base) {
  if (grid.size() == 0) throw InvalidArgument("grid_search_cv: empty grid");
  if (!(y_max > y_min)) throw DegenerateRange("grid_search_cv: y_max must exceed y_min");
  const auto n = static_cast<std::size_t>(X.rows());
  const auto folds = kfold_split(n, k, seed);
  const auto d = static_cast<std::size_t>(X.cols());
  const std::size_t cells = grid.size();

  FnnSearchResult result;
  result.table.resize(cells * k);
  parallel_for(cells * k, [&](std::size_t job) {
    const std::size_t c = job / k, f = job % k;
    auto& rec = result.table[job];
    rec.cell = c;
    rec.fold = f;
    try {
      auto [arch, cfg] = grid.cell(c, d, base);
      cfg.seed = child_seed(seed, 100 + f);
      const auto& tr = folds[f].train;
      const auto& va = folds[f].validation;
      Eigen::MatrixXd Xt(static_cast<Eigen::Index>(tr.size()), X.cols());
      Eigen::VectorXd yt(static_cast<Eigen::Index>(tr.size()));
      Eigen::MatrixXd Xv(static_cast<Eigen::Index>(va.size()), X.cols());
      Eigen::VectorXd yv(static_cast<Eigen::Index>(va.size()));
      for (std::size_t i = 0; i < tr.size(); ++i) {
        Xt.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(tr[i]));
        yt(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(tr[i]));
      }
      for (std::size_t i = 0; i < va.size(); ++i) {
        Xv.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(va[i]));
        yv(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(va[i]));
      }
      const auto model = train_fnn(Xt, yt, arch, cfg);
      rec.score = nrmse(predict_rows(model, Xv), yv, y_min, y_max);
    } catch (const Error& e) {
      rec.failed = true;
      rec.score = std::numeric_limits<double>::infinity();
      rec.message = e.what();
    }
  });

  result.cell_scores.assign(cells, 0.0);
  for (const auto& rec : result.table) {
    if (rec.failed) result.cell_scores[rec.cell] = std::numeric_limits<double>::infinity();
    else if (std::isfinite(result.cell_scores[rec.cell]))
      result.cell_scores[rec.cell] += rec.score / static_cast<double>(k);
  }
  result.best_score = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < cells; ++c) {
    if (result.cell_scores[c] < result.best_score) {
      result.best_score = result.cell_scores[c];
      result.best_cell = c;
    }
  }
  if (!std::isfinite(result.best_score))
    throw TrainingAborted("grid_search_cv: every grid cell failed (" + result.table.front().message +
                          ")");
  std::tie(result.arch, result.config) = grid.cell(result.best_cell, d, base);
  result.config.seed = base.seed;
  return result;
}

std::string cv_table_csv(const FnnGrid& grid, const FnnSearchResult& result,
                         std::size_t input_dim) {
  std::ostringstream out;
  out << "cell,fold,widths,learning_rate,weight_decay,batch_size,epochs,nrmse,status\n";
  for (const auto& rec : result.table) {
    const auto [arch, cfg] = grid.cell(rec.cell, input_dim, TrainConfig{});
    out << rec.cell << ',' << rec.fold << ',' << arch.label() << ','
        << format_double(cfg.learning_rate) << ',' << format_double(cfg.weight_decay) << ','
        << cfg.batch_size << ',' << cfg.epochs << ','
        << (rec.failed ? std::string("inf") : format_double(rec.score)) << ','
        << (rec.failed ? "failed" : "ok") << '\n';
  }
  return out.str();
}

void save_fnn(const FnnModel<double>& model, const std::filesystem::path& path) {
  std::ostringstream out;
  const auto& rec = model.record();
  out << "smood-fnn v1\n";
  out << "input_dim " << model.input_dim() << "\n";
  out << "layers " << model.layers().size() << "\n";
  out << "provenance " << format_double(rec.config.learning_rate) << ' '
      << format_double(rec.config.weight_decay) << ' ' << rec.config.batch_size << ' '
      << rec.config.epochs << ' ' << rec.config.seed << ' ' << rec.best_epoch << ' '
      << format_double(rec.best_val_mse) << "\n";
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    const auto& L = model.layers()[l];
    out << "layer " << l << ' ' << L.weight.rows() << ' ' << L.weight.cols() << "\n";
    for (Eigen::Index i = 0; i < L.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < L.weight.cols(); ++j)
        out << (j ? " " : "") << format_double(L.weight(i, j));
      out << "\n";
    }
    out << "bias";
    for (Eigen::Index i = 0; i < L.bias.size(); ++i) out << ' ' << format_double(L.bias(i));
    out << "\n";
  }
  write_file(path, out.str());
}

FnnModel<double> load_fnn(const std::filesystem::path& path) {
  const std::string src = path.string();
  std::istringstream in(read_file(path));
  std::string line, tok;
  std::size_t line_no = 0;
  auto next_line = [&]() -> std::istringstream {
    if (!std::getline(in, line)) throw ParseError(src, line_no + 1, "unexpected end of file");
    ++line_no;
    return std::istringstream(line);
  };
  auto number = [&](std::istringstream& ls) {
    if (!(ls >> tok)) throw ParseError(src, line_no, "missing value");
    const auto v = parse_double(tok);
    if (!v) throw ParseError(src, line_no, "bad number '" + tok + "'");
    return *v;
  };
  if (next_line().str() != "smood-fnn v1") throw ParseError(src, 1, "bad header");
  std::size_t input_dim = 0, count = 0;
  {
    auto ls = next_line();
    if (!(ls >> tok >> input_dim) || tok != "input_dim") throw ParseError(src, line_no, "input_dim");
  }
  {
    auto ls = next_line();
    if (!(ls >> tok >> count) || tok != "layers" || count == 0)
      throw ParseError(src, line_no, "layers");
  }
  TrainingRecord rec;
  {
    auto ls = next_line();
    if (!(ls >> tok) || tok != "provenance") throw ParseError(src, line_no, "provenance");
    rec.config.learning_rate = number(ls);
    rec.config.weight_decay = number(ls);
    if (!(ls >> rec.config.batch_size >> rec.config.epochs >> rec.config.seed >> rec.best_epoch))
      throw ParseError(src, line_no, "provenance fields");
    rec.best_val_mse = number(ls);
  }
  std::vector<DenseLayer<double>> layers;
  for (std::size_t l = 0; l < count; ++l) {
    std::size_t idx = 0;
    Eigen::Index rows = 0, cols = 0;
    {
      auto ls = next_line();
      if (!(ls >> tok >> idx >> rows >> cols) || tok != "layer" || idx != l || rows < 1 || cols < 1)
        throw ParseError(src, line_no, "layer header");
    }
    DenseLayer<double> L;
    L.weight.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      auto ls = next_line();
      for (Eigen::Index j = 0; j < cols; ++j) L.weight(i, j) = number(ls);
    }
    auto ls = next_line();
    if (!(ls >> tok) || tok != "bias") throw ParseError(src, line_no, "bias");
    L.bias.resize(rows);
    for (Eigen::Index i = 0; i < rows; ++i) L.bias(i) = number(ls);
    layers.push_back(std::move(L));
  }
  FnnModel<double> model(std::move(layers), rec);
  if (model.input_dim() != input_dim) throw ParseError(src, 2, "input_dim disagrees with layer 0");
  return model;
}

}  // namespace smood
