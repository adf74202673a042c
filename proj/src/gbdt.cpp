#include "smood/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "smood/error.hpp"
#include "smood/io.hpp"

namespace smood {

void GbdtConfig::validate() const {
  if (!(learning_rate > 0.0 && std::isfinite(learning_rate)))
    throw InvalidArgument("GbdtConfig: learning_rate must be positive");
  if (n_estimators < 1) throw InvalidArgument("GbdtConfig: n_estimators must be >= 1");
  if (max_depth < 1) throw InvalidArgument("GbdtConfig: max_depth must be >= 1");
  if (min_samples_leaf < 1) throw InvalidArgument("GbdtConfig: min_samples_leaf must be >= 1");
}

double RegressionTree::eval(const double* x) const {
  int i = 0;
  while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    i = x[n.feature] <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(i)].value;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& F, const Eigen::VectorXd& g, const Eigen::VectorXd& h,
              const GbdtConfig& cfg, const std::vector<std::vector<std::size_t>>& order)
      : F_(F), g_(g), h_(h), cfg_(cfg), order_(order), in_node_(static_cast<std::size_t>(F.rows()), 0) {}

  RegressionTree build() {
    std::vector<std::size_t> rows(static_cast<std::size_t>(F_.rows()));
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
  };

  int grow(const std::vector<std::size_t>& rows, std::size_t depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    Split best;
    if (depth < cfg_.max_depth && rows.size() >= 2 * cfg_.min_samples_leaf) best = find_split(rows);
    if (best.feature < 0) {
      double gs = 0.0, hs = 0.0;
      for (auto r : rows) {
        gs += g_(static_cast<Eigen::Index>(r));
        hs += h_(static_cast<Eigen::Index>(r));
      }
      tree_.nodes[static_cast<std::size_t>(id)].value = hs > 1e-150 ? cfg_.learning_rate * gs / hs : 0.0;
      return id;
    }
    std::vector<std::size_t> left, right;
    for (auto r : rows)
      (F_(static_cast<Eigen::Index>(r), best.feature) <= best.threshold ? left : right).push_back(r);
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    auto& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  // Exact greedy on squared error of the residuals; first feature/position wins ties.
  Split find_split(const std::vector<std::size_t>& rows) {
    for (auto r : rows) in_node_[r] = 1;
    double total = 0.0;
    for (auto r : rows) total += g_(static_cast<Eigen::Index>(r));
    const auto n = static_cast<double>(rows.size());
    const double parent = total * total / n;
    Split best;
    std::vector<std::size_t> sub;
    sub.reserve(rows.size());
    for (Eigen::Index f = 0; f < F_.cols(); ++f) {
      sub.clear();
      for (auto r : order_[static_cast<std::size_t>(f)])
        if (in_node_[r]) sub.push_back(r);
      double gl = 0.0;
      const std::size_t last = sub.size() - cfg_.min_samples_leaf;
      for (std::size_t i = 0; i + 1 <= last; ++i) {
        gl += g_(static_cast<Eigen::Index>(sub[i]));
        const std::size_t nl = i + 1;
        if (nl < cfg_.min_samples_leaf) continue;
        const double a = F_(static_cast<Eigen::Index>(sub[i]), f);
        const double b = F_(static_cast<Eigen::Index>(sub[i + 1]), f);
        if (!(a < b)) continue;
        const double gr = total - gl;
        const double gain = gl * gl / static_cast<double>(nl) +
                            gr * gr / static_cast<double>(sub.size() - nl) - parent;
        if (gain > best.gain && gain > 1e-12) {
          double t = a + (b - a) / 2.0;
          if (!(t < b)) t = a;
          best = {static_cast<int>(f), t, gain};
        }
      }
    }
    for (auto r : rows) in_node_[r] = 0;
    return best;
  }

  const Eigen::MatrixXd& F_;
  const Eigen::VectorXd& g_;
  const Eigen::VectorXd& h_;
  const GbdtConfig& cfg_;
  const std::vector<std::vector<std::size_t>>& order_;
  std::vector<char> in_node_;
  RegressionTree tree_;
};

}  // namespace

double logistic_loss(const Eigen::VectorXd& logits, const std::vector<bool>& labels) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    s += labels[static_cast<std::size_t>(i)] ? softplus(-logits(i)) : softplus(logits(i));
  return s / static_cast<double>(logits.size());
}

DetectorModel gbdt_train(const Eigen::MatrixXd& F, const std::vector<bool>& labels,
                         const GbdtConfig& config) {
  config.validate();
  if (static_cast<std::size_t>(F.cols()) != kProfileFeatureNames.size())
    throw DimensionMismatch("gbdt_train features", kProfileFeatureNames.size(), static_cast<std::size_t>(F.cols()));
  if (static_cast<std::size_t>(F.rows()) != labels.size())
    throw DimensionMismatch("gbdt_train labels", static_cast<std::size_t>(F.rows()), labels.size());
  if (!F.allFinite()) throw InvalidArgument("gbdt_train: non-finite feature value");
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  if (pos == 0 || pos == labels.size()) throw InvalidArgument("gbdt_train: single-class input");

  DetectorModel model;
  model.config = config;
  model.train_rows = labels.size();
  model.train_positives = pos;
  model.base_score = std::log(static_cast<double>(pos) / static_cast<double>(labels.size() - pos));

  std::vector<std::vector<std::size_t>> order(static_cast<std::size_t>(F.cols()));
  for (Eigen::Index f = 0; f < F.cols(); ++f) {
    auto& o = order[static_cast<std::size_t>(f)];
    o.resize(labels.size());
    std::iota(o.begin(), o.end(), std::size_t{0});
    std::stable_sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) {
      return F(static_cast<Eigen::Index>(a), f) < F(static_cast<Eigen::Index>(b), f);
    });
  }

  const Eigen::Index n = F.rows();
  Eigen::VectorXd logit = Eigen::VectorXd::Constant(n, model.base_score);
  Eigen::VectorXd g(n), h(n);
  // Row-major copy so tree evaluation reads contiguous features.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = F;
  model.loss_trace.push_back(logistic_loss(logit, labels));
  model.trees.reserve(config.n_estimators);
  for (std::size_t m = 0; m < config.n_estimators; ++m) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = sigmoid(logit(i));
      g(i) = (labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0) - p;
      h(i) = p * (1.0 - p);
    }
    model.trees.push_back(TreeBuilder(F, g, h, config, order).build());
    const auto& tree = model.trees.back();
    for (Eigen::Index i = 0; i < n; ++i) logit(i) += tree.eval(rows.row(i).data());
    model.loss_trace.push_back(logistic_loss(logit, labels));
  }
  return model;
}

double gbdt_logit(const DetectorModel& model, const double* features) {
  double z = model.base_score;
  for (const auto& t : model.trees) z += t.eval(features);
  return z;
}

double gbdt_predict_proba(const DetectorModel& model, const SensitivityProfile& profile) {
  const auto f = profile.features();
  return sigmoid(gbdt_logit(model, f.data()));
}

double gbdt_predict_proba(const DetectorModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& features) {
  if (static_cast<std::size_t>(features.size()) != model.feature_count())
    throw DimensionMismatch("gbdt_predict_proba", model.feature_count(), static_cast<std::size_t>(features.size()));
  const Eigen::RowVectorXd copy = features;
  return sigmoid(gbdt_logit(model, copy.data()));
}

Eigen::VectorXd gbdt_predict_proba_rows(const DetectorModel& model, const Eigen::MatrixXd& F) {
  Eigen::VectorXd out(F.rows());
  for (Eigen::Index i = 0; i < F.rows(); ++i) out(i) = gbdt_predict_proba(model, F.row(i));
  return out;
}

void save_detector(const DetectorModel& model, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "smood-detector v1\nfeatures";
  for (const char* name : kProfileFeatureNames) os << ' ' << name;
  const auto& c = model.config;
  os << "\nconfig " << format_double(c.learning_rate) << ' ' << c.n_estimators << ' ' << c.max_depth << ' '
     << c.min_samples_leaf << ' ' << c.seed << "\ntraining " << model.train_rows << ' '
     << model.train_positives << "\nbase_score " << format_double(model.base_score) << "\nloss_trace "
     << model.loss_trace.size();
  for (double v : model.loss_trace) os << ' ' << format_double(v);
  os << "\ntrees " << model.trees.size() << '\n';
  for (std::size_t t = 0; t < model.trees.size(); ++t) {
    os << "tree " << t << ' ' << model.trees[t].nodes.size() << '\n';
    for (const auto& n : model.trees[t].nodes)
      os << n.feature << ' ' << format_double(n.threshold) << ' ' << n.left << ' ' << n.right << ' '
         << format_double(n.value) << '\n';
  }
  write_file(path, os.str());
}

DetectorModel load_detector(const std::filesystem::path& path) {
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
  auto keyword = [&](std::istringstream& ls, const char* want) {
    if (!(ls >> tok) || tok != want) throw ParseError(src, line_no, std::string("expected '") + want + "'");
  };
  if (next_line().str() != "smood-detector v1") throw ParseError(src, 1, "bad header");
  {
    auto ls = next_line();
    keyword(ls, "features");
    for (const char* name : kProfileFeatureNames) keyword(ls, name);
  }
  DetectorModel m;
  {
    auto ls = next_line();
    keyword(ls, "config");
    m.config.learning_rate = number(ls);
    if (!(ls >> m.config.n_estimators >> m.config.max_depth >> m.config.min_samples_leaf >> m.config.seed))
      throw ParseError(src, line_no, "config fields");
  }
  {
    auto ls = next_line();
    keyword(ls, "training");
    if (!(ls >> m.train_rows >> m.train_positives)) throw ParseError(src, line_no, "training fields");
  }
  {
    auto ls = next_line();
    keyword(ls, "base_score");
    m.base_score = number(ls);
  }
  {
    auto ls = next_line();
    keyword(ls, "loss_trace");
    std::size_t k = 0;
    if (!(ls >> k)) throw ParseError(src, line_no, "loss_trace count");
    for (std::size_t i = 0; i < k; ++i) m.loss_trace.push_back(number(ls));
  }
  std::size_t count = 0;
  {
    auto ls = next_line();
    keyword(ls, "trees");
    if (!(ls >> count)) throw ParseError(src, line_no, "tree count");
  }
  m.trees.resize(count);
  for (std::size_t t = 0; t < count; ++t) {
    std::size_t idx = 0, nodes = 0;
    {
      auto ls = next_line();
      keyword(ls, "tree");
      if (!(ls >> idx >> nodes) || idx != t || nodes == 0) throw ParseError(src, line_no, "tree header");
    }
    auto& tree = m.trees[t].nodes;
    tree.resize(nodes);
    for (std::size_t k = 0; k < nodes; ++k) {
      auto& n = tree[k];
      auto ls = next_line();
      if (!(ls >> n.feature)) throw ParseError(src, line_no, "node feature");
      n.threshold = number(ls);
      if (!(ls >> n.left >> n.right)) throw ParseError(src, line_no, "node children");
      n.value = number(ls);
      // Children follow their parent, so evaluation always terminates.
      const auto lim = static_cast<int>(nodes), self = static_cast<int>(k);
      if (n.feature >= static_cast<int>(kProfileFeatureNames.size()) ||
          (n.feature >= 0 && (n.left <= self || n.right <= self || n.left >= lim || n.right >= lim)))
        throw ParseError(src, line_no, "node out of range");
    }
  }
  m.config.validate();
  return m;
}

}  // namespace smood
