#include "smood/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "smood/error.hpp"
#include "smood/io.hpp"
#include "smood/random.hpp"

namespace smood {

DesignSpace DesignSpace::box(std::size_t dims, double lo, double hi) {
  DesignSpace s{Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dims), lo),
                Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dims), hi)};
  s.validate();
  return s;
}

bool DesignSpace::contains(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return x.size() == lo.size() && (x.array() >= lo.array()).all() &&
         (x.array() <= hi.array()).all();
}

void DesignSpace::validate() const {
  if (lo.size() < 1) throw InvalidArgument("design space needs at least one dimension");
  if (lo.size() != hi.size()) throw DimensionMismatch("design space bounds", lo.size(), hi.size());
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (!std::isfinite(lo(i)) || !std::isfinite(hi(i)) || !(lo(i) < hi(i)))
      throw InvalidArgument("design space dimension " + std::to_string(i) +
                            " needs finite lo < hi");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.space = space;
  out.norm = norm;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  out.source.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    out.X.row(static_cast<Eigen::Index>(i)) = X.row(r);
    out.y(static_cast<Eigen::Index>(i)) = y(r);
    out.source.push_back(source[rows[i]]);
  }
  return out;
}

void Dataset::require_trainable(const char* who) const {
  if (empty()) throw InvalidArgument(std::string(who) + ": dataset is empty");
  if (static_cast<std::size_t>(X.cols()) != dims())
    throw DimensionMismatch(who, dims(), static_cast<std::size_t>(X.cols()));
}

Dataset make_dataset(DesignSpace space, Eigen::MatrixXd X, Eigen::VectorXd y,
                     SampleSource source) {
  space.validate();
  if (static_cast<std::size_t>(X.cols()) != space.dims())
    throw DimensionMismatch("make_dataset", space.dims(), static_cast<std::size_t>(X.cols()));
  if (X.rows() != y.size())
    throw DimensionMismatch("make_dataset targets", static_cast<std::size_t>(X.rows()),
                            static_cast<std::size_t>(y.size()));
  if (!y.allFinite()) throw InvalidArgument("make_dataset: non-finite target");
  Dataset d;
  d.space = std::move(space);
  d.source.assign(static_cast<std::size_t>(X.rows()), source);
  d.X = std::move(X);
  d.y = std::move(y);
  return d;
}

Eigen::MatrixXd lhs_sample(const DesignSpace& space, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("lhs_sample: n must be at least 1");
  space.validate();
  const std::size_t d = space.dims();
  Rng rng(seed);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::vector<std::size_t> strata(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < d; ++j) {
    std::iota(strata.begin(), strata.end(), std::size_t{0});
    std::shuffle(strata.begin(), strata.end(), rng);
    const double lo = space.lo(static_cast<Eigen::Index>(j));
    const double width = space.hi(static_cast<Eigen::Index>(j)) - lo;
    for (std::size_t i = 0; i < n; ++i) {
      // Keep the jitter off the stratum edges so rounding cannot push a point
      // into its neighbour.
      const double u = 1e-9 + (1.0 - 2e-9) * uniform01(rng);
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          lo + width * ((static_cast<double>(strata[i]) + u) * inv_n);
    }
  }
  return X;
}

NormalizationStats normalize_fit(const Dataset& data) {
  if (data.size() < 2) throw InvalidArgument("normalize_fit: needs at least 2 samples");
  NormalizationStats s;
  const double n = static_cast<double>(data.size());
  s.mean = data.X.colwise().mean().transpose();
  s.stddev =
      ((data.X.rowwise() - s.mean.transpose()).array().square().colwise().sum() / n).sqrt();
  for (Eigen::Index j = 0; j < s.stddev.size(); ++j) {
    if (!(s.stddev(j) > 0.0))
      throw DegenerateRange("normalize_fit: input dimension " + std::to_string(j) +
                            " is constant");
  }
  s.y_min = data.y.minCoeff();
  s.y_max = data.y.maxCoeff();
  if (!(s.y_max > s.y_min))
    throw DegenerateRange("normalize_fit: target column is constant, NRMSE is undefined");
  return s;
}

Eigen::MatrixXd normalize_apply(const NormalizationStats& stats, const Eigen::MatrixXd& X) {
  if (X.cols() != stats.mean.size())
    throw DimensionMismatch("normalize_apply", static_cast<std::size_t>(stats.mean.size()),
                            static_cast<std::size_t>(X.cols()));
  return ((X.rowwise() - stats.mean.transpose()).array().rowwise() /
          stats.stddev.transpose().array())
      .matrix();
}

Eigen::VectorXd normalize_point(const NormalizationStats& stats,
                                const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != stats.mean.size())
    throw DimensionMismatch("normalize_point", static_cast<std::size_t>(stats.mean.size()),
                            static_cast<std::size_t>(x.size()));
  return ((x - stats.mean).array() / stats.stddev.array()).matrix();
}

Eigen::MatrixXd denormalize(const NormalizationStats& stats, const Eigen::MatrixXd& Z) {
  if (Z.cols() != stats.mean.size())
    throw DimensionMismatch("denormalize", static_cast<std::size_t>(stats.mean.size()),
                            static_cast<std::size_t>(Z.cols()));
  return ((Z.array().rowwise() * stats.stddev.transpose().array()).rowwise() +
          stats.mean.transpose().array())
      .matrix();
}

void save_normalization(const NormalizationStats& stats, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "smood-normalization v1\n";
  out << "dims " << stats.mean.size() << "\n";
  out << "y_range " << format_double(stats.y_min) << ' ' << format_double(stats.y_max) << "\n";
  for (Eigen::Index j = 0; j < stats.mean.size(); ++j)
    out << format_double(stats.mean(j)) << ' ' << format_double(stats.stddev(j)) << "\n";
  write_file(path, out.str());
}

NormalizationStats load_normalization(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  const std::string src = path.string();
  std::string magic, version, key;
  std::getline(in, magic);
  if (magic != "smood-normalization v1") throw ParseError(src, 1, "bad header");
  long long dims = 0;
  if (!(in >> key >> dims) || key != "dims" || dims < 1) throw ParseError(src, 2, "bad dims");
  std::string a, b;
  NormalizationStats s;
  if (!(in >> key >> a >> b) || key != "y_range") throw ParseError(src, 3, "bad y_range");
  auto pa = parse_double(a), pb = parse_double(b);
  if (!pa || !pb) throw ParseError(src, 3, "bad y_range value");
  s.y_min = *pa;
  s.y_max = *pb;
  s.mean.resize(dims);
  s.stddev.resize(dims);
  for (long long j = 0; j < dims; ++j) {
    if (!(in >> a >> b)) throw ParseError(src, static_cast<std::size_t>(4 + j), "missing row");
    pa = parse_double(a);
    pb = parse_double(b);
    if (!pa || !pb) throw ParseError(src, static_cast<std::size_t>(4 + j), "bad number");
    s.mean(j) = *pa;
    s.stddev(j) = *pb;
  }
  return s;
}

std::vector<Fold> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > n)
    throw InvalidArgument("kfold_split: need 2 <= k <= n (k=" + std::to_string(k) +
                          ", n=" + std::to_string(n) + ")");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Fold> folds(k);
  std::size_t start = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = n / k + (f < n % k ? 1 : 0);
    folds[f].validation.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                               order.begin() + static_cast<std::ptrdiff_t>(start + len));
    std::sort(folds[f].validation.begin(), folds[f].validation.end());
    start += len;
  }
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<bool> in_val(n, false);
    for (auto i : folds[f].validation) in_val[i] = true;
    folds[f].train.reserve(n - folds[f].validation.size());
    for (std::size_t i = 0; i < n; ++i)
      if (!in_val[i]) folds[f].train.push_back(i);
  }
  return folds;
}

Dataset load_csv(const std::filesystem::path& path, const std::optional<DesignSpace>& space) {
  const std::string src = path.string();
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(in, line)) throw ParseError(src, 1, "missing header");
  ++line_no;
  const auto header = split(trim(line), ',');
  if (header.size() < 2) throw ParseError(src, line_no, "header needs x0..x{d-1},y");
  const std::size_t d = header.size() - 1;
  for (std::size_t j = 0; j < d; ++j) {
    if (trim(header[j]) != "x" + std::to_string(j))
      throw ParseError(src, line_no, "missing header: expected column x" + std::to_string(j));
  }
  if (trim(header[d]) != "y") throw ParseError(src, line_no, "missing header: last column must be y");

  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line), ',');
    if (cells.size() != d + 1)
      throw ParseError(src, line_no,
                       "expected " + std::to_string(d + 1) + " columns, got " +
                           std::to_string(cells.size()));
    for (std::size_t j = 0; j <= d; ++j) {
      const auto v = parse_double(cells[j]);
      if (!v || !std::isfinite(*v))
        throw ParseError(src, line_no, "non-numeric cell '" + std::string(trim(cells[j])) + "'");
      values.push_back(*v);
    }
    ++rows;
  }

  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < d; ++j)
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i * (d + 1) + j];
    y(static_cast<Eigen::Index>(i)) = values[i * (d + 1) + d];
  }

  DesignSpace s;
  if (space) {
    if (space->dims() != d) throw DimensionMismatch("load_csv " + src, space->dims(), d);
    s = *space;
  } else {
    s = DesignSpace::unit(d);
    for (std::size_t j = 0; j < d && rows > 0; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const double lo = X.col(jj).minCoeff(), hi = X.col(jj).maxCoeff();
      if (lo < hi) {
        s.lo(jj) = lo;
        s.hi(jj) = hi;
      }
    }
  }
  return make_dataset(std::move(s), std::move(X), std::move(y), SampleSource::File);
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  std::string out;
  const std::size_t d = static_cast<std::size_t>(data.X.cols());
  for (std::size_t j = 0; j < d; ++j) out += "x" + std::to_string(j) + ",";
  out += "y\n";
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.X.cols(); ++j) {
      out += format_double(data.X(i, j));
      out += ',';
    }
    out += format_double(data.y(i));
    out += '\n';
  }
  write_file(path, out);
}

}  // namespace smood
