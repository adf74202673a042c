#include "smood/oversample.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "smood/error.hpp"
#include "smood/random.hpp"

namespace smood {

std::string_view to_string(OversampleMethod m) {
  return m == OversampleMethod::Smote ? "Smote" : "BorderlineSmote";
}

OversampleMethod oversample_method_from_string(std::string_view name) {
  if (name == "Smote") return OversampleMethod::Smote;
  if (name == "BorderlineSmote") return OversampleMethod::BorderlineSmote;
  throw InvalidArgument("unknown oversampling method '" + std::string(name) + "'");
}

void OversampleConfig::validate() const {
  if (k < 1) throw InvalidArgument("OversampleConfig: k must be >= 1");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw InvalidArgument("OversampleConfig: ratio must lie in (0, 1]");
}

std::vector<std::size_t> nearest_rows(const Eigen::MatrixXd& X, std::size_t query,
                                      const std::vector<std::size_t>& candidates, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(candidates.size());
  const auto q = static_cast<Eigen::Index>(query);
  for (auto c : candidates) {
    if (c == query) continue;
    dist.emplace_back((X.row(static_cast<Eigen::Index>(c)) - X.row(q)).squaredNorm(), c);
  }
  const std::size_t take = std::min(k, dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(take), dist.end());
  std::vector<std::size_t> out(take);
  for (std::size_t i = 0; i < take; ++i) out[i] = dist[i].second;
  return out;
}

OversampleResult oversample(const Eigen::MatrixXd& X, const std::vector<bool>& labels,
                            const OversampleConfig& config) {
  config.validate();
  if (static_cast<std::size_t>(X.rows()) != labels.size())
    throw DimensionMismatch("oversample labels", static_cast<std::size_t>(X.rows()), labels.size());
  std::vector<std::size_t> minority, all(labels.size());
  std::size_t majority = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    all[i] = i;
    if (labels[i]) minority.push_back(i);
    else ++majority;
  }
  if (minority.empty() || majority == 0)
    throw InvalidArgument("oversample: both classes must be present");

  OversampleResult out{X, labels, {}};
  const auto target = static_cast<std::size_t>(
      std::ceil(config.ratio * static_cast<double>(majority) - 1e-9));
  if (minority.size() >= target) return out;
  if (minority.size() < config.k + 1)
    throw InvalidArgument("oversample: only " + std::to_string(minority.size()) +
                          " minority samples for k=" + std::to_string(config.k) +
                          "; use k <= " + std::to_string(minority.size() - 1));

  std::vector<std::vector<std::size_t>> neighbours(minority.size());
  for (std::size_t i = 0; i < minority.size(); ++i)
    neighbours[i] = nearest_rows(X, minority[i], minority, config.k);

  std::vector<std::size_t> seeds;  // positions into `minority`
  if (config.method == OversampleMethod::BorderlineSmote) {
    for (std::size_t i = 0; i < minority.size(); ++i) {
      const auto nn = nearest_rows(X, minority[i], all, config.k);
      std::size_t maj = 0;
      for (auto j : nn) maj += labels[j] ? 0 : 1;
      const double frac = static_cast<double>(maj) / static_cast<double>(nn.size());
      if (frac >= 0.5 && frac < 1.0) seeds.push_back(i);
    }
  }
  if (seeds.empty()) {
    seeds.resize(minority.size());
    for (std::size_t i = 0; i < minority.size(); ++i) seeds[i] = i;
  }

  const std::size_t needed = target - minority.size();
  Rng rng(config.seed);
  out.X.conservativeResize(X.rows() + static_cast<Eigen::Index>(needed), X.cols());
  out.origins.reserve(needed);
  for (std::size_t s = 0; s < needed; ++s) {
    const std::size_t pos = seeds[uniform_index(rng, seeds.size())];
    const auto& nn = neighbours[pos];
    const std::size_t nb = nn[uniform_index(rng, nn.size())];
    double u = 0.0;
    while (u <= 0.0) u = uniform01(rng);
    const auto a = static_cast<Eigen::Index>(minority[pos]);
    out.X.row(X.rows() + static_cast<Eigen::Index>(s)) =
        X.row(a) + u * (X.row(static_cast<Eigen::Index>(nb)) - X.row(a));
    out.labels.push_back(true);
    out.origins.push_back({minority[pos], nb, u});
  }
  return out;
}

}  // namespace smood
