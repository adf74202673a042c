#include "smood/ood_labeling.hpp"

#include <algorithm>
#include <cmath>

#include "smood/error.hpp"
#include "smood/random.hpp"
#include "smood/stats.hpp"

namespace smood {

ConfidenceInterval bootstrap_ci(const Eigen::Ref<const Eigen::VectorXd>& errors, double level,
                                std::size_t resamples, std::uint64_t seed) {
  if (errors.size() < 2) throw InvalidArgument("bootstrap_ci: needs at least 2 errors");
  if (resamples < 100) throw InvalidArgument("bootstrap_ci: needs at least 100 resamples");
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("bootstrap_ci: level must lie in (0, 1)");
  if (!errors.allFinite() || (errors.array() < 0.0).any())
    throw InvalidArgument("bootstrap_ci: errors must be finite and non-negative");

  std::vector<double> sorted(errors.data(), errors.data() + errors.size());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();

  // Type-7 quantile of each resample from its two bracketing order statistics.
  const double h = static_cast<double>(n - 1) * level;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const double frac = h - static_cast<double>(lo);

  Rng rng(seed);
  std::vector<double> stats(resamples);
  std::vector<double> sample(n);
  for (std::size_t b = 0; b < resamples; ++b) {
    for (std::size_t i = 0; i < n; ++i) sample[i] = sorted[uniform_index(rng, n)];
    std::nth_element(sample.begin(), sample.begin() + static_cast<std::ptrdiff_t>(lo), sample.end());
    const double a = sample[lo];
    const double c = lo + 1 < n ? *std::min_element(sample.begin() + static_cast<std::ptrdiff_t>(lo + 1),
                                                    sample.end())
                                : a;
    stats[b] = a + frac * (c - a);
  }
  std::sort(stats.begin(), stats.end());
  const double tail = (1.0 - level) / 2.0;
  ConfidenceInterval ci;
  ci.level = level;
  ci.resamples = resamples;
  ci.lower = sorted_quantile(stats, tail);
  ci.upper = sorted_quantile(stats, 1.0 - tail);
  return ci;
}

OodLabelSet label_ood(const Eigen::Ref<const Eigen::VectorXd>& errors, const ConfidenceInterval& ci) {
  if (errors.size() == 0) throw InvalidArgument("label_ood: no errors");
  OodLabelSet out;
  out.ci = ci;
  out.is_ood.resize(static_cast<std::size_t>(errors.size()));
  for (Eigen::Index i = 0; i < errors.size(); ++i) {
    const bool ood = errors(i) > ci.upper;
    out.is_ood[static_cast<std::size_t>(i)] = ood;
    out.ood_count += ood ? 1 : 0;
  }
  return out;
}

}  // namespace smood
