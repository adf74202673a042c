#include "smood/hybrid.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "smood/error.hpp"
#include "smood/io.hpp"
#include "smood/metrics.hpp"
#include "smood/parallel.hpp"

namespace smood {

std::string_view to_string(Route r) { return r == Route::Surrogate ? "surrogate" : "hf"; }

void RouterConfig::validate() const {
  if (!(risk_threshold >= 0.0 && risk_threshold <= 1.0))
    throw InvalidArgument("RouterConfig: risk_threshold must lie in [0, 1]");
  perturbation.validate();
}

void TimingModel::validate() const {
  if (t_o < 0.0 || t_s < 0.0 || t_d < 0.0) throw InvalidArgument("TimingModel: negative time");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("TimingModel: p must lie in [0, 1]");
}

double TimingModel::speedup_pure() const { return smood::speedup_pure(t_o, t_s); }
double TimingModel::speedup_hybrid() const { return smood::speedup_hybrid(t_o, t_s, t_d, p); }

RoutedPrediction route_predict(const Eigen::Ref<const Eigen::VectorXd>& x, const SurrogateBundle& surrogate,
                               const Oracle& oracle, const RouterConfig& router, std::size_t point_id) {
  router.validate();
  const Eigen::VectorXd z = normalize_point(surrogate.norm, x);
  PerturbationSpec spec = router.perturbation;
  spec.seed = point_seed(spec.seed, point_id);
  RoutedPrediction out;
  out.surrogate_value = predict(surrogate.model, z);
  out.profile = profile(surrogate.model, z, spec);
  out.risk = gbdt_predict_proba(surrogate.detector, out.profile);
  out.route = route_for(out.risk, router.risk_threshold);
  if (out.route == Route::Surrogate) {
    out.value = out.surrogate_value;
  } else {
    try {
      out.value = oracle.evaluate(x).value;
    } catch (const OracleFailure& e) {
      throw OracleFailure(std::string("routed HF call failed: ") + e.what());
    }
  }
  return out;
}

HybridReport aggregate_hybrid(const Eigen::VectorXd& targets, const Eigen::VectorXd& surrogate,
                              const Eigen::VectorXd& hf_values, const Eigen::VectorXd& risks,
                              double threshold, double y_min, double y_max,
                              const std::vector<std::optional<bool>>& labels,
                              const std::vector<std::size_t>& ids) {
  const auto n = static_cast<std::size_t>(targets.size());
  for (const auto* v : {&surrogate, &hf_values, &risks})
    if (static_cast<std::size_t>(v->size()) != n)
      throw DimensionMismatch("aggregate_hybrid", n, static_cast<std::size_t>(v->size()));
  if (!labels.empty() && labels.size() != n) throw DimensionMismatch("aggregate_hybrid labels", n, labels.size());
  if (!ids.empty() && ids.size() != n) throw DimensionMismatch("aggregate_hybrid ids", n, ids.size());
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw InvalidArgument("aggregate_hybrid: threshold outside [0, 1]");

  HybridReport r;
  r.risk_threshold = threshold;
  r.y_min = y_min;
  r.y_max = y_max;
  r.samples.resize(n);
  Eigen::VectorXd hybrid(targets.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto e = static_cast<Eigen::Index>(i);
    auto& s = r.samples[i];
    s.id = ids.empty() ? i : ids[i];
    s.target = targets(e);
    s.surrogate = surrogate(e);
    s.risk = risks(e);
    s.route = route_for(s.risk, threshold);
    s.value = s.route == Route::Surrogate ? s.surrogate : hf_values(e);
    if (!labels.empty()) s.is_ood = labels[i];
    hybrid(e) = s.value;
    if (s.route == Route::Surrogate) ++r.routed_surrogate;
    else ++r.routed_hf;
    if (s.is_ood) {
      if (*s.is_ood) (s.route == Route::HighFidelity ? r.caught_ood : r.missed_ood) += 1;
      else if (s.route == Route::HighFidelity) ++r.false_alarms;
    }
  }
  r.nrmse_pure = nrmse(surrogate, targets, y_min, y_max);
  r.nrmse_hybrid = nrmse(hybrid, targets, y_min, y_max);
  r.decr_err = r.nrmse_pure > 0.0 ? decr_err(r.nrmse_pure, r.nrmse_hybrid) : 0.0;
  r.timing.p = r.surrogate_fraction();
  return r;
}

HybridReport evaluate_hybrid(const Dataset& test, const SurrogateBundle& surrogate, const Oracle* oracle,
                             const RouterConfig& router, const std::vector<std::optional<bool>>& labels,
                             const std::vector<std::size_t>& ids) {
  router.validate();
  if (test.empty()) throw InvalidArgument("evaluate_hybrid: empty test set");
  using clock = std::chrono::steady_clock;
  const auto n = test.size();
  const Eigen::MatrixXd Z = normalize_apply(surrogate.norm, test.X);
  Eigen::VectorXd pred(Z.rows()), risk(Z.rows()), hf(Z.rows());
  std::vector<double> infer_s(n), detect_s(n);
  parallel_for(n, [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Eigen::VectorXd z = Z.row(r).transpose();
    const auto t0 = clock::now();
    pred(r) = predict(surrogate.model, z);
    const auto t1 = clock::now();
    PerturbationSpec spec = router.perturbation;
    spec.seed = point_seed(spec.seed, ids.empty() ? i : ids[i]);
    risk(r) = gbdt_predict_proba(surrogate.detector, profile(surrogate.model, z, spec));
    const auto t2 = clock::now();
    infer_s[i] = std::chrono::duration<double>(t1 - t0).count();
    detect_s[i] = std::chrono::duration<double>(t2 - t1).count();
    hf(r) = test.y(r);
    if (oracle && route_for(risk(r), router.risk_threshold) == Route::HighFidelity) {
      try {
        hf(r) = oracle->evaluate(test.X.row(r).transpose()).value;
      } catch (const OracleFailure& e) {
        throw OracleFailure(std::string("routed HF call failed: ") + e.what());
      }
    }
  });
  auto report = aggregate_hybrid(test.y, pred, hf, risk, router.risk_threshold, test.y.minCoeff(),
                                 test.y.maxCoeff(), labels, ids);
  double ts = 0.0, td = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ts += infer_s[i];
    td += detect_s[i];
  }
  report.timing.t_o = oracle ? oracle->spec().cost_seconds : kDefaultOracleSeconds;
  // A clock tick can exceed one inference; keep T_s strictly positive.
  report.timing.t_s = std::max(ts / static_cast<double>(n), 1e-9);
  report.timing.t_d = td / static_cast<double>(n);
  return report;
}

std::string hybrid_trace_csv(const HybridReport& report) {
  const bool labelled = !report.samples.empty() && report.samples.front().is_ood.has_value();
  std::ostringstream out;
  out << "id,target,surrogate,value,risk,route,error" << (labelled ? ",is_ood" : "") << '\n';
  for (const auto& s : report.samples) {
    out << s.id << ',' << format_double(s.target) << ',' << format_double(s.surrogate) << ','
        << format_double(s.value) << ',' << format_double(s.risk) << ',' << to_string(s.route) << ','
        << format_double(std::abs(s.value - s.target));
    if (labelled) out << ',' << (s.is_ood.value_or(false) ? 1 : 0);
    out << '\n';
  }
  return out.str();
}

}  // namespace smood
