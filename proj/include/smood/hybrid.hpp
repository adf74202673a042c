#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "smood/dataset.hpp"
#include "smood/fnn.hpp"
#include "smood/gbdt.hpp"
#include "smood/oracle.hpp"
#include "smood/sensitivity.hpp"

namespace smood {

enum class Route { Surrogate, HighFidelity };

std::string_view to_string(Route r);

struct RouterConfig {
  double risk_threshold = 0.5;
  PerturbationSpec perturbation;

  void validate() const;
};

/// risk >= threshold goes to the high-fidelity model.
inline Route route_for(double risk, double threshold) {
  return risk < threshold ? Route::Surrogate : Route::HighFidelity;
}

/// Surrogate inputs are z-scored with `norm`; the oracle sees raw design vectors.
struct SurrogateBundle {
  const FnnModel<double>& model;
  const NormalizationStats& norm;
  const DetectorModel& detector;
};

struct RoutedPrediction {
  double value = 0.0;
  Route route = Route::Surrogate;
  double risk = 0.0;
  double surrogate_value = 0.0;
  SensitivityProfile profile;
};

/// Profiles x with seed point_seed(router.perturbation.seed, point_id).
RoutedPrediction route_predict(const Eigen::Ref<const Eigen::VectorXd>& x, const SurrogateBundle& surrogate,
                               const Oracle& oracle, const RouterConfig& router, std::size_t point_id = 0);

/// Per-query seconds. T_s is bare inference; T_d is profiling plus detector scoring.
struct TimingModel {
  double t_o = kDefaultOracleSeconds;
  double t_s = 0.0;
  double t_d = 0.0;
  double p = 1.0;  ///< fraction routed to the surrogate

  void validate() const;
  double speedup_pure() const;
  double speedup_hybrid() const;
};

struct HybridSample {
  std::size_t id = 0;
  double target = 0.0;
  double surrogate = 0.0;
  double value = 0.0;
  double risk = 0.0;
  Route route = Route::Surrogate;
  std::optional<bool> is_ood;
};

struct HybridReport {
  std::vector<HybridSample> samples;
  double risk_threshold = 0.5;
  double y_min = 0.0;
  double y_max = 0.0;
  double nrmse_pure = 0.0;
  double nrmse_hybrid = 0.0;
  double decr_err = 0.0;
  std::size_t routed_surrogate = 0;
  std::size_t routed_hf = 0;
  std::size_t false_alarms = 0;  ///< labelled ID, sent to HF
  std::size_t missed_ood = 0;    ///< labelled OOD, kept on the surrogate
  std::size_t caught_ood = 0;    ///< labelled OOD, sent to HF
  TimingModel timing;            ///< wall-clock dependent; kept out of determinism checks

  double surrogate_fraction() const {
    return samples.empty() ? 0.0 : static_cast<double>(routed_surrogate) / static_cast<double>(samples.size());
  }
};

/// Deterministic aggregation over given per-sample predictions and risks. HF
/// answers are `hf_values`; NRMSE is normalised by [y_min, y_max].
HybridReport aggregate_hybrid(const Eigen::VectorXd& targets, const Eigen::VectorXd& surrogate,
                              const Eigen::VectorXd& hf_values, const Eigen::VectorXd& risks,
                              double threshold, double y_min, double y_max,
                              const std::vector<std::optional<bool>>& labels = {},
                              const std::vector<std::size_t>& ids = {});

/// Routes every test row; HF answers come from `oracle` when given, else from the
/// recorded targets. NRMSE is normalised by the test target range. Timing is
/// measured per query and T_o is taken from the oracle cost (default otherwise).
HybridReport evaluate_hybrid(const Dataset& test, const SurrogateBundle& surrogate, const Oracle* oracle,
                             const RouterConfig& router,
                             const std::vector<std::optional<bool>>& labels = {},
                             const std::vector<std::size_t>& ids = {});

/// Columns id,target,surrogate,value,risk,route,error[,is_ood].
std::string hybrid_trace_csv(const HybridReport& report);

}  // namespace smood
