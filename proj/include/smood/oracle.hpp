#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "smood/dataset.hpp"

namespace smood {

/// Synthetic stand-ins for an expensive high-fidelity simulator.
enum class OracleKind {
  SmoothMtowLike,       ///< globally smooth, mild curvature
  RegimeSwitchTtcLike,  ///< two regimes separated by a jump across a curved surface
  ModerateBflLike,      ///< smooth with saturating and bump-shaped terms
};

std::string_view to_string(OracleKind kind);
OracleKind oracle_kind_from_string(std::string_view name);

/// Default simulated cost per call, 02h:57m:58s.
inline constexpr double kDefaultOracleSeconds = 10678.0;

struct OracleSpec {
  OracleKind kind = OracleKind::SmoothMtowLike;
  std::uint64_t seed = 0;
  double cost_seconds = kDefaultOracleSeconds;
};

struct OracleResult {
  double value = 0.0;
  double cost_seconds = 0.0;  ///< simulated, never slept
  bool out_of_bounds = false;
};

/// Deterministic oracle over a design space: coefficients are drawn once from
/// the spec seed, so (kind, seed, x) always maps to the same value.
class Oracle {
 public:
  Oracle(OracleSpec spec, DesignSpace space);

  OracleResult evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  double operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return evaluate(x).value;
  }
  /// Evaluates every row of X.
  Eigen::VectorXd evaluate_rows(const Eigen::MatrixXd& X) const;

  /// Signed regime indicator (RegimeSwitchTtcLike only; > 0 is the upper regime).
  double regime_indicator(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  const OracleSpec& spec() const { return spec_; }
  const DesignSpace& space() const { return space_; }

 private:
  Eigen::VectorXd to_unit(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  double smooth_part(const Eigen::VectorXd& t) const;

  OracleSpec spec_;
  DesignSpace space_;
  Eigen::VectorXd linear_;
  Eigen::VectorXd curvature_;
  Eigen::VectorXd centre_;
  double wave_phase_ = 0.0;
  double jump_ = 0.0;
  double switch_offset_ = 0.0;
};

OracleResult oracle_eval(const OracleSpec& spec, const DesignSpace& space,
                         const Eigen::Ref<const Eigen::VectorXd>& x);

}  // namespace smood
