#include "smood/oracle.hpp"

#include <cmath>
#include <numbers>

#include "smood/error.hpp"
#include "smood/random.hpp"

namespace smood {

std::string_view to_string(OracleKind kind) {
  switch (kind) {
    case OracleKind::SmoothMtowLike: return "SmoothMtowLike";
    case OracleKind::RegimeSwitchTtcLike: return "RegimeSwitchTtcLike";
    case OracleKind::ModerateBflLike: return "ModerateBflLike";
  }
  return "?";
}

OracleKind oracle_kind_from_string(std::string_view name) {
  if (name == "SmoothMtowLike") return OracleKind::SmoothMtowLike;
  if (name == "RegimeSwitchTtcLike") return OracleKind::RegimeSwitchTtcLike;
  if (name == "ModerateBflLike") return OracleKind::ModerateBflLike;
  throw InvalidArgument("unknown oracle kind '" + std::string(name) + "'");
}

Oracle::Oracle(OracleSpec spec, DesignSpace space) : spec_(spec), space_(std::move(space)) {
  space_.validate();
  if (!(spec_.cost_seconds >= 0.0)) throw InvalidArgument("oracle cost must be >= 0");
  const auto d = static_cast<Eigen::Index>(space_.dims());
  Rng rng(child_seed(spec_.seed, static_cast<std::uint64_t>(spec_.kind)));
  linear_.resize(d);
  curvature_.resize(d);
  centre_.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    linear_(i) = uniform(rng, 0.1, 0.5);
    curvature_(i) = uniform(rng, 0.05, 0.3);
    centre_(i) = uniform(rng, 0.2, 0.8);
  }
  wave_phase_ = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  jump_ = uniform(rng, 0.8, 1.0);
  switch_offset_ = uniform(rng, 0.5, 0.6);
}

Eigen::VectorXd Oracle::to_unit(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return ((x - space_.lo).array() / (space_.hi - space_.lo).array()).matrix();
}

double Oracle::smooth_part(const Eigen::VectorXd& t) const {
  const double lin = linear_.dot(t);
  const double quad = 0.5 * (curvature_.array() * (t - centre_).array().square()).sum();
  const double t1 = t.size() > 1 ? t(1) : 0.0;
  const double wave = 0.3 * std::sin(std::numbers::pi * (t(0) + 0.5 * t1) + wave_phase_);
  return lin + quad + wave;
}

double Oracle::regime_indicator(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::VectorXd t = to_unit(x);
  const double t1 = t.size() > 1 ? t(1) : 0.0;
  const double t2 = t.size() > 2 ? t(2) : 0.5;
  return t(0) + 0.3 * std::sin(2.0 * std::numbers::pi * t1) + 0.25 * (t2 - 0.5) - switch_offset_;
}

OracleResult Oracle::evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (static_cast<std::size_t>(x.size()) != space_.dims())
    throw DimensionMismatch("oracle", space_.dims(), static_cast<std::size_t>(x.size()));
  if (!x.allFinite()) throw OracleFailure("oracle: non-finite design point");
  const Eigen::VectorXd t = to_unit(x);
  double y = 0.0;
  switch (spec_.kind) {
    case OracleKind::SmoothMtowLike:
      y = smooth_part(t);
      break;
    case OracleKind::RegimeSwitchTtcLike: {
      // The jump height grows along the last coordinate.
      const double ta = t.size() > 3 ? t(t.size() - 1) : 0.5;
      y = smooth_part(t);
      if (regime_indicator(x) > 0.0) y += jump_ * (0.5 + 1.5 * ta);
      break;
    }
    case OracleKind::ModerateBflLike: {
      const double bump = std::exp(-2.0 * (t - centre_).squaredNorm());
      y = linear_.dot(t) + 0.6 * std::tanh(3.0 * (t(0) - 0.5)) + 0.8 * bump;
      break;
    }
  }
  if (!std::isfinite(y)) throw OracleFailure("oracle produced a non-finite value");
  return {y, spec_.cost_seconds, !space_.contains(x)};
}

Eigen::VectorXd Oracle::evaluate_rows(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd y(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) y(i) = evaluate(X.row(i).transpose()).value;
  return y;
}

OracleResult oracle_eval(const OracleSpec& spec, const DesignSpace& space,
                         const Eigen::Ref<const Eigen::VectorXd>& x) {
  return Oracle(spec, space).evaluate(x);
}

}  // namespace smood
