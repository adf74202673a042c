#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "smood/fnn.hpp"

namespace smood {

/// Monte-Carlo probe around a point: n_perturb draws of per-coordinate
/// uniform offsets on [-delta, delta], in normalised input units.
struct PerturbationSpec {
  double delta = 0.05;
  std::size_t n_perturb = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Local sensitivity profile [SA, SV, JA, JV].
struct SensitivityProfile {
  double sa = 0.0;  ///< mean |f(x + dx) - f(x)|
  double sv = 0.0;  ///< population variance of |f(x + dx) - f(x)|
  double ja = 0.0;  ///< norm of the mean input gradient over the cloud
  double jv = 0.0;  ///< norm of the elementwise gradient variance over the cloud

  std::array<double, 4> features() const { return {sa, sv, ja, jv}; }
  friend bool operator==(const SensitivityProfile&, const SensitivityProfile&) = default;
};

inline constexpr std::array<const char*, 4> kProfileFeatureNames{"SA", "SV", "JA", "JV"};

/// The n_perturb x dims matrix of offsets drawn from spec.seed.
Eigen::MatrixXd perturbation_cloud(std::size_t dims, const PerturbationSpec& spec);

struct DeviationStats {
  double sa = 0.0;
  double sv = 0.0;
};
struct JacobianStats {
  double ja = 0.0;
  double jv = 0.0;
};

DeviationStats deviation_stats(const FnnModel<double>& model,
                               const Eigen::Ref<const Eigen::VectorXd>& x,
                               const PerturbationSpec& spec);
JacobianStats jacobian_stats(const FnnModel<double>& model,
                             const Eigen::Ref<const Eigen::VectorXd>& x,
                             const PerturbationSpec& spec);

/// All four statistics from one shared perturbation cloud.
SensitivityProfile profile(const FnnModel<double>& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                           const PerturbationSpec& spec);

/// Seed used for row `index` of a batch: spec.seed XOR index.
inline std::uint64_t point_seed(std::uint64_t base, std::uint64_t index) { return base ^ index; }

/// Profiles every row of X (normalised inputs), in row order. Row i uses
/// point_seed(spec.seed, ids ? ids[i] : i).
std::vector<SensitivityProfile> profile_batch(const FnnModel<double>& model,
                                              const Eigen::MatrixXd& X,
                                              const PerturbationSpec& spec,
                                              const std::vector<std::size_t>* ids = nullptr);

/// Row of the profile table: point id, features and an optional ID/OOD label.
struct ProfileRow {
  std::size_t id = 0;
  SensitivityProfile profile;
  std::optional<bool> is_ood;
};

/// Columns id,SA,SV,JA,JV[,is_ood]. The label column is written only when every row has one.
void save_profiles_csv(const std::vector<ProfileRow>& rows, const std::filesystem::path& path);
std::vector<ProfileRow> load_profiles_csv(const std::filesystem::path& path);

/// rows x 4 feature matrix in SA, SV, JA, JV order.
Eigen::MatrixXd feature_matrix(const std::vector<SensitivityProfile>& profiles);

}  // namespace smood
