#include "smood/sensitivity.hpp"

#include <cmath>
#include <sstream>

#include "smood/io.hpp"
#include "smood/parallel.hpp"
#include "smood/random.hpp"

namespace smood {

namespace {

struct Cloud {
  Eigen::MatrixXd points;  // d x n_perturb, columns are x + dx
};

Cloud make_cloud(const FnnModel<double>& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                 const PerturbationSpec& spec) {
  spec.validate();
  model.check_input(static_cast<std::size_t>(x.size()));
  Cloud c;
  c.points = perturbation_cloud(static_cast<std::size_t>(x.size()), spec).transpose();
  c.points.colwise() += x;
  return c;
}

DeviationStats deviation_from(const FnnModel<double>& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                              const Cloud& c) {
  const double f0 = predict(model, Eigen::VectorXd(x));
  const Eigen::ArrayXd dev = (predict_columns(model, c.points).array() - f0).abs();
  const double sa = dev.mean();
  return {sa, (dev - sa).square().mean()};
}

JacobianStats jacobian_from(const FnnModel<double>& model, const Cloud& c) {
  const Eigen::MatrixXd J = jacobian_columns(model, c.points);  // d x n
  const Eigen::VectorXd avg = J.rowwise().mean();
  const Eigen::VectorXd var = (J.colwise() - avg).array().square().rowwise().mean();
  return {avg.norm(), var.norm()};
}

}  // namespace

void PerturbationSpec::validate() const {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidArgument("PerturbationSpec: delta must be > 0");
  if (n_perturb < 2) throw InvalidArgument("PerturbationSpec: n_perturb must be >= 2");
}

Eigen::MatrixXd perturbation_cloud(std::size_t dims, const PerturbationSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Eigen::MatrixXd dx(static_cast<Eigen::Index>(spec.n_perturb), static_cast<Eigen::Index>(dims));
  for (Eigen::Index i = 0; i < dx.rows(); ++i)
    for (Eigen::Index j = 0; j < dx.cols(); ++j) dx(i, j) = uniform(rng, -spec.delta, spec.delta);
  return dx;
}

DeviationStats deviation_stats(const FnnModel<double>& model,
                               const Eigen::Ref<const Eigen::VectorXd>& x,
                               const PerturbationSpec& spec) {
  return deviation_from(model, x, make_cloud(model, x, spec));
}

JacobianStats jacobian_stats(const FnnModel<double>& model,
                             const Eigen::Ref<const Eigen::VectorXd>& x,
                             const PerturbationSpec& spec) {
  return jacobian_from(model, make_cloud(model, x, spec));
}

SensitivityProfile profile(const FnnModel<double>& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                           const PerturbationSpec& spec) {
  const Cloud c = make_cloud(model, x, spec);
  const auto dev = deviation_from(model, x, c);
  const auto jac = jacobian_from(model, c);
  return {dev.sa, dev.sv, jac.ja, jac.jv};
}

std::vector<SensitivityProfile> profile_batch(const FnnModel<double>& model,
                                              const Eigen::MatrixXd& X,
                                              const PerturbationSpec& spec,
                                              const std::vector<std::size_t>* ids) {
  spec.validate();
  const auto m = static_cast<std::size_t>(X.rows());
  if (ids && ids->size() != m) throw DimensionMismatch("profile_batch ids", m, ids->size());
  std::vector<SensitivityProfile> out(m);
  parallel_for(m, [&](std::size_t i) {
    PerturbationSpec s = spec;
    s.seed = point_seed(spec.seed, ids ? (*ids)[i] : i);
    out[i] = profile(model, X.row(static_cast<Eigen::Index>(i)).transpose(), s);
  });
  return out;
}

void save_profiles_csv(const std::vector<ProfileRow>& rows, const std::filesystem::path& path) {
  bool labelled = !rows.empty();
  for (const auto& r : rows) labelled = labelled && r.is_ood.has_value();
  std::ostringstream out;
  out << "id,SA,SV,JA,JV" << (labelled ? ",is_ood" : "") << "\n";
  for (const auto& r : rows) {
    out << r.id;
    for (double v : r.profile.features()) out << ',' << format_double(v);
    if (labelled) out << ',' << (*r.is_ood ? 1 : 0);
    out << '\n';
  }
  write_file(path, out.str());
}

std::vector<ProfileRow> load_profiles_csv(const std::filesystem::path& path) {
  const std::string src = path.string();
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError(src, 1, "missing header");
  const std::string header(trim(line));
  bool labelled = false;
  if (header == "id,SA,SV,JA,JV,is_ood") labelled = true;
  else if (header != "id,SA,SV,JA,JV") throw ParseError(src, 1, "unexpected header '" + header + "'");
  std::vector<ProfileRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line), ',');
    if (cells.size() != (labelled ? 6u : 5u)) throw ParseError(src, line_no, "wrong column count");
    ProfileRow r;
    const auto id = parse_int(cells[0]);
    if (!id || *id < 0) throw ParseError(src, line_no, "bad id");
    r.id = static_cast<std::size_t>(*id);
    double f[4];
    for (int j = 0; j < 4; ++j) {
      const auto v = parse_double(cells[static_cast<std::size_t>(j + 1)]);
      if (!v) throw ParseError(src, line_no, "bad feature value");
      f[j] = *v;
    }
    r.profile = {f[0], f[1], f[2], f[3]};
    if (labelled) {
      const auto lab = parse_int(cells[5]);
      if (!lab || (*lab != 0 && *lab != 1)) throw ParseError(src, line_no, "is_ood must be 0 or 1");
      r.is_ood = *lab == 1;
    }
    rows.push_back(r);
  }
  return rows;
}

Eigen::MatrixXd feature_matrix(const std::vector<SensitivityProfile>& profiles) {
  Eigen::MatrixXd F(static_cast<Eigen::Index>(profiles.size()), 4);
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto f = profiles[i].features();
    for (int j = 0; j < 4; ++j) F(static_cast<Eigen::Index>(i), j) = f[static_cast<std::size_t>(j)];
  }
  return F;
}

}  // namespace smood
