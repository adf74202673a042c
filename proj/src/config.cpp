#include "smood/config.hpp"

#include <set>

#include <json.hpp>

#include "smood/error.hpp"
#include "smood/io.hpp"

namespace smood {

using nlohmann::json;

namespace {

/// Typed view of one JSON object that remembers which keys were read.
class Section {
 public:
  Section(const json& j, std::string path, std::string source)
      : j_(j), path_(std::move(path)), source_(std::move(source)) {
    if (!j_.is_object()) fail("must be an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  T get(const char* key) {
    if (!has(key)) fail(std::string("missing required key '") + key + "'");
    return convert<T>(raw(key), key);
  }

  template <typename T>
  T get(const char* key, T fallback) {
    return has(key) ? convert<T>(raw(key), key) : fallback;
  }

  /// A section for an already-read value, reporting under `path`.
  Section nested(const json& v, std::string path) const { return Section(v, std::move(path), source_); }

  Section child(const char* key) {
    if (!has(key)) fail(std::string("missing section '") + key + "'");
    return Section(raw(key), path_ + "." + key, source_);
  }

  /// Rejects keys that were never read.
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) fail("unknown key '" + k + "'");
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(source_, 0, path_ + ": " + what); }

 private:
  template <typename T>
  T convert(const json& v, const char* key) const {
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_unsigned()) fail(std::string("'") + key + "' must be a non-negative integer");
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) fail(std::string("'") + key + "' must be a number");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      fail(std::string("'") + key + "': " + e.what());
    }
  }

  const json& j_;
  std::string path_;
  std::string source_;
  std::set<std::string> seen_;
};

DesignSpace parse_box(Section s, std::size_t dims_hint) {
  DesignSpace b;
  const auto& lo = s.raw("lo");
  const auto& hi = s.raw("hi");
  std::size_t dims = s.get<std::size_t>("dims", dims_hint);
  // A scalar bound is broadcast to the length of the other side (or 'dims').
  if (lo.is_array() && hi.is_array() && lo.size() != hi.size()) s.fail("'lo' and 'hi' differ in length");
  const json& arr = lo.is_array() ? lo : hi;
  if (arr.is_array()) {
    if (s.has("dims") && dims != arr.size()) s.fail("'dims' disagrees with the bound arrays");
    dims = arr.size();
  }
  if (dims == 0) s.fail("scalar bounds need 'dims'");
  auto bound = [&](const json& v, std::size_t i) {
    const json& e = v.is_array() ? v[i] : v;
    if (!e.is_number()) s.fail("bounds must be numbers");
    return e.get<double>();
  };
  b.lo.resize(static_cast<Eigen::Index>(dims));
  b.hi.resize(static_cast<Eigen::Index>(dims));
  for (std::size_t i = 0; i < dims; ++i) {
    b.lo(static_cast<Eigen::Index>(i)) = bound(lo, i);
    b.hi(static_cast<Eigen::Index>(i)) = bound(hi, i);
  }
  s.finish();
  try {
    b.validate();
  } catch (const Error& e) {
    s.fail(e.what());
  }
  return b;
}

FnnGrid parse_fnn_grid(Section& parent, const char* key) {
  if (!parent.has(key)) return FnnGrid::desk();
  const auto& v = parent.raw(key);
  if (v.is_string()) {
    if (v == "desk") return FnnGrid::desk();
    if (v == "full") return FnnGrid::full();
    parent.fail("grid must be \"desk\", \"full\" or an object");
  }
  auto s = parent.nested(v, "config.fnn.grid");
  FnnGrid g;
  g.widths = s.get<std::vector<std::vector<std::size_t>>>("widths");
  g.learning_rates = s.get<std::vector<double>>("learning_rates");
  g.weight_decays = s.get<std::vector<double>>("weight_decays");
  g.batch_sizes = s.get<std::vector<std::size_t>>("batch_sizes");
  g.epochs = s.get<std::vector<std::size_t>>("epochs");
  s.finish();
  if (g.size() == 0) parent.fail("grid has an empty axis");
  return g;
}

DetectorGrid parse_detector_grid(Section& parent, const char* key) {
  if (!parent.has(key)) return DetectorGrid::desk();
  const auto& v = parent.raw(key);
  if (v.is_string()) {
    if (v == "desk") return DetectorGrid::desk();
    if (v == "full") return DetectorGrid::full();
    parent.fail("grid must be \"desk\", \"full\" or an object");
  }
  auto s = parent.nested(v, "config.detector.grid");
  DetectorGrid g;
  for (const auto& m : s.get<std::vector<std::string>>("methods")) {
    try {
      g.methods.push_back(oversample_method_from_string(m));
    } catch (const Error& e) {
      s.fail(e.what());
    }
  }
  g.ks = s.get<std::vector<std::size_t>>("ks");
  g.ratios = s.get<std::vector<double>>("ratios");
  g.learning_rates = s.get<std::vector<double>>("learning_rates");
  g.n_estimators = s.get<std::vector<std::size_t>>("n_estimators");
  s.finish();
  if (g.size() == 0) parent.fail("grid has an empty axis");
  return g;
}

void validate_grids(const PipelineConfig& c) {
  const auto d = c.space.dims();
  for (const auto& w : c.fnn.grid.widths) FnnArchitecture{w, d}.validate();
  TrainConfig t;
  for (double v : c.fnn.grid.learning_rates) { t = {}; t.learning_rate = v; t.validate(); }
  for (double v : c.fnn.grid.weight_decays) { t = {}; t.weight_decay = v; t.validate(); }
  for (auto v : c.fnn.grid.batch_sizes) { t = {}; t.batch_size = v; t.validate(); }
  for (auto v : c.fnn.grid.epochs) { t = {}; t.epochs = v; t.validate(); }
  for (std::size_t i = 0; i < c.detector.grid.size(); ++i) {
    auto [o, g] = c.detector.grid.cell(i, GbdtConfig{});
    o.validate();
    g.validate();
  }
  for (auto n : c.baseline.grid)
    if (n < 2) throw InvalidArgument("baseline.n_neighbors_grid entries must be >= 2");
}

json box_json(const DesignSpace& b) {
  json lo = json::array(), hi = json::array();
  for (Eigen::Index i = 0; i < b.lo.size(); ++i) {
    lo.push_back(b.lo(i));
    hi.push_back(b.hi(i));
  }
  return {{"lo", lo}, {"hi", hi}};
}

}  // namespace

PipelineConfig parse_config(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(source, 0, e.what());
  }
  PipelineConfig c;
  Section root(j, "config", source);
  if (!root.has("seed")) root.fail("missing required key 'seed' (runs are never seeded from the clock)");
  c.seed = root.get<std::uint64_t>("seed");
  c.space = parse_box(root.child("design"), 0);
  {
    auto s = root.child("oracle");
    try {
      c.oracle.kind = oracle_kind_from_string(s.get<std::string>("kind"));
    } catch (const InvalidArgument& e) {
      s.fail(e.what());
    }
    c.oracle.seed = s.get<std::uint64_t>("seed");
    c.oracle.cost_seconds = s.get<double>("cost_seconds", kDefaultOracleSeconds);
    if (!(c.oracle.cost_seconds > 0.0)) s.fail("cost_seconds must be positive");
    s.finish();
  }
  {
    auto s = root.child("doe");
    c.doe.train_size = s.get<std::size_t>("train_size");
    c.doe.test_size = s.get<std::size_t>("test_size");
    c.doe.train_box = s.has("train_box") ? parse_box(s.child("train_box"), c.space.dims()) : c.space;
    s.finish();
    if (c.doe.train_size < 20 || c.doe.test_size < 2) s.fail("train_size must be >= 20 and test_size >= 2");
    if (c.doe.train_box.dims() != c.space.dims()) s.fail("train_box dimension differs from design");
    for (Eigen::Index i = 0; i < c.space.lo.size(); ++i)
      if (c.doe.train_box.lo(i) < c.space.lo(i) || c.doe.train_box.hi(i) > c.space.hi(i))
        s.fail("train_box must lie inside the design space");
  }
  {
    const auto kind = root.get<std::string>("surrogate");
    if (kind == "fnn") c.surrogate = SurrogateKind::Fnn;
    else if (kind == "gp") c.surrogate = SurrogateKind::Gp;
    else root.fail("surrogate must be \"fnn\" or \"gp\"");
  }
  if (root.has("fnn")) {
    auto s = root.child("fnn");
    c.fnn.grid = parse_fnn_grid(s, "grid");
    c.fnn.cv_folds = s.get<std::size_t>("cv_folds", c.fnn.cv_folds);
    c.fnn.oof_folds = s.get<std::size_t>("oof_folds", c.fnn.oof_folds);
    c.fnn.holdout_fraction = s.get<double>("holdout_fraction", c.fnn.holdout_fraction);
    s.finish();
    if (c.fnn.cv_folds < 2 || c.fnn.oof_folds < 2) s.fail("fold counts must be >= 2");
  }
  if (root.has("gp")) {
    auto s = root.child("gp");
    c.gp.max_train = s.get<std::size_t>("max_train", c.gp.max_train);
    c.gp.fit.restarts = s.get<std::size_t>("restarts", c.gp.fit.restarts);
    c.gp.fit.max_iterations = s.get<std::size_t>("max_iterations", c.gp.fit.max_iterations);
    c.gp.fit.optimize_noise = s.get<bool>("optimize_noise", c.gp.fit.optimize_noise);
    c.gp.fit.noise_variance = s.get<double>("noise_variance", c.gp.fit.noise_variance);
    c.gp.oof_folds = s.get<std::size_t>("oof_folds", c.gp.oof_folds);
    s.finish();
    if (c.gp.max_train < 2 || c.gp.fit.restarts < 1 || c.gp.oof_folds < 2) s.fail("invalid gp settings");
  }
  if (root.has("sensitivity")) {
    auto s = root.child("sensitivity");
    c.sensitivity.delta = s.get<double>("delta", c.sensitivity.delta);
    c.sensitivity.n_perturb = s.get<std::size_t>("n_perturb", c.sensitivity.n_perturb);
    s.finish();
  }
  if (root.has("labeling")) {
    auto s = root.child("labeling");
    c.labeling.level = s.get<double>("level", c.labeling.level);
    c.labeling.resamples = s.get<std::size_t>("resamples", c.labeling.resamples);
    s.finish();
  }
  if (root.has("detector")) {
    auto s = root.child("detector");
    c.detector.grid = parse_detector_grid(s, "grid");
    c.detector.cv_folds = s.get<std::size_t>("cv_folds", c.detector.cv_folds);
    c.detector.max_depth = s.get<std::size_t>("max_depth", c.detector.max_depth);
    c.detector.min_samples_leaf = s.get<std::size_t>("min_samples_leaf", c.detector.min_samples_leaf);
    s.finish();
    if (c.detector.cv_folds < 2) s.fail("cv_folds must be >= 2");
  }
  if (root.has("baseline")) {
    auto s = root.child("baseline");
    c.baseline.grid = s.get<std::vector<std::size_t>>("n_neighbors_grid", c.baseline.grid);
    c.baseline.quantile = s.get<double>("quantile", c.baseline.quantile);
    c.baseline.folds = s.get<std::size_t>("folds", c.baseline.folds);
    s.finish();
    if (c.baseline.grid.empty()) s.fail("n_neighbors_grid must not be empty");
  }
  if (root.has("hybrid")) {
    auto s = root.child("hybrid");
    c.risk_threshold = s.get<double>("risk_threshold", c.risk_threshold);
    s.finish();
    if (!(c.risk_threshold >= 0.0 && c.risk_threshold <= 1.0)) s.fail("risk_threshold must lie in [0, 1]");
  }
  root.finish();
  try {
    c.sensitivity.validate();
    validate_grids(c);
  } catch (const Error& e) {
    throw ParseError(source, 0, std::string("config: ") + e.what());
  }
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.string());
}

std::string PipelineConfig::canonical() const {
  json j;
  j["seed"] = seed;
  j["design"] = box_json(space);
  j["oracle"] = {{"kind", std::string(to_string(oracle.kind))}, {"seed", oracle.seed}, {"cost_seconds", oracle.cost_seconds}};
  j["doe"] = {{"train_size", doe.train_size}, {"test_size", doe.test_size}, {"train_box", box_json(doe.train_box)}};
  j["surrogate"] = surrogate == SurrogateKind::Fnn ? "fnn" : "gp";
  j["fnn"] = {{"grid",
               {{"widths", fnn.grid.widths},
                {"learning_rates", fnn.grid.learning_rates},
                {"weight_decays", fnn.grid.weight_decays},
                {"batch_sizes", fnn.grid.batch_sizes},
                {"epochs", fnn.grid.epochs}}},
              {"cv_folds", fnn.cv_folds},
              {"oof_folds", fnn.oof_folds},
              {"holdout_fraction", fnn.holdout_fraction}};
  j["gp"] = {{"max_train", gp.max_train},
             {"restarts", gp.fit.restarts},
             {"max_iterations", gp.fit.max_iterations},
             {"optimize_noise", gp.fit.optimize_noise},
             {"noise_variance", gp.fit.noise_variance},
             {"oof_folds", gp.oof_folds}};
  j["sensitivity"] = {{"delta", sensitivity.delta}, {"n_perturb", sensitivity.n_perturb}};
  j["labeling"] = {{"level", labeling.level}, {"resamples", labeling.resamples}};
  std::vector<std::string> methods;
  for (auto m : detector.grid.methods) methods.emplace_back(to_string(m));
  j["detector"] = {{"grid",
                    {{"methods", methods},
                     {"ks", detector.grid.ks},
                     {"ratios", detector.grid.ratios},
                     {"learning_rates", detector.grid.learning_rates},
                     {"n_estimators", detector.grid.n_estimators}}},
                   {"cv_folds", detector.cv_folds},
                   {"max_depth", detector.max_depth},
                   {"min_samples_leaf", detector.min_samples_leaf}};
  j["baseline"] = {{"n_neighbors_grid", baseline.grid}, {"quantile", baseline.quantile}, {"folds", baseline.folds}};
  j["hybrid"] = {{"risk_threshold", risk_threshold}};
  return j.dump(2) + "\n";
}

}  // namespace smood
