#include "smood/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

#include "smood/baseline.hpp"
#include "smood/classification.hpp"
#include "smood/hybrid.hpp"
#include "smood/io.hpp"
#include "smood/metrics.hpp"
#include "smood/ood_labeling.hpp"
#include "smood/parallel.hpp"
#include "smood/random.hpp"
#include "smood/summary.hpp"

namespace smood {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// digests, lock, manifest

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

RunLock::RunLock(const fs::path& dir) : path_(dir / ".smood.lock") {
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0)
    throw RunLocked("run directory " + dir.string() + " is locked by another process (remove " + path_.string() +
                    " if no run is active)");
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

std::map<std::string, std::string> RunManifest::deterministic_digests() const {
  std::map<std::string, std::string> out;
  for (const auto& [file, rec] : artifacts)
    if (rec.deterministic) out[file] = rec.sha256;
  return out;
}

RunManifest RunManifest::load(const fs::path& dir) {
  const auto path = dir / "manifest.json";
  RunManifest m;
  try {
    const auto j = json::parse(read_file(path));
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& [file, rec] : j.at("artifacts").items())
      m.artifacts[file] = {rec.at("sha256").get<std::string>(), rec.at("stage").get<std::string>(),
                           rec.at("deterministic").get<bool>()};
    for (const auto& [stage, secs] : j.at("stage_seconds").items()) m.stage_seconds[stage] = secs.get<double>();
  } catch (const json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  return m;
}

void RunManifest::save(const fs::path& dir) const {
  json j;
  j["tool_version"] = tool_version;
  j["config_hash"] = config_hash;
  j["artifacts"] = json::object();
  for (const auto& [file, rec] : artifacts)
    j["artifacts"][file] = {{"sha256", rec.sha256}, {"stage", rec.stage}, {"deterministic", rec.deterministic}};
  j["stage_seconds"] = stage_seconds;
  write_file(dir / "manifest.json", j.dump(2) + "\n");
}

namespace {

// ---------------------------------------------------------------------------
// stage plumbing

enum SeedStream : std::uint64_t {
  kDoeTrain = 1,
  kDoeTest,
  kFnnCv,
  kOof,
  kFinal,
  kProfileValidation,
  kProfileTest,
  kBootstrap,
  kDetector,
  kBaseline,
  kGpFit,
  kGpSubset,
};

std::uint64_t stage_seed(const PipelineConfig& c, SeedStream s) { return child_seed(c.seed, s); }

class StageRun {
 public:
  StageRun(const PipelineConfig& config, fs::path dir, std::string stage, bool fresh = false)
      : dir_(std::move(dir)), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {
    fs::create_directories(dir_);
    lock_.emplace(dir_);
    const auto hash = sha256_hex(config.canonical());
    if (fresh) {
      manifest_.config_hash = hash;
    } else {
      if (!fs::exists(dir_ / "manifest.json"))
        throw MissingPrerequisite("no manifest.json in " + dir_.string() + "; run `smood doe` first");
      manifest_ = RunManifest::load(dir_);
      if (manifest_.config_hash != hash)
        throw MissingPrerequisite("run directory " + dir_.string() +
                                  " was produced with a different config; rerun `smood doe`");
    }
    std::erase_if(manifest_.artifacts, [&](const auto& kv) { return kv.second.stage == stage_; });
  }

  fs::path require(const std::string& file, const char* producer) const {
    const auto p = dir_ / file;
    const auto it = manifest_.artifacts.find(file);
    if (it == manifest_.artifacts.end() || !fs::exists(p))
      throw MissingPrerequisite("missing " + file + "; run `smood " + producer + "` first");
    if (sha256_file(p) != it->second.sha256)
      throw MissingPrerequisite(file + " changed after `smood " + producer + "` wrote it; rerun `smood " +
                                producer + "`");
    return p;
  }

  fs::path path(const std::string& file) const { return dir_ / file; }

  void emit(const std::string& file, std::string_view contents, bool deterministic = true) {
    write_file(dir_ / file, contents);
    record(file, deterministic);
  }

  void record(const std::string& file, bool deterministic = true) {
    manifest_.artifacts[file] = {sha256_file(dir_ / file), stage_, deterministic};
  }

  const RunManifest& manifest() const { return manifest_; }

  void finish() {
    manifest_.stage_seconds[stage_] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    manifest_.save(dir_);
  }

 private:
  fs::path dir_;
  std::string stage_;
  std::chrono::steady_clock::time_point start_;
  std::optional<RunLock> lock_;
  RunManifest manifest_;
};

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

Eigen::MatrixXd take(const Eigen::MatrixXd& X, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

Eigen::VectorXd take(const Eigen::VectorXd& y, const std::vector<std::size_t>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(rows[i]));
  return out;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

std::vector<double> iota_ids(std::size_t n) {
  std::vector<double> ids(n);
  std::iota(ids.begin(), ids.end(), 0.0);
  return ids;
}

std::vector<bool> to_flags(const std::vector<double>& column) {
  std::vector<bool> out(column.size());
  for (std::size_t i = 0; i < column.size(); ++i) out[i] = column[i] != 0.0;
  return out;
}

std::vector<double> from_flags(const std::vector<bool>& flags) {
  std::vector<double> out(flags.size());
  for (std::size_t i = 0; i < flags.size(); ++i) out[i] = flags[i] ? 1.0 : 0.0;
  return out;
}

std::string fold_model_name(std::size_t f) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "fnn_fold_%02zu.txt", f);
  return buf;
}

std::string sigma_column(std::size_t n) { return "n" + std::to_string(n); }

struct Inputs {
  Dataset train;
  Dataset test;
};

Inputs load_inputs(const StageRun& run, const PipelineConfig& c) {
  return {load_csv(run.require("train.csv", "doe"), c.space), load_csv(run.require("test.csv", "doe"), c.space)};
}

json class_json(const ClassMetrics& m) {
  return {{"precision", m.precision},
          {"recall", m.recall},
          {"precision_undefined", m.precision_undefined},
          {"recall_undefined", m.recall_undefined},
          {"support", m.support}};
}

json report_json(const ClassificationReport& r) {
  return {{"ID", class_json(r.id)},
          {"OOD", class_json(r.ood)},
          {"MA", {{"precision", r.macro_precision}, {"recall", r.macro_recall}}},
          {"confusion", {{"tp", r.tp}, {"fp", r.fp}, {"tn", r.tn}, {"fn", r.fn}}},
          {"threshold", r.threshold}};
}

std::string pr_csv(const PrCurve& curve) {
  CsvTable t;
  std::vector<double> th, p, r;
  for (const auto& pt : curve.points) {
    th.push_back(pt.threshold);
    p.push_back(pt.precision);
    r.push_back(pt.recall);
  }
  t.add("threshold", th);
  t.add("precision", p);
  t.add("recall", r);
  return to_csv(t);
}

bool both_classes(const std::vector<bool>& labels) {
  const auto pos = std::count(labels.begin(), labels.end(), true);
  return pos > 0 && static_cast<std::size_t>(pos) < labels.size();
}

json box_json(const BoxStats& b) {
  return {{"count", b.count}, {"min", b.min}, {"q1", b.q1}, {"median", b.median},
          {"q3", b.q3},       {"max", b.max}, {"mean", b.mean}};
}

json hybrid_json(const HybridReport& r) {
  return {{"risk_threshold", r.risk_threshold},
          {"y_min", r.y_min},
          {"y_max", r.y_max},
          {"nrmse_pure", r.nrmse_pure},
          {"nrmse_hybrid", r.nrmse_hybrid},
          {"decr_err_percent", r.decr_err},
          {"samples", r.samples.size()},
          {"routed_surrogate", r.routed_surrogate},
          {"routed_hf", r.routed_hf},
          {"surrogate_fraction", r.surrogate_fraction()},
          {"false_alarms", r.false_alarms},
          {"missed_ood", r.missed_ood},
          {"caught_ood", r.caught_ood}};
}

json timing_json(const TimingModel& t) {
  return {{"T_o_seconds", t.t_o},
          {"T_s_seconds", t.t_s},
          {"T_d_seconds", t.t_d},
          {"p", t.p},
          {"speedup_pure", t.speedup_pure()},
          {"speedup_hybrid", t.speedup_hybrid()}};
}

/// Posterior on the whole training set from the persisted hyperparameters.
GpModel rebuild_gp(const StageRun& run, const Eigen::MatrixXd& Z, const Eigen::VectorXd& y) {
  const auto art = load_gp(run.require("gp_model.txt", "train"));
  return gp_condition(art.kernel, Z, y);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// train

void train_fnn_stage(StageRun& run, const PipelineConfig& c, const Inputs& in, const NormalizationStats& norm,
                     const Eigen::MatrixXd& Z, const Eigen::MatrixXd& Zt) {
  const auto n = in.train.size();
  const auto d = in.train.dims();
  TrainConfig base;
  base.holdout_fraction = c.fnn.holdout_fraction;
  const auto search = grid_search_cv(Z, in.train.y, norm.y_min, norm.y_max, c.fnn.grid, c.fnn.cv_folds,
                                     stage_seed(c, kFnnCv), base);
  run.emit("fnn_cv.csv", cv_table_csv(c.fnn.grid, search, d));

  const auto folds = kfold_split(n, c.fnn.oof_folds, stage_seed(c, kOof));
  std::vector<std::optional<FnnModel<double>>> models(folds.size());
  std::vector<double> fold_of(n), pred(n);
  parallel_for(folds.size(), [&](std::size_t f) {
    TrainConfig cfg = search.config;
    cfg.seed = child_seed(stage_seed(c, kOof), f + 1);
    const auto& tr = folds[f].train;
    models[f] = train_fnn(take(Z, tr), take(in.train.y, tr), search.arch, cfg);
    for (auto i : folds[f].validation) {
      fold_of[i] = static_cast<double>(f);
      pred[i] = predict(*models[f], Eigen::VectorXd(Z.row(static_cast<Eigen::Index>(i)).transpose()));
    }
  });
  for (std::size_t f = 0; f < folds.size(); ++f) {
    save_fnn(*models[f], run.path(fold_model_name(f)));
    run.record(fold_model_name(f));
  }

  TrainConfig cfg = search.config;
  cfg.seed = stage_seed(c, kFinal);
  const auto final_model = train_fnn(Z, in.train.y, search.arch, cfg);
  save_fnn(final_model, run.path("fnn_model.txt"));
  run.record("fnn_model.txt");
  const Eigen::VectorXd test_pred = predict_rows(final_model, Zt);

  const Eigen::VectorXd oof = to_vector(pred);
  CsvTable vt;
  vt.add("id", iota_ids(n));
  vt.add("fold", fold_of);
  vt.add("target", to_std(in.train.y));
  vt.add("prediction", pred);
  vt.add("abs_error", to_std((oof - in.train.y).cwiseAbs()));
  run.emit("validation_predictions.csv", to_csv(vt));
  CsvTable tt;
  tt.add("id", iota_ids(in.test.size()));
  tt.add("target", to_std(in.test.y));
  tt.add("prediction", to_std(test_pred));
  tt.add("abs_error", to_std((test_pred - in.test.y).cwiseAbs()));
  run.emit("test_predictions.csv", to_csv(tt));

  json s;
  s["surrogate"] = "fnn";
  s["architecture"] = search.arch.label();
  s["learning_rate"] = search.config.learning_rate;
  s["weight_decay"] = search.config.weight_decay;
  s["batch_size"] = search.config.batch_size;
  s["epochs"] = search.config.epochs;
  s["best_epoch"] = final_model.record().best_epoch;
  s["grid_cells"] = c.fnn.grid.size();
  s["cv_folds"] = c.fnn.cv_folds;
  s["cv_nrmse"] = search.best_score;
  s["oof_folds"] = c.fnn.oof_folds;
  s["validation_nrmse"] = nrmse(oof, in.train.y, norm.y_min, norm.y_max);
  s["test_nrmse"] = nrmse(test_pred, in.test.y, in.test.y.minCoeff(), in.test.y.maxCoeff());
  s["train_size"] = n;
  s["test_size"] = in.test.size();
  run.emit("train_summary.json", dump(s));
}

void train_gp_stage(StageRun& run, const PipelineConfig& c, const Inputs& in, const NormalizationStats& norm,
                    const Eigen::MatrixXd& Z, const Eigen::MatrixXd& Zt) {
  const auto n = in.train.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(stage_seed(c, kGpSubset));
  std::shuffle(perm.begin(), perm.end(), rng);
  perm.resize(std::min(n, c.gp.max_train));
  std::sort(perm.begin(), perm.end());
  const auto fit = gp_fit(take(Z, perm), take(in.train.y, perm), c.gp.fit, stage_seed(c, kGpFit));

  const auto folds = kfold_split(n, c.gp.oof_folds, stage_seed(c, kOof));
  std::vector<double> fold_of(n), mean(n), sd(n);
  parallel_for(folds.size(), [&](std::size_t f) {
    const auto& tr = folds[f].train;
    const auto post = gp_condition(fit.kernel, take(Z, tr), take(in.train.y, tr));
    const auto preds = gp_predict_rows(post, take(Z, folds[f].validation));
    for (std::size_t k = 0; k < preds.size(); ++k) {
      const auto i = folds[f].validation[k];
      fold_of[i] = static_cast<double>(f);
      mean[i] = preds[k].mean;
      sd[i] = preds[k].stddev;
    }
  });
  const auto post = gp_condition(fit.kernel, Z, in.train.y);
  const auto tp = gp_predict_rows(post, Zt);
  std::vector<double> tmean, tsd;
  for (const auto& p : tp) {
    tmean.push_back(p.mean);
    tsd.push_back(p.stddev);
  }
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  save_gp({fit.kernel, "train.csv", all, fit.log_marginal_likelihood}, run.path("gp_model.txt"));
  run.record("gp_model.txt");

  const Eigen::VectorXd oof = to_vector(mean), test_pred = to_vector(tmean);
  CsvTable vt;
  vt.add("id", iota_ids(n));
  vt.add("fold", fold_of);
  vt.add("target", to_std(in.train.y));
  vt.add("prediction", mean);
  vt.add("abs_error", to_std((oof - in.train.y).cwiseAbs()));
  vt.add("stddev", sd);
  run.emit("validation_predictions.csv", to_csv(vt));
  CsvTable tt;
  tt.add("id", iota_ids(in.test.size()));
  tt.add("target", to_std(in.test.y));
  tt.add("prediction", tmean);
  tt.add("abs_error", to_std((test_pred - in.test.y).cwiseAbs()));
  tt.add("stddev", tsd);
  run.emit("test_predictions.csv", to_csv(tt));

  json s;
  s["surrogate"] = "gp";
  s["lengthscale"] = fit.kernel.lengthscale;
  s["signal_variance"] = fit.kernel.signal_variance;
  s["noise_variance"] = fit.kernel.noise_variance;
  s["log_marginal_likelihood"] = fit.log_marginal_likelihood;
  s["hyperparameter_rows"] = perm.size();
  s["restarts"] = c.gp.fit.restarts;
  s["oof_folds"] = c.gp.oof_folds;
  s["validation_nrmse"] = nrmse(oof, in.train.y, norm.y_min, norm.y_max);
  s["test_nrmse"] = nrmse(test_pred, in.test.y, in.test.y.minCoeff(), in.test.y.maxCoeff());
  s["train_size"] = n;
  s["test_size"] = in.test.size();
  run.emit("train_summary.json", dump(s));
}

}  // namespace

// ---------------------------------------------------------------------------
// commands

void cmd_doe(const PipelineConfig& c, const fs::path& out) {
  StageRun run(c, out, "doe", true);
  const Oracle oracle(c.oracle, c.space);
  const auto Xtr = lhs_sample(c.doe.train_box, c.doe.train_size, stage_seed(c, kDoeTrain));
  const auto Xte = lhs_sample(c.space, c.doe.test_size, stage_seed(c, kDoeTest));
  save_csv(make_dataset(c.space, Xtr, oracle.evaluate_rows(Xtr)), run.path("train.csv"));
  run.record("train.csv");
  save_csv(make_dataset(c.space, Xte, oracle.evaluate_rows(Xte)), run.path("test.csv"));
  run.record("test.csv");
  run.emit("config.json", c.canonical());
  const auto calls = c.doe.train_size + c.doe.test_size;
  run.emit("doe.json", dump({{"oracle", std::string(to_string(c.oracle.kind))},
                             {"oracle_calls", calls},
                             {"oracle_seconds_per_call", c.oracle.cost_seconds},
                             {"simulated_oracle_seconds", static_cast<double>(calls) * c.oracle.cost_seconds}}));
  run.finish();
}

void cmd_train(const PipelineConfig& c, const fs::path& out) {
  StageRun run(c, out, "train");
  const auto in = load_inputs(run, c);
  in.train.require_trainable("train");
  const auto norm = normalize_fit(in.train);
  save_normalization(norm, run.path("normalization.txt"));
  run.record("normalization.txt");
  const Eigen::MatrixXd Z = normalize_apply(norm, in.train.X);
  const Eigen::MatrixXd Zt = normalize_apply(norm, in.test.X);
  if (c.surrogate == SurrogateKind::Fnn) train_fnn_stage(run, c, in, norm, Z, Zt);
  else train_gp_stage(run, c, in, norm, Z, Zt);
  run.finish();
}

void cmd_profile(const PipelineConfig& c, const fs::path& out) {
  StageRun run(c, out, "profile");
  const auto in = load_inputs(run, c);
  const auto norm = load_normalization(run.require("normalization.txt", "train"));
  const auto vp = load_csv_table(run.require("validation_predictions.csv", "train"));
  const auto tp = load_csv_table(run.require("test_predictions.csv", "train"));
  const Eigen::MatrixXd Z = normalize_apply(norm, in.train.X);
  const Eigen::MatrixXd Zt = normalize_apply(norm, in.test.X);
  const auto n = in.train.size(), nt = in.test.size();
  if (vp.rows() != n || tp.rows() != nt)
    throw MissingPrerequisite("prediction tables disagree with the data sets; rerun `smood train`");
  const auto& fold = vp.column("fold");
  const std::size_t oof_folds = c.surrogate == SurrogateKind::Fnn ? c.fnn.oof_folds : c.gp.oof_folds;

  if (c.surrogate == SurrogateKind::Fnn) {
    std::vector<FnnModel<double>> models;
    for (std::size_t f = 0; f < oof_folds; ++f) models.push_back(load_fnn(run.require(fold_model_name(f), "train")));
    const auto final_model = load_fnn(run.require("fnn_model.txt", "train"));
    PerturbationSpec spec = c.sensitivity;
    spec.seed = stage_seed(c, kProfileValidation);
    std::vector<ProfileRow> rows(n);
    parallel_for(n, [&](std::size_t i) {
      PerturbationSpec s = spec;
      s.seed = point_seed(spec.seed, i);
      const auto f = static_cast<std::size_t>(fold[i]);
      rows[i] = {i, profile(models.at(f), Z.row(static_cast<Eigen::Index>(i)).transpose(), s), std::nullopt};
    });
    save_profiles_csv(rows, run.path("validation_profiles.csv"));
    run.record("validation_profiles.csv");
    spec.seed = stage_seed(c, kProfileTest);
    const auto tprof = profile_batch(final_model, Zt, spec);
    std::vector<ProfileRow> trows(nt);
    for (std::size_t i = 0; i < nt; ++i) trows[i] = {i, tprof[i], std::nullopt};
    save_profiles_csv(trows, run.path("test_profiles.csv"));
    run.record("test_profiles.csv");
  }

  // Neighbour-deviation sigma: validation points look only at their fold's training rows.
  const auto folds = kfold_split(n, oof_folds, stage_seed(c, kOof));
  const auto& grid = c.baseline.grid;
  std::vector<std::vector<double>> vs(grid.size(), std::vector<double>(n)), ts(grid.size(), std::vector<double>(nt));
  const auto& vpred = vp.column("prediction");
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const Eigen::MatrixXd RX = take(Z, folds[f].train);
    const Eigen::VectorXd Ry = take(in.train.y, folds[f].train);
    const auto& va = folds[f].validation;
    parallel_for(va.size(), [&](std::size_t k) {
      const auto i = va[k];
      const auto s = neighbor_sigma_grid(Z.row(static_cast<Eigen::Index>(i)), vpred[i], RX, Ry, grid);
      for (std::size_t g = 0; g < grid.size(); ++g) vs[g][i] = s[g];
    });
  }
  const auto& tpred = tp.column("prediction");
  parallel_for(nt, [&](std::size_t i) {
    const auto s = neighbor_sigma_grid(Zt.row(static_cast<Eigen::Index>(i)), tpred[i], Z, in.train.y, grid);
    for (std::size_t g = 0; g < grid.size(); ++g) ts[g][i] = s[g];
  });
  CsvTable vt, tt;
  vt.add("id", iota_ids(n));
  tt.add("id", iota_ids(nt));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    vt.add(sigma_column(grid[g]), vs[g]);
    tt.add(sigma_column(grid[g]), ts[g]);
  }
  run.emit("sigma_validation.csv", to_csv(vt));
  run.emit("sigma_test.csv", to_csv(tt));
  run.finish();
}

void cmd_label(const PipelineConfig& c, const fs::path& out) {
  StageRun run(c, out, "label");
  const auto vp = load_csv_table(run.require("validation_predictions.csv", "train"));
  const auto tp = load_csv_table(run.require("test_predictions.csv", "train"));
  const Eigen::VectorXd verr = to_vector(vp.column("abs_error"));
  const Eigen::VectorXd terr = to_vector(tp.column("abs_error"));
  const auto ci = bootstrap_ci(verr, c.labeling.level, c.labeling.resamples, stage_seed(c, kBootstrap));
  const auto vl = label_ood(verr, ci);
  const auto tl = label_ood(terr, ci);

  run.emit("ci.json", dump({{"lower", ci.lower},
                            {"upper", ci.upper},
                            {"level", ci.level},
                            {"resamples", ci.resamples},
                            {"validation", {{"samples", vl.size()}, {"ood", vl.ood_count}, {"ratio", vl.ratio()}}},
                            {"test", {{"samples", tl.size()}, {"ood", tl.ood_count}, {"ratio", tl.ratio()}}}}));
  auto emit_labels = [&](const char* name, const CsvTable& pred, const OodLabelSet& l) {
    CsvTable t;
    t.add("id", pred.column("id"));
    t.add("abs_error", pred.column("abs_error"));
    t.add("is_ood", from_flags(l.is_ood));
    run.emit(name, to_csv(t));
  };
  emit_labels("validation_labels.csv", vp, vl);
  emit_labels("test_labels.csv", tp, tl);

  if (c.surrogate == SurrogateKind::Fnn) {
    auto join = [&](const char* src, const char* dst, const OodLabelSet& l) {
      auto rows = load_profiles_csv(run.require(src, "profile"));
      if (rows.size() != l.size()) throw MissingPrerequisite(std::string(src) + " is stale; rerun `smood profile`");
      for (auto& r : rows) r.is_ood = l.is_ood.at(r.id);
      save_profiles_csv(rows, run.path(dst));
      run.record(dst);
    };
    join("validation_profiles.csv", "validation_profiles_labeled.csv", vl);
    join("test_profiles.csv", "test_profiles_labeled.csv", tl);
  }
  run.finish();
}

void cmd_detector(const PipelineConfig& c, const fs::path& out) {
  StageRun run(c, out, "detector");
  const auto vlab = load_csv_table(run.require("validation_labels.csv", "label"));
  const auto tlab = load_csv_table(run.require("test_labels.csv", "label"));
  const auto vsig = load_csv_table(run.require("sigma_validation.csv", "profile"));
  const auto tsig = load_csv_table(run.require("sigma_test.csv", "profile"));
  const auto vy = to_flags(vlab.column("is_ood"));
  const auto ty = to_flags(tlab.column("is_ood"));

  // Neighbour-deviation baseline.
  std::vector<Eigen::VectorXd> sig;
  for (auto g : c.baseline.grid) {
    if (!vsig.has(sigma_column(g)))
      throw MissingPrerequisite("sigma_validation.csv lacks " + sigma_column(g) + "; rerun `smood profile`");
    sig.push_back(to_vector(vsig.column(sigma_column(g))));
  }
  const auto tuning = baseline_tune_neighbors(c.baseline.grid, sig, to_vector(vlab.column("abs_error")),
                                              c.baseline.folds, stage_seed(c, kBaseline));
  const auto& vbest = vsig.column(sigma_column(tuning.best));
  const double sigma_t = calibrate_sigma_t(vbest, c.baseline.quantile);
  const auto& tbest = tsig.column(sigma_column(tuning.best));
  std::vector<bool> bflag(tbest.size());
  std::size_t vflagged = 0;
  for (std::size_t i = 0; i < tbest.size(); ++i) bflag[i] = baseline_detect(tbest[i], sigma_t);
  for (double s : vbest) vflagged += baseline_detect(s, sigma_t) ? 1 : 0;
  const auto brep = classification_report(bflag, ty);
  run.emit("baseline.json", dump({{"n_neighbors", tuning.best},
                                  {"grid", tuning.grid},
                                  {"mean_correlation", tuning.mean_correlation},
                                  {"sigma_t", sigma_t},
                                  {"quantile", c.baseline.quantile},
                                  {"validation_flag_rate", static_cast<double>(vflagged) / static_cast<double>(vbest.size())}}));
  {
    CsvTable t;
    t.add("id", tlab.column("id"));
    t.add("sigma", tbest);
    t.add("flag_ood", from_flags(bflag));
    run.emit("baseline_flags.csv", to_csv(t));
  }
  json report;
  report["threshold"] = 0.5;
  report["test"] = {{"samples", ty.size()}, {"ood", std::count(ty.begin(), ty.end(), true)}};
  report["baseline"] = report_json(brep);
  report["baseline"]["aupr"] = nullptr;
  if (both_classes(ty)) {
    const auto curve = pr_curve(to_vector(tbest), ty);
    report["baseline"]["aupr"] = curve.aupr;
    run.emit("pr_curve_baseline.csv", pr_csv(curve));
  }

  if (c.surrogate == SurrogateKind::Fnn) {
    const auto vrows = load_profiles_csv(run.require("validation_profiles_labeled.csv", "label"));
    const auto trows = load_profiles_csv(run.require("test_profiles_labeled.csv", "label"));
    std::vector<SensitivityProfile> vp, tp;
    for (const auto& r : vrows) vp.push_back(r.profile);
    for (const auto& r : trows) tp.push_back(r.profile);
    const Eigen::MatrixXd F = feature_matrix(vp);
    GbdtConfig base;
    base.max_depth = c.detector.max_depth;
    base.min_samples_leaf = c.detector.min_samples_leaf;
    base.seed = stage_seed(c, kDetector);
    const auto search = detector_cv_tune(F, vy, c.detector.grid, c.detector.cv_folds, stage_seed(c, kDetector), base);
    run.emit("detector_cv.csv", detector_cv_table_csv(c.detector.grid, search));
    const auto model = train_detector(F, vy, search.oversample, search.gbdt);
    save_detector(model, run.path("detector_model.txt"));
    run.record("detector_model.txt");
    const Eigen::VectorXd scores = gbdt_predict_proba_rows(model, feature_matrix(tp));
    CsvTable st;
    st.add("id", tlab.column("id"));
    st.add("risk", to_std(scores));
    run.emit("detector_scores.csv", to_csv(st));
    report["smood"] = report_json(classification_report(scores, ty, 0.5));
    report["smood"]["aupr"] = nullptr;
    if (both_classes(ty)) {
      const auto curve = pr_curve(scores, ty);
      report["smood"]["aupr"] = curve.aupr;
      run.emit("pr_curve.csv", pr_csv(curve));
    }
    report["detector_selection"] = {{"method", std::string(to_string(search.oversample.method))},
                                    {"k", search.oversample.k},
                                    {"ratio", search.oversample.ratio},
                                    {"learning_rate", search.gbdt.learning_rate},
                                    {"n_estimators", search.gbdt.n_estimators},
                                    {"max_depth", search.gbdt.max_depth},
                                    {"cv_aupr", search.best_score},
                                    {"grid_cells", c.detector.grid.size()}};
  }
  run.emit("classification_report.json", dump(report));
  run.finish();
}

void cmd_hybrid(const PipelineConfig& c, const fs::path& out) {
  using clock = std::chrono::steady_clock;
  StageRun run(c, out, "hybrid");
  const auto in = load_inputs(run, c);
  const auto norm = load_normalization(run.require("normalization.txt", "train"));
  const auto tp = load_csv_table(run.require("test_predictions.csv", "train"));
  const auto tlab = load_csv_table(run.require("test_labels.csv", "label"));
  const auto flags = load_csv_table(run.require("baseline_flags.csv", "detector"));
  const auto bjson = read_json(run.require("baseline.json", "detector"));
  const Oracle oracle(c.oracle, c.space);
  const auto nt = in.test.size();
  const auto ty = to_flags(tlab.column("is_ood"));
  std::vector<std::optional<bool>> labels(ty.begin(), ty.end());
  const Eigen::MatrixXd Z = normalize_apply(norm, in.train.X);
  const Eigen::MatrixXd Zt = normalize_apply(norm, in.test.X);

  json report, timing, trace_primary;
  // Baseline routing: flagged rows go to the oracle.
  const Eigen::VectorXd pred = to_vector(tp.column("prediction"));
  const Eigen::VectorXd hf = oracle.evaluate_rows(in.test.X);
  const Eigen::VectorXd brisk = to_vector(flags.column("flag_ood"));
  auto brep = aggregate_hybrid(in.test.y, pred, hf, brisk, 0.5, in.test.y.minCoeff(), in.test.y.maxCoeff(), labels);
  {
    const auto n_nb = bjson.at("n_neighbors").get<std::size_t>();
    auto t0 = clock::now();
    if (c.surrogate == SurrogateKind::Fnn) {
      const auto model = load_fnn(run.require("fnn_model.txt", "train"));
      t0 = clock::now();
      for (Eigen::Index i = 0; i < Zt.rows(); ++i) (void)predict(model, Eigen::VectorXd(Zt.row(i).transpose()));
    } else {
      const auto gp = rebuild_gp(run, Z, in.train.y);
      t0 = clock::now();
      for (Eigen::Index i = 0; i < Zt.rows(); ++i) (void)gp_predict(gp, Zt.row(i).transpose());
    }
    const double ts = seconds_since(t0);
    t0 = clock::now();
    for (Eigen::Index i = 0; i < Zt.rows(); ++i) (void)neighbor_sigma(Zt.row(i), pred(i), Z, in.train.y, n_nb);
    const double td = seconds_since(t0);
    brep.timing.t_o = c.oracle.cost_seconds;
    brep.timing.t_s = std::max(ts / static_cast<double>(nt), 1e-9);
    brep.timing.t_d = td / static_cast<double>(nt);
  }
  report["baseline"] = hybrid_json(brep);
  timing["baseline"] = timing_json(brep.timing);
  std::string trace = hybrid_trace_csv(brep);

  if (c.surrogate == SurrogateKind::Fnn) {
    const auto model = load_fnn(run.require("fnn_model.txt", "train"));
    const auto detector = load_detector(run.require("detector_model.txt", "detector"));
    RouterConfig router;
    router.risk_threshold = c.risk_threshold;
    router.perturbation = c.sensitivity;
    router.perturbation.seed = stage_seed(c, kProfileTest);
    const auto srep = evaluate_hybrid(in.test, {model, norm, detector}, &oracle, router, labels);
    report["smood"] = hybrid_json(srep);
    timing["smood"] = timing_json(srep.timing);
    run.emit("hybrid_trace_baseline.csv", trace);
    trace = hybrid_trace_csv(srep);
  }
  run.emit("hybrid_report.json", dump(report));
  run.emit("hybrid_trace.csv", trace);
  run.emit("hybrid_timing.json", dump(timing), false);
  run.finish();
}

void cmd_report(const PipelineConfig& c, const fs::path& out) {
  StageRun run(c, out, "report");
  json r;
  r["tool_version"] = std::string(kToolVersion);
  r["surrogate"] = c.surrogate == SurrogateKind::Fnn ? "fnn" : "gp";
  r["oracle"] = std::string(to_string(c.oracle.kind));
  r["training"] = read_json(run.require("train_summary.json", "train"));
  r["ood_labeling"] = read_json(run.require("ci.json", "label"));
  r["detection"] = read_json(run.require("classification_report.json", "detector"));
  r["baseline"] = read_json(run.require("baseline.json", "detector"));
  r["hybrid"] = read_json(run.require("hybrid_report.json", "hybrid"));
  const auto tlab = load_csv_table(run.require("test_labels.csv", "label"));
  const auto ty = to_flags(tlab.column("is_ood"));

  auto pr_points = [&](const char* file) {
    json pts = json::array();
    const auto t = load_csv_table(run.require(file, "detector"));
    for (std::size_t i = 0; i < t.rows(); ++i)
      pts.push_back({{"threshold", t.column("threshold")[i]},
                     {"precision", t.column("precision")[i]},
                     {"recall", t.column("recall")[i]}});
    return pts;
  };
  const char* pr_file = c.surrogate == SurrogateKind::Fnn ? "pr_curve.csv" : "pr_curve_baseline.csv";
  r["pr_curve"] = both_classes(ty) ? pr_points(pr_file) : json::array();

  if (c.surrogate == SurrogateKind::Fnn) {
    const auto rows = load_profiles_csv(run.require("test_profiles_labeled.csv", "label"));
    std::vector<SensitivityProfile> p;
    for (const auto& row : rows) p.push_back(row.profile);
    const auto res = pca(feature_matrix(p), 2);
    json pts = json::array();
    for (std::size_t i = 0; i < rows.size(); ++i)
      pts.push_back({{"id", rows[i].id},
                     {"pc1", res.scores(static_cast<Eigen::Index>(i), 0)},
                     {"pc2", res.scores(static_cast<Eigen::Index>(i), 1)},
                     {"is_ood", rows[i].is_ood.value_or(false)}});
    json loadings = json::object();
    for (std::size_t f = 0; f < kProfileFeatureNames.size(); ++f)
      loadings[kProfileFeatureNames[f]] = {res.loadings(static_cast<Eigen::Index>(f), 0),
                                           res.loadings(static_cast<Eigen::Index>(f), 1)};
    r["pca"] = {{"explained_variance_ratio", to_std(res.explained_variance_ratio)},
                {"loadings", loadings},
                {"points", pts}};
  } else {
    const auto tp = load_csv_table(run.require("test_predictions.csv", "train"));
    std::vector<double> m[2], s[2];
    for (std::size_t i = 0; i < ty.size(); ++i) {
      m[ty[i]].push_back(tp.column("prediction")[i]);
      s[ty[i]].push_back(tp.column("stddev")[i]);
    }
    r["gp_boxplots"] = {{"ID", {{"mean", box_json(box_stats(m[0]))}, {"stddev", box_json(box_stats(s[0]))}}},
                        {"OOD", {{"mean", box_json(box_stats(m[1]))}, {"stddev", box_json(box_stats(s[1]))}}}};
  }
  run.emit("report.json", dump(r));

  json t;
  t["stage_seconds"] = run.manifest().stage_seconds;
  t["speedup"] = read_json(run.require("hybrid_timing.json", "hybrid"));
  t["doe"] = read_json(run.require("doe.json", "doe"));
  run.emit("report_timing.json", dump(t), false);
  run.finish();
}

void cmd_run(const PipelineConfig& c, const fs::path& out) {
  cmd_doe(c, out);
  cmd_train(c, out);
  cmd_profile(c, out);
  cmd_label(c, out);
  cmd_detector(c, out);
  cmd_hybrid(c, out);
  cmd_report(c, out);
}

}  // namespace smood
