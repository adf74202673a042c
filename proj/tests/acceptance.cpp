// Acceptance suite: one PASS/FAIL line per criterion. Exit status is non-zero
// when any gating criterion fails; criterion 8 is reported but never gates.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "smood/classification.hpp"
#include "smood/config.hpp"
#include "smood/dataset.hpp"
#include "smood/fnn.hpp"
#include "smood/gp.hpp"
#include "smood/io.hpp"
#include "smood/metrics.hpp"
#include "smood/ood_labeling.hpp"
#include "smood/pipeline.hpp"
#include "smood/random.hpp"
#include "smood/sensitivity.hpp"

using namespace smood;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Published reference inputs and tolerances.
constexpr double kDecrTol = 0.05;     // percentage points
constexpr double kSpeedupRelTol = 0.01;
constexpr double kJacobianRelTol = 1e-4;
constexpr double kKinkDistance = 1e-6;
constexpr double kExactTol = 1e-9;
constexpr double kJvTol = 1e-12;
constexpr double kSaRelTol = 0.05;
constexpr double kGpInterpTol = 1e-6;
constexpr double kAuprTol = 1e-12;
constexpr double kCoverageFloor = 0.95;
constexpr double kRecallFloor = 0.70;
constexpr double kDecrFloor = 10.0;

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome metric_arithmetic() {
  const double d1 = decr_err(0.0319, 0.0169), d2 = decr_err(0.0803, 0.0441);
  const double s1 = speedup_pure(10678.0, 299.26e-3), s2 = speedup_pure(10678.0, 0.81e-3);
  const bool ok = std::abs(d1 - 47.02) <= kDecrTol && std::abs(d2 - 45.08) <= kDecrTol &&
                  std::abs(s1 / 3.57e4 - 1.0) <= kSpeedupRelTol && std::abs(s2 / 1.32e7 - 1.0) <= kSpeedupRelTol;
  return {ok, fmt("decr=%.3f%%,%.3f%% speedup=%.4g,%.4g", d1, d2, s1, s2)};
}

// Smallest distance from x to a ReLU kink, to first order.
double kink_distance(const FnnModel<double>& m, const Eigen::VectorXd& x) {
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd a = x;
  Eigen::MatrixXd da = Eigen::MatrixXd::Identity(x.size(), x.size());  // d a / d x
  for (std::size_t l = 0; l + 1 < m.layers().size(); ++l) {
    const auto& L = m.layers()[l];
    const Eigen::VectorXd z = L.weight * a + L.bias;
    const Eigen::MatrixXd dz = L.weight * da;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double g = dz.row(i).norm();
      if (g > 0.0) best = std::min(best, std::abs(z(i)) / g);
    }
    const Eigen::ArrayXd on = (z.array() > 0.0).cast<double>();
    a = z.cwiseMax(0.0);
    da = on.matrix().asDiagonal() * dz;
  }
  return best;
}

Outcome gradient_check() {
  Rng rng(101);
  const double h = 1e-7;
  int pairs = 0, skipped = 0;
  double worst = 0.0;
  while (pairs < 100) {
    FnnArchitecture arch;
    arch.input_dim = 1 + uniform_index(rng, 8);
    const auto model = init_fnn(arch, rng());
    Eigen::VectorXd x(static_cast<Eigen::Index>(arch.input_dim));
    for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = standard_normal(rng);
    // Stay clear of kinks by more than the step so the difference is one-sided-free.
    if (kink_distance(model, x) < std::max(kKinkDistance, 10.0 * h)) {
      ++skipped;
      continue;
    }
    Eigen::VectorXd fd(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      Eigen::VectorXd a = x, b = x;
      a(j) += h;
      b(j) -= h;
      fd(j) = (predict(model, a) - predict(model, b)) / (2.0 * h);
    }
    const Eigen::VectorXd g = jacobian(model, x);
    worst = std::max(worst, (g - fd).norm() / std::max(g.norm(), 1e-12));
    ++pairs;
  }
  return {worst < kJacobianRelTol, fmt("pairs=%d skipped=%d max_rel_err=%.3g", pairs, skipped, worst)};
}

FnnModel<double> affine(const Eigen::VectorXd& w, double b) {
  return FnnModel<double>({DenseLayer<double>{w.transpose(), Eigen::VectorXd::Constant(1, b)}});
}

Outcome sensitivity_cases() {
  const auto constant = affine(Eigen::VectorXd::Zero(5), 2.0);
  const auto pc = profile(constant, Eigen::VectorXd::Constant(5, 0.1), {0.05, 64, 1});
  const bool zero = pc.sa == 0.0 && pc.sv == 0.0 && pc.ja == 0.0 && pc.jv == 0.0;

  const Eigen::VectorXd w = (Eigen::VectorXd(4) << 0.3, -1.2, 2.0, 0.7).finished();
  const auto pl = profile(affine(w, 0.5), Eigen::VectorXd::Constant(4, -0.2), {0.05, 64, 2});
  const bool linear = std::abs(pl.ja - w.norm()) <= kExactTol && pl.jv < kJvTol;

  const double slope = 1.5, delta = 0.05;
  const auto p1 = profile(affine(Eigen::VectorXd::Constant(1, slope), 0.0), Eigen::VectorXd::Zero(1),
                          {delta, 100000, 3});
  const double expect = std::abs(slope) * delta / 2.0;
  const double rel = std::abs(p1.sa - expect) / expect;
  return {zero && linear && rel < kSaRelTol,
          fmt("constant_zero=%d |JA-|w||=%.2g JV=%.2g SA_rel_err=%.4f", zero, std::abs(pl.ja - w.norm()), pl.jv, rel)};
}

Outcome gp_interpolation() {
  const auto space = DesignSpace::unit(3);
  const Eigen::MatrixXd X = lhs_sample(space, 40, 5);
  Eigen::VectorXd y(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) y(i) = std::sin(3.0 * X(i, 0)) + X(i, 1) * X(i, 2);
  const auto m = gp_condition({0.5, 1.0, 0.0}, X, y);
  double worst = 0.0;
  const auto fit = gp_predict_rows(m, X);
  for (Eigen::Index i = 0; i < X.rows(); ++i) worst = std::max(worst, std::abs(fit[static_cast<std::size_t>(i)].mean - y(i)));
  double min_var = std::numeric_limits<double>::infinity();
  for (const auto& p : gp_predict_rows(m, lhs_sample(space, 200, 6))) min_var = std::min(min_var, p.stddev * p.stddev);
  return {worst < kGpInterpTol && min_var >= 0.0, fmt("max_train_residual=%.3g min_probe_var=%.3g", worst, min_var)};
}

Outcome aupr_equivalence() {
  Rng rng(55);
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t n = 2 + uniform_index(rng, 19);
    Eigen::VectorXd s(static_cast<Eigen::Index>(n));
    std::vector<bool> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s(static_cast<Eigen::Index>(i)) = static_cast<double>(uniform_index(rng, 8));
      y[i] = uniform01(rng) < 0.5;
    }
    y[0] = true;
    y[n - 1] = false;
    // Exhaustive thresholds: every candidate cut, precision taken at each recall step.
    std::vector<double> cuts(s.data(), s.data() + s.size());
    std::sort(cuts.begin(), cuts.end(), std::greater<>());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    const double positives = static_cast<double>(std::count(y.begin(), y.end(), true));
    double area = 0.0, prev_recall = 0.0;
    for (double t : cuts) {
      double tp = 0.0, pred = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (s(static_cast<Eigen::Index>(i)) >= t) {
          pred += 1.0;
          tp += y[i] ? 1.0 : 0.0;
        }
      area += (tp / positives - prev_recall) * (tp / pred);
      prev_recall = tp / positives;
    }
    worst = std::max(worst, std::abs(pr_curve(s, y).aupr - area));
  }
  return {worst <= kAuprTol, fmt("instances=50 max_abs_diff=%.3g", worst)};
}

Outcome bootstrap_coverage() {
  const double truth = 1.0 + 0.1 * 2.3263478740408408;  // Normal(1, 0.1) 99th percentile
  int covered = 0;
  for (int r = 0; r < 200; ++r) {
    Rng rng(child_seed(606, static_cast<std::uint64_t>(r)));
    Eigen::VectorXd e(500);
    for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = 1.0 + 0.1 * standard_normal(rng);
    const auto ci = bootstrap_ci(e, 0.99, 2000, child_seed(607, static_cast<std::uint64_t>(r)));
    covered += ci.lower <= truth && truth <= ci.upper;
  }
  const double rate = covered / 200.0;
  return {rate >= kCoverageFloor, fmt("covered=%d/200 rate=%.3f", covered, rate)};
}

Outcome lhs_strata() {
  const auto space = DesignSpace::box(15, -1.0, 3.0);
  bool ok = true;
  for (std::size_t n : {10u, 100u, 2259u}) {
    const Eigen::MatrixXd X = lhs_sample(space, n, 1000 + n);
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      std::vector<int> hits(n, 0);
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const auto b = static_cast<std::size_t>(std::floor((X(i, j) + 1.0) / 4.0 * static_cast<double>(n)));
        if (b < n) ++hits[b];
      }
      ok = ok && std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; });
    }
  }
  return {ok, "n=10,100,2259 dims=15"};
}

struct EndToEnd {
  std::string error;
  nlohmann::json report;
  std::map<std::string, std::string> digests_a, digests_b;
  double seconds = 0.0;
};

EndToEnd run_pipeline(const fs::path& work) {
  EndToEnd r;
  try {
    const auto cfg = load_config(SMOOD_ACCEPTANCE_CONFIG);
    const auto a = work / "run_a", b = work / "run_b";
    fs::remove_all(a);
    fs::remove_all(b);
    const auto t0 = std::chrono::steady_clock::now();
    cmd_run(cfg, a);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    cmd_run(cfg, b);
    r.report = nlohmann::json::parse(read_file(a / "report.json"));
    r.digests_a = RunManifest::load(a).deterministic_digests();
    r.digests_b = RunManifest::load(b).deterministic_digests();
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "smood_acceptance";
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--work") work = argv[i + 1];
  fs::create_directories(work);

  int failures = 0;
  auto report = [&](int id, const char* name, const Outcome& o, bool gating = true) {
    std::printf("[%s] criterion %d %s: %s%s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(),
                gating ? "" : " (diagnostic)");
    std::fflush(stdout);
    if (!o.pass && gating) ++failures;
  };

  report(1, "metric arithmetic", metric_arithmetic());
  report(2, "gradient correctness", gradient_check());
  report(3, "sensitivity analytic cases", sensitivity_cases());
  report(4, "gp interpolation", gp_interpolation());
  report(5, "aupr oracle equivalence", aupr_equivalence());
  report(6, "bootstrap coverage", bootstrap_coverage());

  const auto e2e = run_pipeline(work);
  if (!e2e.error.empty()) {
    report(7, "end-to-end detection and hybrid", {false, "pipeline error: " + e2e.error});
    report(8, "baseline comparison", {false, "pipeline error"}, false);
    report(9, "determinism", {false, "pipeline error"});
  } else {
    const auto& t2 = e2e.report["detection"];
    const auto& t3 = e2e.report["hybrid"]["smood"];
    const double recall = t2["smood"]["OOD"]["recall"];
    const double pure = t3["nrmse_pure"], hybrid = t3["nrmse_hybrid"], decr = t3["decr_err_percent"];
    report(7, "end-to-end detection and hybrid",
           {recall >= kRecallFloor && hybrid < pure && decr > kDecrFloor,
            fmt("ood_recall=%.3f nrmse_pure=%.4f nrmse_hybrid=%.4f decr_err=%.2f%% run=%.0fs", recall, pure, hybrid,
                decr, e2e.seconds)});

    const double ma_smood = t2["smood"]["MA"]["recall"], ma_base = t2["baseline"]["MA"]["recall"];
    const std::uint64_t seed = load_config(SMOOD_ACCEPTANCE_CONFIG).seed;
    report(8, "baseline comparison",
           {ma_base <= ma_smood,
            fmt("seed=%llu baseline_MA_recall=%.3f smood_MA_recall=%.3f", static_cast<unsigned long long>(seed),
                ma_base, ma_smood)},
           false);

    std::size_t differing = 0;
    for (const auto& [file, digest] : e2e.digests_a) {
      const auto it = e2e.digests_b.find(file);
      differing += it == e2e.digests_b.end() || it->second != digest;
    }
    const bool same = differing == 0 && e2e.digests_a.size() == e2e.digests_b.size() && !e2e.digests_a.empty();
    report(9, "determinism",
           {same, fmt("artifacts=%zu differing=%zu", e2e.digests_a.size(), differing)});
  }
  report(10, "lhs stratification", lhs_strata());

  std::printf("%s: %d gating failure(s)\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
