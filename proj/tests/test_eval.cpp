#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "fastinf/datagen.hpp"
#include "fastinf/engine.hpp"
#include "fastinf/eval.hpp"
#include "fastinf/stats.hpp"

using namespace fastinf;

namespace {

ModelSpec binary_spec(int d, double l2 = 0.005) {
  ModelSpec s;
  s.d = d;
  s.num_classes = 2;
  s.l2 = l2;
  return s;
}

// brute-force Kendall tau-b over all pairs, written independently
double kendall_brute(const std::vector<double>& a, const std::vector<double>& b) {
  const int n = static_cast<int>(a.size());
  double conc = 0, disc = 0, ta = 0, tb = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double da = a[i] - a[j], db = b[i] - b[j];
      if (da == 0 && db == 0) continue;
      if (da == 0) { ++ta; continue; }
      if (db == 0) { ++tb; continue; }
      (da * db > 0 ? conc : disc) += 1;
    }
  return (conc - disc) / std::sqrt((conc + disc + ta) * (conc + disc + tb));
}

}  // namespace

TEST_CASE("recall@m counts retrieved ground-truth members") {
  CHECK(recall_at_m({1, 2, 3, 4}, {2, 4, 9, 12}) == doctest::Approx(0.5));
  CHECK(recall_at_m({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0));
  CHECK(recall_at_m({7, 8}, {1, 2}) == doctest::Approx(0.0));
  CHECK(recall_at_m({}, {1}) == doctest::Approx(0.0));
  CHECK_THROWS_AS(recall_at_m({1}, {}), ConfigError);
}

TEST_CASE("correlations on hand-checked sequences") {
  const std::vector<double> x = {1, 2, 3, 4};
  CHECK(pearson(x, {2, 4, 6, 8}) == doctest::Approx(1.0));
  CHECK(pearson(x, {8, 6, 4, 2}) == doctest::Approx(-1.0));
  CHECK(spearman(x, {1, 10, 100, 1000}) == doctest::Approx(1.0));  // monotone, not linear
  CHECK(kendall(x, {1, 3, 2, 4}) == doctest::Approx(2.0 / 3.0));   // one discordant pair of six

  auto rep = correlate(x, {2, 4, 6, 8});
  CHECK(rep.n == 4);
  CHECK(rep.pearson == doctest::Approx(1.0));
  CHECK(rep.spearman == doctest::Approx(1.0));
  CHECK(rep.kendall == doctest::Approx(1.0));

  CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), DegenerateInputError);  // zero variance
  CHECK_THROWS_AS(pearson({1}, {2}), ConfigError);                       // n < 2
  CHECK_THROWS_AS(pearson({1, 2}, {1, 2, 3}), ConfigError);              // length mismatch
}

TEST_CASE("spearman averages tied ranks") {
  // ties in both sequences; reference values computed by hand from average ranks
  const std::vector<double> a = {1, 2, 2, 3};
  const std::vector<double> b = {10, 20, 20, 30};
  CHECK(spearman(a, b) == doctest::Approx(1.0));
  const std::vector<double> c = {3, 2, 2, 1};
  CHECK(spearman(a, c) == doctest::Approx(-1.0));
}

TEST_CASE("kendall tau-b matches a brute-force pair count on random data with ties") {
  auto eng = make_engine(17);
  std::uniform_int_distribution<int> small(0, 4);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + static_cast<int>(eng() % 6);
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = small(eng);
      b[i] = small(eng);
    }
    // skip degenerate draws where one side is constant
    if (std::equal(a.begin() + 1, a.end(), a.begin()) || std::equal(b.begin() + 1, b.end(), b.begin())) continue;
    CHECK(kendall(a, b) == doctest::Approx(kendall_brute(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("leave-out retraining: empty removal is a strict no-op") {
  Dataset ds = make_gaussians(30, 3, 2, 1);
  auto spec = binary_spec(3);
  auto rep = loo_retrain(spec, ds, {}, ds[0], {.steps = 500, .lr = 0.5, .seed = 0});
  CHECK(rep.delta_loss == 0.0);
  CHECK(rep.loss_after == rep.loss_before);
}

TEST_CASE("removing a harmful point lowers the test loss; removing a helpful one raises it") {
  auto fx = make_duplicate_fixture(5, 24, 4);
  auto spec = binary_spec(4, 0.05);
  const TrainConfig trainer{.steps = 6000, .lr = 0.5, .seed = 0, .stop_grad_norm = 1e-10};
  auto params = train_model_checked(spec, fx.train, trainer);

  InfluenceQueryConfig cfg;
  cfg.use_knn = false;
  cfg.exact_ihvp = true;
  cfg.lissa.damping = 0.01;

  // fx.test[1] is a relabeled copy of the duplicated train point, so that
  // train point is harmful for it and helpful for fx.test[0]
  auto harmful = top_influential(influence_query(spec, params, fx.train, fx.test[1], cfg), 1, InfluenceMode::Harmful);
  REQUIRE(harmful[0].value > 0.0);
  auto rep_h = loo_retrain(spec, fx.train, {harmful[0].train_id}, fx.test[1], trainer);
  CHECK(rep_h.delta_loss < 0.0);

  auto helpful = top_influential(influence_query(spec, params, fx.train, fx.test[0], cfg), 1, InfluenceMode::Helpful);
  REQUIRE(helpful[0].value < 0.0);
  auto rep_l = loo_retrain(spec, fx.train, {helpful[0].train_id}, fx.test[0], trainer);
  CHECK(rep_l.delta_loss > 0.0);

  CHECK_THROWS(loo_retrain(spec, fx.train, {9999}, fx.test[0], trainer));  // unknown id
}

TEST_CASE("recall experiment: recall grows with k, hits 1 at k = N, baseline is k/N") {
  Dataset ds = make_gaussians(100, 4, 2, 3);
  auto spec = binary_spec(4, 0.02);
  auto params = train_model_checked(spec, ds, {.steps = 3000, .lr = 0.5, .seed = 0});
  Dataset test = make_gaussians(12, 4, 2, 30, 2.0, 1.0, DatasetRole::Test);

  RecallExperimentConfig cfg;
  cfg.ks = {10, 40, 100};
  cfg.ms = {5};
  auto reports = recall_experiment(spec, params, ds, std::span<const DataPoint>(test.points()), cfg);
  REQUIRE(!reports.empty());

  auto mean_for = [&](int k, InfluenceMode mode) {
    for (const auto& r : reports)
      if (r.k == k && r.mode == mode && r.split == "all") return r.mean_recall;
    REQUIRE(false);
    return 0.0;
  };
  for (InfluenceMode mode : {InfluenceMode::Harmful, InfluenceMode::Helpful, InfluenceMode::Absolute}) {
    CHECK(mean_for(10, mode) <= mean_for(40, mode) + 1e-12);
    CHECK(mean_for(100, mode) == doctest::Approx(1.0));  // k = N retrieves everything
  }
  for (const auto& r : reports) {
    CHECK(r.random_baseline == doctest::Approx(static_cast<double>(std::min(r.k, 100)) / 100.0));
    CHECK(r.mean_recall >= 0.0);
    CHECK(r.mean_recall <= 1.0);
    CHECK(static_cast<int>(r.recalls.size()) <= 12);
  }

  std::ostringstream csv;
  write_recall_csv(reports, csv);
  CHECK(csv.str().rfind("k,m,mode,split,n,mean_recall,std_recall,random_baseline\n", 0) == 0);

  RecallExperimentConfig bad;
  CHECK_THROWS_AS(recall_experiment(spec, params, ds, std::span<const DataPoint>(test.points()), bad), ConfigError);
}

TEST_CASE("benchmark produces four variants with a full-scan baseline") {
  Dataset ds = make_gaussians(400, 5, 2, 9);
  auto spec = binary_spec(5, 0.02);
  auto params = train_model_checked(spec, ds, {.steps = 1500, .lr = 0.5, .seed = 0});
  Dataset test = make_gaussians(3, 5, 2, 77, 2.0, 1.0, DatasetRole::Test);

  BenchmarkConfig cfg;
  cfg.converged = {.depth = 400, .batch = 8, .repetitions = 2, .tol = 0.0};
  cfg.fast = {.depth = 50, .batch = 1, .repetitions = 1, .tol = 0.0};
  auto report = benchmark(spec, params, ds, std::span<const DataPoint>(test.points()), cfg);
  REQUIRE(report.rows.size() == 4);
  CHECK(report.rows[0].variant == PipelineVariant::FullScanConverged);
  CHECK(report.rows[0].speedup == doctest::Approx(1.0));
  for (const auto& row : report.rows) {
    CHECK(row.mean_s > 0.0);
    CHECK(row.speedup > 0.0);
  }
  // restricting candidates and truncating the recursion must not be slower
  // than the converged full scan by more than noise
  CHECK(report.rows[2].mean_s < report.rows[0].mean_s);

  std::ostringstream csv;
  write_benchmark_csv(report, csv);
  CHECK(csv.str().rfind("variant,mean_s,std_s,speedup\n", 0) == 0);
  CHECK(csv.str().find("full-scan+converged") != std::string::npos);
  CHECK(csv.str().find("knn+fast-parallel") != std::string::npos);
}
