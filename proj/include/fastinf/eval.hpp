#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "fastinf/engine.hpp"
#include "fastinf/model.hpp"
#include "fastinf/stats.hpp"

namespace fastinf {

// ---------------------------------------------------------------- recall@m

inline double recall_at_m(const std::unordered_set<int>& retrieved, const std::unordered_set<int>& ground_truth_top_m) {
  if (ground_truth_top_m.empty()) throw ConfigError("recall_at_m: ground truth must be non-empty");
  std::size_t hit = 0;
  for (int id : ground_truth_top_m) hit += retrieved.count(id);
  return static_cast<double>(hit) / static_cast<double>(ground_truth_top_m.size());
}

struct RecallReport {
  int k = 0;
  int m = 0;
  InfluenceMode mode = InfluenceMode::Absolute;
  std::string split;  // all | correct | incorrect
  std::vector<double> recalls;
  double mean_recall = 0.0;
  double std_recall = 0.0;
  double random_baseline = 0.0;  // k/N
};

struct RecallExperimentConfig {
  std::vector<int> ks;
  std::vector<int> ms;
  // ground truth: full-scan exact oracle when P permits, else converged LiSSA
  LissaConfig fallback_lissa{.depth = 2000, .batch = 0 /* set to N/10 */, .repetitions = 4};
  double damping = 0.01;
  IndexBackend knn_backend = IndexBackend::Exact;
};

inline std::vector<RecallReport> recall_experiment(const ModelSpec& spec, const ParamVector& params,
                                                   const Dataset& train, std::span<const DataPoint> test_points,
                                                   const RecallExperimentConfig& cfg) {
  if (cfg.ks.empty() || cfg.ms.empty()) throw ConfigError("recall experiment needs ks and ms");
  const bool exact_ok = params.values.size() <= 2000;

  InfluenceQueryConfig gt;
  gt.use_knn = false;
  gt.exact_ihvp = exact_ok;
  gt.lissa = cfg.fallback_lissa;
  gt.lissa.damping = cfg.damping;
  if (gt.lissa.batch <= 0) gt.lissa.batch = std::max(1, train.size() / 10);

  const FeatureIndex index = build_feature_index(spec, params, train, cfg.knn_backend);
  const InfluenceMode modes[] = {InfluenceMode::Harmful, InfluenceMode::Helpful, InfluenceMode::Absolute};

  // per test point: ground-truth ranking (full scan) and retrieved kNN ids per k
  struct PerPoint {
    bool correct = false;
    std::vector<InfluenceRecord> full;                 // unsorted by mode; re-sorted below
    std::vector<std::unordered_set<int>> retrieved;    // per k
  };
  std::vector<PerPoint> pts;
  for (const auto& z : test_points) {
    PerPoint pp;
    pp.correct = predict(spec, params, z) == z.y;
    pp.full = influence_query(spec, params, train, z, gt);
    const Eigen::VectorXd q = features(spec, params, z);
    for (int k : cfg.ks) {
      const NeighborSet nn = index.query(q, std::min(k, train.size()));
      std::unordered_set<int> ids;
      for (const auto& nb : nn) ids.insert(nb.id);
      pp.retrieved.push_back(std::move(ids));
    }
    pts.push_back(std::move(pp));
  }

  std::vector<RecallReport> reports;
  for (std::size_t ki = 0; ki < cfg.ks.size(); ++ki)
    for (int m : cfg.ms)
      for (InfluenceMode mode : modes)
        for (const char* split : {"all", "correct", "incorrect"}) {
          RecallReport rep;
          rep.k = cfg.ks[ki];
          rep.m = m;
          rep.mode = mode;
          rep.split = split;
          rep.random_baseline = static_cast<double>(std::min(rep.k, train.size())) / train.size();
          for (const auto& pp : pts) {
            if (std::string(split) == "correct" && !pp.correct) continue;
            if (std::string(split) == "incorrect" && pp.correct) continue;
            auto top = top_influential(pp.full, m, mode);
            std::unordered_set<int> truth;
            for (const auto& r : top) truth.insert(r.train_id);
            rep.recalls.push_back(recall_at_m(pp.retrieved[ki], truth));
          }
          if (rep.recalls.empty()) continue;
          rep.mean_recall = mean(rep.recalls);
          rep.std_recall = stddev(rep.recalls);
          reports.push_back(std::move(rep));
        }
  return reports;
}

inline void write_recall_csv(const std::vector<RecallReport>& reports, std::ostream& out) {
  out << "k,m,mode,split,n,mean_recall,std_recall,random_baseline\n";
  for (const auto& r : reports)
    out << r.k << ',' << r.m << ',' << to_string(r.mode) << ',' << r.split << ',' << r.recalls.size() << ','
        << r.mean_recall << ',' << r.std_recall << ',' << r.random_baseline << '\n';
}

// ------------------------------------------------------------ LOO retraining

struct RetrainReport {
  int test_id = 0;
  std::vector<int> removed_ids;
  double loss_before = 0.0;
  double loss_after = 0.0;
  double delta_loss = 0.0;
  std::uint64_t seed = 0;
};

inline ParamVector train_model_checked(const ModelSpec& spec, const Dataset& ds, const TrainConfig& cfg) {
  return train(spec, ds.role() == DatasetRole::Train ? ds : ds.with_role(DatasetRole::Train), cfg).params;
}

// Retrains from the same initialization with and without remove_ids and
// reports the change in loss at z_test.
inline RetrainReport loo_retrain(const ModelSpec& spec, const Dataset& train, const std::vector<int>& remove_ids,
                                 const DataPoint& z_test, const TrainConfig& trainer) {
  std::unordered_set<int> ids(remove_ids.begin(), remove_ids.end());
  for (int id : remove_ids) train.by_id(id);  // validates membership
  RetrainReport rep;
  rep.test_id = z_test.id;
  rep.removed_ids = remove_ids;
  rep.seed = trainer.seed;
  const ParamVector before = train_model_checked(spec, train, trainer);
  rep.loss_before = loss(spec, before, z_test);
  if (ids.empty()) {
    rep.loss_after = rep.loss_before;
  } else {
    const ParamVector after = train_model_checked(spec, train.without(ids), trainer);
    rep.loss_after = loss(spec, after, z_test);
  }
  rep.delta_loss = rep.loss_after - rep.loss_before;
  return rep;
}

// ----------------------------------------------------------------- benchmark

enum class PipelineVariant { FullScanConverged, KnnConverged, KnnFast, KnnFastParallel };

inline const char* to_string(PipelineVariant v) {
  switch (v) {
    case PipelineVariant::FullScanConverged: return "full-scan+converged";
    case PipelineVariant::KnnConverged: return "knn+converged";
    case PipelineVariant::KnnFast: return "knn+fast";
    case PipelineVariant::KnnFastParallel: return "knn+fast-parallel";
  }
  return "?";
}

struct BenchmarkConfig {
  int knn_k = 0;  // 0 -> max(50, N/10)
  LissaConfig converged{.depth = 2000, .batch = 8, .repetitions = 4};
  LissaConfig fast{.depth = 1000, .batch = 1, .repetitions = 4};
  int parallel_workers = 4;
  int repetitions = 1;  // timing repeats per test point
};

struct TimingRow {
  PipelineVariant variant;
  double mean_s = 0.0;
  double std_s = 0.0;
  double speedup = 1.0;  // vs the full-scan baseline
};

struct TimingReport {
  std::vector<TimingRow> rows;
};

inline TimingReport benchmark(const ModelSpec& spec, const ParamVector& params, const Dataset& train,
                              std::span<const DataPoint> test_points, const BenchmarkConfig& cfg) {
  // one shared prebuilt index; its build cost is amortized setup, as in a
  // cached-features deployment
  const FeatureIndex index = build_feature_index(spec, params, train);

  auto make_query = [&](PipelineVariant v) {
    InfluenceQueryConfig q;
    q.m = 1;
    q.k = cfg.knn_k;
    switch (v) {
      case PipelineVariant::FullScanConverged:
        q.use_knn = false;
        q.lissa = cfg.converged;
        break;
      case PipelineVariant::KnnConverged:
        q.lissa = cfg.converged;
        break;
      case PipelineVariant::KnnFast:
        q.lissa = cfg.fast;
        break;
      case PipelineVariant::KnnFastParallel:
        q.lissa = cfg.fast;
        q.workers = cfg.parallel_workers;
        break;
    }
    return q;
  };

  TimingReport report;
  const PipelineVariant variants[] = {PipelineVariant::FullScanConverged, PipelineVariant::KnnConverged,
                                      PipelineVariant::KnnFast, PipelineVariant::KnnFastParallel};
  double baseline = 0.0;
  for (PipelineVariant v : variants) {
    const InfluenceQueryConfig q = make_query(v);
    std::vector<double> times;
    for (int rep = 0; rep < std::max(1, cfg.repetitions); ++rep)
      for (const auto& z : test_points) {
        const auto t0 = std::chrono::steady_clock::now();
        (void)influence_query(spec, params, train, z, q, nullptr, q.use_knn ? &index : nullptr);
        times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      }
    TimingRow row;
    row.variant = v;
    row.mean_s = mean(times);
    row.std_s = stddev(times);
    if (v == PipelineVariant::FullScanConverged) baseline = row.mean_s;
    row.speedup = baseline > 0 && row.mean_s > 0 ? baseline / row.mean_s : 1.0;
    report.rows.push_back(row);
  }
  return report;
}

inline void write_benchmark_csv(const TimingReport& report, std::ostream& out) {
  out << "variant,mean_s,std_s,speedup\n";
  for (const auto& r : report.rows)
    out << to_string(r.variant) << ',' << r.mean_s << ',' << r.std_s << ',' << r.speedup << '\n';
}

}  // namespace fastinf
