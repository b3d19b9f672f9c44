#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "fastinf/engine.hpp"
#include "fastinf/stats.hpp"

namespace fastinf {

enum class SelectionRule { Helpful, Harmful, Random, ZTest };

inline const char* to_string(SelectionRule s) {
  switch (s) {
    case SelectionRule::Helpful: return "helpful";
    case SelectionRule::Harmful: return "harmful";
    case SelectionRule::Random: return "random";
    case SelectionRule::ZTest: return "z-test";
  }
  return "?";
}

inline SelectionRule selection_from_string(const std::string& s) {
  if (s == "helpful") return SelectionRule::Helpful;
  if (s == "harmful") return SelectionRule::Harmful;
  if (s == "random") return SelectionRule::Random;
  if (s == "z-test") return SelectionRule::ZTest;
  throw ConfigError("unknown selection rule: " + s);
}

// ------------------------------------------------------------ correction loop

struct CorrectionConfig {
  int iterations = 10;
  int anchors_per_iter = 10;
  int finetune_count = 10;
  double lr = 1e-4;
  SelectionRule selection = SelectionRule::Helpful;
  bool use_knn = true;
  int knn_k = 0;  // 0 -> default
  LissaConfig lissa;
  bool exact_ihvp = false;
  int workers = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (iterations < 1 || anchors_per_iter < 1 || finetune_count < 1)
      throw ConfigError("correction: all counts must be positive");
    if (lr <= 0) throw ConfigError("correction: lr must be positive");
  }
};

struct CorrectionIterationRecord {
  int iteration = 0;  // 0 = pre-loop measurement
  std::vector<int> anchor_ids;
  std::vector<int> selected_ids;
  double validation_loss = 0.0;
  double validation_accuracy = 0.0;
  double eval_loss = 0.0;
  double eval_accuracy = 0.0;
  Eigen::VectorXd query_grad;     // mean anchor gradient used as s_test query
  std::uint64_t params_digest = 0;  // digest before the fine-tune step
};

struct CorrectionTrace {
  std::vector<CorrectionIterationRecord> iterations;  // length = cfg.iterations + 1
  ParamVector final_params;
};

namespace detail {

inline std::vector<int> sample_ids(int n, int count, std::mt19937_64& eng) {
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  std::shuffle(ids.begin(), ids.end(), eng);
  ids.resize(std::min(count, n));
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace detail

// Iterative error correction (anchor batch -> influence query -> fine-tune).
// One s_test per anchor batch: the query vector is the mean anchor gradient.
inline CorrectionTrace correction_loop(const ModelSpec& spec, const ParamVector& start, const Dataset& source,
                                       const Dataset& validation, const Dataset& evaldata,
                                       const CorrectionConfig& cfg) {
  cfg.validate();
  ParamVector params = start;
  CorrectionTrace trace;

  auto measure = [&](int iter) {
    CorrectionIterationRecord rec;
    rec.iteration = iter;
    rec.validation_loss = mean_loss(spec, params, validation);
    rec.validation_accuracy = accuracy(spec, params, validation);
    rec.eval_loss = mean_loss(spec, params, evaldata);
    rec.eval_accuracy = accuracy(spec, params, evaldata);
    return rec;
  };
  trace.iterations.push_back(measure(0));

  for (int it = 1; it <= cfg.iterations; ++it) {
    auto eng = make_engine(derive_seed(cfg.seed, "correction-iter-" + std::to_string(it)));
    CorrectionIterationRecord rec = measure(it);
    rec.anchor_ids = detail::sample_ids(validation.size(), cfg.anchors_per_iter, eng);

    std::vector<DataPoint> anchors;
    for (int id : rec.anchor_ids) anchors.push_back(validation.by_id(id));
    rec.query_grad = grad(spec, params, std::span<const DataPoint>(anchors));
    rec.params_digest = params_digest(params);

    std::vector<DataPoint> selected;
    if (cfg.selection == SelectionRule::ZTest) {
      selected = anchors;
      for (int id : rec.anchor_ids) rec.selected_ids.push_back(id);
    } else if (cfg.selection == SelectionRule::Random) {
      rec.selected_ids = detail::sample_ids(source.size(), cfg.finetune_count, eng);
      for (int id : rec.selected_ids) selected.push_back(source.by_id(id));
    } else {
      // candidates: kNN union over anchors at the current params, else all
      std::vector<int> candidates;
      if (cfg.use_knn) {
        const FeatureIndex index = build_feature_index(spec, params, source);
        const int k = cfg.knn_k > 0 ? cfg.knn_k : default_knn_k(source.size());
        std::set<int> uni;
        for (const auto& a : anchors)
          for (const auto& nb : index.query(features(spec, params, a), std::min(k, source.size()))) uni.insert(nb.id);
        candidates.assign(uni.begin(), uni.end());
      } else {
        for (const auto& p : source.points()) candidates.push_back(p.id);
      }

      Eigen::VectorXd s_test;
      if (cfg.exact_ihvp)
        s_test = ihvp_exact(spec, params, source, rec.query_grad, cfg.lissa.damping, cfg.lissa.include_l2);
      else
        s_test = estimate_ihvp(spec, params, source, rec.query_grad, cfg.lissa, cfg.workers).values;

      std::vector<InfluenceRecord> recs;
      for (int id : candidates)
        recs.push_back({id, -1, influence_one(s_test, grad(spec, params, source.by_id(id))), -1, 0});
      const InfluenceMode mode =
          cfg.selection == SelectionRule::Helpful ? InfluenceMode::Helpful : InfluenceMode::Harmful;
      detail::sort_records(recs, mode);
      for (const auto& r : recs) {
        if (static_cast<int>(selected.size()) >= cfg.finetune_count) break;
        if (cfg.selection == SelectionRule::Helpful && r.value >= 0) break;
        if (cfg.selection == SelectionRule::Harmful && r.value <= 0) break;
        rec.selected_ids.push_back(r.train_id);
        selected.push_back(source.by_id(r.train_id));
      }
      if (selected.empty())
        throw SelectionExhaustedError(std::string("no ") + to_string(cfg.selection) + " candidates in iteration " +
                                      std::to_string(it));
    }

    params = finetune(spec, params, std::span<const DataPoint>(selected), cfg.lr, 1);

    // metrics recorded after the step
    CorrectionIterationRecord after = measure(it);
    rec.validation_loss = after.validation_loss;
    rec.validation_accuracy = after.validation_accuracy;
    rec.eval_loss = after.eval_loss;
    rec.eval_accuracy = after.eval_accuracy;
    trace.iterations.push_back(std::move(rec));
  }
  trace.final_params = std::move(params);
  return trace;
}

inline void write_correction_csv(const CorrectionTrace& trace, std::ostream& out) {
  out << "iteration,validation_loss,validation_accuracy,eval_loss,eval_accuracy,anchor_ids,selected_ids\n";
  for (const auto& r : trace.iterations) {
    out << r.iteration << ',' << r.validation_loss << ',' << r.validation_accuracy << ',' << r.eval_loss << ','
        << r.eval_accuracy << ',';
    for (std::size_t i = 0; i < r.anchor_ids.size(); ++i) out << (i ? ";" : "") << r.anchor_ids[i];
    out << ',';
    for (std::size_t i = 0; i < r.selected_ids.size(); ++i) out << (i ? ";" : "") << r.selected_ids[i];
    out << '\n';
  }
}

// ------------------------------------------------------------- simulatability

struct SimulatabilityCell {
  std::string selection;
  double lr = 0.0;
  int finetune_id = 0;
  double loss_before = 0.0;  // ell
  double loss_after = 0.0;   // ell'
};

struct SimulatabilityReport {
  int test_id = 0;
  bool task_prediction_correct = false;
  int task_prediction = 0;
  double base_loss = 0.0;  // ell
  std::vector<SimulatabilityCell> cells;
};

struct SimulatabilityConfig {
  std::vector<double> lrs;
  int repeats = 10;  // distinct fine-tuning points per selection
  TrainConfig simulator_trainer;
  bool exact_ihvp = true;
  LissaConfig lissa;
  std::uint64_t seed = 0;
};

namespace detail {

// cross-entropy of the model's class distribution against a fixed target class
inline double ce_against(const ModelSpec& spec, const ParamVector& params, const DataPoint& z, int target) {
  const Eigen::VectorXd p = class_probs(spec, params, z);
  return -std::log(std::max(p[target], 1e-300));
}

}  // namespace detail

// Trains a simulator on the task model's predictions, then measures how much
// one fine-tuning step on influential points (true labels) improves the
// simulator's fit to the task model's prediction at z_test.
inline SimulatabilityReport simulatability_eval(const ModelSpec& spec_task, const ParamVector& params_task,
                                                const Dataset& train_set, const DataPoint& z_test,
                                                const SimulatabilityConfig& cfg) {
  if (cfg.lrs.empty() || cfg.repeats < 1) throw ConfigError("simulatability: need lrs and repeats >= 1");

  // simulator: same architecture, trained on {x_i, task prediction}
  std::vector<DataPoint> sim_points;
  for (const auto& p : train_set.points()) {
    DataPoint q = p;
    q.y = predict(spec_task, params_task, p);
    sim_points.push_back(std::move(q));
  }
  const Dataset sim_train(std::move(sim_points), train_set.dim(), train_set.num_classes(), DatasetRole::Train);
  const ParamVector sim_params = train(spec_task, sim_train, cfg.simulator_trainer).params;

  SimulatabilityReport rep;
  rep.test_id = z_test.id;
  rep.task_prediction = predict(spec_task, params_task, z_test);
  rep.task_prediction_correct = rep.task_prediction == z_test.y;
  rep.base_loss = detail::ce_against(spec_task, sim_params, z_test, rep.task_prediction);

  // influence ranking w.r.t. the task model
  InfluenceQueryConfig q;
  q.use_knn = false;
  q.exact_ihvp = cfg.exact_ihvp;
  q.lissa = cfg.lissa;
  const auto records = influence_query(spec_task, params_task, train_set, z_test, q);

  std::map<std::string, std::vector<int>> selections;
  {
    auto helpful = top_influential(records, cfg.repeats, InfluenceMode::Helpful);
    auto harmful = top_influential(records, cfg.repeats, InfluenceMode::Harmful);
    for (const auto& r : helpful) selections["most-helpful"].push_back(r.train_id);
    for (const auto& r : harmful) selections["most-harmful"].push_back(r.train_id);
    auto eng = make_engine(derive_seed(cfg.seed, "simulatability-random"));
    for (int c = 0; c < train_set.num_classes(); ++c) {
      std::vector<int> of_class;
      for (const auto& p : train_set.points())
        if (p.y == c) of_class.push_back(p.id);
      std::shuffle(of_class.begin(), of_class.end(), eng);
      of_class.resize(std::min<std::size_t>(of_class.size(), cfg.repeats));
      std::sort(of_class.begin(), of_class.end());
      selections["random-class-" + std::to_string(c)] = std::move(of_class);
    }
  }

  for (const auto& [name, ids] : selections)
    for (double lr : cfg.lrs)
      for (int id : ids) {
        // fine-tune on the point with its TRUE label
        const DataPoint& z = train_set.by_id(id);
        const ParamVector tuned = finetune(spec_task, sim_params, std::span<const DataPoint>(&z, 1), lr, 1);
        SimulatabilityCell cell;
        cell.selection = name;
        cell.lr = lr;
        cell.finetune_id = id;
        cell.loss_before = rep.base_loss;
        cell.loss_after = detail::ce_against(spec_task, tuned, z_test, rep.task_prediction);
        rep.cells.push_back(std::move(cell));
      }
  return rep;
}

inline void write_simulatability_csv(const std::vector<SimulatabilityReport>& reports, std::ostream& out) {
  out << "test_id,correct,selection,lr,finetune_id,loss_before,loss_after\n";
  for (const auto& rep : reports)
    for (const auto& c : rep.cells)
      out << rep.test_id << ',' << rep.task_prediction_correct << ',' << c.selection << ',' << c.lr << ','
          << c.finetune_id << ',' << c.loss_before << ',' << c.loss_after << '\n';
}

// ------------------------------------------------------------- graph export

struct SliceStats {
  std::string slice;
  double mean_abs_helpful = 0.0;  // mean |I| over negative edges
  double mean_abs_harmful = 0.0;  // mean |I| over positive edges
  long helpful_edges = 0;
  long harmful_edges = 0;
};

struct SlicePairCorrelation {
  std::string slice_a, slice_b;
  double pearson = 0.0;
  long shared_train_points = 0;
};

struct InfluenceGraph {
  nlohmann::ordered_json document;
  std::vector<SliceStats> stats;
  std::vector<SlicePairCorrelation> correlations;
};

// Bipartite graph of signed influences plus per-slice statistics. Slice maps
// assign a tag to every train/test id appearing in the records.
inline InfluenceGraph export_influence_graph(const std::vector<InfluenceRecord>& records,
                                             const std::map<int, std::string>& train_slices,
                                             const std::map<int, std::string>& test_slices) {
  if (records.empty()) throw ConfigError("graph export needs at least one record");
  auto slice_of = [](const std::map<int, std::string>& m, int id) {
    auto it = m.find(id);
    return it == m.end() ? std::string("default") : it->second;
  };

  InfluenceGraph g;
  std::set<int> train_ids, test_ids;
  for (const auto& r : records) {
    train_ids.insert(r.train_id);
    test_ids.insert(r.test_id);
  }
  auto& nodes = g.document["nodes"] = nlohmann::ordered_json::array();
  for (int id : train_ids)
    nodes.push_back({{"id", id}, {"kind", "train"}, {"slice", slice_of(train_slices, id)}});
  for (int id : test_ids)
    nodes.push_back({{"id", id}, {"kind", "test"}, {"slice", slice_of(test_slices, id)}});
  auto& edges = g.document["edges"] = nlohmann::ordered_json::array();
  for (const auto& r : records)
    edges.push_back({{"train", r.train_id}, {"test", r.test_id}, {"value", r.value}});

  // per-test-slice stats split by edge sign
  std::map<std::string, SliceStats> stats;
  // mean signed influence of train point i on test slice j
  std::map<std::string, std::unordered_map<int, std::pair<double, long>>> slice_sums;
  for (const auto& r : records) {
    const std::string s = slice_of(test_slices, r.test_id);
    auto& st = stats[s];
    st.slice = s;
    if (r.value < 0) {
      st.mean_abs_helpful += -r.value;
      ++st.helpful_edges;
    } else if (r.value > 0) {
      st.mean_abs_harmful += r.value;
      ++st.harmful_edges;
    }
    auto& [sum, cnt] = slice_sums[s][r.train_id];
    sum += r.value;
    ++cnt;
  }
  for (auto& [s, st] : stats) {
    if (st.helpful_edges) st.mean_abs_helpful /= st.helpful_edges;
    if (st.harmful_edges) st.mean_abs_harmful /= st.harmful_edges;
    g.stats.push_back(st);
  }

  // pairwise slice correlations over train points influencing both slices
  std::vector<std::string> slices;
  for (const auto& [s, _] : slice_sums) slices.push_back(s);
  for (std::size_t i = 0; i < slices.size(); ++i)
    for (std::size_t j = i + 1; j < slices.size(); ++j) {
      std::vector<double> a, b;
      for (const auto& [id, sc] : slice_sums[slices[i]]) {
        auto it = slice_sums[slices[j]].find(id);
        if (it == slice_sums[slices[j]].end()) continue;
        a.push_back(sc.first / sc.second);
        b.push_back(it->second.first / it->second.second);
      }
      SlicePairCorrelation c;
      c.slice_a = slices[i];
      c.slice_b = slices[j];
      c.shared_train_points = static_cast<long>(a.size());
      if (a.size() >= 2) {
        try {
          c.pearson = pearson(a, b);
        } catch (const DegenerateInputError&) {
          c.pearson = std::numeric_limits<double>::quiet_NaN();
        }
      } else {
        c.pearson = std::numeric_limits<double>::quiet_NaN();
      }
      g.correlations.push_back(std::move(c));
    }
  return g;
}

// Round-trip parse of the emitted graph document.
inline std::vector<InfluenceRecord> parse_influence_graph(const nlohmann::ordered_json& doc) {
  std::vector<InfluenceRecord> records;
  for (const auto& e : doc.at("edges"))
    records.push_back({e.at("train").get<int>(), e.at("test").get<int>(), e.at("value").get<double>(), -1, 0});
  return records;
}

inline void write_slice_stats_csv(const InfluenceGraph& g, std::ostream& out) {
  out << "slice,mean_abs_helpful,mean_abs_harmful,helpful_edges,harmful_edges\n";
  for (const auto& s : g.stats)
    out << s.slice << ',' << s.mean_abs_helpful << ',' << s.mean_abs_harmful << ',' << s.helpful_edges << ','
        << s.harmful_edges << '\n';
  out << "slice_a,slice_b,pearson,shared_train_points\n";
  for (const auto& c : g.correlations)
    out << c.slice_a << ',' << c.slice_b << ',' << c.pearson << ',' << c.shared_train_points << '\n';
}

}  // namespace fastinf
