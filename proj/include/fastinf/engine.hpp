#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>
#include <unordered_map>
#include <vector>

#include "fastinf/data.hpp"
#include "fastinf/errors.hpp"
#include "fastinf/lissa.hpp"
#include "fastinf/model.hpp"
#include "fastinf/nnindex.hpp"

namespace fastinf {

enum class InfluenceMode { Harmful, Helpful, Absolute };

inline const char* to_string(InfluenceMode m) {
  switch (m) {
    case InfluenceMode::Harmful: return "harmful";
    case InfluenceMode::Helpful: return "helpful";
    case InfluenceMode::Absolute: return "absolute";
  }
  return "?";
}

inline InfluenceMode influence_mode_from_string(const std::string& s) {
  if (s == "harmful") return InfluenceMode::Harmful;
  if (s == "helpful") return InfluenceMode::Helpful;
  if (s == "absolute") return InfluenceMode::Absolute;
  throw ConfigError("unknown influence mode: " + s);
}

struct InfluenceQueryConfig {
  bool use_knn = true;
  int k = 0;  // 0 -> max(50, N/10)
  IndexBackend knn_backend = IndexBackend::Exact;
  ApproxIndexParams knn_params;
  bool exact_ihvp = false;  // dense-solve oracle instead of LiSSA
  LissaConfig lissa;
  InfluenceMode mode = InfluenceMode::Harmful;
  int m = 10;
  int workers = 1;

  void validate(int n) const {
    if (workers < 1) throw ConfigError("influence query: workers must be >= 1");
    if (m < 1) throw ConfigError("influence query: m must be >= 1");
    if (use_knn && m > resolved_k(n)) throw ConfigError("influence query: m exceeds the kNN candidate count");
  }

  int resolved_k(int n) const { return std::min(n, k > 0 ? k : default_knn_k(n)); }
};

struct InfluenceRecord {
  int train_id = 0;
  int test_id = 0;
  double value = 0.0;
  int knn_rank = -1;  // candidate rank, -1 when kNN was not used
  std::uint64_t config_hash = 0;
};

// I(z, z_test) = -<s_test, grad L(z)>. Positive = harmful, negative = helpful.
inline double influence_one(const Eigen::VectorXd& s_test, const Eigen::VectorXd& g) {
  if (s_test.size() != g.size()) throw ConfigError("influence_one: layout mismatch");
  return -s_test.dot(g);
}

// s_test results are cached by config digest; params changes change the digest.
class STestCache {
 public:
  STestCache() = default;
  explicit STestCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(*dir_);
  }

  std::optional<Eigen::VectorXd> get(std::uint64_t key) {
    {
      std::lock_guard lock(mu_);
      if (auto it = mem_.find(key); it != mem_.end()) return it->second;
    }
    if (dir_) {
      const auto path = file_for(key);
      if (std::filesystem::exists(path)) {
        Eigen::VectorXd v = load_vector(path.string());
        std::lock_guard lock(mu_);
        mem_[key] = v;
        return v;
      }
    }
    return std::nullopt;
  }

  void put(std::uint64_t key, const Eigen::VectorXd& v) {
    {
      std::lock_guard lock(mu_);
      mem_[key] = v;
    }
    if (dir_) save_vector(v, file_for(key).string());
  }

 private:
  std::filesystem::path file_for(std::uint64_t key) const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "st_%016llx.bin", static_cast<unsigned long long>(key));
    return *dir_ / buf;
  }

  std::mutex mu_;
  std::unordered_map<std::uint64_t, Eigen::VectorXd> mem_;
  std::optional<std::filesystem::path> dir_;
};

inline std::uint64_t s_test_key(const InfluenceQueryConfig& cfg, const ParamVector& params, int test_id) {
  std::uint64_t h = fnv1a_value(test_id, params_digest(params));
  h = fnv1a_value(cfg.exact_ihvp, h);
  h = fnv1a_value(lissa_config_digest(cfg.lissa), h);
  return h;
}

inline STestVector compute_s_test(const ModelSpec& spec, const ParamVector& params, const Dataset& train,
                                  const DataPoint& z_test, const InfluenceQueryConfig& cfg,
                                  STestCache* cache = nullptr) {
  const std::uint64_t key = s_test_key(cfg, params, z_test.id);
  STestVector s;
  s.config_hash = key;
  if (cache) {
    if (auto hit = cache->get(key)) {
      s.values = std::move(*hit);
      return s;
    }
  }
  const GradVector v = grad(spec, params, z_test);
  if (cfg.exact_ihvp) {
    s.values = ihvp_exact(spec, params, train, v, cfg.lissa.damping, cfg.lissa.include_l2);
  } else {
    STestVector est = estimate_ihvp(spec, params, train, v, cfg.lissa, cfg.workers);
    est.config_hash = key;
    s = std::move(est);
  }
  if (cache) cache->put(key, s.values);
  return s;
}

namespace detail {

inline void sort_records(std::vector<InfluenceRecord>& recs, InfluenceMode mode) {
  auto lt = [mode](const InfluenceRecord& a, const InfluenceRecord& b) {
    double ka, kb;
    switch (mode) {
      case InfluenceMode::Harmful: ka = -a.value; kb = -b.value; break;
      case InfluenceMode::Helpful: ka = a.value; kb = b.value; break;
      default: ka = -std::abs(a.value); kb = -std::abs(b.value); break;
    }
    if (ka != kb) return ka < kb;
    return a.train_id < b.train_id;
  };
  std::stable_sort(recs.begin(), recs.end(), lt);
}

}  // namespace detail

// First min(m, len) records under the mode's order; input order preserved on ties.
inline std::vector<InfluenceRecord> top_influential(std::vector<InfluenceRecord> records, int m, InfluenceMode mode) {
  if (m < 1) throw ConfigError("top_influential: m must be >= 1");
  detail::sort_records(records, mode);
  if (static_cast<int>(records.size()) > m) records.resize(m);
  return records;
}

// Training-point features at the given parameters, ready for index build.
inline std::vector<std::pair<int, Eigen::VectorXd>> feature_entries(const ModelSpec& spec, const ParamVector& params,
                                                                    const Dataset& train) {
  std::vector<std::pair<int, Eigen::VectorXd>> entries;
  entries.reserve(train.size());
  for (const auto& p : train.points()) entries.emplace_back(p.id, features(spec, params, p));
  return entries;
}

inline FeatureIndex build_feature_index(const ModelSpec& spec, const ParamVector& params, const Dataset& train,
                                        IndexBackend backend = IndexBackend::Exact, ApproxIndexParams ap = {}) {
  return FeatureIndex(feature_entries(spec, params, train), backend, ap);
}

// The full pipeline: kNN candidate restriction, s_test, per-candidate scoring.
// Scoring is sharded over cfg.workers with a fixed merge order, so any worker
// count produces the identical ranking. A prebuilt feature index (at the same
// params) may be supplied to amortize the build over many queries.
inline std::vector<InfluenceRecord> influence_query(const ModelSpec& spec, const ParamVector& params,
                                                    const Dataset& train, const DataPoint& z_test,
                                                    const InfluenceQueryConfig& cfg, STestCache* cache = nullptr,
                                                    const FeatureIndex* prebuilt = nullptr) {
  cfg.validate(train.size());
  const STestVector s_test = compute_s_test(spec, params, train, z_test, cfg, cache);

  // candidate selection
  std::vector<int> candidate_ids;
  std::vector<int> ranks;
  if (cfg.use_knn) {
    std::optional<FeatureIndex> local;
    if (!prebuilt) local.emplace(feature_entries(spec, params, train), cfg.knn_backend, cfg.knn_params);
    const FeatureIndex& index = prebuilt ? *prebuilt : *local;
    const NeighborSet nn = index.query(features(spec, params, z_test), cfg.resolved_k(train.size()));
    for (int r = 0; r < static_cast<int>(nn.size()); ++r) {
      candidate_ids.push_back(nn[r].id);
      ranks.push_back(r);
    }
  } else {
    for (const auto& p : train.points()) candidate_ids.push_back(p.id);
    ranks.assign(candidate_ids.size(), -1);
  }

  std::vector<InfluenceRecord> records(candidate_ids.size());
  auto score_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const DataPoint& z = train.by_id(candidate_ids[i]);
      records[i] = {z.id, z_test.id, influence_one(s_test.values, grad(spec, params, z)), ranks[i],
                    s_test.config_hash};
    }
  };
  if (cfg.workers <= 1 || records.size() < 2) {
    score_range(0, records.size());
  } else {
    const int w = std::min<int>(cfg.workers, static_cast<int>(records.size()));
    std::vector<std::exception_ptr> errors(w);
    std::vector<std::thread> pool;
    const std::size_t chunk = (records.size() + w - 1) / w;
    for (int i = 0; i < w; ++i)
      pool.emplace_back([&, i] {
        try {
          score_range(i * chunk, std::min(records.size(), (i + 1) * chunk));
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  detail::sort_records(records, cfg.mode);
  return records;
}

// Parallel variant: same contract as influence_query with workers > 1.
inline std::vector<InfluenceRecord> influence_query_parallel(const ModelSpec& spec, const ParamVector& params,
                                                             const Dataset& train, const DataPoint& z_test,
                                                             InfluenceQueryConfig cfg, int workers,
                                                             STestCache* cache = nullptr,
                                                             const FeatureIndex* prebuilt = nullptr) {
  cfg.workers = workers;
  return influence_query(spec, params, train, z_test, cfg, cache, prebuilt);
}

inline void write_influence_csv(const std::vector<InfluenceRecord>& records, std::ostream& out) {
  out << "train_id,test_id,value,knn_rank\n";
  out.precision(17);
  for (const auto& r : records) out << r.train_id << ',' << r.test_id << ',' << r.value << ',' << r.knn_rank << '\n';
}

}  // namespace fastinf
