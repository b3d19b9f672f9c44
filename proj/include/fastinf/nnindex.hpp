#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <queue>
#include <tuple>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fastinf/errors.hpp"

namespace fastinf {

struct Neighbor {
  int id = 0;
  double dist2 = 0.0;  // squared l2
};

// Ascending by distance, ties by ascending id.
using NeighborSet = std::vector<Neighbor>;

enum class IndexBackend { Exact, Approximate };

struct ApproxIndexParams {
  int max_links = 16;          // M
  int ef_construction = 100;
  int ef_search = 64;
};

// l2 nearest-neighbor index over (id, feature) pairs. The exact backend is a
// full scan and is canonical; the approximate one is a navigable small-world
// graph built by sequential insertion.
class FeatureIndex {
 public:
  FeatureIndex(std::vector<std::pair<int, Eigen::VectorXd>> entries, IndexBackend backend,
               ApproxIndexParams approx = {})
      : backend_(backend), approx_(approx) {
    if (entries.empty()) throw ConfigError("feature index needs at least one entry");
    dim_ = static_cast<int>(entries[0].second.size());
    ids_.reserve(entries.size());
    vecs_.reserve(entries.size());
    for (auto& [id, v] : entries) {
      if (v.size() != dim_) throw ConfigError("feature index: inconsistent dimensions");
      ids_.push_back(id);
      vecs_.push_back(std::move(v));
    }
    if (backend_ == IndexBackend::Approximate) build_graph();
  }

  int dim() const { return dim_; }
  int size() const { return static_cast<int>(ids_.size()); }
  IndexBackend backend() const { return backend_; }

  NeighborSet query(const Eigen::VectorXd& q, int k) const {
    if (q.size() != dim_) throw ConfigError("query dimension does not match index");
    if (k < 1) throw ConfigError("query k must be >= 1");
    k = std::min<int>(k, size());
    return backend_ == IndexBackend::Exact ? query_exact(q, k) : query_graph(q, k);
  }

 private:
  struct Cand {
    double dist2;
    int node;  // internal index
    bool operator<(const Cand& o) const { return std::tie(dist2, node) < std::tie(o.dist2, o.node); }
    bool operator>(const Cand& o) const { return o < *this; }
  };

  static bool order(const Neighbor& a, const Neighbor& b) {
    return a.dist2 != b.dist2 ? a.dist2 < b.dist2 : a.id < b.id;
  }

  NeighborSet query_exact(const Eigen::VectorXd& q, int k) const {
    NeighborSet all(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) all[i] = {ids_[i], (vecs_[i] - q).squaredNorm()};
    std::partial_sort(all.begin(), all.begin() + k, all.end(), order);
    all.resize(k);
    return all;
  }

  // Greedy best-first search over the graph, returning up to ef candidates.
  std::vector<Cand> search_layer(const Eigen::VectorXd& q, int ef) const {
    std::priority_queue<Cand, std::vector<Cand>, std::greater<Cand>> frontier;
    std::priority_queue<Cand> best;  // max-heap of current top-ef
    std::unordered_set<int> visited;
    const Cand entry{(vecs_[entry_] - q).squaredNorm(), entry_};
    frontier.push(entry);
    best.push(entry);
    visited.insert(entry_);
    while (!frontier.empty()) {
      const Cand c = frontier.top();
      frontier.pop();
      if (c.dist2 > best.top().dist2 && static_cast<int>(best.size()) >= ef) break;
      for (int nb : links_[c.node]) {
        if (!visited.insert(nb).second) continue;
        const double d = (vecs_[nb] - q).squaredNorm();
        if (static_cast<int>(best.size()) < ef || d < best.top().dist2) {
          frontier.push({d, nb});
          best.push({d, nb});
          if (static_cast<int>(best.size()) > ef) best.pop();
        }
      }
    }
    std::vector<Cand> out;
    out.reserve(best.size());
    while (!best.empty()) {
      out.push_back(best.top());
      best.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

  void build_graph() {
    const int n = size();
    links_.assign(n, {});
    entry_ = 0;
    for (int i = 1; i < n; ++i) {
      auto cands = search_layer_partial(vecs_[i], approx_.ef_construction, i);
      const int m = std::min<int>(approx_.max_links, static_cast<int>(cands.size()));
      for (int j = 0; j < m; ++j) {
        const int nb = cands[j].node;
        links_[i].push_back(nb);
        links_[nb].push_back(i);
        prune(nb);
      }
    }
  }

  // search restricted to the first `limit` inserted nodes
  std::vector<Cand> search_layer_partial(const Eigen::VectorXd& q, int ef, int limit) const {
    // same as search_layer but neighbors >= limit do not exist yet
    std::priority_queue<Cand, std::vector<Cand>, std::greater<Cand>> frontier;
    std::priority_queue<Cand> best;
    std::unordered_set<int> visited;
    const Cand entry{(vecs_[entry_] - q).squaredNorm(), entry_};
    frontier.push(entry);
    best.push(entry);
    visited.insert(entry_);
    while (!frontier.empty()) {
      const Cand c = frontier.top();
      frontier.pop();
      if (c.dist2 > best.top().dist2 && static_cast<int>(best.size()) >= ef) break;
      for (int nb : links_[c.node]) {
        if (nb >= limit) continue;
        if (!visited.insert(nb).second) continue;
        const double d = (vecs_[nb] - q).squaredNorm();
        if (static_cast<int>(best.size()) < ef || d < best.top().dist2) {
          frontier.push({d, nb});
          best.push({d, nb});
          if (static_cast<int>(best.size()) > ef) best.pop();
        }
      }
    }
    std::vector<Cand> out;
    out.reserve(best.size());
    while (!best.empty()) {
      out.push_back(best.top());
      best.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

  // keep each node's links bounded and closest-first
  void prune(int node) {
    auto& ls = links_[node];
    const int cap = 2 * approx_.max_links;
    if (static_cast<int>(ls.size()) <= cap) return;
    std::sort(ls.begin(), ls.end(), [&](int a, int b) {
      const double da = (vecs_[a] - vecs_[node]).squaredNorm();
      const double db = (vecs_[b] - vecs_[node]).squaredNorm();
      return da != db ? da < db : a < b;
    });
    ls.resize(cap);
  }

  NeighborSet query_graph(const Eigen::VectorXd& q, int k) const {
    auto cands = search_layer(q, std::max(approx_.ef_search, k));
    NeighborSet out;
    out.reserve(cands.size());
    for (const auto& c : cands) out.push_back({ids_[c.node], c.dist2});
    std::sort(out.begin(), out.end(), order);
    if (static_cast<int>(out.size()) > k) out.resize(k);
    return out;
  }

  IndexBackend backend_;
  ApproxIndexParams approx_;
  int dim_ = 0;
  std::vector<int> ids_;
  std::vector<Eigen::VectorXd> vecs_;
  std::vector<std::vector<int>> links_;
  int entry_ = 0;
};

inline FeatureIndex build_index(std::vector<std::pair<int, Eigen::VectorXd>> entries,
                                IndexBackend backend = IndexBackend::Exact, ApproxIndexParams approx = {}) {
  return FeatureIndex(std::move(entries), backend, approx);
}

// Default candidate count at desk scale.
inline int default_knn_k(int n) { return std::max(50, n / 10); }

}  // namespace fastinf
