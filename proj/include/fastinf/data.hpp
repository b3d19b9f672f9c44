#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fastinf/errors.hpp"
#include "fastinf/rng.hpp"

namespace fastinf {

enum class DatasetRole { Train, Validation, Test, Augmentation };

inline const char* to_string(DatasetRole r) {
  switch (r) {
    case DatasetRole::Train: return "train";
    case DatasetRole::Validation: return "validation";
    case DatasetRole::Test: return "test";
    case DatasetRole::Augmentation: return "augmentation";
  }
  return "?";
}

inline DatasetRole role_from_string(const std::string& s) {
  if (s == "train") return DatasetRole::Train;
  if (s == "validation") return DatasetRole::Validation;
  if (s == "test") return DatasetRole::Test;
  if (s == "augmentation") return DatasetRole::Augmentation;
  throw ConfigError("unknown dataset role: " + s);
}

// One labeled example z = (x, y) with a stable id.
struct DataPoint {
  int id = 0;
  Eigen::VectorXd x;
  int y = 0;
};

class Dataset {
 public:
  Dataset(std::vector<DataPoint> points, int d, int num_classes, DatasetRole role)
      : points_(std::move(points)), d_(d), num_classes_(num_classes), role_(role) {
    if (points_.empty()) throw ConfigError("dataset must be non-empty");
    if (d_ <= 0 || num_classes_ < 2) throw ConfigError("dataset needs d > 0 and C >= 2");
    std::unordered_set<int> seen;
    for (const auto& p : points_) {
      if (p.x.size() != d_) throw ConfigError("data point " + std::to_string(p.id) + " has dimension " + std::to_string(p.x.size()) + ", expected " + std::to_string(d_));
      if (p.y < 0 || p.y >= num_classes_) throw ConfigError("data point " + std::to_string(p.id) + " has label " + std::to_string(p.y) + " outside [0, " + std::to_string(num_classes_) + ")");
      if (p.id < 0 || !seen.insert(p.id).second) throw ConfigError("duplicate or negative id " + std::to_string(p.id));
    }
    // ids must be contiguous 0..N-1
    for (int i = 0; i < static_cast<int>(points_.size()); ++i)
      if (!seen.count(i)) throw ConfigError("ids not contiguous: missing " + std::to_string(i));
  }

  int size() const { return static_cast<int>(points_.size()); }
  int dim() const { return d_; }
  int num_classes() const { return num_classes_; }
  DatasetRole role() const { return role_; }
  const std::vector<DataPoint>& points() const { return points_; }
  const DataPoint& operator[](int i) const { return points_[i]; }

  const DataPoint& by_id(int id) const {
    if (id >= 0 && id < size() && points_[static_cast<std::size_t>(id)].id == id)
      return points_[static_cast<std::size_t>(id)];
    for (const auto& p : points_)
      if (p.id == id) return p;
    throw ConfigError("no point with id " + std::to_string(id));
  }

  // New dataset without the given ids; surviving points are re-indexed 0..M-1.
  Dataset without(const std::unordered_set<int>& remove_ids) const {
    std::vector<DataPoint> kept;
    kept.reserve(points_.size());
    for (const auto& p : points_) {
      if (remove_ids.count(p.id)) continue;
      DataPoint q = p;
      q.id = static_cast<int>(kept.size());
      kept.push_back(std::move(q));
    }
    if (kept.empty()) throw ConfigError("removal leaves an empty dataset");
    return Dataset(std::move(kept), d_, num_classes_, role_);
  }

  Dataset with_role(DatasetRole role) const { return Dataset(points_, d_, num_classes_, role); }

 private:
  std::vector<DataPoint> points_;
  int d_;
  int num_classes_;
  DatasetRole role_;
};

// Format: header `#d=<d> C=<C>`, then `id <tab> label <tab> comma-separated floats`.
inline Dataset load_dataset(const std::string& path, DatasetRole role) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset file: " + path);
  std::string header;
  if (!std::getline(in, header) || header.rfind("#d=", 0) != 0)
    throw ConfigError(path + ":1: expected header '#d=<d> C=<C>'");
  int d = 0, C = 0;
  if (std::sscanf(header.c_str(), "#d=%d C=%d", &d, &C) != 2)
    throw ConfigError(path + ":1: malformed header '" + header + "'");
  std::vector<DataPoint> points;
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    DataPoint p;
    std::string floats;
    if (!(ls >> p.id >> p.y >> floats))
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'id\\tlabel\\tfloats'");
    p.x.resize(d);
    std::istringstream fs(floats);
    std::string tok;
    for (int j = 0; j < d; ++j) {
      if (!std::getline(fs, tok, ','))
        throw ConfigError(path + ":" + std::to_string(lineno) + ": field " + std::to_string(j) + ": expected " + std::to_string(d) + " floats");
      p.x[j] = std::stod(tok);
    }
    points.push_back(std::move(p));
  }
  return Dataset(std::move(points), d, C, role);
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write dataset file: " + path);
  out << "#d=" << ds.dim() << " C=" << ds.num_classes() << "\n";
  out.precision(17);
  for (const auto& p : ds.points()) {
    out << p.id << '\t' << p.y << '\t';
    for (int j = 0; j < p.x.size(); ++j) out << (j ? "," : "") << p.x[j];
    out << '\n';
  }
}

inline std::uint64_t dataset_digest(const Dataset& ds) {
  std::uint64_t h = fnv1a_value(ds.dim());
  h = fnv1a_value(ds.num_classes(), h);
  for (const auto& p : ds.points()) {
    h = fnv1a_value(p.id, h);
    h = fnv1a_value(p.y, h);
    h = fnv1a(p.x.data(), sizeof(double) * p.x.size(), h);
  }
  return h;
}

}  // namespace fastinf
