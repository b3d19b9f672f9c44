#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <vector>

#include "fastinf/data.hpp"
#include "fastinf/rng.hpp"

namespace fastinf {

// Separable Gaussian blobs: class c centered at radius*e_{c mod d}.
inline Dataset make_gaussians(int n, int d, int num_classes, std::uint64_t seed,
                              double radius = 2.0, double noise = 1.0,
                              DatasetRole role = DatasetRole::Train) {
  auto eng = make_engine(derive_seed(seed, "gaussians"));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<DataPoint> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) {
    DataPoint p;
    p.id = i;
    p.y = i % num_classes;
    p.x.resize(d);
    for (int j = 0; j < d; ++j) p.x[j] = noise * normal(eng);
    p.x[p.y % d] += radius;
    pts.push_back(std::move(p));
  }
  return Dataset(std::move(pts), d, num_classes, role);
}

struct DuplicateFixture {
  Dataset train;
  Dataset test;          // test[0]: exact same-label copy of train[dup_id]; test[1]: mislabeled copy
  int dup_id = 0;
};

// 20-point binary fixture with a designated duplicated point.
inline DuplicateFixture make_duplicate_fixture(std::uint64_t seed, int n = 20, int d = 4) {
  Dataset base = make_gaussians(n, d, 2, derive_seed(seed, "dup-train"));
  const int dup_id = 0;
  // make the duplicated point a hard, distinctive example so its copy is its
  // own nearest explanation rather than an interchangeable cluster member
  std::vector<DataPoint> pts = base.points();
  pts[dup_id].x *= 3.0;
  pts[dup_id].y = 1 - pts[dup_id].y;
  Dataset train(pts, d, 2, DatasetRole::Train);
  const DataPoint& src = train[dup_id];
  std::vector<DataPoint> test_pts;
  test_pts.push_back({0, src.x, src.y});
  test_pts.push_back({1, src.x, 1 - src.y});
  return {std::move(train), Dataset(std::move(test_pts), d, 2, DatasetRole::Test), dup_id};
}

struct BiasFixture {
  Dataset train;       // skewed mixture, mostly subpopulation A
  Dataset validation;  // subpopulation B (anchor source)
  Dataset evaldata;    // subpopulation B (held-out evaluation)
  Dataset augmentation;  // unseen B-heavy pool for the data-augmentation setting
};

namespace detail {

// Subpopulation A: x0 carries the label. Subpopulation B: x1 carries the
// label while x0 points the other way, so a model fit on A fails on B.
inline DataPoint bias_point(int id, bool pop_b, std::mt19937_64& eng, int d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  DataPoint p;
  p.id = id;
  p.y = coin(eng) ? 1 : 0;
  const double s = p.y ? 1.0 : -1.0;
  p.x.resize(d);
  for (int j = 0; j < d; ++j) p.x[j] = 0.5 * normal(eng);
  if (!pop_b) {
    p.x[0] += 2.0 * s;
  } else {
    p.x[0] -= 2.0 * s;
    p.x[1] += 2.0 * s;
  }
  return p;
}

}  // namespace detail

inline BiasFixture make_bias_fixture(std::uint64_t seed, int n_train = 400, double minority_frac = 0.1,
                                     int n_validation = 60, int n_eval = 120, int n_augmentation = 200,
                                     int d = 5) {
  auto eng = make_engine(derive_seed(seed, "bias"));
  std::vector<DataPoint> tr;
  const int n_b = static_cast<int>(n_train * minority_frac);
  for (int i = 0; i < n_train; ++i) tr.push_back(detail::bias_point(i, i < n_b, eng, d));
  std::vector<DataPoint> va, ev, au;
  for (int i = 0; i < n_validation; ++i) va.push_back(detail::bias_point(i, true, eng, d));
  for (int i = 0; i < n_eval; ++i) ev.push_back(detail::bias_point(i, true, eng, d));
  // augmentation pool mirrors the training mixture but inverted: mostly B
  for (int i = 0; i < n_augmentation; ++i) au.push_back(detail::bias_point(i, i >= n_augmentation / 10, eng, d));
  return {Dataset(std::move(tr), d, 2, DatasetRole::Train),
          Dataset(std::move(va), d, 2, DatasetRole::Validation),
          Dataset(std::move(ev), d, 2, DatasetRole::Test),
          Dataset(std::move(au), d, 2, DatasetRole::Augmentation)};
}

}  // namespace fastinf
