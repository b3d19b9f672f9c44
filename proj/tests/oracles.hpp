// Test-only oracles, independent of the library's gradient/HVP paths.
#pragma once

#include <Eigen/Core>
#include <cmath>
#include <random>

#include "fastinf/model.hpp"

namespace oracles {

using namespace fastinf;

// Central finite differences of the loss.
inline Eigen::VectorXd fd_grad(const ModelSpec& spec, const ParamVector& params, const DataPoint& z,
                               double h = 1e-5) {
  Eigen::VectorXd g(params.values.size());
  ParamVector p = params;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double orig = p.values[i];
    p.values[i] = orig + h;
    const double lp = loss(spec, p, z);
    p.values[i] = orig - h;
    const double lm = loss(spec, p, z);
    p.values[i] = orig;
    g[i] = (lp - lm) / (2 * h);
  }
  return g;
}

// Central finite differences of the analytic gradient, along direction v.
inline Eigen::VectorXd fd_hvp(const ModelSpec& spec, const ParamVector& params, std::span<const DataPoint> batch,
                              const Eigen::VectorXd& v, double eps = 1e-6) {
  ParamVector p = params;
  p.values = params.values + eps * v;
  const Eigen::VectorXd gp = grad(spec, p, batch);
  p.values = params.values - eps * v;
  const Eigen::VectorXd gm = grad(spec, p, batch);
  return (gp - gm) / (2 * eps);
}

inline double max_rel_err(const Eigen::VectorXd& got, const Eigen::VectorXd& want, double floor = 1e-6) {
  double worst = 0;
  for (Eigen::Index i = 0; i < got.size(); ++i) {
    const double denom = std::max({std::abs(got[i]), std::abs(want[i]), floor});
    worst = std::max(worst, std::abs(got[i] - want[i]) / denom);
  }
  return worst;
}

// Random small model + point for property tests.
struct RandomCase {
  ModelSpec spec;
  ParamVector params;
  DataPoint z;
};

inline RandomCase random_case(std::uint64_t seed) {
  auto eng = make_engine(seed);
  std::uniform_int_distribution<int> coin(0, 1);
  std::normal_distribution<double> normal(0.0, 0.5);
  RandomCase rc;
  rc.spec.d = 2 + static_cast<int>(eng() % 5);
  rc.spec.num_classes = 2 + static_cast<int>(eng() % 3);
  rc.spec.l2 = 0.005;
  if (coin(eng)) {
    rc.spec.arch = Architecture::Mlp;
    rc.spec.hidden = {2 + static_cast<int>(eng() % 4)};
    if (coin(eng)) rc.spec.hidden.push_back(2 + static_cast<int>(eng() % 3));
  }
  rc.params = init_params(rc.spec, seed);
  for (Eigen::Index i = 0; i < rc.params.values.size(); ++i) rc.params.values[i] += normal(eng);
  rc.z.id = 0;
  rc.z.y = static_cast<int>(eng() % rc.spec.num_classes);
  rc.z.x.resize(rc.spec.d);
  for (int j = 0; j < rc.spec.d; ++j) rc.z.x[j] = normal(eng) * 2.0;
  return rc;
}

}  // namespace oracles
