#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <tuple>
#include <exception>
#include <ostream>
#include <random>
#include <thread>
#include <vector>

#include "fastinf/data.hpp"
#include "fastinf/errors.hpp"
#include "fastinf/model.hpp"
#include "fastinf/params.hpp"
#include "fastinf/rng.hpp"

namespace fastinf {

// Inverse-HVP estimation by the stochastic Neumann recursion
//   h_j = v + (I - (1/sigma) (H_batch + damping I)) h_{j-1}
// with the 1/sigma correction applied once at the end. sigma <= 0 requests an
// automatic choice of 1.5x a power-iteration estimate of ||H||_2.
struct LissaConfig {
  long depth = 2000;       // J, max recursion depth
  long batch = 8;          // B; clamped to N, B >= N means full batch
  int repetitions = 4;     // T, independently averaged runs
  double scale = 0.0;      // sigma
  double damping = 0.01;
  double tol = 1e-4;       // relative-change early stop; 0 disables
  long check_every = 50;
  std::uint64_t seed = 0;
  bool include_l2 = true;  // weight-decay block of the Hessian

  void validate() const {
    if (depth < 1 || batch < 1 || repetitions < 1) throw ConfigError("lissa: J, B, T must be >= 1");
    if (scale < 0 || damping < 0 || tol < 0) throw ConfigError("lissa: scale, damping, tol must be non-negative");
    if (check_every < 1) throw ConfigError("lissa: check_every must be >= 1");
  }
};

struct STestVector {
  Eigen::VectorXd values;
  std::uint64_t config_hash = 0;
  std::vector<long> iterations_used;  // per repetition
  std::vector<bool> converged;        // per repetition
  double sigma_used = 0.0;
};

inline std::uint64_t lissa_config_digest(const LissaConfig& cfg) {
  std::uint64_t h = fnv1a_value(cfg.depth);
  h = fnv1a_value(cfg.batch, h);
  h = fnv1a_value(cfg.repetitions, h);
  h = fnv1a_value(cfg.scale, h);
  h = fnv1a_value(cfg.damping, h);
  h = fnv1a_value(cfg.tol, h);
  h = fnv1a_value(cfg.check_every, h);
  h = fnv1a_value(cfg.seed, h);
  h = fnv1a_value(cfg.include_l2, h);
  return h;
}

// 10-iteration power estimate of ||H + damping I||_2 on the full batch.
inline double estimate_hessian_norm(const ModelSpec& spec, const ParamVector& params, const Dataset& train,
                                    double damping, bool include_l2, std::uint64_t seed) {
  auto eng = make_engine(derive_seed(seed, "power-iteration"));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd u(params.values.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = normal(eng);
  u.normalize();
  double lambda = 1.0;
  for (int it = 0; it < 10; ++it) {
    Eigen::VectorXd w = hvp(spec, params, train, u, include_l2) + damping * u;
    lambda = w.norm();
    if (lambda <= 0) break;
    u = w / lambda;
  }
  return std::max(lambda, damping);
}

namespace detail {

struct LissaRepResult {
  Eigen::VectorXd h;
  long iterations = 0;
  bool converged = false;
};

inline LissaRepResult lissa_repetition(const ModelSpec& spec, const ParamVector& params, const Dataset& train,
                                       const Eigen::VectorXd& v, const LissaConfig& cfg, double sigma, int rep) {
  const int n = train.size();
  const long batch = std::min<long>(cfg.batch, n);
  const bool full_batch = batch >= n;
  // per-repetition seed: root seed XOR repetition index
  auto eng = make_engine(splitmix64(cfg.seed ^ static_cast<std::uint64_t>(rep)));
  std::uniform_int_distribution<int> pick(0, n - 1);

  const double guard = 1e8 * v.norm();
  std::vector<DataPoint> scratch;
  Eigen::VectorXd h = v;
  Eigen::VectorXd h_at_last_check = v;
  LissaRepResult out;
  for (long j = 1; j <= cfg.depth; ++j) {
    Eigen::VectorXd hh;
    if (full_batch) {
      hh = hvp(spec, params, train, h, cfg.include_l2);
    } else {
      scratch.clear();
      for (long b = 0; b < batch; ++b) scratch.push_back(train[pick(eng)]);
      hh = hvp(spec, params, std::span<const DataPoint>(scratch), h, cfg.include_l2);
    }
    hh.noalias() += cfg.damping * h;
    h = v + h - hh / sigma;
    out.iterations = j;
    if (!h.allFinite()) throw NumericError("lissa estimate is non-finite");
    if (h.norm() > guard) throw DivergenceError("lissa diverged; increase scale", rep, j);
    if (cfg.tol > 0 && j % cfg.check_every == 0) {
      const double hn = h.norm();
      if (hn > 0 && (h - h_at_last_check).norm() / hn <= cfg.tol) {
        out.converged = true;
        break;
      }
      h_at_last_check = h;
    }
  }
  out.h = std::move(h);
  return out;
}

}  // namespace detail

// T independent repetitions; the only synchronization point is the final
// index-ordered average, so any worker count is bit-identical to sequential.
inline STestVector estimate_ihvp(const ModelSpec& spec, const ParamVector& params, const Dataset& train,
                                 const GradVector& v, const LissaConfig& cfg, int workers = 1) {
  cfg.validate();
  if (v.size() != params.values.size()) throw ConfigError("lissa: v length does not match parameters");
  check_finite(v, "lissa input v");
  const double sigma = cfg.scale > 0
                           ? cfg.scale
                           : 1.5 * estimate_hessian_norm(spec, params, train, cfg.damping, cfg.include_l2, cfg.seed);

  const int T = cfg.repetitions;
  std::vector<detail::LissaRepResult> reps(T);
  std::vector<std::exception_ptr> errors(T);
  auto run = [&](int t) {
    try {
      reps[t] = detail::lissa_repetition(spec, params, train, v, cfg, sigma, t);
    } catch (...) {
      errors[t] = std::current_exception();
    }
  };
  if (workers <= 1 || T == 1) {
    for (int t = 0; t < T; ++t) run(t);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < std::min(workers, T); ++w)
      pool.emplace_back([&] {
        for (int t = next.fetch_add(1); t < T; t = next.fetch_add(1)) run(t);
      });
    for (auto& th : pool) th.join();
  }
  for (int t = 0; t < T; ++t)
    if (errors[t]) std::rethrow_exception(errors[t]);

  STestVector s;
  s.sigma_used = sigma;
  s.values = Eigen::VectorXd::Zero(v.size());
  for (int t = 0; t < T; ++t) {  // fixed summation order
    s.values += reps[t].h;
    s.iterations_used.push_back(reps[t].iterations);
    s.converged.push_back(reps[t].converged);
  }
  s.values /= static_cast<double>(T) * sigma;
  s.config_hash = fnv1a(v.data(), sizeof(double) * v.size(),
                        fnv1a_value(params_digest(params), lissa_config_digest(cfg)));
  return s;
}

// Dense full-train-set Hessian (plus damping), column by column via hvp.
inline Eigen::MatrixXd dense_hessian(const ModelSpec& spec, const ParamVector& params, const Dataset& train,
                                     double damping = 0.0, bool include_l2 = true) {
  const Eigen::Index p = params.values.size();
  if (p > 2000) throw CapabilityError("dense Hessian guard: P = " + std::to_string(p) + " exceeds 2000");
  Eigen::MatrixXd H(p, p);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    e[i] = 1.0;
    H.col(i) = hvp(spec, params, train, e, include_l2);
    e[i] = 0.0;
  }
  H = ((H + H.transpose()) / 2.0).eval();  // symmetrize round-off
  H.diagonal().array() += damping;
  return H;
}

// Brute-force oracle: assemble H densely and solve H s = v.
inline GradVector ihvp_exact(const ModelSpec& spec, const ParamVector& params, const Dataset& train,
                             const GradVector& v, double damping = 0.0, bool include_l2 = true) {
  if (v.size() != params.values.size()) throw ConfigError("ihvp_exact: v length does not match parameters");
  const Eigen::MatrixXd H = dense_hessian(spec, params, train, damping, include_l2);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < 1e-10)
    throw SingularityError("Hessian numerically singular (min eigenvalue " +
                           std::to_string(eig.eigenvalues().minCoeff()) + "); use damping > 0");
  return H.ldlt().solve(v);
}

struct SweepRow {
  int config_id = 0;
  LissaConfig config;
  double seconds = 0.0;
  double error_norm = 0.0;
  bool ok = true;
  std::string error;
};

// Error is measured against the most expensive configuration in the grid
// (largest B, then J, then T).
inline std::vector<SweepRow> sweep(const ModelSpec& spec, const ParamVector& params, const Dataset& train,
                                   const GradVector& v, const std::vector<LissaConfig>& grid, int workers = 1) {
  if (grid.empty()) throw ConfigError("sweep: grid must be non-empty");
  int ref_idx = 0;
  for (int i = 1; i < static_cast<int>(grid.size()); ++i) {
    const auto &a = grid[i], &b = grid[ref_idx];
    if (std::tie(a.batch, a.depth, a.repetitions) > std::tie(b.batch, b.depth, b.repetitions)) ref_idx = i;
  }
  std::vector<SweepRow> rows(grid.size());
  Eigen::VectorXd reference;
  auto timed = [&](const LissaConfig& cfg, SweepRow& row) -> Eigen::VectorXd {
    const auto t0 = std::chrono::steady_clock::now();
    Eigen::VectorXd est = estimate_ihvp(spec, params, train, v, cfg, workers).values;
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return est;
  };
  rows[ref_idx].config_id = ref_idx;
  rows[ref_idx].config = grid[ref_idx];
  reference = timed(grid[ref_idx], rows[ref_idx]);
  for (int i = 0; i < static_cast<int>(grid.size()); ++i) {
    rows[i].config_id = i;
    rows[i].config = grid[i];
    if (i == ref_idx) continue;
    try {
      rows[i].error_norm = (timed(grid[i], rows[i]) - reference).norm();
    } catch (const std::exception& e) {
      rows[i].ok = false;
      rows[i].error = e.what();
    }
  }
  return rows;
}

inline void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << "config_id,J,B,T,sigma,damping,seconds,error_norm\n";
  for (const auto& r : rows) {
    out << r.config_id << ',' << r.config.depth << ',' << r.config.batch << ',' << r.config.repetitions << ','
        << r.config.scale << ',' << r.config.damping << ',' << r.seconds << ',';
    if (r.ok)
      out << r.error_norm << '\n';
    else
      out << "error:" << r.error << '\n';
  }
}

}  // namespace fastinf
