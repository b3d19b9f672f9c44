#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "fastinf/datagen.hpp"
#include "fastinf/lissa.hpp"
#include "fastinf/model.hpp"
#include "oracles.hpp"

using namespace fastinf;

namespace {

ModelSpec binary_spec(int d, double l2 = 0.005) {
  ModelSpec s;
  s.d = d;
  s.num_classes = 2;
  s.l2 = l2;
  return s;
}

DataPoint point(std::initializer_list<double> xs, int y, int id = 0) {
  DataPoint p;
  p.id = id;
  p.y = y;
  p.x = Eigen::VectorXd(static_cast<Eigen::Index>(xs.size()));
  int i = 0;
  for (double v : xs) p.x[i++] = v;
  return p;
}

// x = 0 makes the data term of the binary Hessian vanish, leaving l2 * I.
Dataset identity_hessian_set(int d, int n = 4) {
  std::vector<DataPoint> pts;
  for (int i = 0; i < n; ++i) {
    DataPoint p;
    p.id = i;
    p.y = i % 2;
    p.x = Eigen::VectorXd::Zero(d);
    pts.push_back(p);
  }
  return Dataset(pts, d, 2, DatasetRole::Train);
}

Eigen::VectorXd randv(int d, std::uint64_t seed) {
  auto eng = make_engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v[i] = normal(eng);
  return v;
}

}  // namespace

TEST_CASE("identity Hessian: the recursion fixpoint recovers v exactly") {
  auto spec = binary_spec(3, 1.0);  // H = I
  Dataset ds = identity_hessian_set(3);
  ParamVector theta = init_params(spec, 0);
  const Eigen::VectorXd v = randv(3, 11);

  LissaConfig cfg;
  cfg.depth = 400;
  cfg.batch = 100;  // >= N, full batch
  cfg.repetitions = 1;
  cfg.scale = 2.0;
  cfg.damping = 0.0;
  cfg.tol = 0.0;
  auto s = estimate_ihvp(spec, theta, ds, v, cfg);
  CHECK((s.values - v).norm() < 1e-10);
  CHECK(s.sigma_used == 2.0);

  // with damping d the limit is v / (1 + d)
  cfg.damping = 0.5;
  auto sd = estimate_ihvp(spec, theta, ds, v, cfg);
  CHECK((sd.values - v / 1.5).norm() < 1e-10);
}

TEST_CASE("hand-computed diagonal Hessian inverse on axis-aligned points") {
  // theta = 0, points 2*e1 and e2: H = 0.25 * mean(x x^T) + l2 I
  //   = diag(0.5, 0.125) + 0.01 I  (binary sigmoid curvature at 0 is 1/4)
  auto spec = binary_spec(2, 0.01);
  std::vector<DataPoint> pts = {point({2.0, 0.0}, 1, 0), point({0.0, 1.0}, 0, 1)};
  Dataset ds(pts, 2, 2, DatasetRole::Train);
  ParamVector theta = init_params(spec, 0);

  Eigen::VectorXd v(2);
  v << 1.0, -2.0;
  LissaConfig cfg;
  cfg.depth = 20000;
  cfg.batch = 10;
  cfg.repetitions = 1;
  cfg.scale = 4.0;
  cfg.damping = 0.0;
  cfg.tol = 0.0;
  auto s = estimate_ihvp(spec, theta, ds, v, cfg);
  CHECK(s.values[0] == doctest::Approx(1.0 / 0.51).epsilon(1e-6));
  CHECK(s.values[1] == doctest::Approx(-2.0 / 0.135).epsilon(1e-6));
}

TEST_CASE("converged stochastic estimate is within 5% of the dense solve") {
  Dataset ds = make_gaussians(200, 5, 2, 3);
  auto spec = binary_spec(5, 0.05);
  auto r = train(spec, ds, {.steps = 4000, .lr = 0.5, .seed = 0, .stop_grad_norm = 1e-9});

  DataPoint z = ds[7];
  const Eigen::VectorXd v = grad(spec, r.params, z);
  LissaConfig cfg;
  cfg.depth = 5000;
  cfg.batch = 40;
  cfg.repetitions = 16;
  cfg.damping = 0.01;
  cfg.tol = 0.0;
  cfg.seed = 42;
  auto est = estimate_ihvp(spec, r.params, ds, v, cfg);
  const Eigen::VectorXd exact = ihvp_exact(spec, r.params, ds, v, cfg.damping);
  CHECK((est.values - exact).norm() / exact.norm() < 0.05);
}

TEST_CASE("determinism: repeated runs and any worker count are bit-identical") {
  Dataset ds = make_gaussians(60, 4, 2, 9);
  auto spec = binary_spec(4);
  auto r = train(spec, ds, {.steps = 1500, .lr = 0.5, .seed = 1});
  const Eigen::VectorXd v = grad(spec, r.params, ds[3]);

  LissaConfig cfg;
  cfg.depth = 300;
  cfg.batch = 4;
  cfg.repetitions = 6;
  cfg.seed = 77;
  auto a = estimate_ihvp(spec, r.params, ds, v, cfg, 1);
  auto b = estimate_ihvp(spec, r.params, ds, v, cfg, 1);
  auto c = estimate_ihvp(spec, r.params, ds, v, cfg, 4);
  CHECK(a.values == b.values);
  CHECK(a.values == c.values);
  CHECK(a.config_hash == b.config_hash);

  // different seeds give different stochastic estimates
  cfg.seed = 78;
  auto d = estimate_ihvp(spec, r.params, ds, v, cfg, 1);
  CHECK(a.values != d.values);
}

TEST_CASE("full-batch repetitions are all identical, so T does not change the mean") {
  Dataset ds = make_gaussians(40, 3, 2, 5);
  auto spec = binary_spec(3);
  auto r = train(spec, ds, {.steps = 1000, .lr = 0.5, .seed = 0});
  const Eigen::VectorXd v = grad(spec, r.params, ds[0]);

  LissaConfig cfg;
  cfg.depth = 200;
  cfg.batch = 1000;  // full batch
  cfg.tol = 0.0;
  cfg.repetitions = 1;
  auto t1 = estimate_ihvp(spec, r.params, ds, v, cfg);
  cfg.repetitions = 5;
  auto t5 = estimate_ihvp(spec, r.params, ds, v, cfg);
  CHECK((t1.values - t5.values).norm() < 1e-14 * t1.values.norm());
}

TEST_CASE("estimate is linear in v when the sampling seed is held fixed") {
  Dataset ds = make_gaussians(50, 4, 2, 2);
  auto spec = binary_spec(4);
  auto r = train(spec, ds, {.steps = 1000, .lr = 0.5, .seed = 0});
  const Eigen::VectorXd v = grad(spec, r.params, ds[5]);

  LissaConfig cfg;
  cfg.depth = 150;
  cfg.batch = 2;
  cfg.repetitions = 3;
  cfg.tol = 0.0;
  cfg.seed = 19;
  auto sv = estimate_ihvp(spec, r.params, ds, v, cfg);
  auto s3v = estimate_ihvp(spec, r.params, ds, (3.0 * v).eval(), cfg);
  CHECK((s3v.values - 3.0 * sv.values).norm() < 1e-10 * sv.values.norm());
}

TEST_CASE("more repetitions shrink the error against the dense solve") {
  Dataset ds = make_gaussians(120, 4, 2, 6);
  auto spec = binary_spec(4, 0.05);
  auto r = train(spec, ds, {.steps = 3000, .lr = 0.5, .seed = 0});
  const Eigen::VectorXd v = grad(spec, r.params, ds[11]);
  const Eigen::VectorXd exact = ihvp_exact(spec, r.params, ds, v, 0.01);

  LissaConfig cfg;
  cfg.depth = 3000;
  cfg.batch = 4;
  cfg.damping = 0.01;
  cfg.tol = 0.0;
  cfg.seed = 5;
  cfg.repetitions = 1;
  const double e1 = (estimate_ihvp(spec, r.params, ds, v, cfg).values - exact).norm();
  cfg.repetitions = 16;
  const double e16 = (estimate_ihvp(spec, r.params, ds, v, cfg).values - exact).norm();
  CHECK(e16 < e1);
}

TEST_CASE("a scale far below the spectral norm triggers the divergence guard") {
  Dataset ds = make_gaussians(30, 3, 2, 4, 10.0);
  auto spec = binary_spec(3, 1.0);
  ParamVector theta = init_params(spec, 0);
  const Eigen::VectorXd v = randv(3, 1);

  LissaConfig cfg;
  cfg.depth = 5000;
  cfg.batch = 100;
  cfg.repetitions = 1;
  cfg.scale = 1e-4;
  cfg.tol = 0.0;
  CHECK_THROWS_AS(estimate_ihvp(spec, theta, ds, v, cfg), DivergenceError);
}

TEST_CASE("automatic scale tracks the power-iteration spectral estimate") {
  auto spec = binary_spec(3, 2.0);  // H = 2 I exactly at any theta with x = 0
  Dataset ds = identity_hessian_set(3);
  ParamVector theta = init_params(spec, 0);
  const double nrm = estimate_hessian_norm(spec, theta, ds, 0.0, true, 0);
  CHECK(nrm == doctest::Approx(2.0).epsilon(1e-9));

  LissaConfig cfg;
  cfg.depth = 500;
  cfg.batch = 100;
  cfg.repetitions = 1;
  cfg.scale = 0.0;  // auto: 1.5 * ||H||
  cfg.damping = 0.0;
  auto s = estimate_ihvp(spec, theta, ds, randv(3, 8), cfg);
  CHECK(s.sigma_used == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("dense solve: identity case, residual, and singularity detection") {
  auto spec = binary_spec(3, 1.0);
  Dataset ds = identity_hessian_set(3);
  ParamVector theta = init_params(spec, 0);
  const Eigen::VectorXd v = randv(3, 21);
  CHECK((ihvp_exact(spec, theta, ds, v) - v).norm() < 1e-12);

  // residual check on a generic trained model
  Dataset g = make_gaussians(80, 4, 2, 8);
  auto spec2 = binary_spec(4, 0.02);
  auto r = train(spec2, g, {.steps = 2000, .lr = 0.5, .seed = 0});
  const Eigen::VectorXd w = grad(spec2, r.params, g[2]);
  const Eigen::VectorXd s = ihvp_exact(spec2, r.params, g, w, 0.01);
  const Eigen::MatrixXd H = dense_hessian(spec2, r.params, g, 0.01);
  CHECK((H * s - w).norm() < 1e-10 * w.norm());

  // rank-deficient: one point in 2-d without weight decay
  auto spec3 = binary_spec(2, 0.0);
  std::vector<DataPoint> one = {point({1.0, 0.0}, 1, 0)};
  Dataset ds1(one, 2, 2, DatasetRole::Train);
  ParamVector t3 = init_params(spec3, 0);
  CHECK_THROWS_AS(ihvp_exact(spec3, t3, ds1, randv(2, 3)), SingularityError);
}

TEST_CASE("sweep measures error against the most expensive configuration") {
  Dataset ds = make_gaussians(60, 3, 2, 1);
  auto spec = binary_spec(3, 0.05);
  auto r = train(spec, ds, {.steps = 2000, .lr = 0.5, .seed = 0});
  const Eigen::VectorXd v = grad(spec, r.params, ds[0]);

  std::vector<LissaConfig> grid;
  // full batch, so the error against the reference is pure truncation error
  // and strictly shrinks with J
  for (long J : {20L, 200L, 4000L}) {
    LissaConfig c;
    c.depth = J;
    c.batch = 1000;
    c.repetitions = 1;
    c.damping = 0.01;
    c.tol = 0.0;
    c.seed = 3;
    grid.push_back(c);
  }
  auto rows = sweep(spec, r.params, ds, v, grid);
  REQUIRE(rows.size() == 3);
  CHECK(rows[2].error_norm == 0.0);  // reference row
  CHECK(rows[0].error_norm > rows[1].error_norm);
  for (const auto& row : rows) {
    CHECK(row.ok);
    CHECK(row.seconds >= 0.0);
  }

  std::ostringstream csv;
  write_sweep_csv(rows, csv);
  CHECK(csv.str().rfind("config_id,J,B,T,sigma,damping,seconds,error_norm\n", 0) == 0);
}

TEST_CASE("configuration validation rejects non-positive knobs") {
  Dataset ds = make_gaussians(10, 2, 2, 0);
  auto spec = binary_spec(2);
  ParamVector theta = init_params(spec, 0);
  LissaConfig cfg;
  cfg.depth = 0;
  CHECK_THROWS_AS(estimate_ihvp(spec, theta, ds, randv(2, 0), cfg), ConfigError);
  cfg.depth = 10;
  cfg.repetitions = 0;
  CHECK_THROWS_AS(estimate_ihvp(spec, theta, ds, randv(2, 0), cfg), ConfigError);
  cfg.repetitions = 1;
  CHECK_THROWS_AS(estimate_ihvp(spec, theta, ds, randv(3, 0), cfg), ConfigError);  // bad length
}
