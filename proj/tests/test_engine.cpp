#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Cholesky>
#include <filesystem>
#include <sstream>

#include "fastinf/datagen.hpp"
#include "fastinf/engine.hpp"

using namespace fastinf;

namespace {

ModelSpec binary_spec(int d, double l2 = 0.005) {
  ModelSpec s;
  s.d = d;
  s.num_classes = 2;
  s.l2 = l2;
  return s;
}

InfluenceQueryConfig exact_full_scan() {
  InfluenceQueryConfig cfg;
  cfg.use_knn = false;
  cfg.exact_ihvp = true;
  cfg.lissa.damping = 0.01;
  return cfg;
}

InfluenceRecord rec(int id, double value) {
  InfluenceRecord r;
  r.train_id = id;
  r.value = value;
  return r;
}

}  // namespace

TEST_CASE("influence of a point on itself through an identity inverse Hessian") {
  Eigen::VectorXd s(3), g(3);
  s << 1, 0, 0;
  g << 1, 0, 0;
  CHECK(influence_one(s, g) == -1.0);  // aligned gradient helps
  g << 0, 1, 0;
  CHECK(influence_one(s, g) == 0.0);  // orthogonal gradient is neutral
  Eigen::VectorXd bad(2);
  CHECK_THROWS_AS(influence_one(s, bad), ConfigError);
}

TEST_CASE("full scan with the dense solve matches a hand-assembled -g_test^T H^{-1} g") {
  Dataset ds = make_gaussians(40, 3, 2, 13);
  auto spec = binary_spec(3, 0.05);
  auto r = train(spec, ds, {.steps = 3000, .lr = 0.5, .seed = 0});
  const DataPoint z = ds[5];

  auto cfg = exact_full_scan();
  auto records = influence_query(spec, r.params, ds, z, cfg);
  REQUIRE(records.size() == 40);

  const Eigen::MatrixXd H = dense_hessian(spec, r.params, ds, cfg.lissa.damping);
  const Eigen::VectorXd s_test = H.ldlt().solve(grad(spec, r.params, z));
  for (const auto& rr : records) {
    const double want = -s_test.dot(grad(spec, r.params, ds.by_id(rr.train_id)));
    CHECK(rr.value == doctest::Approx(want).epsilon(1e-9));
    CHECK(rr.knn_rank == -1);
  }
}

TEST_CASE("kNN with k = N reproduces the full scan exactly") {
  Dataset ds = make_gaussians(60, 4, 2, 21);
  auto spec = binary_spec(4);
  auto r = train(spec, ds, {.steps = 2000, .lr = 0.5, .seed = 0});
  const DataPoint z = ds[17];

  auto full = exact_full_scan();
  auto knn = exact_full_scan();
  knn.use_knn = true;
  knn.k = 60;
  auto a = influence_query(spec, r.params, ds, z, full);
  auto b = influence_query(spec, r.params, ds, z, knn);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].train_id == b[i].train_id);
    CHECK(a[i].value == b[i].value);
    CHECK(b[i].knn_rank >= 0);
  }
}

TEST_CASE("a duplicated training point is most helpful for its copy, harmful for its mislabeled copy") {
  auto fx = make_duplicate_fixture(3, 20, 4);
  auto spec = binary_spec(4, 0.05);
  auto r = train(spec, fx.train, {.steps = 4000, .lr = 0.5, .seed = 0});

  auto cfg = exact_full_scan();
  auto same = influence_query(spec, r.params, fx.train, fx.test[0], cfg);
  auto flipped = influence_query(spec, r.params, fx.train, fx.test[1], cfg);

  auto most_helpful = top_influential(same, 1, InfluenceMode::Helpful);
  CHECK(most_helpful[0].train_id == fx.dup_id);
  CHECK(most_helpful[0].value < 0.0);

  auto most_harmful = top_influential(flipped, 1, InfluenceMode::Harmful);
  CHECK(most_harmful[0].train_id == fx.dup_id);
  CHECK(most_harmful[0].value > 0.0);
}

TEST_CASE("top_influential ordering per mode, with ties broken by ascending id") {
  std::vector<InfluenceRecord> rs = {rec(0, -5.0), rec(1, 3.0), rec(2, -1.0)};
  auto abs3 = top_influential(rs, 3, InfluenceMode::Absolute);
  CHECK(abs3[0].train_id == 0);
  CHECK(abs3[1].train_id == 1);
  CHECK(abs3[2].train_id == 2);

  std::vector<InfluenceRecord> hs = {rec(0, 2.0), rec(1, -2.0), rec(2, 0.0)};
  auto help = top_influential(hs, 3, InfluenceMode::Helpful);
  CHECK(help[0].train_id == 1);
  CHECK(help[1].train_id == 2);
  CHECK(help[2].train_id == 0);
  auto harm = top_influential(hs, 2, InfluenceMode::Harmful);
  REQUIRE(harm.size() == 2);
  CHECK(harm[0].train_id == 0);
  CHECK(harm[1].train_id == 2);

  std::vector<InfluenceRecord> tie = {rec(5, 1.0), rec(2, 1.0), rec(9, 1.0)};
  auto t = top_influential(tie, 3, InfluenceMode::Harmful);
  CHECK(t[0].train_id == 2);
  CHECK(t[1].train_id == 5);
  CHECK(t[2].train_id == 9);

  CHECK_THROWS_AS(top_influential(rs, 0, InfluenceMode::Harmful), ConfigError);
}

TEST_CASE("worker count never changes the result") {
  Dataset ds = make_gaussians(80, 4, 2, 31);
  auto spec = binary_spec(4);
  auto r = train(spec, ds, {.steps = 2000, .lr = 0.5, .seed = 0});
  const DataPoint z = ds[9];

  InfluenceQueryConfig cfg;
  cfg.use_knn = true;
  cfg.lissa.depth = 300;
  cfg.lissa.batch = 4;
  cfg.lissa.seed = 7;
  cfg.workers = 1;
  auto a = influence_query(spec, r.params, ds, z, cfg);
  auto b = influence_query_parallel(spec, r.params, ds, z, cfg, 4);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].train_id == b[i].train_id);
    CHECK(a[i].value == b[i].value);
  }
}

TEST_CASE("s_test cache: memory hits, disk round-trip, and params sensitivity") {
  Dataset ds = make_gaussians(30, 3, 2, 2);
  auto spec = binary_spec(3, 0.05);
  auto r = train(spec, ds, {.steps = 2000, .lr = 0.5, .seed = 0});
  const DataPoint z = ds[1];

  auto cfg = exact_full_scan();
  const auto dir = std::filesystem::temp_directory_path() / "fastinf_cache_test";
  std::filesystem::remove_all(dir);
  STestCache cache(dir);

  auto s1 = compute_s_test(spec, r.params, ds, z, cfg, &cache);
  CHECK(!std::filesystem::is_empty(dir));

  // a second cache backed by the same directory must return the same vector
  STestCache cache2(dir);
  auto s2 = compute_s_test(spec, r.params, ds, z, cfg, &cache2);
  CHECK(s1.values == s2.values);
  CHECK(s1.config_hash == s2.config_hash);

  // different parameters must not collide
  ParamVector other = r.params;
  other.values[0] += 0.125;
  CHECK(s_test_key(cfg, other, z.id) != s_test_key(cfg, r.params, z.id));
  auto s3 = compute_s_test(spec, other, ds, z, cfg, &cache2);
  CHECK(s3.values != s1.values);
  std::filesystem::remove_all(dir);
}

TEST_CASE("query validation and CSV format") {
  Dataset ds = make_gaussians(30, 3, 2, 2);
  auto spec = binary_spec(3);
  ParamVector theta = init_params(spec, 0);

  InfluenceQueryConfig cfg;
  cfg.use_knn = true;
  cfg.m = 500;  // more than resolved k = 30
  CHECK_THROWS_AS(influence_query(spec, theta, ds, ds[0], cfg), ConfigError);
  cfg.m = 10;
  cfg.workers = 0;
  CHECK_THROWS_AS(influence_query(spec, theta, ds, ds[0], cfg), ConfigError);

  std::vector<InfluenceRecord> rs = {rec(4, 1.5)};
  rs[0].test_id = 2;
  rs[0].knn_rank = 0;
  std::ostringstream out;
  write_influence_csv(rs, out);
  CHECK(out.str() == "train_id,test_id,value,knn_rank\n4,2,1.5,0\n");
}
