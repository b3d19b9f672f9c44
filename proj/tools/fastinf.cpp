// fastinf: training-data influence toolkit.
//
// Subcommands: gen-data, train, influence, recall-eval, lissa-sweep,
// retrain-eval, benchmark, correct, simulate, export-graph. Every run writes
// its artifacts plus a manifest.json capturing the resolved configuration.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "fastinf/fastinf.hpp"

namespace fs = std::filesystem;
using namespace fastinf;

namespace {

struct Common {
  std::string out = ".";
  std::uint64_t seed = 0;
  int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
  cmd->add_option("--seed", c.seed, "root seed; all randomness derives from it")->capture_default_str();
  cmd->add_option("--workers", c.workers, "thread count")->capture_default_str();
  cmd->set_config("--config", "", "plain-text key-value configuration file");
}

struct LissaFlags {
  long J = 2000;
  long B = 8;
  int T = 4;
  double sigma = 0.0;
  double damping = 0.01;
  double tol = 1e-4;
  long check_every = 50;
  bool no_l2 = false;
};

void add_lissa(CLI::App* cmd, LissaFlags& f) {
  cmd->add_option("--lissa-j", f.J, "recursion depth J")->capture_default_str();
  cmd->add_option("--lissa-b", f.B, "batch size B")->capture_default_str();
  cmd->add_option("--lissa-t", f.T, "repetitions T")->capture_default_str();
  cmd->add_option("--lissa-sigma", f.sigma, "scale; 0 = auto")->capture_default_str();
  cmd->add_option("--lissa-damping", f.damping, "damping")->capture_default_str();
  cmd->add_option("--lissa-tol", f.tol, "early-stop tolerance")->capture_default_str();
  cmd->add_flag("--no-hessian-l2", f.no_l2, "exclude the weight-decay term from the Hessian");
}

LissaConfig to_config(const LissaFlags& f, std::uint64_t seed) {
  LissaConfig c;
  c.depth = f.J;
  c.batch = f.B;
  c.repetitions = f.T;
  c.scale = f.sigma;
  c.damping = f.damping;
  c.tol = f.tol;
  c.check_every = f.check_every;
  c.seed = derive_seed(seed, "lissa");
  c.include_l2 = !f.no_l2;
  return c;
}

std::unique_ptr<STestCache> make_cache() {
  if (const char* dir = std::getenv("FASTINF_CACHE_DIR"))
    return std::make_unique<STestCache>(fs::path(dir));
  return nullptr;
}

void write_manifest(const Common& c, const std::string& command, const nlohmann::ordered_json& config,
                    const std::map<std::string, std::uint64_t>& digests, const std::vector<std::string>& artifacts,
                    double wall_s) {
  RunManifest m;
  m.command = command;
  m.config = config;
  m.dataset_digests = digests;
  m.seed = c.seed;
  m.artifacts = artifacts;
  m.wall_time_s = wall_s;
  m.save((fs::path(c.out) / "manifest.json").string());
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw ConfigError("cannot write " + p.string());
  return out;
}

std::vector<InfluenceRecord> read_influence_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open records file: " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<InfluenceRecord> recs;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    InfluenceRecord r;
    if (std::sscanf(line.c_str(), "%d,%d,%lf,%d", &r.train_id, &r.test_id, &r.value, &r.knn_rank) != 4)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'train_id,test_id,value,knn_rank'");
    recs.push_back(r);
  }
  return recs;
}

std::map<int, std::string> read_slices(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open slice file: " + path);
  std::map<int, std::string> m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ConfigError(path + ": expected 'id,slice' lines");
    m[std::stoi(line.substr(0, comma))] = line.substr(comma + 1);
  }
  return m;
}

// `J=500,1000,2000` style axis parsing for lissa-sweep
std::vector<long> parse_axis(const std::vector<std::string>& tokens, const std::string& key, long fallback) {
  for (const auto& t : tokens) {
    if (t.rfind(key + "=", 0) != 0) continue;
    std::vector<long> vals;
    std::istringstream ss(t.substr(key.size() + 1));
    std::string tok;
    while (std::getline(ss, tok, ',')) vals.push_back(std::stol(tok));
    if (vals.empty()) throw ConfigError("empty sweep axis: " + t);
    return vals;
  }
  return {fallback};
}

int run(int argc, char** argv) {
  CLI::App app{"fast influence functions for small differentiable models"};
  app.require_subcommand(1);

  // ---- gen-data
  Common gd_common;
  std::string gd_family = "gaussians";
  int gd_n = 2000, gd_d = 10, gd_classes = 2;
  double gd_minority = 0.1;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic fixture");
  add_common(gen, gd_common);
  gen->add_option("--family", gd_family, "gaussians | duplicate | bias")->capture_default_str();
  gen->add_option("--n", gd_n, "training points")->capture_default_str();
  gen->add_option("--d", gd_d, "feature dimension")->capture_default_str();
  gen->add_option("--classes", gd_classes, "class count")->capture_default_str();
  gen->add_option("--minority-frac", gd_minority, "bias fixture minority fraction")->capture_default_str();

  // ---- train
  Common tr_common;
  std::string tr_spec, tr_train, tr_params_out = "params.bin";
  long tr_steps = 5000;
  double tr_lr = 0.5, tr_stop = 1e-7;
  auto* trn = app.add_subcommand("train", "train a model with deterministic full-batch gradient descent");
  add_common(trn, tr_common);
  trn->add_option("--spec", tr_spec, "model spec file")->required();
  trn->add_option("--train", tr_train, "training dataset")->required();
  trn->add_option("--params-out", tr_params_out, "output parameter blob")->capture_default_str();
  trn->add_option("--steps", tr_steps)->capture_default_str();
  trn->add_option("--lr", tr_lr)->capture_default_str();
  trn->add_option("--stop-grad-norm", tr_stop)->capture_default_str();

  // ---- influence
  Common in_common;
  std::string in_spec, in_train, in_test, in_params, in_mode = "harmful";
  int in_test_id = 0, in_m = 10, in_k = 0;
  bool in_no_knn = false, in_exact = false, in_approx_knn = false;
  LissaFlags in_lissa;
  auto* inf = app.add_subcommand("influence", "rank training points by influence on a test point");
  add_common(inf, in_common);
  inf->add_option("--spec", in_spec)->required();
  inf->add_option("--train", in_train)->required();
  inf->add_option("--test", in_test)->required();
  inf->add_option("--params", in_params)->required();
  inf->add_option("--test-id", in_test_id)->capture_default_str();
  inf->add_option("--mode", in_mode, "harmful | helpful | absolute")->capture_default_str();
  inf->add_option("--m", in_m, "extremes to report")->capture_default_str();
  inf->add_option("--knn-k", in_k, "candidate count; 0 = max(50, N/10)")->capture_default_str();
  inf->add_flag("--no-knn", in_no_knn, "score the full training set");
  inf->add_flag("--approx-knn", in_approx_knn, "graph-based approximate index");
  inf->add_flag("--exact-ihvp", in_exact, "dense-solve oracle instead of LiSSA");
  add_lissa(inf, in_lissa);

  // ---- recall-eval
  Common re_common;
  std::string re_spec, re_train, re_test, re_params;
  std::vector<int> re_ks = {200}, re_ms = {10};
  int re_num_test = 20;
  auto* rec = app.add_subcommand("recall-eval", "recall@m of kNN candidates vs full-scan ground truth");
  add_common(rec, re_common);
  rec->add_option("--spec", re_spec)->required();
  rec->add_option("--train", re_train)->required();
  rec->add_option("--test", re_test)->required();
  rec->add_option("--params", re_params)->required();
  rec->add_option("--ks", re_ks, "candidate counts")->capture_default_str();
  rec->add_option("--ms", re_ms, "ground-truth depths")->capture_default_str();
  rec->add_option("--num-test", re_num_test, "test points to evaluate")->capture_default_str();

  // ---- lissa-sweep
  Common sw_common;
  std::string sw_spec, sw_train, sw_test, sw_params;
  std::vector<std::string> sw_grid;
  int sw_test_id = 0;
  LissaFlags sw_lissa;
  auto* swp = app.add_subcommand("lissa-sweep", "speed-quality sweep over (J, B, T)");
  add_common(swp, sw_common);
  swp->add_option("--spec", sw_spec)->required();
  swp->add_option("--train", sw_train)->required();
  swp->add_option("--test", sw_test)->required();
  swp->add_option("--params", sw_params)->required();
  swp->add_option("--test-id", sw_test_id)->capture_default_str();
  swp->add_option("--grid", sw_grid, "axes, e.g. J=500,1000,2000 B=1,8 T=1,4")->expected(-1);
  add_lissa(swp, sw_lissa);

  // ---- retrain-eval
  Common rt_common;
  std::string rt_spec, rt_train, rt_test, rt_params, rt_mode = "helpful";
  int rt_test_id = 0, rt_m_remove = 1;
  long rt_steps = 20000;
  double rt_lr = 0.5;
  bool rt_exact = true;
  auto* ret = app.add_subcommand("retrain-eval", "leave-m-out retraining oracle for influence signs");
  add_common(ret, rt_common);
  ret->add_option("--spec", rt_spec)->required();
  ret->add_option("--train", rt_train)->required();
  ret->add_option("--test", rt_test)->required();
  ret->add_option("--params", rt_params)->required();
  ret->add_option("--test-id", rt_test_id)->capture_default_str();
  ret->add_option("--mode", rt_mode, "which extremes to remove")->capture_default_str();
  ret->add_option("--m-remove", rt_m_remove)->capture_default_str();
  ret->add_option("--steps", rt_steps)->capture_default_str();
  ret->add_option("--lr", rt_lr)->capture_default_str();

  // ---- benchmark
  Common bm_common;
  std::string bm_spec, bm_train, bm_test, bm_params;
  int bm_k = 0, bm_num_test = 5, bm_parallel = 4;
  auto* bmk = app.add_subcommand("benchmark", "relative timing of the four pipeline variants");
  add_common(bmk, bm_common);
  bmk->add_option("--spec", bm_spec)->required();
  bmk->add_option("--train", bm_train)->required();
  bmk->add_option("--test", bm_test)->required();
  bmk->add_option("--params", bm_params)->required();
  bmk->add_option("--knn-k", bm_k)->capture_default_str();
  bmk->add_option("--num-test", bm_num_test)->capture_default_str();
  bmk->add_option("--parallel-workers", bm_parallel)->capture_default_str();

  // ---- correct
  Common co_common;
  std::string co_spec, co_source, co_validation, co_eval, co_params, co_selection = "helpful";
  int co_iterations = 10, co_anchors = 10, co_count = 10;
  double co_lr = 1e-4;
  bool co_exact = false, co_no_knn = false;
  LissaFlags co_lissa;
  auto* cor = app.add_subcommand("correct", "iterative error correction by fine-tuning on influential points");
  add_common(cor, co_common);
  cor->add_option("--spec", co_spec)->required();
  cor->add_option("--source", co_source, "dataset to select fine-tuning points from")->required();
  cor->add_option("--validation", co_validation, "anchor source")->required();
  cor->add_option("--eval", co_eval, "held-out evaluation dataset")->required();
  cor->add_option("--params", co_params)->required();
  cor->add_option("--selection", co_selection, "helpful | harmful | random | z-test")->capture_default_str();
  cor->add_option("--iterations", co_iterations)->capture_default_str();
  cor->add_option("--anchors", co_anchors)->capture_default_str();
  cor->add_option("--finetune-count", co_count)->capture_default_str();
  cor->add_option("--lr", co_lr)->capture_default_str();
  cor->add_flag("--exact-ihvp", co_exact);
  cor->add_flag("--no-knn", co_no_knn);
  add_lissa(cor, co_lissa);

  // ---- simulate
  Common si_common;
  std::string si_spec, si_train, si_test, si_params;
  int si_num_test = 10, si_repeats = 10;
  std::vector<double> si_lrs;
  long si_sim_steps = 5000;
  double si_sim_lr = 0.5;
  auto* sim = app.add_subcommand("simulate", "simulatability evaluation of influential points");
  add_common(sim, si_common);
  sim->add_option("--spec", si_spec)->required();
  sim->add_option("--train", si_train)->required();
  sim->add_option("--test", si_test)->required();
  sim->add_option("--params", si_params)->required();
  sim->add_option("--num-test", si_num_test)->capture_default_str();
  sim->add_option("--repeats", si_repeats)->capture_default_str();
  sim->add_option("--lrs", si_lrs, "fine-tuning learning rates");
  sim->add_option("--sim-steps", si_sim_steps)->capture_default_str();
  sim->add_option("--sim-lr", si_sim_lr)->capture_default_str();

  // ---- export-graph
  Common eg_common;
  std::vector<std::string> eg_records;
  std::string eg_train_slices, eg_test_slices;
  auto* exg = app.add_subcommand("export-graph", "bipartite influence graph + slice statistics");
  add_common(exg, eg_common);
  exg->add_option("--records", eg_records, "influence CSV files")->required()->expected(-1);
  exg->add_option("--train-slices", eg_train_slices, "id,slice file for training points");
  exg->add_option("--test-slices", eg_test_slices, "id,slice file for test points");

  CLI11_PARSE(app, argc, argv);
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  auto cmdline = [&] {
    std::string s;
    for (int i = 0; i < argc; ++i) s += std::string(i ? " " : "") + argv[i];
    return s;
  };

  if (gen->parsed()) {
    fs::create_directories(gd_common.out);
    std::vector<std::string> artifacts;
    std::map<std::string, std::uint64_t> digests;
    auto emit = [&](const Dataset& ds, const std::string& name) {
      const auto path = (fs::path(gd_common.out) / name).string();
      save_dataset(ds, path);
      artifacts.push_back(path);
      digests[name] = dataset_digest(ds);
    };
    if (gd_family == "gaussians") {
      emit(make_gaussians(gd_n, gd_d, gd_classes, gd_common.seed), "train.tsv");
      emit(make_gaussians(std::max(10, gd_n / 10), gd_d, gd_classes, derive_seed(gd_common.seed, "test"), 2.0, 1.0,
                          DatasetRole::Test),
           "test.tsv");
    } else if (gd_family == "duplicate") {
      auto fx = make_duplicate_fixture(gd_common.seed, gd_n, gd_d);
      emit(fx.train, "train.tsv");
      emit(fx.test, "test.tsv");
    } else if (gd_family == "bias") {
      auto fx = make_bias_fixture(gd_common.seed, gd_n, gd_minority);
      emit(fx.train, "train.tsv");
      emit(fx.validation, "validation.tsv");
      emit(fx.evaldata, "eval.tsv");
      emit(fx.augmentation, "augmentation.tsv");
    } else {
      throw CLI::ValidationError("--family", "unknown family: " + gd_family);
    }
    write_manifest(gd_common, cmdline(),
                   {{"family", gd_family}, {"n", gd_n}, {"d", gd_d}, {"classes", gd_classes}}, digests, artifacts,
                   elapsed());
    return 0;
  }

  if (trn->parsed()) {
    fs::create_directories(tr_common.out);
    const ModelSpec spec = load_model_spec(tr_spec);
    const Dataset train_set = load_dataset(tr_train, DatasetRole::Train);
    const auto result = train(spec, train_set,
                              {.steps = tr_steps, .lr = tr_lr, .seed = tr_common.seed, .stop_grad_norm = tr_stop});
    const auto path = (fs::path(tr_common.out) / tr_params_out).string();
    save_params(result.params, path);
    std::cout << "trained: steps=" << result.steps_run << " grad_norm=" << result.final_grad_norm << "\n";
    write_manifest(tr_common, cmdline(),
                   {{"spec", tr_spec}, {"steps", tr_steps}, {"lr", tr_lr}, {"grad_norm", result.final_grad_norm}},
                   {{"train", dataset_digest(train_set)}}, {path}, elapsed());
    return 0;
  }

  if (inf->parsed()) {
    fs::create_directories(in_common.out);
    const ModelSpec spec = load_model_spec(in_spec);
    const Dataset train_set = load_dataset(in_train, DatasetRole::Train);
    const Dataset test_set = load_dataset(in_test, DatasetRole::Test);
    const ParamVector params = load_params(in_params);
    InfluenceQueryConfig cfg;
    cfg.use_knn = !in_no_knn;
    cfg.k = in_k;
    cfg.knn_backend = in_approx_knn ? IndexBackend::Approximate : IndexBackend::Exact;
    cfg.exact_ihvp = in_exact;
    cfg.lissa = to_config(in_lissa, in_common.seed);
    cfg.mode = influence_mode_from_string(in_mode);
    cfg.m = in_m;
    cfg.workers = in_common.workers;
    auto cache = make_cache();
    const auto records = influence_query(spec, params, train_set, test_set.by_id(in_test_id), cfg, cache.get());
    const auto top = top_influential(records, in_m, cfg.mode);
    const auto path = (fs::path(in_common.out) / "influence.csv").string();
    auto out = open_out(path);
    write_influence_csv(top, out);
    write_influence_csv(top, std::cout);
    write_manifest(in_common, cmdline(),
                   {{"test_id", in_test_id}, {"mode", in_mode}, {"m", in_m}, {"knn", cfg.use_knn},
                    {"k", cfg.resolved_k(train_set.size())}, {"exact_ihvp", in_exact},
                    {"lissa", {{"J", in_lissa.J}, {"B", in_lissa.B}, {"T", in_lissa.T}}}},
                   {{"train", dataset_digest(train_set)}, {"test", dataset_digest(test_set)}}, {path}, elapsed());
    return 0;
  }

  if (rec->parsed()) {
    fs::create_directories(re_common.out);
    const ModelSpec spec = load_model_spec(re_spec);
    const Dataset train_set = load_dataset(re_train, DatasetRole::Train);
    const Dataset test_set = load_dataset(re_test, DatasetRole::Test);
    const ParamVector params = load_params(re_params);
    RecallExperimentConfig cfg;
    cfg.ks = re_ks;
    cfg.ms = re_ms;
    const int n_test = std::min(re_num_test, test_set.size());
    const auto reports = recall_experiment(spec, params, train_set,
                                           std::span<const DataPoint>(test_set.points().data(), n_test), cfg);
    const auto path = (fs::path(re_common.out) / "recall.csv").string();
    auto out = open_out(path);
    write_recall_csv(reports, out);
    write_recall_csv(reports, std::cout);
    write_manifest(re_common, cmdline(), {{"ks", re_ks}, {"ms", re_ms}, {"num_test", n_test}},
                   {{"train", dataset_digest(train_set)}, {"test", dataset_digest(test_set)}}, {path}, elapsed());
    return 0;
  }

  if (swp->parsed()) {
    fs::create_directories(sw_common.out);
    const ModelSpec spec = load_model_spec(sw_spec);
    const Dataset train_set = load_dataset(sw_train, DatasetRole::Train);
    const Dataset test_set = load_dataset(sw_test, DatasetRole::Test);
    const ParamVector params = load_params(sw_params);
    const auto js = parse_axis(sw_grid, "J", sw_lissa.J);
    const auto bs = parse_axis(sw_grid, "B", sw_lissa.B);
    const auto ts = parse_axis(sw_grid, "T", sw_lissa.T);
    std::vector<LissaConfig> grid;
    for (long j : js)
      for (long b : bs)
        for (long t : ts) {
          LissaConfig c = to_config(sw_lissa, sw_common.seed);
          c.depth = j;
          c.batch = b;
          c.repetitions = static_cast<int>(t);
          grid.push_back(c);
        }
    const GradVector v = grad(spec, params, test_set.by_id(sw_test_id));
    const auto rows = sweep(spec, params, train_set, v, grid, sw_common.workers);
    const auto path = (fs::path(sw_common.out) / "sweep.csv").string();
    auto out = open_out(path);
    write_sweep_csv(rows, out);
    write_sweep_csv(rows, std::cout);
    write_manifest(sw_common, cmdline(), {{"test_id", sw_test_id}, {"grid_size", grid.size()}},
                   {{"train", dataset_digest(train_set)}, {"test", dataset_digest(test_set)}}, {path}, elapsed());
    return 0;
  }

  if (ret->parsed()) {
    fs::create_directories(rt_common.out);
    const ModelSpec spec = load_model_spec(rt_spec);
    const Dataset train_set = load_dataset(rt_train, DatasetRole::Train);
    const Dataset test_set = load_dataset(rt_test, DatasetRole::Test);
    const ParamVector params = load_params(rt_params);
    const DataPoint& z = test_set.by_id(rt_test_id);
    InfluenceQueryConfig q;
    q.use_knn = false;
    q.exact_ihvp = rt_exact;
    q.mode = influence_mode_from_string(rt_mode);
    const auto records = influence_query(spec, params, train_set, z, q);
    std::vector<int> remove;
    for (const auto& r : top_influential(records, rt_m_remove, q.mode)) remove.push_back(r.train_id);
    const TrainConfig trainer{.steps = rt_steps, .lr = rt_lr, .seed = rt_common.seed, .stop_grad_norm = 1e-9};
    const auto rep = loo_retrain(spec, train_set, remove, z, trainer);
    const auto path = (fs::path(rt_common.out) / "retrain.csv").string();
    auto out = open_out(path);
    out << "test_id,mode,m_remove,loss_before,loss_after,delta_loss\n";
    out.precision(17);
    out << rep.test_id << ',' << rt_mode << ',' << remove.size() << ',' << rep.loss_before << ',' << rep.loss_after
        << ',' << rep.delta_loss << '\n';
    std::cout << "delta_loss=" << rep.delta_loss << "\n";
    write_manifest(rt_common, cmdline(), {{"test_id", rt_test_id}, {"mode", rt_mode}, {"m_remove", rt_m_remove}},
                   {{"train", dataset_digest(train_set)}, {"test", dataset_digest(test_set)}}, {path}, elapsed());
    return 0;
  }

  if (bmk->parsed()) {
    fs::create_directories(bm_common.out);
    const ModelSpec spec = load_model_spec(bm_spec);
    const Dataset train_set = load_dataset(bm_train, DatasetRole::Train);
    const Dataset test_set = load_dataset(bm_test, DatasetRole::Test);
    const ParamVector params = load_params(bm_params);
    BenchmarkConfig cfg;
    cfg.knn_k = bm_k;
    cfg.parallel_workers = bm_parallel;
    cfg.converged.seed = cfg.fast.seed = derive_seed(bm_common.seed, "lissa");
    const int n_test = std::min(bm_num_test, test_set.size());
    const auto report =
        benchmark(spec, params, train_set, std::span<const DataPoint>(test_set.points().data(), n_test), cfg);
    const auto path = (fs::path(bm_common.out) / "benchmark.csv").string();
    auto out = open_out(path);
    write_benchmark_csv(report, out);
    write_benchmark_csv(report, std::cout);
    write_manifest(bm_common, cmdline(), {{"knn_k", bm_k}, {"num_test", n_test}, {"parallel_workers", bm_parallel}},
                   {{"train", dataset_digest(train_set)}, {"test", dataset_digest(test_set)}}, {path}, elapsed());
    return 0;
  }

  if (cor->parsed()) {
    fs::create_directories(co_common.out);
    const ModelSpec spec = load_model_spec(co_spec);
    const Dataset source = load_dataset(co_source, DatasetRole::Train);
    const Dataset validation = load_dataset(co_validation, DatasetRole::Validation);
    const Dataset evaldata = load_dataset(co_eval, DatasetRole::Test);
    const ParamVector params = load_params(co_params);
    CorrectionConfig cfg;
    cfg.iterations = co_iterations;
    cfg.anchors_per_iter = co_anchors;
    cfg.finetune_count = co_count;
    cfg.lr = co_lr;
    cfg.selection = selection_from_string(co_selection);
    cfg.use_knn = !co_no_knn;
    cfg.exact_ihvp = co_exact;
    cfg.lissa = to_config(co_lissa, co_common.seed);
    cfg.workers = co_common.workers;
    cfg.seed = co_common.seed;
    const auto trace = correction_loop(spec, params, source, validation, evaldata, cfg);
    const auto path = (fs::path(co_common.out) / "correction_trace.csv").string();
    auto out = open_out(path);
    write_correction_csv(trace, out);
    write_correction_csv(trace, std::cout);
    const auto params_path = (fs::path(co_common.out) / "corrected_params.bin").string();
    save_params(trace.final_params, params_path);
    write_manifest(co_common, cmdline(),
                   {{"selection", co_selection}, {"iterations", co_iterations}, {"anchors", co_anchors},
                    {"finetune_count", co_count}, {"lr", co_lr}},
                   {{"source", dataset_digest(source)}, {"validation", dataset_digest(validation)},
                    {"eval", dataset_digest(evaldata)}},
                   {path, params_path}, elapsed());
    return 0;
  }

  if (sim->parsed()) {
    fs::create_directories(si_common.out);
    const ModelSpec spec = load_model_spec(si_spec);
    const Dataset train_set = load_dataset(si_train, DatasetRole::Train);
    const Dataset test_set = load_dataset(si_test, DatasetRole::Test);
    const ParamVector params = load_params(si_params);
    SimulatabilityConfig cfg;
    cfg.lrs = si_lrs;
    if (cfg.lrs.empty())
      for (int i = 0; i < 8; ++i) cfg.lrs.push_back(std::pow(10.0, -4.0 + i * 0.4));
    cfg.repeats = si_repeats;
    cfg.simulator_trainer = {.steps = si_sim_steps, .lr = si_sim_lr, .seed = derive_seed(si_common.seed, "simulator"),
                             .stop_grad_norm = 1e-8};
    cfg.seed = si_common.seed;
    std::vector<SimulatabilityReport> reports;
    const int n_test = std::min(si_num_test, test_set.size());
    for (int i = 0; i < n_test; ++i)
      reports.push_back(simulatability_eval(spec, params, train_set, test_set[i], cfg));
    const auto path = (fs::path(si_common.out) / "simulatability.csv").string();
    auto out = open_out(path);
    write_simulatability_csv(reports, out);
    write_manifest(si_common, cmdline(), {{"num_test", n_test}, {"repeats", si_repeats}, {"lrs", cfg.lrs}},
                   {{"train", dataset_digest(train_set)}, {"test", dataset_digest(test_set)}}, {path}, elapsed());
    return 0;
  }

  if (exg->parsed()) {
    fs::create_directories(eg_common.out);
    std::vector<InfluenceRecord> records;
    for (const auto& f : eg_records)
      for (auto& r : read_influence_csv(f)) records.push_back(r);
    std::map<int, std::string> train_slices, test_slices;
    if (!eg_train_slices.empty()) train_slices = read_slices(eg_train_slices);
    if (!eg_test_slices.empty()) test_slices = read_slices(eg_test_slices);
    const auto graph = export_influence_graph(records, train_slices, test_slices);
    const auto gpath = (fs::path(eg_common.out) / "graph.json").string();
    auto gout = open_out(gpath);
    gout << graph.document.dump(2) << "\n";
    const auto spath = (fs::path(eg_common.out) / "slice_stats.csv").string();
    auto sout = open_out(spath);
    write_slice_stats_csv(graph, sout);
    write_slice_stats_csv(graph, std::cout);
    write_manifest(eg_common, cmdline(), {{"records", eg_records}}, {}, {gpath, spath}, elapsed());
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
