// Acceptance runner: one PASS/FAIL line per criterion, then a tally.
// Exits 0 once every criterion has been evaluated; --strict makes any FAIL
// a nonzero exit.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "cli_helpers.hpp"
#include "oracles.hpp"
#include "scan/checkpoint.hpp"
#include "scan/cli.hpp"
#include "scan/cluster.hpp"
#include "scan/config.hpp"
#include "scan/data_io.hpp"
#include "scan/fewshot.hpp"
#include "scan/memory.hpp"
#include "scan/pretrain.hpp"
#include "temp_dir.hpp"
#include "toy_scan.hpp"

using namespace scan;
using namespace scan::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v, int digits = 6) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

int g_failed = 0;

void report(int id, const std::string& name, const Verdict& v) {
  if (!v.pass) ++g_failed;
  std::cout << (v.pass ? "PASS" : "FAIL") << "  criterion " << id << ": " << name << "  [" << v.detail << "]"
            << std::endl;
}

// ---------------------------------------------------------------------------
// 1. gradient suite

Verdict gradient_suite() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  auto note = [&](const std::string& name, double err) {
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
  };
  SeededRng shapes(2024);
  for (int trial = 0; trial < 10; ++trial) {
    const auto dim = [&] { return static_cast<Eigen::Index>(2 + shapes.below(7)); };
    const Eigen::Index batch = dim(), width = dim(), out = dim();
    const auto seed = static_cast<std::uint64_t>(trial);
    SeededRng rng(seed);

    Dense<double> dense(width, out, rng);
    note("dense", layer_grad_error(dense, random_matrix(batch, width, rng), Mode::Train, seed));
    Relu<double> relu;
    note("relu", layer_grad_error(relu, random_matrix(batch, width, rng), Mode::Train, seed));
    Softmax<double> sm;
    note("softmax", layer_grad_error(sm, random_matrix(batch, width, rng), Mode::Train, seed));
    BatchNorm<double> bn(width);
    bn.params()[0]->value = random_matrix(1, width, rng);
    note("batchnorm", layer_grad_error(bn, random_matrix(batch, width, rng), Mode::Train, seed));
    note("batchnorm/eval", layer_grad_error(bn, random_matrix(batch, width, rng), Mode::Eval, seed));
    Dropout<double> drop(0.3);
    note("dropout", layer_grad_error(drop, random_matrix(batch, width, rng), Mode::Train, seed));

    const ImageShape img{1 + static_cast<Eigen::Index>(shapes.below(2)), 4 + 2 * static_cast<Eigen::Index>(shapes.below(3)),
                         4 + 2 * static_cast<Eigen::Index>(shapes.below(3))};
    Conv2d<double> conv(img, 2, 3, 1, 1, rng);
    note("conv2d", layer_grad_error(conv, random_matrix(2, img.size(), rng), Mode::Train, seed));
    Conv2d<double> strided(img, 2, 3, 2, 0, rng);
    note("conv2d/stride2", layer_grad_error(strided, random_matrix(2, img.size(), rng), Mode::Train, seed));
    BatchNorm<double> bn2d(img.channels, img.height * img.width);
    note("batchnorm2d", layer_grad_error(bn2d, random_matrix(3, img.size(), rng), Mode::Train, seed));
    MaxPool2d<double> pool(img);
    note("maxpool", layer_grad_error(pool, random_matrix(2, img.size(), rng), Mode::Train, seed));
    Flatten<double> flat(width);
    note("flatten", layer_grad_error(flat, random_matrix(batch, width, rng), Mode::Train, seed));
  }
  int toys = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    ToyScan toy = make_toy_scan(seed);
    if (toy.evaluate(false).active_triplets != 4) return {false, "toy objective lost an active triplet"};
    note("full objective", toy.max_grad_error());
    ++toys;
  }
  const double secs = seconds_since(t0);
  const bool pass = worst < 1e-5 && secs < 60.0;
  return {pass, "11 layer kinds x 10 shapes + " + std::to_string(toys) + " full-objective toys; max rel err " +
                    num(worst, 3) + " (" + worst_name + "); " + num(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// 7/8 runs (shared with criterion 2)

struct MethodRun {
  double final_cluster_error = 0.0;
  double accuracy = 0.0;
  double d_intra = 0.0;
  double phi = 0.0;
  double max_additivity_gap = 0.0;
  std::size_t steps = 0;
};

MethodRun run_method(std::uint64_t seed, const std::string& method) {
  RunConfig cfg;
  cfg.seed = seed;
  cfg.episodes = 200;
  cfg.n_way = 2;
  cfg.k_shot = 1;
  PretrainOptions opts;
  opts.baseline = method == "baseline";
  opts.no_purity = method == "no_purity";
  cfg = effective_config(cfg, opts);

  const SyntheticDataset data = synthesize(synth_config(cfg));
  const SplitData base = split_from_synthetic(data, Split::Base);
  const SplitData novel = split_from_synthetic(data, Split::Novel);
  TrainingData td{base.samples, base.labels, base.n_classes(), std::nullopt};
  const int k = resolved_cluster_count(cfg, base.n_classes());
  Trainer trainer(train_config(cfg), std::move(td), build_network(cfg, base.sample_shape, base.n_classes(), k), seed);
  trainer.run();

  MethodRun r;
  r.final_cluster_error = trainer.log().back().cluster_error_rate.value_or(1.0);
  const double lambda = trainer.config().loss.lambda;
  for (const auto& s : trainer.steps())
    r.max_additivity_gap =
        std::max(r.max_additivity_gap, std::abs(s.total - (s.class_loss + s.cluster_loss + lambda * s.purity_loss)));
  r.steps = trainer.steps().size();

  const MatrixXd features = embed_backbone(trainer.net(), novel.samples);
  r.accuracy = run_episodes(features, novel.labels, eval_config(cfg)).accuracy.mean;
  const DiscriminabilityReport d = discriminability(features, novel.labels);
  r.d_intra = d.d_intra;
  r.phi = d.phi.value_or(0.0);
  return r;
}

struct Table6Runs {
  std::map<std::string, std::vector<MethodRun>> by_method;
  double seconds = 0.0;
};

Table6Runs run_table6() {
  Table6Runs t;
  const auto t0 = Clock::now();
  for (std::uint64_t seed = 0; seed < 5; ++seed)
    for (const char* m : {"scan", "no_purity", "baseline"}) t.by_method[m].push_back(run_method(seed, m));
  t.seconds = seconds_since(t0);
  return t;
}

double mean_of(const std::vector<MethodRun>& runs, double MethodRun::*field) {
  double s = 0.0;
  for (const auto& r : runs) s += r.*field;
  return s / static_cast<double>(runs.size());
}

std::string per_seed(const std::vector<MethodRun>& runs, double MethodRun::*field, double scale = 1.0) {
  std::string s;
  for (const auto& r : runs) s += (s.empty() ? "" : " ") + num(scale * (r.*field), 4);
  return s;
}

Verdict additivity(const Table6Runs& t) {
  double gap = 0.0;
  std::size_t steps = 0;
  for (const auto& [m, runs] : t.by_method)
    for (const auto& r : runs) {
      gap = std::max(gap, r.max_additivity_gap);
      steps += r.steps;
    }
  return {gap <= 1e-12, std::to_string(steps) + " logged steps over 15 runs; max |total - parts| " + num(gap, 3)};
}

// ---------------------------------------------------------------------------
// 3. phi arithmetic

Verdict phi_arithmetic() {
  const double baseline = *phi(0.265644, 0.250569);
  const double scan = *phi(0.259522, 0.226078);
  const bool pass = std::abs(baseline - 1.060161) < 1e-5 && std::abs(scan - 1.147933) < 1e-5;
  return {pass, "baseline " + num(baseline, 8) + ", scan " + num(scan, 8)};
}

// ---------------------------------------------------------------------------
// 4. memory update

Verdict memory_update() {
  Clustering c;
  c.centroids = MatrixXd::Zero(2, 2);
  c.assignments = {0, 1};
  MatrixXd rows(2, 2);
  rows << 1, 0, 0, 1;
  MemoryBank bank(rows, {0, 1}, 2, c);
  RowVector<double> input(2);
  input << 3, 4;
  bank.momentum_update(0, input, 1.0);
  const bool first = bank.row(0)(0) == 0.6 && bank.row(0)(1) == 0.8;
  MemoryBank bank2(rows, {0, 1}, 2, c);
  bank2.momentum_update(0, input, 0.5);
  const bool second = bank2.row(0)(0) == 0.8 && bank2.row(0)(1) == 0.4;
  return {first && second, "beta=1 -> (" + num(bank.row(0)(0), 17) + ", " + num(bank.row(0)(1), 17) +
                               "); beta=0.5 -> (" + num(bank2.row(0)(0), 17) + ", " + num(bank2.row(0)(1), 17) + ")"};
}

// ---------------------------------------------------------------------------
// 5. k-means

Verdict kmeans_checks() {
  bool monotone = true;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SeededRng data(seed);
    const MatrixXd x = random_matrix(60, 3, data);
    SeededRng rng(seed + 7);
    const Clustering c = kmeans_fit(x, {6}, rng);
    for (std::size_t t = 1; t < c.inertia_history.size(); ++t)
      monotone = monotone && c.inertia_history[t] <= c.inertia_history[t - 1];
  }

  int hits = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SeededRng data(seed);
    const int n = 5 + static_cast<int>(data.below(4));
    const int k = 2 + static_cast<int>(data.below(2));
    MatrixXd x(n, 2);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = data.uniform(-5, 5);
    SeededRng rng(seed + 1000);
    if (std::abs(kmeans_fit(x, {k}, rng).inertia - brute_force_inertia(x, k)) <= 1e-9) ++hits;
  }

  double min_ari = 1.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    const SplitData base = split_from_synthetic(synthesize(cfg), Split::Base);
    std::vector<int> truth;
    int k = 0;
    std::map<std::pair<int, int>, int> ids;
    for (std::size_t i = 0; i < base.size(); ++i) {
      auto [it, fresh] = ids.emplace(std::pair{base.labels[i], base.subcluster_ids[i]}, k);
      if (fresh) ++k;
      truth.push_back(it->second);
    }
    SeededRng rng(seed);
    min_ari = std::min(min_ari, adjusted_rand_index(kmeans_fit(base.samples, {k}, rng).assignments, truth));
  }
  const bool pass = monotone && hits >= 95 && min_ari > 0.9;
  return {pass, std::string("monotone ") + (monotone ? "yes" : "no") + "; brute-force optimum " +
                    std::to_string(hits) + "/100; min ARI over 5 seeds " + num(min_ari, 4)};
}

// ---------------------------------------------------------------------------
// 6. oracle episodes

Verdict oracle_episodes() {
  std::vector<int> labels;
  for (int c = 0; c < 6; ++c) labels.insert(labels.end(), 20, c);
  MatrixXd features = MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), 6);
  for (std::size_t i = 0; i < labels.size(); ++i) features(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  std::string detail;
  bool pass = true;
  for (auto [n, k] : {std::pair{2, 1}, {2, 5}, {5, 1}, {5, 5}}) {
    EvalConfig cfg;
    cfg.n_way = n;
    cfg.k_shot = k;
    cfg.episodes = 100;
    const EvalReport r = run_episodes(features, labels, cfg);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%d-way %d-shot %.2f ± %.2f / %.2f ± %.2f", n, k, 100 * r.accuracy.mean,
                  100 * r.accuracy.half_width, 100 * r.macro_f1.mean, 100 * r.macro_f1.half_width);
    detail += (detail.empty() ? "" : "; ") + std::string(buf);
    pass = pass && r.accuracy.mean == 1.0 && r.accuracy.half_width == 0.0 && r.macro_f1.mean == 1.0 &&
           r.macro_f1.half_width == 0.0;
  }
  return {pass, detail};
}

// ---------------------------------------------------------------------------
// 7/8 verdicts

Verdict table6(const Table6Runs& t) {
  const auto& scan = t.by_method.at("scan");
  const auto& nop = t.by_method.at("no_purity");
  const auto& base = t.by_method.at("baseline");
  const double err_scan = mean_of(scan, &MethodRun::final_cluster_error);
  const double err_nop = mean_of(nop, &MethodRun::final_cluster_error);
  const double acc_scan = mean_of(scan, &MethodRun::accuracy);
  const double acc_base = mean_of(base, &MethodRun::accuracy);
  double paired = 0.0;
  for (std::size_t i = 0; i < scan.size(); ++i) paired += scan[i].accuracy - base[i].accuracy;
  paired /= static_cast<double>(scan.size());

  const bool a = err_scan < err_nop;
  const bool b = acc_scan >= acc_base && paired > 0.0;
  const bool fast = t.seconds < 600.0;
  std::string d = "(a) cluster error scan " + num(100 * err_scan, 4) + "% vs no_purity " + num(100 * err_nop, 4) +
                  "% [" + (a ? "ok" : "not <") + "; per seed scan " + per_seed(scan, &MethodRun::final_cluster_error, 100) +
                  " / no_purity " + per_seed(nop, &MethodRun::final_cluster_error, 100) + "]; (b) 2-way 1-shot scan " +
                  num(100 * acc_scan, 5) + "% vs baseline " + num(100 * acc_base, 5) + "%, paired diff " +
                  num(100 * paired, 4) + " pts [" + (b ? "ok" : "not > 0") + "]; " + num(t.seconds, 3) + " s for 15 runs";
  return {a && b && fast, d};
}

Verdict table7(const Table6Runs& t) {
  const auto& scan = t.by_method.at("scan");
  const auto& base = t.by_method.at("baseline");
  double d_intra = 0.0, d_phi = 0.0;
  int intra_wins = 0, phi_wins = 0;
  for (std::size_t i = 0; i < scan.size(); ++i) {
    d_intra += scan[i].d_intra - base[i].d_intra;
    d_phi += scan[i].phi - base[i].phi;
    intra_wins += scan[i].d_intra < base[i].d_intra;
    phi_wins += scan[i].phi > base[i].phi;
  }
  d_intra /= static_cast<double>(scan.size());
  d_phi /= static_cast<double>(scan.size());
  const bool pass = d_intra < 0.0 && d_phi > 0.0;
  return {pass, "mean paired D_intra(scan - baseline) " + num(d_intra, 4) + " (scan lower on " +
                    std::to_string(intra_wins) + "/5), mean paired phi(scan - baseline) " + num(d_phi, 4) +
                    " (scan higher on " + std::to_string(phi_wins) + "/5); D_intra scan " +
                    per_seed(scan, &MethodRun::d_intra) + " / baseline " + per_seed(base, &MethodRun::d_intra) +
                    "; phi scan " + per_seed(scan, &MethodRun::phi) + " / baseline " + per_seed(base, &MethodRun::phi)};
}

// ---------------------------------------------------------------------------
// 9. determinism through the installed binary

int shell(const std::string& cmd) {
  const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
}

bool same_tree(const fs::path& a, const fs::path& b, bool data_only) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file() && e.path().filename() != ".lock") files.push_back(fs::relative(e.path(), a));
  if (files.empty()) return false;
  for (const auto& f : files) {
    if (!fs::exists(b / f)) return false;
    const bool text = f.extension() == ".csv" || f.extension() == ".txt";
    if (data_only && text) {
      if (data_rows(a / f) != data_rows(b / f)) return false;
    } else if (slurp(a / f) != slurp(b / f)) {
      return false;
    }
  }
  return true;
}

Verdict determinism() {
  TempDir dir("accept");
  const std::string tool = SCAN_TOOL_PATH;
  const fs::path cfg = dir / "run.cfg";
  std::ofstream(cfg) << "samples_per_class = 60\nepochs = 12\nwarmup_epochs = 3\ncheckpoint_every = 4\nepisodes = 100\n";
  const std::string pre = tool + " --config " + cfg.string() + " --seed 3 ";
  auto path = [&](const std::string& s) { return (dir / s).string(); };

  std::vector<std::string> failures;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };
  expect(shell(pre + "synth --out " + path("d1")) == 0, "synth");
  expect(shell(pre + "synth --out " + path("d2")) == 0, "synth rerun");
  expect(same_tree(dir / "d1", dir / "d2", false), "synth files differ");

  expect(shell(pre + "pretrain --data " + path("d1") + " --out " + path("r1")) == 0, "pretrain");
  expect(shell(pre + "pretrain --data " + path("d1") + " --out " + path("r2")) == 0, "pretrain rerun");
  expect(same_tree(dir / "r1", dir / "r2", true), "pretrain outputs differ");

  for (const char* sub : {"eval", "analyze"}) {
    for (const char* run : {"r1", "r2"})
      expect(shell(pre + sub + " --ckpt " + path(run) + " --data " + path("d1")) == 0, sub);
    const fs::path out = std::string(sub) == "eval" ? "eval" : "analysis";
    expect(same_tree(dir / "r1" / out, dir / "r2" / out, true), std::string(sub) + " outputs differ");
  }

  int resumes = 0;
  for (int stop : {2, 3, 7, 11}) {
    const std::string run = "stop" + std::to_string(stop);
    expect(shell(pre + "pretrain --data " + path("d1") + " --out " + path(run) + " --stop-after " +
                 std::to_string(stop)) == 0,
           "interrupted pretrain");
    expect(shell(pre + "pretrain --data " + path("d1") + " --out " + path(run) + " --resume") == 0, "resume");
    const bool same = same_tree(dir / "r1" / "checkpoint", dir / run / "checkpoint", true) &&
                      data_rows(dir / "r1" / "training_log.csv") == data_rows(dir / run / "training_log.csv") &&
                      data_rows(dir / "r1" / "cluster_occupancy.csv") == data_rows(dir / run / "cluster_occupancy.csv");
    expect(same, "resume after epoch " + std::to_string(stop) + " differs");
    resumes += same;
  }
  std::string d = "synth/pretrain/eval/analyze reruns compared; resume matched " + std::to_string(resumes) + "/4 stop points";
  for (const auto& f : failures) d += "; " + f;
  return {failures.empty(), d};
}

// ---------------------------------------------------------------------------
// 10. 2-way balance identity

Verdict balance_identity() {
  std::vector<int> labels;
  for (int c = 0; c < 4; ++c) labels.insert(labels.end(), 15, c);
  SeededRng rng(8);
  const MatrixXd features = random_matrix(static_cast<Eigen::Index>(labels.size()), 5, rng);
  int checked = 0, exact = 0;
  for (int q : {1, 3, 5, 10}) {
    EvalConfig cfg;
    cfg.n_way = 2;
    cfg.k_shot = 1;
    cfg.q_per_class = q;
    cfg.episodes = 100;
    for (const auto& e : run_episodes(features, labels, cfg).episodes) {
      const auto& m = e.confusion;
      // per-class recall r_c = m(c,c)/q and true-negative rate t_c = m(1-c,1-c)/q,
      // so both class averages and the accuracy equal trace / 2q
      const long sens_num = m(0, 0) + m(1, 1);
      const long spec_num = m(1, 1) + m(0, 0);
      const bool balanced = m.row(0).sum() == q && m.row(1).sum() == q;
      const bool identity = balanced && sens_num == m.trace() && spec_num == m.trace() &&
                            e.accuracy == static_cast<double>(m.trace()) / (2.0 * q) &&
                            std::abs(e.sensitivity - e.accuracy) <= 1e-15 && std::abs(e.specificity - e.accuracy) <= 1e-15;
      ++checked;
      exact += identity;
    }
  }
  return {exact == checked, std::to_string(exact) + "/" + std::to_string(checked) + " balanced 2-way episodes"};
}

}  // namespace

int main(int argc, char** argv) {
  const bool strict = argc > 1 && std::strcmp(argv[1], "--strict") == 0;
  const auto t0 = Clock::now();

  report(1, "gradient suite", gradient_suite());
  std::cout << "... running 5 seeds x {scan, no_purity, baseline} x 60 epochs" << std::endl;
  const Table6Runs runs = run_table6();
  report(2, "loss additivity", additivity(runs));
  report(3, "phi arithmetic", phi_arithmetic());
  report(4, "memory update examples", memory_update());
  report(5, "k-means", kmeans_checks());
  report(6, "oracle episodes", oracle_episodes());
  report(7, "purity ablation direction", table6(runs));
  report(8, "discriminability direction", table7(runs));
  report(9, "determinism and resume", determinism());
  report(10, "2-way balance identity", balance_identity());

  std::cout << (10 - g_failed) << "/10 criteria passed in " << num(seconds_since(t0), 3) << " s" << std::endl;
  return strict && g_failed > 0 ? 1 : 0;
}
