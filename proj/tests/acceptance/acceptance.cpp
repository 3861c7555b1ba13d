// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "ulab/cli.hpp"
#include "ulab/experiment.hpp"

using namespace ulab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

int failures = 0;

void run(int n, const std::string& name, const std::function<Outcome()>& fn) {
  Outcome o;
  Stopwatch sw;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  failures += !o.pass;
  std::cout << (o.pass ? "PASS" : "FAIL") << " [" << n << "] " << name << ": " << o.detail << " ("
            << fmt(sw.seconds(), 3) << " s)" << std::endl;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

const std::string kConfigDir = std::string(ULAB_SOURCE_DIR) + "/configs/";

// ---------------------------------------------------------------------------
// Shared small setup for the algebraic checks.

struct Small {
  Dataset data;
  ModelState original;
  UnlearnTask task;
  ScoreTable scores;
  ModelSpec model{{32}};
  TrainConfig train;
  UnlearnConfig unlearn;
  MiaConfig mia;
};

const Small& small_setup() {
  static const Small s = [] {
    Small s;
    s.data = make_dataset(DatasetSpec{.n_classes = 4, .n_train = 400, .n_test = 200, .input_dim = 10, .seed = 11});
    s.train.epochs = 15;
    s.train.seed = 11;
    const auto r = train_from_scratch(s.data, s.data.train_ids(), s.model, s.train);
    s.original = r.model;
    s.scores = learning_event_proxies(r.log).confidence;
    s.task = select_forget(s.scores, s.data.train_ids(), 20);
    s.unlearn.epochs = 3;
    s.unlearn.seed = 11;
    s.mia.n_samples = 150;
    s.mia.seed = 11;
    return s;
  }();
  return s;
}

// ---------------------------------------------------------------------------
// Per-seed default-dataset state shared by criteria 5-9 and 11.

struct SeedRun {
  SeedPlan plan;
  Dataset data;
  TrainResult original;
  ScoreTable mem;
};

const ExperimentConfig& default_config() {
  static const ExperimentConfig c = load_config(kConfigDir + "default.ini");
  return c;
}

const std::vector<SeedRun>& seed_runs() {
  static const std::vector<SeedRun> runs = [] {
    std::vector<SeedRun> out;
    const auto& cfg = default_config();
    for (auto s : cfg.seeds) {
      SeedRun r;
      r.plan = plan_for(cfg, s);
      r.data = make_dataset(r.plan.dataset);
      r.mem = estimate_memorization(r.data, r.plan.mem);
      r.original = train_original(r.plan, r.data);
      std::cerr << "  seed " << s << ": memorization " << fmt(r.mem.wall_time, 3) << " s, original "
                << fmt(r.original.wall_time, 3) << " s" << std::endl;
      out.push_back(std::move(r));
    }
    return out;
  }();
  return runs;
}

struct RumRun {
  ScoreKind proxy;
  std::string approach;
  EvalReport report;
};

const std::vector<RumRun>& rum_runs() {
  static const std::vector<RumRun> runs = [] {
    std::vector<RumRun> out;
    const auto& cfg = default_config();
    for (const auto& s : seed_runs())
      for (auto proxy : cfg.rum.proxies)
        for (const auto& row : rum_rows(cfg, s.plan, s.data, s.original, proxy))
          if (row.algorithm == "neggrad_plus") out.push_back({proxy, row.approach, row.report});
    return out;
  }();
  return runs;
}

double rum_mean(ScoreKind proxy, const std::string& approach, double EvalReport::*field) {
  std::vector<double> v;
  for (const auto& r : rum_runs())
    if (r.proxy == proxy && r.approach == approach) v.push_back(r.report.*field);
  return mean(v);
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  Stopwatch sw;
  double worst_w = 0.0, worst_x = 0.0;
  std::size_t checked = 0, skipped = 0;
  Rng rng(2024);
  for (int t = 0; t < 100; ++t) {
    std::vector<int> dims{2 + static_cast<int>(rng.below(5))};
    const int depth = 1 + static_cast<int>(rng.below(2));
    for (int l = 0; l < depth; ++l) dims.push_back(3 + static_cast<int>(rng.below(6)));
    const int classes = 2 + static_cast<int>(rng.below(4));
    dims.push_back(classes);
    const auto act = t % 2 ? Activation::relu : Activation::tanh;
    const auto m = ModelState::init(dims, 1000 + static_cast<std::uint64_t>(t), act);
    const auto c = test::gradient_check(m, test::random_batch(5000 + static_cast<std::uint64_t>(t), 4, dims[0], classes));
    worst_w = std::max(worst_w, c.max_weight_error);
    worst_x = std::max(worst_x, c.max_input_error);
    checked += c.checked;
    skipped += c.skipped;
  }
  const double secs = sw.seconds();
  return {worst_w <= 1e-4 && worst_x <= 1e-4 && secs < 60.0,
          "max rel err weights " + fmt(worst_w, 3) + ", inputs " + fmt(worst_x, 3) + " over " +
              std::to_string(checked) + " coordinates (" + std::to_string(skipped) + " kink crossings skipped)"};
}

Outcome reduction_identities() {
  const auto& s = small_setup();
  auto ft = s.unlearn;
  ft.algorithm = Algorithm::fine_tune;
  auto ng = s.unlearn;
  ng.algorithm = Algorithm::neggrad_plus;
  ng.beta = 1.0;
  auto l1 = s.unlearn;
  l1.algorithm = Algorithm::l1_sparse;
  l1.gamma = 0.0;
  const auto ref = unlearn(s.original, s.data, s.task, ft).model;
  const bool a = bit_identical(unlearn(s.original, s.data, s.task, ng).model, ref);
  const bool b = bit_identical(unlearn(s.original, s.data, s.task, l1).model, ref);
  auto ngp = s.unlearn;
  ngp.algorithm = Algorithm::neggrad_plus;
  ngp.beta = 0.95;
  const bool c = bit_identical(run_approach(Approach::rum_f, s.original, s.data, s.task, s.scores, 1, ngp, 1).model,
                               run_approach(Approach::vanilla, s.original, s.data, s.task, s.scores, 1, ngp, 1).model);
  auto yn = [](bool v) { return v ? std::string("identical") : std::string("DIFFER"); };
  return {a && b && c, "NegGrad+(beta=1) vs fine-tune " + yn(a) + "; L1(gamma=0) vs fine-tune " + yn(b) +
                           "; RUM^F(K=1) vs vanilla " + yn(c)};
}

Outcome metric_bounds() {
  const auto& s = small_setup();
  const auto oracle = retrain(s.data, s.task, s.model, s.train).model;
  const auto self = evaluate(oracle, oracle, s.data, s.task, s.mia);
  bool in_bounds = true;
  int n = 0;
  for (auto alg : {Algorithm::fine_tune, Algorithm::neggrad_plus, Algorithm::l1_sparse, Algorithm::salun})
    for (auto a : {Approach::rum_f, Approach::vanilla, Approach::shuffle}) {
      auto u = s.unlearn;
      u.algorithm = alg;
      const auto res = run_approach(a, s.original, s.data, s.task, s.scores, 3, u, 1);
      const auto r = evaluate(res.model, oracle, s.data, s.task, s.mia);
      for (double v : {r.tow, r.tow_mia, r.mia_u, r.mia_r}) in_bounds = in_bounds && v >= 0.0 && v <= 1.0;
      ++n;
    }
  const double hand = tow_from_gaps(0.10, 0.01, 0.02);
  // (1 - 0.10) * (1 - 0.01) * (1 - 0.02) = 0.87318
  const bool hand_ok = std::abs(hand - 0.87318) <= 1e-12;
  const bool fixed = self.tow == 1.0 && self.tow_mia == 1.0;
  return {in_bounds && hand_ok && fixed, std::to_string(n) + " runs in [0,1]: " + (in_bounds ? "yes" : "NO") +
                                             "; ToW(r,r)=" + fmt(self.tow, 17) + ", ToW-MIA(r,r)=" +
                                             fmt(self.tow_mia, 17) + "; hand case " + fmt(hand, 17)};
}

Outcome estimator_vs_loo() {
  const auto data = make_dataset(DatasetSpec{.n_classes = 3,
                                             .n_train = 24,
                                             .n_test = 12,
                                             .input_dim = 5,
                                             .atypical_fraction = 0.125,
                                             .noise_fraction = 0.125,
                                             .seed = 1});
  TrainConfig tc;
  tc.epochs = 40;
  tc.batch_size = 8;
  MemConfig mc;
  mc.n_models = 200;
  mc.subset_fraction = 0.7;
  mc.train = tc;
  mc.model = ModelSpec{{16}};
  mc.seed = 1;
  Stopwatch sw;
  const auto est = estimate_memorization(data, mc);
  const auto loo = exact_loo(data, mc.model, tc, 20, 1);
  const double rho = spearman(est, loo);
  const double secs = sw.seconds();
  return {rho >= 0.8 && secs < 600.0, "Spearman(T=200 estimate, S=20 leave-one-out) = " + fmt(rho) + " on n=24, " +
                                          std::to_string(est.undefined_ids().size()) + " undefined"};
}

Outcome noisy_memorization() {
  std::vector<double> noisy, clean;
  for (const auto& r : seed_runs()) {
    noisy.push_back(r.mem.mean_over(r.data.ids_with(Provenance::noisy)));
    clean.push_back(r.mem.mean_over(r.data.ids_with(Provenance::clean)));
  }
  const double gap = mean(noisy) - mean(clean);
  return {gap >= 0.1, "mean memorization noisy " + fmt(mean(noisy)) + " vs clean " + fmt(mean(clean)) + " (gap " +
                          fmt(gap) + ", " + std::to_string(noisy.size()) + " seeds)"};
}

Outcome proxy_fidelity() {
  std::map<ScoreKind, std::vector<double>> rho;
  for (const auto& r : seed_runs())
    for (auto k : {ScoreKind::confidence, ScoreKind::binary_accuracy, ScoreKind::holdout_retraining})
      rho[k].push_back(spearman(proxy_from_original(k, r.original, r.data, r.plan), r.mem));
  const double c = mean(rho[ScoreKind::confidence]), b = mean(rho[ScoreKind::binary_accuracy]),
               h = mean(rho[ScoreKind::holdout_retraining]);
  return {c <= -0.3 && b <= -0.3 && h >= 0.2,
          "mean Spearman vs memorization: confidence " + fmt(c) + ", binary_accuracy " + fmt(b) +
              ", holdout_retraining " + fmt(h)};
}

Outcome proxy_efficiency() {
  double worst = 0.0;
  for (const auto& r : seed_runs()) {
    const auto conf = proxy_from_original(ScoreKind::confidence, r.original, r.data, r.plan);
    worst = std::max(worst, 100.0 * conf.wall_time / r.mem.wall_time);
  }
  return {worst <= 5.0, "confidence proxy time is at most " + fmt(worst, 3) + "% of memorization time"};
}

Outcome rum_superiority() {
  const auto& cfg = default_config();
  bool tow_ok = true;
  int mia_wins = 0;
  std::string detail;
  for (auto p : cfg.rum.proxies) {
    const double rf = rum_mean(p, "rum_f", &EvalReport::tow), va = rum_mean(p, "vanilla", &EvalReport::tow),
                 sh = rum_mean(p, "shuffle", &EvalReport::tow);
    const double rfm = rum_mean(p, "rum_f", &EvalReport::tow_mia), vam = rum_mean(p, "vanilla", &EvalReport::tow_mia),
                 shm = rum_mean(p, "shuffle", &EvalReport::tow_mia);
    tow_ok = tow_ok && rf > va && rf > sh;
    mia_wins += rfm > vam && rfm > shm;
    detail += std::string(detail.empty() ? "" : "; ") + std::string(to_string(p)) + " ToW " + fmt(rf) + "/" +
              fmt(va) + "/" + fmt(sh) + " ToW-MIA " + fmt(rfm) + "/" + fmt(vam) + "/" + fmt(shm);
  }
  return {tow_ok && mia_wins >= 2, "rum_f/vanilla/shuffle means: " + detail + "; ToW-MIA wins " +
                                       std::to_string(mia_wins) + "/" + std::to_string(cfg.rum.proxies.size())};
}

Outcome runtime_ratio() {
  std::vector<double> rf, va;
  for (const auto& r : rum_runs()) {
    if (r.approach == "rum_f") rf.push_back(r.report.wall_time_s);
    if (r.approach == "vanilla") va.push_back(r.report.wall_time_s);
  }
  const double ratio = mean(rf) / mean(va);
  return {ratio >= 1.5 && ratio <= 3.5, "rum_f(K=3) " + fmt(mean(rf), 3) + " s vs vanilla " + fmt(mean(va), 3) +
                                            " s, ratio " + fmt(ratio, 3)};
}

Outcome gini_lorenz() {
  const std::vector<double> hand{0, 0, 0, 1};
  const double g = gini(hand);
  bool scale_ok = true, area_ok = true;
  double worst_area = 0.0;
  Rng rng(77);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x, y;
    const int n = 1 + static_cast<int>(rng.below(2000));
    for (int i = 0; i < n; ++i) x.push_back(std::pow(rng.uniform(), 1.0 + 4.0 * rng.uniform()));
    const double c = 1e-3 + 1e3 * rng.uniform();
    for (double v : x) y.push_back(c * v);
    scale_ok = scale_ok && std::abs(gini(x) - gini(y)) <= 1e-12;
    const auto pts = lorenz(x);
    double area = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i)
      area += 0.5 * (pts[i].share + pts[i - 1].share) * (pts[i].population - pts[i - 1].population);
    const double err = std::abs(gini(x) - 2.0 * (0.5 - area));
    worst_area = std::max(worst_area, err);
    area_ok = area_ok && err <= 1e-9;
  }
  return {std::abs(g - 0.75) <= 1e-12 && scale_ok && area_ok,
          "gini(0,0,0,1)=" + fmt(g, 17) + "; scale invariance " + (scale_ok ? "holds" : "BROKEN") +
              "; max |gini - 2*area| " + fmt(worst_area, 3)};
}

Outcome sequential_trend() {
  const auto& cfg = default_config();
  int monotone = 0;
  std::string series;
  for (const auto& r : seed_runs()) {
    auto sc = sequential_config(cfg, r.plan, Algorithm::neggrad_plus);
    sc.tracks = {Approach::rum_f};
    const auto res = sequential_stability(r.data, r.original.model, sc);
    const auto& g = res.gini_series.at(Approach::rum_f);
    monotone += non_increasing(g);
    series += std::string(series.empty() ? "" : "; ");
    for (std::size_t i = 0; i < g.size(); ++i) series += (i ? ">" : "") + fmt(g[i], 3);
  }
  return {monotone >= 4, std::to_string(monotone) + "/" + std::to_string(seed_runs().size()) +
                             " seeds non-increasing (" + std::string(to_string(cfg.rum.sequential_proxy)) +
                             " proxy): " + series};
}

int cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"unlearn-lab"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

Outcome determinism() {
  const auto root = test::scratch_dir("acceptance_determinism");
  const auto cfg = kConfigDir + "small.ini";
  const std::vector<std::string> subs{"gen-data", "train", "mem", "proxy", "fidelity", "rum", "sequential"};
  for (const auto& [dir, jobs] : std::vector<std::pair<std::string, std::string>>{{"a", "1"}, {"b", "1"}, {"c", "2"}})
    for (const auto& sub : subs)
      if (int code = cli({sub, "--config", cfg, "--out", (root / dir).string(), "--jobs", jobs}); code != 0)
        return {false, sub + " exited with " + std::to_string(code)};
  const auto rerun = test::first_difference(root / "a", root / "b");
  const auto jobs = test::first_difference(root / "a", root / "c");
  const auto n = test::files_under(root / "a").size();
  fs::remove_all(root);
  return {rerun.empty() && jobs.empty(),
          std::to_string(subs.size()) + " subcommands, " + std::to_string(n) +
              " files; rerun: " + (rerun.empty() ? "identical" : "differs at " + rerun) +
              "; --jobs 2: " + (jobs.empty() ? "identical" : "differs at " + jobs) + " (timing fields masked)"};
}

}  // namespace

int main() {
  run(1, "gradient correctness", gradient_correctness);
  run(2, "reduction identities", reduction_identities);
  run(3, "metric bounds and fixed points", metric_bounds);
  run(4, "estimator vs exact leave-one-out", estimator_vs_loo);
  run(5, "noisy-label memorization", noisy_memorization);
  run(6, "proxy fidelity signs", proxy_fidelity);
  run(7, "proxy efficiency", proxy_efficiency);
  run(8, "RUM^F superiority", rum_superiority);
  run(9, "runtime pattern", runtime_ratio);
  run(10, "Gini/Lorenz correctness", gini_lorenz);
  run(11, "sequential stability trend", sequential_trend);
  run(12, "determinism", determinism);
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
