// Acceptance harness: prints one PASS/FAIL line per criterion. Per-seed
// detail lines are indented and never start with PASS or FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "aclql/envs.hpp"
#include "aclql/quality.hpp"
#include "aclql/tabular.hpp"
#include "aclql/trainer.hpp"
#include "cli.hpp"
#include "gradient_suite.hpp"
#include "support.hpp"
#include "weight_batch.hpp"

namespace fs = std::filesystem;
using namespace aclql;

namespace {

struct Outcome {
  bool pass = false;
  std::string summary;
};

struct Criterion {
  int id;
  const char* title;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void detail(const std::string& line) { std::cout << "    " << line << "\n" << std::flush; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("aclql_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

constexpr int kDatasetEpisodes = 200;

double behavior_return(const OfflineDataset& ds) {
  double total = 0.0;
  for (const auto& ep : ds.episodes) {
    for (const auto& t : ep.transitions) total += t.reward;
  }
  return total / static_cast<double>(ds.episodes.size());
}

// ---------------------------------------------------------------------------

Outcome tabular_suite() {
  tabular::SuiteOptions opt;
  opt.trials = 100;
  opt.seed = 7;
  opt.gamma = 0.9;
  opt.alpha = 10.0;
  const tabular::SuiteReport rep = tabular::run_suite(opt);
  for (const auto& f : rep.families) {
    detail(f.name + ": " + std::to_string(f.checks) + " checks, " + std::to_string(f.failures) + " failed, max residual " +
           fmt("%.2e", f.max_residual));
  }
  for (std::size_t i = 0; i < rep.violations.size() && i < 5; ++i) detail("violation: " + rep.violations[i]);
  const bool pass = rep.passed() && rep.instances == 100 && rep.sandwich_instances > 0;
  return {pass, std::to_string(rep.instances) + " MDPs, " + std::to_string(rep.checks_passed) + " checks passed, " +
                    std::to_string(rep.checks_failed) + " failed, " + std::to_string(rep.sandwich_instances) +
                    " sandwich instances, max residual " + fmt("%.2e", rep.max_residual)};
}

Outcome cql_reduction() {
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 1000; ++k) {
    Rng rng = Rng::stream(k, RngComponent::kSynthetic, 100);
    const std::size_t n = 1 + rng.index(16);
    const std::size_t n_ood = 1 + rng.index(6);
    const BatchSample b = test::random_batch(rng, n, n_ood);
    const TwinCritic c = test::random_critics(rng, 3, 2);
    const double alpha = rng.uniform(0.01, 50.0);
    const double acl = acl_penalty(c, Vector::Constant(b.ood_actions.rows(), alpha), Vector::Constant(b.actions.rows(), alpha),
                                   b, nullptr);
    worst = std::max(worst, std::abs(acl - cql_penalty(c, b, alpha, nullptr)));
  }
  detail("penalty: max |acl - cql| over 1000 batches = " + fmt("%.2e", worst));

  const OfflineDataset ds = gen_dataset("pointmass", DatasetQuality::kMedium, kDatasetEpisodes, 11);
  RunConfig acl = RunConfig::desk();
  acl.seed = 11;
  acl.train_steps = 500;
  acl.eval_every = 100;
  acl.clamp_weights = true;
  RunConfig cql = acl;
  cql.algorithm = Algorithm::kCql;
  cql.clamp_weights = false;
  const fs::path da = scratch("c2_acl"), dc = scratch("c2_cql");
  train_run(ds, acl, da);
  train_run(ds, cql, dc);
  const std::string ma = slurp(da / "metrics.csv"), mc = slurp(dc / "metrics.csv");
  const bool same = !ma.empty() && ma == mc;
  detail(std::string("trainer: 500-step metrics.csv ") + (same ? "identical" : "DIFFERENT") + " (" +
         std::to_string(ma.size()) + " bytes)");
  return {worst <= 1e-9 && same, "max penalty difference " + fmt("%.2e", worst) + ", metrics CSV " +
                                     (same ? "bit-identical" : "differs")};
}

Outcome gradient_checks() {
  std::map<std::string, double> worst;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (std::size_t n : {2u, 8u}) {
      for (const auto& r : test::gradient_suite(seed, n)) worst[r.loss] = std::max(worst[r.loss], r.max_rel_error);
    }
  }
  bool pass = true;
  double overall = 0.0;
  for (const auto& [loss, err] : worst) {
    detail(loss + ": max relative error " + fmt("%.2e", err));
    pass = pass && err <= 1e-4;
    overall = std::max(overall, err);
  }
  return {pass, std::to_string(worst.size()) + " losses x 10 seeds x batch {2, 8}, max relative error " +
                    fmt("%.2e", overall)};
}

Outcome log_bound() {
  Rng rng = Rng::stream(0, RngComponent::kSynthetic, 400);
  std::vector<double> xs;
  for (int i = 0; i < 10000; ++i) xs.push_back(std::exp(rng.uniform(std::log(1e-6), std::log(1e3))));
  // Probes around the tangent point.
  for (double d : {0.0, 1e-15, 1e-12, 1e-10, 1e-9, 1e-8, 1e-6, 1e-4}) {
    xs.push_back(1.0 + d);
    xs.push_back(1.0 - d);
  }
  std::size_t violations = 0, equalities = 0, stray = 0;
  for (double x : xs) {
    if (!(x > 1e-6 && x < 1e3)) continue;
    const double gap = (x - 1.0) - std::log(x);
    if (gap < 0.0) ++violations;
    if (gap == 0.0) {
      ++equalities;
      if (std::abs(x - 1.0) > 1e-9) ++stray;
    }
  }
  detail(std::to_string(xs.size()) + " points, " + std::to_string(violations) + " violations, " +
         std::to_string(equalities) + " equalities, " + std::to_string(stray) + " away from x = 1");
  return {violations == 0 && stray == 0 && equalities > 0,
          "ln x <= x - 1 on " + std::to_string(xs.size()) + " points, equality only within 1e-9 of 1"};
}

Outcome quality_identities() {
  bool pass = true;
  std::size_t rows = 0;
  double worst_gap = 0.0;
  for (auto tier : {DatasetQuality::kExpert, DatasetQuality::kMedium, DatasetQuality::kMediumReplay,
                    DatasetQuality::kRandom}) {
    for (std::uint64_t seed : {0u, 1u, 2u}) {
      const OfflineDataset ds = gen_dataset("pointmass", tier, 50, seed);
      const DatasetStats st = compute_stats(ds, ds.gamma);
      const double scale = st.r_max - st.r_min;
      for (double lambda : {0.0, 0.25, 0.5, 1.0}) {
        for (const auto& a : annotate_dataset(ds, st, lambda)) {
          ++rows;
          pass = pass && a.m >= 0.0 && a.m <= 1.0;
          if (lambda == 0.0) pass = pass && a.m == a.r_norm;
          const GapPair g = gaps(a.m, scale);
          worst_gap = std::max(worst_gap, std::abs(g.d_ord + g.d_cql - scale));
        }
      }
      std::size_t longest = 0;
      for (const auto& ep : ds.episodes) longest = std::max(longest, ep.size());
      for (const auto& ep : ds.episodes) {
        const auto mc = mc_returns(ep, ds.gamma);
        pass = pass && nstep_sarsa_returns(ep, static_cast<int>(ep.size()), ds.gamma) == mc;
        pass = pass && nstep_sarsa_returns(ep, static_cast<int>(longest), ds.gamma) == mc;
        pass = pass && nstep_sarsa_returns(ep, 1000000, ds.gamma) == mc;
      }
    }
  }
  pass = pass && worst_gap <= 1e-9;
  detail(std::to_string(rows) + " annotations over 4 tiers x 3 seeds x 4 lambdas; max |d_ord + d_cql - R| = " +
         fmt("%.2e", worst_gap));
  return {pass, "m in [0,1], gap sum, lambda=0 and n>=T collapses hold exactly"};
}

Outcome monotonicity_learning() {
  int passed = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RunConfig c = RunConfig::desk();
    c.seed = seed;
    c.lr_weight = 3e-3;
    const BatchSample b = test::monotone_quality_batch(seed);
    Rng init = Rng::stream(seed, RngComponent::kInit, 3);
    Mlp w = Mlp::initialized(ApproximatorSpec::weight_net(4, 2, c.hidden), init);
    for (int step = 0; step < 2000; ++step) {
      Rng pairing = Rng::stream(seed, RngComponent::kPairing, static_cast<std::uint64_t>(step));
      weight_step(w, b, c, pairing);
    }
    const WeightOutputs out = evaluate_weights(w, b);
    const double rb = test::spearman(out.w_beta_in, b.m_in);
    const double rm = test::spearman(out.w_mu_ood, b.m_ood);
    const bool ok = rb >= 0.9 && rm <= -0.9;
    passed += ok ? 1 : 0;
    detail("seed " + std::to_string(seed) + ": rho(w_beta, m) = " + fmt("%.3f", rb) + ", rho(w_mu, m) = " +
           fmt("%.3f", rm) + (ok ? "" : "  <- miss"));
  }
  return {passed == 5, std::to_string(passed) + "/5 seeds reach rho_beta >= 0.9 and rho_mu <= -0.9 in 2000 steps"};
}

struct TrainSummary {
  double avg_q = 0.0;
  double score = 0.0;
};

TrainSummary train_once(const OfflineDataset& ds, RunConfig c, const ScoreAnchors& anchors) {
  const RunResult r = train_run(ds, c);
  const MetricsRow& last = r.rows.back();
  return {last.avg_q_dataset, normalized_score(last.eval_mean, anchors)};
}

ScoreAnchors anchors() { return registry_entry(load_registry(default_registry_path()), "pointmass").anchors; }

Outcome q_sandwich() {
  const ScoreAnchors an = anchors();
  int passed = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const OfflineDataset ds = gen_dataset("pointmass", DatasetQuality::kMedium, kDatasetEpisodes, seed);
    RunConfig c = RunConfig::desk();
    c.seed = seed;
    c.alpha_cql_anchor = 10.0;
    std::map<Algorithm, double> q;
    for (Algorithm a : {Algorithm::kCql, Algorithm::kAclQl, Algorithm::kUnconstrained}) {
      c.algorithm = a;
      q[a] = train_once(ds, c, an).avg_q;
    }
    const bool ok = q[Algorithm::kCql] <= q[Algorithm::kAclQl] && q[Algorithm::kAclQl] <= q[Algorithm::kUnconstrained];
    passed += ok ? 1 : 0;
    detail("seed " + std::to_string(seed) + ": Q cql " + fmt("%.2f", q[Algorithm::kCql]) + ", aclql " +
           fmt("%.2f", q[Algorithm::kAclQl]) + ", unconstrained " + fmt("%.2f", q[Algorithm::kUnconstrained]) +
           (ok ? "" : "  <- order violated"));
  }
  return {passed >= 4, std::to_string(passed) + "/5 seeds with Q_cql <= Q_aclql <= Q_unconstrained (need 4)"};
}

Outcome adaptivity() {
  const ScoreAnchors an = anchors();
  struct Tally {
    int expert = 0;
    int random = 0;
  };
  std::map<Algorithm, Tally> tally;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const OfflineDataset expert = gen_dataset("pointmass", DatasetQuality::kExpert, kDatasetEpisodes, seed);
    const OfflineDataset random = gen_dataset("pointmass", DatasetQuality::kRandom, kDatasetEpisodes, seed);
    const double behavior = normalized_score(behavior_return(random), an);
    for (Algorithm a : {Algorithm::kAclQl, Algorithm::kCql}) {
      RunConfig c = RunConfig::desk();
      c.seed = seed;
      c.algorithm = a;
      if (a == Algorithm::kCql) c.alpha_cql_anchor = 20.0;
      const double se = train_once(expert, c, an).score;
      const double sr = train_once(random, c, an).score;
      tally[a].expert += se >= 90.0 ? 1 : 0;
      tally[a].random += sr > behavior ? 1 : 0;
      detail("seed " + std::to_string(seed) + " " + to_string(a) + ": expert score " + fmt("%.1f", se) +
             ", random score " + fmt("%.1f", sr) + " vs behavior " + fmt("%.1f", behavior));
    }
  }
  const Tally& acl = tally[Algorithm::kAclQl];
  const Tally& cql = tally[Algorithm::kCql];
  const bool acl_ok = acl.expert >= 4 && acl.random >= 4;
  const bool cql_ok = cql.expert >= 4 && cql.random >= 4;
  return {acl_ok && !cql_ok, "aclql expert>=90 on " + std::to_string(acl.expert) + "/5, random improves on " +
                                 std::to_string(acl.random) + "/5; cql(alpha=20) " + std::to_string(cql.expert) +
                                 "/5 and " + std::to_string(cql.random) + "/5 (must fail one)"};
}

Outcome reproducibility() {
  const std::vector<std::string> tiny = {"--preset", "desk", "--bc-steps", "200", "--steps", "200", "--eval-every",
                                         "100", "--eval-episodes", "3", "--seed", "5"};
  auto with = [&](std::vector<std::string> a) {
    a.insert(a.end(), tiny.begin(), tiny.end());
    return a;
  };
  std::map<std::string, std::map<std::string, std::string>> runs;
  bool all_ok = true;
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path dir = scratch("c9_" + std::to_string(rep));
    const std::string d = (dir / "data.jsonl").string();
    std::ostringstream out, err;
    auto step = [&](const std::string& name, const std::vector<std::string>& args, const fs::path& stdout_file) {
      std::ostringstream o, e;
      const int code = cli::run(args, o, e);
      all_ok = all_ok && code == 0;
      if (code != 0) detail(name + " exited " + std::to_string(code) + ": " + e.str());
      std::ofstream(stdout_file, std::ios::binary) << o.str();
    };
    step("gen-data", {"gen-data", "--quality", "medium-replay", "--episodes", "20", "--seed", "5", "--out", d},
         dir / "gen.stdout");
    step("quality", {"quality", "--data", d, "--lambda", "0.5", "--out", (dir / "q.jsonl").string()},
         dir / "quality.stdout");
    step("quality-nstep", {"quality", "--data", d, "--nstep", "10", "--out", (dir / "qn.jsonl").string()},
         dir / "qualityn.stdout");
    step("train-bc", with({"train-bc", "--data", d, "--out", (dir / "bc.json").string()}), dir / "bc.stdout");
    step("train", with({"train", "--data", d, "--out", (dir / "run").string(), "--behavior", (dir / "bc.json").string()}),
         dir / "train.stdout");
    step("eval", {"eval", "--checkpoint", (dir / "run").string(), "--episodes", "5", "--seed", "3"},
         dir / "eval.stdout");
    step("verify-tabular", {"verify-tabular", "--trials", "10", "--out", (dir / "tab.json").string()},
         dir / "tab.stdout");
    step("export-plot", {"export-plot", "--metrics", (dir / "run").string(), "--out", (dir / "long.csv").string()},
         dir / "plot.stdout");
    auto& files = runs[std::to_string(rep)];
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (!e.is_regular_file()) continue;
      std::string rel = fs::relative(e.path(), dir).string();
      std::string bytes = slurp(e.path());
      // stdout lines name the output path, which differs between the two directories.
      const std::string base = dir.string();
      for (std::size_t p = bytes.find(base); p != std::string::npos; p = bytes.find(base, p)) bytes.replace(p, base.size(), "<dir>");
      files[rel] = bytes;
    }
  }
  const auto& a = runs["0"];
  const auto& b = runs["1"];
  std::size_t differing = 0;
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    if (it == b.end() || it->second != bytes) {
      ++differing;
      detail("differs: " + name);
    }
  }
  differing += a.size() == b.size() ? 0 : 1;
  detail(std::to_string(a.size()) + " output files compared across two full pipeline runs");
  return {all_ok && differing == 0, std::to_string(a.size()) + " files from all 7 subcommands byte-identical on rerun"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("--criterion", only, "Run only these criteria (1-9)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> all = {
      {1, "tabular proposition suite", 30, tabular_suite},
      {2, "CQL reduction", 300, cql_reduction},
      {3, "gradient suite", 120, gradient_checks},
      {4, "log bound", 60, log_bound},
      {5, "quality identities", 60, quality_identities},
      {6, "monotonicity learning", 60, monotonicity_learning},
      {7, "medium-dataset Q ordering", 1200, q_sandwich},
      {8, "adaptivity across dataset quality", 2700, adaptivity},
      {9, "reproducibility", 300, reproducibility},
  };
  bool all_pass = true;
  for (const auto& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    all_pass = all_pass && pass;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.title << "): " << o.summary << " ["
              << fmt("%.1f", secs) << " s of " << fmt("%.0f", c.budget_s) << " s" << (in_time ? "" : ", over budget")
              << "]\n"
              << std::flush;
  }
  return all_pass ? 0 : 1;
}
