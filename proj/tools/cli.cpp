#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "aclql/checkpoint.hpp"
#include "aclql/config.hpp"
#include "aclql/core.hpp"
#include "aclql/envs.hpp"
#include "aclql/format.hpp"
#include "aclql/quality.hpp"
#include "aclql/tabular.hpp"
#include "aclql/trainer.hpp"
#include "json.hpp"

namespace aclql::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string digest(const ordered_json& j) { return hex64(fnv1a64(j.dump())); }

/// RunConfig flags shared by the training subcommands. Each flag writes into
/// an override object applied last, so precedence is flag > file > preset.
struct ConfigFlags {
  std::string preset = "full";
  std::string file;
  nlohmann::json overrides = nlohmann::json::object();

  void attach(CLI::App& app) {
    app.add_option("--preset", preset, "Base values: full or desk")->check(CLI::IsMember({"full", "desk"}));
    app.add_option("--config", file, "JSON config file (flat RunConfig object)");
    real(app, "--gamma", "gamma");
    real(app, "--lambda", "lambda_quality");
    real(app, "--alpha", "alpha_cql_anchor");
    integer(app, "--batch-size", "batch_size");
    real(app, "--lr-critic", "lr_critic");
    real(app, "--lr-actor", "lr_actor");
    real(app, "--lr-weight", "lr_weight");
    real(app, "--lr-temperature", "lr_temperature");
    real(app, "--lr-bc", "lr_bc");
    real(app, "--polyak-rate", "polyak_rate");
    integer(app, "--bc-steps", "bc_steps");
    integer(app, "--steps", "train_steps");
    integer(app, "--eval-every", "eval_every");
    integer(app, "--eval-episodes", "eval_episodes");
    integer(app, "--n-ood", "n_ood_samples");
    real(app, "--bc-sigma", "bc_sigma");
    real(app, "--initial-temperature", "initial_temperature");
    app.add_option_function<std::uint64_t>("--seed", [this](std::uint64_t v) { overrides["seed"] = v; });
    text(app, "--quality-mode", "quality_mode");
    text(app, "--algorithm", "algorithm");
    app.add_option_function<std::vector<int>>("--hidden", [this](const std::vector<int>& v) { overrides["hidden"] = v; })
        ->delimiter(',');
    app.add_flag_function("--clamp-weights", [this](std::int64_t n) { overrides["clamp_weights"] = n > 0; },
                          "Pin both weights to alpha and skip the weight-net update");
  }

  RunConfig resolve() const {
    RunConfig c = preset == "desk" ? RunConfig::desk() : RunConfig{};
    if (!file.empty()) c = RunConfig::from_json(read_text(file), c);
    c = RunConfig::from_json(overrides.dump(), c);
    c.validate();
    return c;
  }

 private:
  void real(CLI::App& app, const char* flag, const char* key) {
    app.add_option_function<double>(flag, [this, key](double v) { overrides[key] = v; });
  }
  void integer(CLI::App& app, const char* flag, const char* key) {
    app.add_option_function<std::int64_t>(flag, [this, key](std::int64_t v) { overrides[key] = v; });
  }
  void text(CLI::App& app, const char* flag, const char* key) {
    app.add_option_function<std::string>(flag, [this, key](const std::string& v) { overrides[key] = v; });
  }
};

void require_dims(std::size_t expected, std::size_t got, const std::string& what) {
  if (expected != got) {
    throw std::invalid_argument(what + ": expected dimension " + std::to_string(expected) + ", got " +
                                std::to_string(got));
  }
}

fs::path resolve_checkpoint(const fs::path& path) {
  if (!fs::is_directory(path)) return path;
  const auto sel = nlohmann::json::parse(read_text(path / "selected.json"));
  return path / sel.at("checkpoint").get<std::string>();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Offline RL with adaptive conservatism weights", "aclql"};
  app.require_subcommand(1);

  // gen-data
  std::string env = PointMass2D::kName, tier, out_path;
  int episodes = 200;
  std::uint64_t seed = 0;
  double gamma = 0.99;
  auto* gen = app.add_subcommand("gen-data", "Generate a scripted offline dataset");
  gen->add_option("--env", env, "Environment name");
  gen->add_option("--quality", tier, "expert, medium, medium-replay or random")->required();
  gen->add_option("--episodes", episodes, "Number of episodes")->check(CLI::PositiveNumber);
  gen->add_option("--seed", seed, "Generation seed");
  gen->add_option("--gamma", gamma, "Discount recorded in the header");
  gen->add_option("--out", out_path, "Output JSONL path")->required();

  // quality
  std::string data_path;
  double lambda = 0.5;
  int nstep = 0;
  auto* qual = app.add_subcommand("quality", "Annotate a dataset with transition quality");
  qual->add_option("--data", data_path, "Dataset JSONL")->required();
  qual->add_option("--lambda", lambda, "Return/reward mixing weight")->check(CLI::Range(0.0, 1.0));
  qual->add_option("--nstep", nstep, "Use n-step returns instead of Monte Carlo returns (0 = off)")
      ->check(CLI::NonNegativeNumber);
  qual->add_option("--out", out_path, "Output sidecar JSONL")->required();

  // train-bc
  ConfigFlags bc_flags;
  auto* bc = app.add_subcommand("train-bc", "Clone the behavior policy");
  bc->add_option("--data", data_path, "Dataset JSONL")->required();
  bc->add_option("--out", out_path, "Output checkpoint JSON")->required();
  bc_flags.attach(*bc);

  // train
  ConfigFlags train_flags;
  std::string behavior_path;
  auto* train = app.add_subcommand("train", "Run the full training loop");
  train->add_option("--data", data_path, "Dataset JSONL")->required();
  train->add_option("--out", out_path, "Run directory")->required();
  train->add_option("--behavior", behavior_path, "Pretrained behavior checkpoint (skips cloning)");
  train_flags.attach(*train);

  // eval
  std::string ckpt_path, registry_path = default_registry_path().string();
  int eval_episodes = 10;
  auto* ev = app.add_subcommand("eval", "Evaluate a policy checkpoint");
  ev->add_option("--checkpoint", ckpt_path, "Checkpoint JSON or run directory")->required();
  ev->add_option("--env", env, "Environment name");
  ev->add_option("--episodes", eval_episodes, "Evaluation episodes")->check(CLI::PositiveNumber);
  ev->add_option("--seed", seed, "Evaluation seed");
  ev->add_option("--registry", registry_path, "Env registry JSON");

  // verify-tabular
  tabular::SuiteOptions suite;
  std::string report_path;
  auto* vt = app.add_subcommand("verify-tabular", "Check the fixed-point propositions on random MDPs");
  vt->add_option("--trials", suite.trials, "Random MDP instances");
  vt->add_option("--seed", suite.seed, "Corpus seed");
  vt->add_option("--gamma", suite.gamma, "Discount")->check(CLI::Range(0.0, 0.999999));
  vt->add_option("--alpha", suite.alpha, "Fixed-alpha anchor");
  vt->add_option("--out", report_path, "Also write the report here");

  // export-plot
  std::string metrics_path;
  auto* ex = app.add_subcommand("export-plot", "Convert metrics.csv to long format");
  ex->add_option("--metrics", metrics_path, "metrics.csv or run directory")->required();
  ex->add_option("--out", out_path, "Output CSV")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*gen) {
      const OfflineDataset base = gen_dataset(env, parse_quality_tier(tier), episodes, seed, gamma);
      OfflineDataset ds = base;
      ordered_json prov{{"env", env}, {"quality", tier}, {"episodes", episodes}, {"seed", seed}, {"gamma", gamma}};
      ds.config_hash = digest(prov);
      save_dataset(ds, out_path);
      out << ordered_json{{"out", out_path}, {"episodes", episodes}, {"transitions", ds.count_transitions()}}.dump()
          << "\n";
      return kExitOk;
    }

    if (*qual) {
      const std::string text = read_text(data_path);
      const OfflineDataset ds = parse_dataset(text);
      QualitySidecar sc;
      sc.lambda = lambda;
      sc.mode = nstep > 0 ? QualityMode{QualityModeKind::kNStepSarsa, nstep} : QualityMode{};
      sc.rows = annotate_dataset(ds, compute_stats(ds, ds.gamma), lambda, sc.mode);
      sc.config_hash = digest({{"dataset", hex64(fnv1a64(text))}, {"lambda", lambda}, {"mode", sc.mode.to_string()}});
      save_quality(sc, out_path);
      out << ordered_json{{"out", out_path}, {"rows", sc.rows.size()}, {"mode", sc.mode.to_string()}}.dump() << "\n";
      return kExitOk;
    }

    if (*bc) {
      const RunConfig c = bc_flags.resolve();
      const OfflineDataset ds = load_dataset(data_path);
      const TrainingData data = TrainingData::build(ds, c);
      TrainerState st = TrainerState::initialize(data.obs_dim(), data.action_dim(), c);
      const double loss = pretrain_bc(st.behavior, data, c);
      Checkpoint ck;
      ck.config_hash = c.hash();
      ck.step = c.bc_steps;
      ck.add_network("behavior", st.behavior);
      ck.add_scalar("bc_final_loss", loss);
      ck.save(out_path);
      out << ordered_json{{"out", out_path}, {"steps", c.bc_steps}, {"final_loss", loss}}.dump() << "\n";
      return kExitOk;
    }

    if (*train) {
      const RunConfig c = train_flags.resolve();
      const OfflineDataset ds = load_dataset(data_path);
      std::optional<Mlp> behavior;
      if (!behavior_path.empty()) {
        const Checkpoint ck = Checkpoint::load(behavior_path);
        behavior = ck.network("behavior", HeadKind::kGaussianFixedSigma, c.bc_sigma);
        require_dims(ds.obs_dim, behavior->spec().input_dim, "behavior checkpoint input vs dataset obs_dim");
        require_dims(ds.action_dim, behavior->spec().output_dim, "behavior checkpoint output vs dataset action_dim");
        if (behavior->spec().hidden != c.hidden) {
          throw std::invalid_argument("behavior checkpoint hidden widths differ from the config");
        }
      }
      const RunResult r = train_run(ds, c, fs::path(out_path), behavior ? &*behavior : nullptr);
      const auto& last = r.rows.back();
      out << ordered_json{{"run_dir", out_path},
                          {"steps", last.step},
                          {"selected_step", r.candidates[r.selected].step},
                          {"final_eval_mean", last.eval_mean},
                          {"final_avg_q", last.avg_q_dataset}}
                 .dump()
          << "\n";
      return kExitOk;
    }

    if (*ev) {
      const EnvRegistry reg = load_registry(registry_path);
      const EnvInfo& info = registry_entry(reg, env);
      const Checkpoint ck = Checkpoint::load(resolve_checkpoint(ckpt_path));
      const Mlp actor = ck.network("actor", HeadKind::kTanhGaussian);
      require_dims(info.obs_dim, actor.spec().input_dim, "actor input vs env obs_dim");
      require_dims(2 * info.action_dim, actor.spec().output_dim, "actor output vs env action_dim");
      const EvalResult e = evaluate_policy(actor, env, eval_episodes, seed);
      ordered_json j;
      j["version"] = 1;
      j["config_hash"] = ck.config_hash;
      j["env"] = env;
      j["step"] = ck.step;
      j["episodes"] = eval_episodes;
      j["seed"] = seed;
      j["mean"] = e.mean;
      j["std"] = e.std;
      j["normalized_score"] = normalized_score(e.mean, info.anchors);
      out << j.dump() << "\n";
      return kExitOk;
    }

    if (*vt) {
      const tabular::SuiteReport rep = tabular::run_suite(suite);
      const std::string text = rep.to_json() + "\n";
      if (!report_path.empty()) write_text(report_path, text);
      out << text;
      return rep.passed() ? kExitOk : kExitFailure;
    }

    if (*ex) {
      fs::path path = metrics_path;
      if (fs::is_directory(path)) path /= "metrics.csv";
      std::istringstream in(read_text(path));
      std::string line;
      std::getline(in, line);
      std::vector<std::string> cols;
      {
        std::stringstream hs(line);
        std::string c;
        while (std::getline(hs, c, ',')) cols.push_back(c);
      }
      if (cols.empty() || cols.front() != "step") throw std::runtime_error("metrics file lacks a step column");
      std::string csv = "step,metric,value\n";
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream rs(line);
        std::vector<std::string> cells;
        std::string c;
        while (std::getline(rs, c, ',')) cells.push_back(c);
        if (cells.size() != cols.size()) throw std::runtime_error("metrics row has the wrong number of columns");
        for (std::size_t k = 1; k < cols.size(); ++k) csv += cells[0] + "," + cols[k] + "," + cells[k] + "\n";
      }
      write_text(out_path, csv);
      out << ordered_json{{"out", out_path}}.dump() << "\n";
      return kExitOk;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace aclql::cli
