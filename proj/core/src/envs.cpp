#include "aclql/envs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace aclql {

namespace {

constexpr double kExpertKp = 1.0;
constexpr double kExpertKd = 1.0;
constexpr double kExpertNoise = 0.05;
constexpr double kMediumNoise = 0.4;

double clamp1(double x) { return std::clamp(x, -1.0, 1.0); }

std::vector<double> uniform_action(Rng& rng) {
  std::vector<double> a(PointMass2D::kActionDim);
  for (double& v : a) v = rng.uniform(-1.0, 1.0);
  return a;
}

Policy noisy_expert(double noise) {
  return [noise](const std::vector<double>& obs, Rng& rng) {
    std::vector<double> a = pointmass_expert_action(obs, {1.0, 1.0});
    if (noise > 0.0) {
      for (double& v : a) v = clamp1(v + noise * rng.normal());
    }
    return a;
  };
}

void require_pointmass(const std::string& env) {
  if (env != PointMass2D::kName) throw std::invalid_argument("unknown env '" + env + "'");
}

}  // namespace

std::vector<double> PointMass2D::reset(Rng& rng) {
  pos_ = {-1.0 + rng.uniform(-kStartJitter, kStartJitter), -1.0 + rng.uniform(-kStartJitter, kStartJitter)};
  vel_ = {0.0, 0.0};
  t_ = 0;
  return observation();
}

PointMass2D::StepResult PointMass2D::step(const std::vector<double>& action) {
  if (action.size() != kActionDim) throw std::invalid_argument("PointMass2D: action must have 2 components");
  for (int i = 0; i < 2; ++i) {
    pos_[i] = std::clamp(pos_[i] + kPosDt * vel_[i], -2.0, 2.0);
    vel_[i] = std::clamp(vel_[i] + kVelDt * clamp1(action[i]), -1.0, 1.0);
  }
  ++t_;
  StepResult r;
  const double dist = std::hypot(pos_[0] - goal_[0], pos_[1] - goal_[1]);
  r.reward = -dist;
  if (dist < kGoalRadius) {
    r.reward += kGoalBonus;
    r.done = true;
  }
  r.truncated = !r.done && t_ >= kHorizon;
  r.obs = observation();
  return r;
}

std::vector<double> PointMass2D::observation() const { return {pos_[0], pos_[1], vel_[0], vel_[1]}; }

std::vector<double> pointmass_expert_action(const std::vector<double>& obs, const std::array<double, 2>& goal) {
  return {clamp1(kExpertKp * (goal[0] - obs[0]) - kExpertKd * obs[2]),
          clamp1(kExpertKp * (goal[1] - obs[1]) - kExpertKd * obs[3])};
}

std::string to_string(DatasetQuality q) {
  switch (q) {
    case DatasetQuality::kExpert: return "expert";
    case DatasetQuality::kMedium: return "medium";
    case DatasetQuality::kMediumReplay: return "medium-replay";
    case DatasetQuality::kRandom: return "random";
  }
  return "?";
}

DatasetQuality parse_quality_tier(const std::string& text) {
  if (text == "expert") return DatasetQuality::kExpert;
  if (text == "medium") return DatasetQuality::kMedium;
  if (text == "medium-replay") return DatasetQuality::kMediumReplay;
  if (text == "random") return DatasetQuality::kRandom;
  throw std::invalid_argument("unknown dataset quality '" + text + "'");
}

Episode rollout_episode(const Policy& policy, Rng& rng, std::int64_t episode_id) {
  PointMass2D env;
  Episode ep;
  std::vector<double> obs = env.reset(rng);
  for (std::int64_t t = 0;; ++t) {
    std::vector<double> a = policy(obs, rng);
    for (double& v : a) v = clamp1(v);
    auto res = env.step(a);
    Transition tr;
    tr.state = obs;
    tr.action = a;
    tr.reward = res.reward;
    tr.next_state = res.obs;
    tr.done = res.done;
    tr.episode_id = episode_id;
    tr.step_index = t;
    ep.transitions.push_back(std::move(tr));
    obs = std::move(res.obs);
    if (res.done || res.truncated) {
      ep.terminal = res.done;
      break;
    }
  }
  return ep;
}

Policy scripted_policy(DatasetQuality quality, std::int64_t episode_id) {
  switch (quality) {
    case DatasetQuality::kExpert: return noisy_expert(kExpertNoise);
    case DatasetQuality::kMedium: return noisy_expert(kMediumNoise);
    case DatasetQuality::kMediumReplay:
      return episode_id % 2 == 0 ? scripted_policy(DatasetQuality::kMedium, episode_id)
                                 : scripted_policy(DatasetQuality::kRandom, episode_id);
    case DatasetQuality::kRandom:
      return [](const std::vector<double>&, Rng& rng) { return uniform_action(rng); };
  }
  throw std::logic_error("scripted_policy: bad quality");
}

OfflineDataset gen_dataset(const std::string& env, DatasetQuality quality, int episodes, std::uint64_t seed,
                           double gamma) {
  require_pointmass(env);
  if (episodes <= 0) throw std::invalid_argument("gen_dataset: episodes must be positive");
  OfflineDataset ds;
  ds.env = env;
  ds.obs_dim = PointMass2D::kObsDim;
  ds.action_dim = PointMass2D::kActionDim;
  ds.gamma = gamma;
  for (int i = 0; i < episodes; ++i) {
    Rng rng = Rng::stream(seed, RngComponent::kDataGen, static_cast<std::uint64_t>(i));
    ds.episodes.push_back(rollout_episode(scripted_policy(quality, i), rng, i));
  }
  return ds;
}

EvalResult evaluate_returns(const std::string& env, const Policy& policy, int episodes, std::uint64_t seed) {
  require_pointmass(env);
  if (episodes <= 0) throw std::invalid_argument("evaluate_returns: episodes must be positive");
  EvalResult out;
  for (int i = 0; i < episodes; ++i) {
    Rng rng = Rng::stream(seed, RngComponent::kEval, static_cast<std::uint64_t>(i));
    const Episode ep = rollout_episode(policy, rng, i);
    double ret = 0.0;
    for (const auto& t : ep.transitions) ret += t.reward;
    out.returns.push_back(ret);
  }
  const double n = static_cast<double>(episodes);
  out.mean = std::accumulate(out.returns.begin(), out.returns.end(), 0.0) / n;
  double var = 0.0;
  for (double r : out.returns) var += (r - out.mean) * (r - out.mean);
  out.std = std::sqrt(var / n);
  return out;
}

double normalized_score(double mean_return, const ScoreAnchors& anchors) {
  const double span = anchors.expert_return - anchors.random_return;
  if (span == 0.0) throw std::invalid_argument("normalized_score: expert and random anchors coincide");
  return 100.0 * (mean_return - anchors.random_return) / span;
}

EnvInfo compute_env_info(const std::string& env) {
  require_pointmass(env);
  EnvInfo info;
  info.obs_dim = PointMass2D::kObsDim;
  info.action_dim = PointMass2D::kActionDim;
  info.anchors.random_return =
      evaluate_returns(env, scripted_policy(DatasetQuality::kRandom, 0), kAnchorEpisodes, kAnchorSeed).mean;
  info.anchors.expert_return = evaluate_returns(env, noisy_expert(0.0), kAnchorEpisodes, kAnchorSeed).mean;
  info.anchor_seed_protocol = "mean undiscounted return over " + std::to_string(kAnchorEpisodes) +
                              " episodes; episode i seeded by stream(seed=" + std::to_string(kAnchorSeed) +
                              ", component=eval, counter=i); random = uniform actions, expert = noise-free "
                              "damped proportional controller";
  return info;
}

std::filesystem::path default_registry_path() {
  // Source tree first, so a build directory never reads a stale installed copy.
  const std::filesystem::path source = std::filesystem::path(ACLQL_SOURCE_DATA_DIR) / "env_registry.json";
  if (std::filesystem::exists(source)) return source;
  return std::filesystem::path(ACLQL_INSTALL_DATA_DIR) / "env_registry.json";
}

std::string serialize_registry(const EnvRegistry& registry) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [name, info] : registry) {
    j[name] = {{"obs_dim", info.obs_dim},
               {"action_dim", info.action_dim},
               {"anchors", {{"random", info.anchors.random_return}, {"expert", info.anchors.expert_return}}},
               {"anchor_seed_protocol", info.anchor_seed_protocol}};
  }
  return j.dump(2) + "\n";
}

EnvRegistry load_registry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open env registry " + path.string());
  const nlohmann::json j = nlohmann::json::parse(in);
  EnvRegistry reg;
  for (const auto& [name, e] : j.items()) {
    EnvInfo info;
    info.obs_dim = e.at("obs_dim").get<std::size_t>();
    info.action_dim = e.at("action_dim").get<std::size_t>();
    info.anchors.random_return = e.at("anchors").at("random").get<double>();
    info.anchors.expert_return = e.at("anchors").at("expert").get<double>();
    info.anchor_seed_protocol = e.value("anchor_seed_protocol", "");
    if (!(info.anchors.expert_return > info.anchors.random_return)) {
      throw std::runtime_error("env registry: expert anchor must exceed random anchor for '" + name + "'");
    }
    reg[name] = info;
  }
  return reg;
}

void save_registry(const EnvRegistry& registry, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write env registry " + path.string());
  out << serialize_registry(registry);
}

const EnvInfo& registry_entry(const EnvRegistry& registry, const std::string& env) {
  auto it = registry.find(env);
  if (it == registry.end()) throw std::invalid_argument("env '" + env + "' is not in the registry");
  return it->second;
}

tabular::TabularMDP gridworld_mdp(std::size_t width, std::size_t height, double slip, double gamma) {
  if (width == 0 || height == 0) throw std::invalid_argument("gridworld_mdp: empty grid");
  if (!(slip >= 0.0 && slip <= 1.0)) throw std::invalid_argument("gridworld_mdp: slip must lie in [0, 1]");
  tabular::TabularMDP m;
  m.n_states = width * height;
  m.n_actions = 4;
  m.gamma = gamma;
  m.transitions.assign(m.pairs() * m.n_states, 0.0);
  m.rewards.assign(m.pairs(), 0.0);
  const std::size_t goal = width * height - 1;  // (x = width-1, y = height-1)
  auto move = [&](std::size_t s, std::size_t dir) {
    std::size_t x = s % width, y = s / width;
    if (dir == 0 && y + 1 < height) ++y;
    if (dir == 1 && y > 0) --y;
    if (dir == 2 && x > 0) --x;
    if (dir == 3 && x + 1 < width) ++x;
    return y * width + x;
  };
  for (std::size_t s = 0; s < m.n_states; ++s) {
    for (std::size_t a = 0; a < 4; ++a) {
      double* row = &m.transitions[m.index(s, a) * m.n_states];
      if (s == goal) {
        row[goal] = 1.0;
        continue;
      }
      row[move(s, a)] += 1.0 - slip;
      for (std::size_t d = 0; d < 4; ++d) row[move(s, d)] += slip / 4.0;
      m.rewards[m.index(s, a)] = row[goal];
    }
  }
  m.validate();
  return m;
}

std::size_t sample_next_state(const tabular::TabularMDP& mdp, std::size_t s, std::size_t a, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t n = 0; n < mdp.n_states; ++n) {
    acc += mdp.p(s, a, n);
    if (u < acc) return n;
  }
  return mdp.n_states - 1;
}

}  // namespace aclql
