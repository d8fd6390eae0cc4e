#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "aclql/core.hpp"
#include "aclql/rng.hpp"
#include "aclql/tabular.hpp"

namespace aclql {

/// Point mass on the plane steered by bounded accelerations toward a fixed
/// goal. Observation is [px, py, vx, vy].
class PointMass2D {
 public:
  static constexpr const char* kName = "pointmass";
  static constexpr std::size_t kObsDim = 4;
  static constexpr std::size_t kActionDim = 2;
  static constexpr int kHorizon = 200;
  static constexpr double kGoalRadius = 0.1;
  static constexpr double kGoalBonus = 10.0;
  static constexpr double kPosDt = 0.05;
  static constexpr double kVelDt = 0.1;
  static constexpr double kStartJitter = 0.2;

  struct StepResult {
    std::vector<double> obs;
    double reward = 0.0;
    bool done = false;       // goal reached
    bool truncated = false;  // horizon hit
  };

  /// Start at (-1, -1) plus a uniform jitter of +-kStartJitter per axis, at rest.
  std::vector<double> reset(Rng& rng);
  StepResult step(const std::vector<double>& action);

  std::vector<double> observation() const;
  const std::array<double, 2>& goal() const { return goal_; }
  int t() const { return t_; }

 private:
  std::array<double, 2> pos_{-1.0, -1.0};
  std::array<double, 2> vel_{0.0, 0.0};
  std::array<double, 2> goal_{1.0, 1.0};
  int t_ = 0;
};

/// Damped proportional controller toward the goal, clipped to [-1, 1].
std::vector<double> pointmass_expert_action(const std::vector<double>& obs, const std::array<double, 2>& goal);

enum class DatasetQuality { kExpert, kMedium, kMediumReplay, kRandom };

std::string to_string(DatasetQuality q);
DatasetQuality parse_quality_tier(const std::string& text);

/// Maps an observation to an action in [-1, 1]^d.
using Policy = std::function<std::vector<double>(const std::vector<double>& obs, Rng& rng)>;

/// Rolls `policy` out for one episode. Start and policy noise draw from `rng`.
Episode rollout_episode(const Policy& policy, Rng& rng, std::int64_t episode_id);

/// Scripted behavior for a quality tier. Medium-replay alternates medium
/// (even episode ids) and random (odd ids) episodes.
Policy scripted_policy(DatasetQuality quality, std::int64_t episode_id);

/// Episode i uses the stream (seed, data-gen, i), so datasets are
/// reproducible and prefixes of larger datasets.
OfflineDataset gen_dataset(const std::string& env, DatasetQuality quality, int episodes, std::uint64_t seed,
                           double gamma = 0.99);

struct EvalResult {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> returns;
};

/// Undiscounted returns of `episodes` rollouts; episode i draws from
/// (seed, eval, i).
EvalResult evaluate_returns(const std::string& env, const Policy& policy, int episodes, std::uint64_t seed);

struct ScoreAnchors {
  double random_return = 0.0;
  double expert_return = 0.0;
};

/// 100 (ret - random) / (expert - random). Throws when the anchors coincide.
double normalized_score(double mean_return, const ScoreAnchors& anchors);

struct EnvInfo {
  std::size_t obs_dim = 0;
  std::size_t action_dim = 0;
  ScoreAnchors anchors;
  std::string anchor_seed_protocol;
};

using EnvRegistry = std::map<std::string, EnvInfo>;

inline constexpr int kAnchorEpisodes = 1000;
inline constexpr std::uint64_t kAnchorSeed = 0;

/// Monte Carlo anchors: uniform-random actions and the noise-free expert,
/// kAnchorEpisodes each, evaluated with evaluate_returns(kAnchorSeed).
EnvInfo compute_env_info(const std::string& env);

/// data/env_registry.json in the source tree if present, else the installed copy.
std::filesystem::path default_registry_path();
EnvRegistry load_registry(const std::filesystem::path& path);
void save_registry(const EnvRegistry& registry, const std::filesystem::path& path);
std::string serialize_registry(const EnvRegistry& registry);
/// Throws std::invalid_argument when `env` is absent.
const EnvInfo& registry_entry(const EnvRegistry& registry, const std::string& env);

/// Deterministic-goal gridworld with slippery moves, exported as an exact
/// finite MDP. Actions: 0 up, 1 down, 2 left, 3 right. With probability
/// `slip` the move goes in a uniformly random direction instead. Entering
/// the goal cell (top-right) pays 1; the goal is absorbing with reward 0.
tabular::TabularMDP gridworld_mdp(std::size_t width, std::size_t height, double slip, double gamma);

/// Samples s' ~ P(.|s, a).
std::size_t sample_next_state(const tabular::TabularMDP& mdp, std::size_t s, std::size_t a, Rng& rng);

}  // namespace aclql
