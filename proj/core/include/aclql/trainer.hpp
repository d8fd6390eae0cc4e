#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aclql/checkpoint.hpp"
#include "aclql/config.hpp"
#include "aclql/core.hpp"
#include "aclql/envs.hpp"
#include "aclql/losses.hpp"
#include "aclql/quality.hpp"

namespace aclql {

/// The dataset flattened into matrices, with per-transition quality.
struct TrainingData {
  std::string env;
  Matrix states;
  Matrix actions;
  Vector rewards;
  Matrix next_states;
  Vector dones;
  Vector m;
  /// Scale of the conservatism gaps: the reward range r_max - r_min, i.e.
  /// r_max after shifting rewards so the smallest one is zero.
  double gap_scale = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(states.rows()); }
  std::size_t obs_dim() const { return static_cast<std::size_t>(states.cols()); }
  std::size_t action_dim() const { return static_cast<std::size_t>(actions.cols()); }

  /// Annotations must be in dataset order, one per transition.
  static TrainingData build(const OfflineDataset& dataset, const std::vector<QualityAnnotation>& quality,
                            const DatasetStats& stats);
  /// Stats use the dataset's gamma; annotations use the config's lambda and mode.
  static TrainingData build(const OfflineDataset& dataset, const RunConfig& config);
};

struct TrainerState {
  Mlp actor;
  TwinCritic critics;
  TwinCritic targets;
  Mlp weight_net;
  Mlp behavior;
  ParameterBlock log_temperature;
  std::int64_t step = 0;

  double temperature() const { return std::exp(log_temperature.values[0]); }

  /// Fresh networks from (seed, init, k) streams; targets copy the critics.
  static TrainerState initialize(std::size_t obs_dim, std::size_t action_dim, const RunConfig& config);

  Checkpoint checkpoint(const std::string& config_hash) const;
  static TrainerState from_checkpoint(const Checkpoint& ckpt, double bc_sigma);
};

/// bc_steps Adam steps on the BC loss; returns the last minibatch loss (0
/// when no steps are taken). Throws on a non-finite loss.
double pretrain_bc(Mlp& behavior, const TrainingData& data, const RunConfig& config);

/// Samples OOD actions from the actor and fills every quality, density and
/// gap field of the batch.
BatchSample make_batch(const TrainerState& state, const TrainingData& data, const RunConfig& config,
                       std::span<const std::size_t> rows, const Matrix& ood_noise);

struct StepOutcome {
  LossReport report;
  double w_mu_mean = 0.0;
  double w_beta_mean = 0.0;
};

/// One alternating update: critic, weight net, actor and temperature, then
/// the target networks. Uses the same minibatch for every component.
StepOutcome train_step(TrainerState& state, const TrainingData& data, const RunConfig& config);

/// Weight-net update alone on a prepared batch. Returns the loss report.
LossReport weight_step(Mlp& weight_net, const BatchSample& batch, const RunConfig& config, Rng& pairing_rng);

/// Rollouts with the deterministic (mean) action.
EvalResult evaluate_policy(const Mlp& actor, const std::string& env, int episodes, std::uint64_t seed);

/// Mean over dataset states of min-twin Q(s, mean action(s)).
double avg_q_dataset(const Mlp& actor, const TwinCritic& critics, const Matrix& states);

/// Same statistic, one state at a time.
double avg_q_dataset_streaming(const Mlp& actor, const TwinCritic& critics, const Matrix& states);

struct ModelCandidate {
  std::int64_t step = 0;
  double avg_q = 0.0;
};

/// Index of the candidate with the highest avg_q; ties go to the later step.
std::size_t select_model(const std::vector<ModelCandidate>& candidates);

struct MetricsRow {
  std::int64_t step = 0;
  LossReport losses;
  double w_mu_mean = 0.0;
  double w_beta_mean = 0.0;
  double avg_q_dataset = 0.0;
  double eval_mean = 0.0;
  double eval_std = 0.0;
};

std::string metrics_header();
std::string format_metrics_row(const MetricsRow& row);

struct RunResult {
  std::vector<MetricsRow> rows;
  std::vector<ModelCandidate> candidates;
  std::size_t selected = 0;
  TrainerState final_state;
};

/// Full training run. `behavior` supplies a pretrained behavior policy;
/// otherwise one is cloned first. With `run_dir` set, writes metrics.csv,
/// checkpoints/step_<n>.json and selected.json there.
RunResult train_run(const OfflineDataset& dataset, const RunConfig& config,
                    const std::optional<std::filesystem::path>& run_dir = std::nullopt,
                    const Mlp* behavior = nullptr);

}  // namespace aclql
