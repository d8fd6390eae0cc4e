#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "aclql/config.hpp"
#include "aclql/core.hpp"

namespace aclql {

/// Relative quality of one logged transition: a convex mix of its normalized
/// Monte Carlo return and normalized immediate reward.
struct QualityAnnotation {
  std::int64_t episode_id = 0;
  std::int64_t step_index = 0;
  double g = 0.0;  // discounted return (or n-step analog)
  double g_norm = 0.0;
  double r_norm = 0.0;
  double m = 0.0;
};

/// Target distances below the unconstrained Q and above the fixed-alpha Q.
struct GapPair {
  double d_ord = 0.0;
  double d_cql = 0.0;
};

/// g_t = r_t + gamma * g_{t+1}, g_T = r_T. Truncated episodes are treated as
/// complete trajectories.
std::vector<double> mc_returns(const Episode& episode, double gamma);

/// Reward-only n-step return: sum_{k=t}^{min(t+n-1,T)} gamma^{k-t} r_k.
std::vector<double> nstep_sarsa_returns(const Episode& episode, int n, double gamma);

/// Per-transition returns under `mode`, in dataset order.
std::vector<std::vector<double>> dataset_returns(const OfflineDataset& dataset, double gamma,
                                                 const QualityMode& mode);

/// One annotation per transition, ordered by (episode, step). `stats` supplies
/// r_min/r_max; return extrema come from the returns selected by `mode`
/// (for lambda-mix these equal stats.g_min/g_max).
std::vector<QualityAnnotation> annotate_dataset(const OfflineDataset& dataset, const DatasetStats& stats,
                                                double lambda, const QualityMode& mode = {});

/// Translation T(x1, x2) = (x1 - x2 / 2 + 1) / 2.
inline double quality_translation(double m_in, double x2) { return 0.5 * (m_in - 0.5 * x2 + 1.0); }

/// Quality of an out-of-distribution action relative to the logged action
/// at the same state; the L2 distance is rescaled into [0, 2] by 1/sqrt(d).
double ood_quality(double m_in, std::span<const double> a_ood, std::span<const double> a_in);

GapPair gaps(double m, double r_max);

struct QualitySidecar {
  double lambda = 0.5;
  QualityMode mode{};
  std::vector<QualityAnnotation> rows;
  std::string config_hash;
};

std::string serialize_quality(const QualitySidecar& sidecar);
QualitySidecar parse_quality(const std::string& text);
void save_quality(const QualitySidecar& sidecar, const std::filesystem::path& path);
QualitySidecar load_quality(const std::filesystem::path& path);

}  // namespace aclql
