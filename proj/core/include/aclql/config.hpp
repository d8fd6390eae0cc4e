#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace aclql {

enum class QualityModeKind { kLambdaMix, kNStepSarsa };

struct QualityMode {
  QualityModeKind kind = QualityModeKind::kLambdaMix;
  int nstep = 0;  // only meaningful for kNStepSarsa

  /// "lambda-mix" or "nstep-sarsa(k)".
  std::string to_string() const;
  static QualityMode parse(const std::string& text);

  bool operator==(const QualityMode&) const = default;
};

/// Which conservatism penalty the critic is trained with.
enum class Algorithm {
  kAclQl,          // learned per-(s,a) weights
  kCql,            // fixed alpha on both terms
  kUnconstrained,  // TD only
};

std::string to_string(Algorithm algo);
Algorithm parse_algorithm(const std::string& text);

/// Every tunable of a run. Defaults are the full-scale hyperparameters;
/// `desk()` returns the preset used for CI-sized experiments.
struct RunConfig {
  double gamma = 0.99;
  double lambda_quality = 0.5;
  double alpha_cql_anchor = 10.0;
  int batch_size = 256;
  double lr_critic = 3e-4;
  double lr_actor = 1e-5;
  double lr_weight = 3e-4;
  double lr_temperature = 3e-4;
  double lr_bc = 3e-4;
  double polyak_rate = 5e-3;
  std::int64_t bc_steps = 100000;
  std::int64_t train_steps = 1100000;
  std::int64_t eval_every = 1000;
  int eval_episodes = 10;
  int n_ood_samples = 10;
  double bc_sigma = 0.3;
  double initial_temperature = 1.0;
  std::uint64_t seed = 0;
  QualityMode quality_mode{};
  std::vector<int> hidden{256, 256, 256};
  Algorithm algorithm = Algorithm::kAclQl;
  /// Pins both weight outputs to alpha_cql_anchor and skips the weight-net
  /// update (the fixed-alpha special case of the learned weights).
  bool clamp_weights = false;

  static RunConfig desk();

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  /// Flat JSON object with one key per field, keys in declaration order.
  std::string to_json() const;
  /// Fields absent from `json` keep the values already in `base`.
  static RunConfig from_json(const std::string& json, const RunConfig& base);

  /// Hex FNV-1a digest of `to_json()`.
  std::string hash() const;
};

}  // namespace aclql
