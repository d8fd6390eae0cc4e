#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aclql/rng.hpp"

namespace aclql {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// A named row-major tensor together with its Adam state.
struct ParameterBlock {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::int64_t adam_step = 0;

  static ParameterBlock zeros(std::string name, std::vector<std::size_t> shape);
  std::size_t size() const { return values.size(); }
};

enum class HeadKind {
  kLinear,             // critic
  kTanhGaussian,       // actor: [mean, raw log-std]
  kGaussianFixedSigma, // behavior policy mean
  kTwoHeadedWeights,   // [w_mu, w_beta]
};

struct ApproximatorSpec {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::vector<int> hidden{256, 256, 256};
  HeadKind head = HeadKind::kLinear;
  double sigma = 0.3;  // kGaussianFixedSigma only

  static ApproximatorSpec actor(std::size_t obs_dim, std::size_t action_dim, std::vector<int> hidden);
  static ApproximatorSpec critic(std::size_t obs_dim, std::size_t action_dim, std::vector<int> hidden);
  static ApproximatorSpec weight_net(std::size_t obs_dim, std::size_t action_dim, std::vector<int> hidden);
  static ApproximatorSpec behavior(std::size_t obs_dim, std::size_t action_dim, std::vector<int> hidden,
                                   double sigma);
};

/// Per-block gradient storage, parallel to Mlp::params().
using Gradients = std::vector<std::vector<double>>;

/// Activations recorded by a forward pass for the matching backward pass.
struct MlpTape {
  std::vector<Matrix> layer_inputs;
  std::vector<Matrix> pre_activations;
};

/// Fully connected ReLU network with a linear output layer. Parameters are
/// stored as "l{i}.weight" [out, in] and "l{i}.bias" [out].
class Mlp {
 public:
  Mlp() = default;
  /// All-zero parameters.
  explicit Mlp(ApproximatorSpec spec);
  /// Fan-in uniform initialization; the final layer of an actor is scaled
  /// by 1e-2 so the initial policy is close to uniform after squashing.
  static Mlp initialized(ApproximatorSpec spec, Rng& rng);

  const ApproximatorSpec& spec() const { return spec_; }
  std::vector<ParameterBlock>& params() { return params_; }
  const std::vector<ParameterBlock>& params() const { return params_; }
  std::size_t layer_count() const { return params_.size() / 2; }
  std::size_t parameter_count() const;

  Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, MlpTape& tape) const;

  /// Accumulates dL/dparams into `grads` and returns dL/dx.
  Matrix backward(const MlpTape& tape, const Matrix& d_out, Gradients& grads) const;

  Gradients zero_gradients() const;

 private:
  ApproximatorSpec spec_;
  std::vector<ParameterBlock> params_;
};

// ---------------------------------------------------------------------------
// Tanh-Gaussian actor

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kTanhJacobianFloor = 1e-6;

/// Reparameterized draw a = tanh(mean + std * noise) with everything needed
/// to backpropagate through both the action and its log-density.
struct ActorSample {
  Matrix action;
  Vector log_prob;
  Matrix noise;
  Matrix pre_tanh;
  Matrix std;
  Matrix raw_log_std;
  MlpTape tape;
};

ActorSample actor_sample(const Mlp& actor, const Matrix& states, const Matrix& noise);

/// Backpropagates dL/daction and dL/dlog_prob into the actor's parameters.
void actor_backward(const Mlp& actor, const ActorSample& sample, const Matrix& d_action,
                    const Vector& d_log_prob, Gradients& grads);

/// tanh(mean(s)): the deterministic action used for evaluation.
Matrix actor_mean_action(const Mlp& actor, const Matrix& states);

/// Log-density of given actions under the actor (actions clamped just inside
/// (-1, 1) before inverting the squashing).
Vector actor_log_prob(const Mlp& actor, const Matrix& states, const Matrix& actions);

// ---------------------------------------------------------------------------
// Gaussian behavior policy

Vector behavior_log_prob(const Mlp& behavior, const Matrix& states, const Matrix& actions);
Matrix behavior_sample(const Mlp& behavior, const Matrix& states, const Matrix& noise);

// ---------------------------------------------------------------------------
// Optimization

struct AdamOptions {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Throws std::invalid_argument naming the block when a gradient is non-finite.
void adam_step(ParameterBlock& block, std::span<const double> grad, const AdamOptions& opt);
void adam_step(Mlp& net, const Gradients& grads, const AdamOptions& opt);

void polyak_update(ParameterBlock& target, const ParameterBlock& online, double rate);
void polyak_update(Mlp& target, const Mlp& online, double rate);

// ---------------------------------------------------------------------------
// Finite-difference verification

/// A mutable parameter range paired with its analytic gradient.
struct ParamView {
  std::span<double> values;
  std::span<const double> grad;
};

/// Views over every block of `net` with the matching entries of `grads`.
std::vector<ParamView> param_views(Mlp& net, const Gradients& grads);

/// Central differences on a random subsample of at least `min_coords`
/// coordinates (all of them when fewer exist). Returns the max relative
/// error |a - n| / max(|a|, |n|, r, 1e-8), where r = 1e5 * eps * |f| / h
/// bounds the rounding error of the difference quotient.
double finite_diff_check(const std::function<double()>& loss, const std::vector<ParamView>& params,
                         double h = 1e-5, std::uint64_t seed = 0, std::size_t min_coords = 64);

}  // namespace aclql
