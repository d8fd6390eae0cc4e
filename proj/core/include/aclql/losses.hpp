#pragma once

#include <cstddef>
#include <vector>

#include "aclql/approximator.hpp"

namespace aclql {

struct TwinCritic {
  Mlp q1;
  Mlp q2;
};

struct TwinGradients {
  Gradients g1;
  Gradients g2;

  static TwinGradients zeros_like(const TwinCritic& critics) {
    return {critics.q1.zero_gradients(), critics.q2.zero_gradients()};
  }
};

/// Row-wise [states | actions].
Matrix state_action(const Matrix& states, const Matrix& actions);

/// Elementwise min of the two critics at (states, actions).
Vector min_twin_q(const TwinCritic& critics, const Matrix& states, const Matrix& actions);

/// One training minibatch plus every sampled quantity the losses consume.
/// OOD rows are laid out row-major per batch row: entry i * n_ood + j is the
/// j-th policy sample at batch row i.
struct BatchSample {
  Matrix states;
  Matrix actions;
  Vector rewards;
  Matrix next_states;
  Vector dones;
  Vector m_in;

  std::size_t n_ood = 0;
  Matrix ood_states;
  Matrix ood_actions;
  Vector ood_log_prob_pi;
  Vector ood_log_prob_beta;
  Vector m_ood;

  Vector in_log_prob_pi;
  Vector in_log_prob_beta;

  Vector d_ord;  // per batch row, from m_in
  Vector d_cql;
  Vector ood_d_ord;  // per OOD sample, from m_ood
  Vector ood_d_cql;

  std::size_t size() const { return static_cast<std::size_t>(states.rows()); }
};

struct LossReport {
  double td = 0.0;
  double penalty = 0.0;
  double mono = 0.0;
  double ord = 0.0;
  double cql = 0.0;
  double pos = 0.0;
  double bc = 0.0;
  double actor = 0.0;
  double weight_total = 0.0;
};

/// y = r + gamma * (1 - done) * min-twin target Q(s', a'), a' ~ pi(.|s').
Vector td_targets(const TwinCritic& targets, const Mlp& actor, const BatchSample& batch, double gamma,
                  const Matrix& next_noise);

/// 1/2 mean (Q_k(s,a) - y)^2 summed over both critics; y is a constant.
double td_loss(const TwinCritic& critics, const BatchSample& batch, const Vector& targets, TwinGradients* grads);

/// alpha * (E_ood[Q] - E_data[Q]) summed over both critics.
double cql_penalty(const TwinCritic& critics, const BatchSample& batch, double alpha, TwinGradients* grads);

/// E_ood[w_mu * Q] - E_data[w_beta * Q] summed over both critics. The weights
/// are constants here: no gradient reaches the weight network.
double acl_penalty(const TwinCritic& critics, const Vector& w_mu_ood, const Vector& w_beta_in,
                   const BatchSample& batch, TwinGradients* grads);

/// Cyclic permutation (Sattolo): perm[i] != i for every i. Requires n >= 2.
std::vector<std::size_t> random_derangement(std::size_t n, Rng& rng);

struct MonotonicityResult {
  double value = 0.0;
  Vector d_w_mu;
  Vector d_w_beta;
};

/// Softmax-matched pairwise differences: w_mu differences track negated
/// quality differences, w_beta differences track quality differences.
/// Softmaxes are taken over each vector separately.
MonotonicityResult monotonicity_loss(const Vector& w_mu, const Vector& m_ood, const std::vector<std::size_t>& pair_mu,
                                     const Vector& w_beta, const Vector& m_in,
                                     const std::vector<std::size_t>& pair_beta);

struct HingeResult {
  double l_ord = 0.0;
  double l_cql = 0.0;
  Vector d_w_mu;
  Vector d_w_beta;
};

/// Log-space surrogates of the two conservatism conditions, averaged over
/// entries. All vectors are aligned entry by entry.
HingeResult surrogate_hinges(const Vector& w_mu, const Vector& w_beta, const Vector& ln_mu, const Vector& ln_beta,
                             const Vector& d_ord, const Vector& d_cql, double alpha);

struct PositivityResult {
  double value = 0.0;
  Vector d_w_mu;
  Vector d_w_beta;
};

PositivityResult positivity_loss(const Vector& w_mu, const Vector& w_beta);

/// Weight-network outputs at the OOD points and at the logged actions.
struct WeightOutputs {
  Vector w_mu_ood;
  Vector w_beta_ood;
  Vector w_mu_in;
  Vector w_beta_in;
};

WeightOutputs evaluate_weights(const Mlp& weight_net, const BatchSample& batch);

/// L_ord + L_cql + L_mono + L_pos with unit coefficients. Hinges and the
/// positivity term are evaluated at every OOD point and every logged action;
/// the monotonicity term pairs w_mu with OOD quality and w_beta with logged
/// quality. Fills mono/ord/cql/pos/weight_total of `report` when given.
double weight_total_loss(const Mlp& weight_net, const BatchSample& batch, double alpha,
                         const std::vector<std::size_t>& pair_mu, const std::vector<std::size_t>& pair_beta,
                         Gradients* grads, LossReport* report = nullptr);

/// Mean over rows of ||mean(s) - a||^2.
double bc_loss(const Mlp& behavior, const Matrix& states, const Matrix& actions, Gradients* grads);

struct ActorLossResult {
  double value = 0.0;
  double mean_log_prob = 0.0;
};

/// mean(temperature * log pi(a|s) - min-twin Q(s, a)), a reparameterized
/// from `noise`. Critic parameters are treated as constants.
ActorLossResult actor_loss(const Mlp& actor, const TwinCritic& critics, const Matrix& states, const Matrix& noise,
                           double temperature, Gradients* grads);

}  // namespace aclql
