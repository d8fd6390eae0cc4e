#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aclql/rng.hpp"

namespace aclql::tabular {

/// Flat [s][a] table.
using QTable = std::vector<double>;
using PolicyTable = std::vector<double>;

/// Finite MDP with transition tensor P[s][a][s'] and reward table r[s][a].
struct TabularMDP {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> transitions;  // [s][a][s'], row-major
  std::vector<double> rewards;      // [s][a]
  double gamma = 0.9;

  std::size_t pairs() const { return n_states * n_actions; }
  std::size_t index(std::size_t s, std::size_t a) const { return s * n_actions + a; }
  double p(std::size_t s, std::size_t a, std::size_t next) const {
    return transitions[(s * n_actions + a) * n_states + next];
  }

  /// Throws std::invalid_argument on non-stochastic rows or gamma >= 1.
  void validate() const;

  /// Dirichlet(1) transition rows, rewards uniform in [-1, 1].
  static TabularMDP random(std::size_t n_states, std::size_t n_actions, double gamma, Rng& rng);
};

/// Learned policy pi, behavior policy pi_beta and penalty distribution mu.
/// `mu_is_measure` relaxes the row-sum constraint on mu to non-negativity;
/// the fixed-point formulas only need mu as a non-negative weight.
struct TabularPolicyPair {
  PolicyTable pi;
  PolicyTable pi_beta;
  PolicyTable mu;
  bool mu_is_measure = false;

  /// Row-stochasticity plus supp(mu) within supp(pi_beta).
  void validate(std::size_t n_states, std::size_t n_actions) const;
};

struct WeightAssignment {
  QTable w_mu;
  QTable w_beta;

  static WeightAssignment constant(std::size_t pairs, double w_mu, double w_beta);
};

/// Row-wise Dirichlet(1) policy table.
PolicyTable random_policy(std::size_t n_states, std::size_t n_actions, Rng& rng);

/// r + gamma * P^pi Q.
QTable bellman_backup(const TabularMDP& mdp, const PolicyTable& pi, const QTable& q);

/// Dense (I - gamma P^pi) over the (s, a) index space, row-major.
std::vector<double> evaluation_matrix(const TabularMDP& mdp, const PolicyTable& pi);

/// Solves A x = b with partial-pivot Gaussian elimination. Throws
/// std::runtime_error on a (numerically) singular system.
std::vector<double> solve_linear(std::vector<double> a, std::vector<double> b);

/// (I - gamma P^pi)^{-1} v.
QTable resolvent_apply(const TabularMDP& mdp, const PolicyTable& pi, const QTable& v);

/// (w_mu mu - w_beta pi_beta) / pi_beta. Throws std::domain_error naming the
/// first (s, a) with pi_beta = 0.
QTable conservatism_gap(const TabularPolicyPair& policies, const WeightAssignment& weights, std::size_t n_actions);

/// ((alpha - w_mu) mu - (alpha - w_beta) pi_beta) / pi_beta.
QTable gap_to_cql(const TabularPolicyPair& policies, const WeightAssignment& weights, double alpha,
                  std::size_t n_actions);

/// Backup shifted down by `shift`: r - shift + gamma P^pi Q.
QTable shifted_backup(const TabularMDP& mdp, const PolicyTable& pi, const QTable& shift, const QTable& q);

QTable ordinary_fixed_point(const TabularMDP& mdp, const PolicyTable& pi);
QTable acl_fixed_point(const TabularMDP& mdp, const TabularPolicyPair& policies, const WeightAssignment& weights);
QTable cql_fixed_point(const TabularMDP& mdp, const TabularPolicyPair& policies, double alpha);

/// Iterates the shifted backup from Q = 0 until successive iterates differ by
/// at most `tol` in max norm.
QTable iterate_fixed_point(const TabularMDP& mdp, const PolicyTable& pi, const QTable& shift, double tol = 1e-13,
                           std::size_t max_iters = 100000);

double max_abs_diff(const QTable& a, const QTable& b);

struct VerificationReport {
  std::string name;
  std::size_t checks = 0;
  std::size_t failures = 0;
  double max_residual = 0.0;
  std::vector<std::string> violations;

  bool passed() const { return failures == 0; }
  void record(bool ok, const std::string& what);
  void residual(double value, double tolerance, const std::string& what);
  void merge(const VerificationReport& other);
};

/// Per-backup identity B_acl Q = B Q - gap on random Q tables, plus the sign
/// and dominance relations between the two fixed points.
VerificationReport verify_prop1(const TabularMDP& mdp, const TabularPolicyPair& policies,
                                const WeightAssignment& weights, Rng& rng);

/// Q_acl - Q_ord = h with h = -(I - gamma P^pi)^{-1} gap, and the sandwich
/// h - err <= Q_acl - Q_ord <= h + err when an err table is supplied.
VerificationReport verify_prop2_exact(const TabularMDP& mdp, const TabularPolicyPair& policies,
                                      const WeightAssignment& weights, const std::optional<QTable>& err = {});

/// Per-backup identity against the fixed-alpha backup and the dominance
/// relation between the fixed points.
VerificationReport verify_prop3(const TabularMDP& mdp, const TabularPolicyPair& policies,
                                const WeightAssignment& weights, double alpha, Rng& rng);

/// Q_cql <= Q_acl <= Q_ord pointwise whenever gap > 0 and gap_to_cql > 0 at
/// every pair. `applicable` is false (and nothing is checked) otherwise.
VerificationReport verify_sandwich(const TabularMDP& mdp, const TabularPolicyPair& policies,
                                   const WeightAssignment& weights, double alpha, bool* applicable = nullptr);

struct SuiteOptions {
  std::size_t trials = 100;
  std::uint64_t seed = 7;
  double gamma = 0.9;
  double alpha = 10.0;
};

struct SuiteReport {
  std::size_t instances = 0;
  std::size_t checks_passed = 0;
  std::size_t checks_failed = 0;
  double max_residual = 0.0;
  std::size_t sandwich_instances = 0;
  std::vector<std::string> violations;
  /// Per-check-family reports, aggregated over all instances.
  std::vector<VerificationReport> families;

  bool passed() const { return checks_failed == 0; }
  std::string to_json() const;
};

/// Seeded corpus of random MDPs (|S| in 2..5, |A| in 2..4) exercising every
/// oracle: resolvent-vs-iteration agreement, per-backup identities, sign and
/// dominance relations, exact tightness and the conservatism sandwich.
SuiteReport run_suite(const SuiteOptions& options);

}  // namespace aclql::tabular
