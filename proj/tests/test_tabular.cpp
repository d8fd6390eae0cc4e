#include "doctest.h"

#include <cmath>

#include "aclql/tabular.hpp"
#include "json.hpp"

using namespace aclql;
using namespace aclql::tabular;

namespace {

TabularMDP one_state(double r, double gamma) {
  TabularMDP m;
  m.n_states = 1;
  m.n_actions = 1;
  m.transitions = {1.0};
  m.rewards = {r};
  m.gamma = gamma;
  return m;
}

/// Plain value iteration on r - shift + gamma P^pi Q, written out directly.
QTable value_iteration(const TabularMDP& m, const PolicyTable& pi, const QTable& shift, int iters) {
  QTable q(m.pairs(), 0.0);
  for (int it = 0; it < iters; ++it) {
    QTable next(m.pairs());
    for (std::size_t s = 0; s < m.n_states; ++s) {
      for (std::size_t a = 0; a < m.n_actions; ++a) {
        double v = 0.0;
        for (std::size_t s2 = 0; s2 < m.n_states; ++s2) {
          double inner = 0.0;
          for (std::size_t a2 = 0; a2 < m.n_actions; ++a2) inner += pi[s2 * m.n_actions + a2] * q[s2 * m.n_actions + a2];
          v += m.p(s, a, s2) * inner;
        }
        next[m.index(s, a)] = m.rewards[m.index(s, a)] - shift[m.index(s, a)] + m.gamma * v;
      }
    }
    q = next;
  }
  return q;
}

struct Instance {
  TabularMDP mdp;
  TabularPolicyPair pol;
};

Instance random_instance(std::uint64_t seed, std::size_t ns = 5, std::size_t na = 3) {
  Rng rng = Rng::stream(seed, RngComponent::kSynthetic, 20);
  Instance in{TabularMDP::random(ns, na, 0.9, rng), {}};
  in.pol.pi = random_policy(ns, na, rng);
  in.pol.pi_beta = random_policy(ns, na, rng);
  for (double& p : in.pol.pi_beta) p = 0.9 * p + 0.1 / static_cast<double>(na);
  in.pol.mu = random_policy(ns, na, rng);
  return in;
}

}  // namespace

TEST_CASE("ordinary fixed point") {
  CHECK(ordinary_fixed_point(one_state(1.0, 0.5), {1.0})[0] == doctest::Approx(2.0).epsilon(1e-14));
  TabularMDP zero = one_state(0.0, 0.5);
  CHECK(ordinary_fixed_point(zero, {1.0})[0] == 0.0);

  const Instance in = random_instance(1);
  const QTable exact = ordinary_fixed_point(in.mdp, in.pol.pi);
  const QTable vi = value_iteration(in.mdp, in.pol.pi, QTable(in.mdp.pairs(), 0.0), 400);
  CHECK(max_abs_diff(exact, vi) <= 1e-12);
}

TEST_CASE("weighted fixed point on one state") {
  const TabularMDP m = one_state(1.0, 0.5);
  TabularPolicyPair pol{{1.0}, {1.0}, {1.0}};
  const WeightAssignment w = WeightAssignment::constant(1, 2.0, 1.0);
  CHECK(conservatism_gap(pol, w, 1)[0] == 1.0);
  const QTable q = acl_fixed_point(m, pol, w);
  CHECK(q[0] == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(ordinary_fixed_point(m, {1.0})[0] - q[0] == doctest::Approx(2.0));
  CHECK(max_abs_diff(q, iterate_fixed_point(m, pol.pi, {1.0}, 1e-14)) <= 1e-10);
}

TEST_CASE("weighted fixed point special cases") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Instance in = random_instance(seed);
    const auto pairs = in.mdp.pairs();
    CHECK(max_abs_diff(acl_fixed_point(in.mdp, in.pol, WeightAssignment::constant(pairs, 0, 0)),
                       ordinary_fixed_point(in.mdp, in.pol.pi)) <= 1e-12);
    CHECK(max_abs_diff(acl_fixed_point(in.mdp, in.pol, WeightAssignment::constant(pairs, 10, 10)),
                       cql_fixed_point(in.mdp, in.pol, 10.0)) <= 1e-10);
    CHECK(max_abs_diff(cql_fixed_point(in.mdp, in.pol, 0.0), ordinary_fixed_point(in.mdp, in.pol.pi)) <= 1e-12);
    TabularPolicyPair same = in.pol;
    same.mu = same.pi_beta;
    CHECK(max_abs_diff(cql_fixed_point(in.mdp, same, 10.0), ordinary_fixed_point(in.mdp, in.pol.pi)) <= 1e-10);

    // Fixed-alpha Q against independent value iteration on the shifted reward.
    QTable shift(pairs);
    for (std::size_t i = 0; i < pairs; ++i) shift[i] = 10.0 * (in.pol.mu[i] - in.pol.pi_beta[i]) / in.pol.pi_beta[i];
    CHECK(max_abs_diff(cql_fixed_point(in.mdp, in.pol, 10.0), value_iteration(in.mdp, in.pol.pi, shift, 400)) <=
          1e-8);
  }
}

TEST_CASE("sign of the gap orders the fixed points") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Instance in = random_instance(seed);
    in.pol.mu = in.pol.pi_beta;
    const auto pairs = in.mdp.pairs();
    const QTable ord = ordinary_fixed_point(in.mdp, in.pol.pi);
    const QTable above = acl_fixed_point(in.mdp, in.pol, WeightAssignment::constant(pairs, 1.0, 2.0));  // gap = -1
    const QTable below = acl_fixed_point(in.mdp, in.pol, WeightAssignment::constant(pairs, 2.0, 1.0));  // gap = +1
    for (std::size_t i = 0; i < pairs; ++i) {
      CHECK(below[i] <= ord[i]);
      CHECK(above[i] >= ord[i]);
      // A constant gap g shifts every value by g / (1 - gamma).
      CHECK(ord[i] - below[i] == doctest::Approx(10.0).epsilon(1e-10));
    }
    const double alpha = 5.0;
    const QTable cql = cql_fixed_point(in.mdp, in.pol, alpha);
    const QTable less = acl_fixed_point(in.mdp, in.pol, WeightAssignment::constant(pairs, alpha - 1, alpha));
    const QTable more = acl_fixed_point(in.mdp, in.pol, WeightAssignment::constant(pairs, alpha + 1, alpha));
    CHECK(gap_to_cql(in.pol, WeightAssignment::constant(pairs, alpha - 1, alpha), alpha, in.mdp.n_actions)[0] ==
          doctest::Approx(1.0));
    for (std::size_t i = 0; i < pairs; ++i) {
      CHECK(less[i] >= cql[i]);
      CHECK(more[i] <= cql[i]);
    }
  }
}

TEST_CASE("exact tightness of the value difference") {
  const TabularMDP m = one_state(1.0, 0.5);
  TabularPolicyPair pol{{1.0}, {1.0}, {1.0}};
  const auto rep = verify_prop2_exact(m, pol, WeightAssignment::constant(1, 2.0, 1.0));
  CHECK(rep.passed());
  CHECK(rep.max_residual <= 1e-12);
  const Instance in = random_instance(3);
  QTable err(in.mdp.pairs(), 0.25);
  CHECK(verify_prop2_exact(in.mdp, in.pol, WeightAssignment::constant(in.mdp.pairs(), 0.0, 0.0), err).passed());
}

TEST_CASE("zero probability behavior entry is reported") {
  TabularPolicyPair pol{{0.5, 0.5}, {1.0, 0.0}, {0.5, 0.5}};
  try {
    conservatism_gap(pol, WeightAssignment::constant(2, 1.0, 1.0), 2);
    FAIL("expected domain_error");
  } catch (const std::domain_error& e) {
    CHECK(std::string(e.what()).find("(s=0,a=1)") != std::string::npos);
  }
}

TEST_CASE("validation") {
  TabularMDP m = one_state(1.0, 1.0);
  CHECK_THROWS(m.validate());
  m = one_state(1.0, 0.5);
  m.transitions = {0.9};
  CHECK_THROWS(m.validate());
  CHECK_THROWS(solve_linear({1.0, 2.0, 2.0, 4.0}, {1.0, 1.0}));
  const auto x = solve_linear({0.0, 1.0, 2.0, 0.0}, {3.0, 4.0});  // needs pivoting
  CHECK(x[0] == 2.0);
  CHECK(x[1] == 3.0);
}

TEST_CASE("small suite run is clean and reports as JSON") {
  SuiteOptions opt;
  opt.trials = 10;
  const SuiteReport rep = run_suite(opt);
  CHECK(rep.passed());
  CHECK(rep.instances == 10);
  CHECK(rep.sandwich_instances > 0);
  const auto j = nlohmann::json::parse(rep.to_json());
  CHECK(j["checks_failed"] == 0);
  CHECK(j["families"].size() == rep.families.size());
  CHECK(rep.to_json() == run_suite(opt).to_json());
}
