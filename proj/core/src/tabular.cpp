#include "aclql/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace aclql::tabular {

namespace {

constexpr double kStochasticTol = 1e-12;

void dirichlet_row(double* row, std::size_t n, Rng& rng) {
  // Dirichlet(1) via normalized unit exponentials.
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    row[i] = -std::log(1.0 - rng.uniform());
    sum += row[i];
  }
  for (std::size_t i = 0; i < n; ++i) row[i] /= sum;
}

void check_policy(const PolicyTable& p, std::size_t n_states, std::size_t n_actions, const char* name,
                  bool normalized) {
  if (p.size() != n_states * n_actions) throw std::invalid_argument(std::string(name) + ": wrong table size");
  for (std::size_t s = 0; s < n_states; ++s) {
    double sum = 0.0;
    for (std::size_t a = 0; a < n_actions; ++a) {
      const double v = p[s * n_actions + a];
      if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(name) + ": negative entry");
      sum += v;
    }
    if (normalized && std::abs(sum - 1.0) > kStochasticTol) {
      throw std::invalid_argument(std::string(name) + ": row " + std::to_string(s) + " does not sum to 1");
    }
  }
}

std::string pair_name(std::size_t idx, std::size_t n_actions) {
  return "(s=" + std::to_string(idx / n_actions) + ",a=" + std::to_string(idx % n_actions) + ")";
}

QTable pi_weighted_next(const TabularMDP& mdp, const PolicyTable& pi, const QTable& q) {
  // V(s') = sum_a' pi(a'|s') Q(s', a')
  std::vector<double> v(mdp.n_states, 0.0);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    for (std::size_t a = 0; a < mdp.n_actions; ++a) v[s] += pi[mdp.index(s, a)] * q[mdp.index(s, a)];
  }
  QTable out(mdp.pairs(), 0.0);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      double acc = 0.0;
      for (std::size_t n = 0; n < mdp.n_states; ++n) acc += mdp.p(s, a, n) * v[n];
      out[mdp.index(s, a)] = acc;
    }
  }
  return out;
}

}  // namespace

void TabularMDP::validate() const {
  if (n_states == 0 || n_actions == 0) throw std::invalid_argument("TabularMDP: empty state or action space");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("TabularMDP: gamma must lie in (0, 1)");
  if (transitions.size() != pairs() * n_states) throw std::invalid_argument("TabularMDP: transition tensor size");
  if (rewards.size() != pairs()) throw std::invalid_argument("TabularMDP: reward table size");
  for (std::size_t i = 0; i < pairs(); ++i) {
    double sum = 0.0;
    for (std::size_t n = 0; n < n_states; ++n) {
      const double v = transitions[i * n_states + n];
      if (!(v >= 0.0)) throw std::invalid_argument("TabularMDP: negative transition probability");
      sum += v;
    }
    if (std::abs(sum - 1.0) > kStochasticTol) {
      throw std::invalid_argument("TabularMDP: transition row " + pair_name(i, n_actions) + " does not sum to 1");
    }
  }
}

TabularMDP TabularMDP::random(std::size_t n_states, std::size_t n_actions, double gamma, Rng& rng) {
  TabularMDP m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.gamma = gamma;
  m.transitions.resize(n_states * n_actions * n_states);
  m.rewards.resize(n_states * n_actions);
  for (std::size_t i = 0; i < m.pairs(); ++i) dirichlet_row(&m.transitions[i * n_states], n_states, rng);
  for (double& r : m.rewards) r = rng.uniform(-1.0, 1.0);
  return m;
}

void TabularPolicyPair::validate(std::size_t n_states, std::size_t n_actions) const {
  check_policy(pi, n_states, n_actions, "pi", true);
  check_policy(pi_beta, n_states, n_actions, "pi_beta", true);
  check_policy(mu, n_states, n_actions, "mu", !mu_is_measure);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (mu[i] > 0.0 && !(pi_beta[i] > 0.0)) {
      throw std::invalid_argument("support of mu exceeds support of pi_beta at " + pair_name(i, n_actions));
    }
  }
}

WeightAssignment WeightAssignment::constant(std::size_t pairs, double w_mu, double w_beta) {
  return {QTable(pairs, w_mu), QTable(pairs, w_beta)};
}

PolicyTable random_policy(std::size_t n_states, std::size_t n_actions, Rng& rng) {
  PolicyTable p(n_states * n_actions);
  for (std::size_t s = 0; s < n_states; ++s) dirichlet_row(&p[s * n_actions], n_actions, rng);
  return p;
}

QTable bellman_backup(const TabularMDP& mdp, const PolicyTable& pi, const QTable& q) {
  QTable out = pi_weighted_next(mdp, pi, q);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mdp.rewards[i] + mdp.gamma * out[i];
  return out;
}

QTable shifted_backup(const TabularMDP& mdp, const PolicyTable& pi, const QTable& shift, const QTable& q) {
  QTable out = pi_weighted_next(mdp, pi, q);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mdp.rewards[i] - shift[i] + mdp.gamma * out[i];
  return out;
}

std::vector<double> evaluation_matrix(const TabularMDP& mdp, const PolicyTable& pi) {
  const std::size_t n = mdp.pairs();
  std::vector<double> a(n * n, 0.0);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    for (std::size_t act = 0; act < mdp.n_actions; ++act) {
      const std::size_t row = mdp.index(s, act);
      a[row * n + row] += 1.0;
      for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2) {
        const double p = mdp.p(s, act, s2);
        for (std::size_t a2 = 0; a2 < mdp.n_actions; ++a2) {
          a[row * n + mdp.index(s2, a2)] -= mdp.gamma * p * pi[mdp.index(s2, a2)];
        }
      }
    }
  }
  return a;
}

std::vector<double> solve_linear(std::vector<double> a, std::vector<double> b) {
  const std::size_t n = b.size();
  if (a.size() != n * n) throw std::invalid_argument("solve_linear: matrix is not n x n");
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
    }
    if (std::abs(a[pivot * n + col]) < 1e-300) throw std::runtime_error("solve_linear: singular system");
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[pivot * n + c]);
      std::swap(b[col], b[pivot]);
    }
    const double d = a[col * n + col];
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / d;
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double acc = b[i];
    for (std::size_t c = i + 1; c < n; ++c) acc -= a[i * n + c] * x[c];
    x[i] = acc / a[i * n + i];
  }
  return x;
}

QTable resolvent_apply(const TabularMDP& mdp, const PolicyTable& pi, const QTable& v) {
  return solve_linear(evaluation_matrix(mdp, pi), v);
}

QTable conservatism_gap(const TabularPolicyPair& policies, const WeightAssignment& weights, std::size_t n_actions) {
  const std::size_t n = policies.pi_beta.size();
  if (weights.w_mu.size() != n || weights.w_beta.size() != n || policies.mu.size() != n) {
    throw std::invalid_argument("conservatism_gap: table sizes differ");
  }
  QTable gap(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pb = policies.pi_beta[i];
    if (!(pb > 0.0)) throw std::domain_error("conservatism_gap: pi_beta is zero at " + pair_name(i, n_actions));
    gap[i] = (weights.w_mu[i] * policies.mu[i] - weights.w_beta[i] * pb) / pb;
  }
  return gap;
}

QTable gap_to_cql(const TabularPolicyPair& policies, const WeightAssignment& weights, double alpha,
                  std::size_t n_actions) {
  const std::size_t n = policies.pi_beta.size();
  if (weights.w_mu.size() != n || weights.w_beta.size() != n || policies.mu.size() != n) {
    throw std::invalid_argument("gap_to_cql: table sizes differ");
  }
  QTable d(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pb = policies.pi_beta[i];
    if (!(pb > 0.0)) throw std::domain_error("gap_to_cql: pi_beta is zero at " + pair_name(i, n_actions));
    d[i] = ((alpha - weights.w_mu[i]) * policies.mu[i] - (alpha - weights.w_beta[i]) * pb) / pb;
  }
  return d;
}

QTable ordinary_fixed_point(const TabularMDP& mdp, const PolicyTable& pi) {
  return resolvent_apply(mdp, pi, mdp.rewards);
}

QTable acl_fixed_point(const TabularMDP& mdp, const TabularPolicyPair& policies, const WeightAssignment& weights) {
  const QTable gap = conservatism_gap(policies, weights, mdp.n_actions);
  QTable rhs(mdp.pairs());
  for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = mdp.rewards[i] - gap[i];
  return resolvent_apply(mdp, policies.pi, rhs);
}

QTable cql_fixed_point(const TabularMDP& mdp, const TabularPolicyPair& policies, double alpha) {
  QTable rhs(mdp.pairs());
  for (std::size_t i = 0; i < rhs.size(); ++i) {
    const double pb = policies.pi_beta[i];
    if (!(pb > 0.0)) throw std::domain_error("cql_fixed_point: pi_beta is zero at " + pair_name(i, mdp.n_actions));
    rhs[i] = mdp.rewards[i] - alpha * (policies.mu[i] - pb) / pb;
  }
  return resolvent_apply(mdp, policies.pi, rhs);
}

QTable iterate_fixed_point(const TabularMDP& mdp, const PolicyTable& pi, const QTable& shift, double tol,
                           std::size_t max_iters) {
  QTable q(mdp.pairs(), 0.0);
  for (std::size_t it = 0; it < max_iters; ++it) {
    QTable next = shifted_backup(mdp, pi, shift, q);
    const double delta = max_abs_diff(next, q);
    q = std::move(next);
    if (delta <= tol) break;
  }
  return q;
}

double max_abs_diff(const QTable& a, const QTable& b) {
  if (a.size() != b.size()) throw std::invalid_argument("max_abs_diff: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---------------------------------------------------------------------------

void VerificationReport::record(bool ok, const std::string& what) {
  ++checks;
  if (!ok) {
    ++failures;
    if (violations.size() < 50) violations.push_back(name + ": " + what);
  }
}

void VerificationReport::residual(double value, double tolerance, const std::string& what) {
  max_residual = std::max(max_residual, value);
  std::ostringstream msg;
  msg << what << " residual " << value << " > " << tolerance;
  record(value <= tolerance, msg.str());
}

void VerificationReport::merge(const VerificationReport& other) {
  checks += other.checks;
  failures += other.failures;
  max_residual = std::max(max_residual, other.max_residual);
  for (const auto& v : other.violations) {
    if (violations.size() < 50) violations.push_back(v);
  }
}

namespace {

constexpr double kBackupTol = 1e-10;
constexpr double kTightTol = 1e-9;
constexpr double kOrderSlack = 1e-10;

QTable random_q(std::size_t n, Rng& rng) {
  QTable q(n);
  for (double& v : q) v = rng.uniform(-10.0, 10.0);
  return q;
}

bool all_positive(const QTable& t) {
  return std::all_of(t.begin(), t.end(), [](double v) { return v > 0.0; });
}
bool all_negative(const QTable& t) {
  return std::all_of(t.begin(), t.end(), [](double v) { return v < 0.0; });
}

}  // namespace

VerificationReport verify_prop1(const TabularMDP& mdp, const TabularPolicyPair& policies,
                                const WeightAssignment& weights, Rng& rng) {
  VerificationReport rep;
  rep.name = "prop1";
  const QTable gap = conservatism_gap(policies, weights, mdp.n_actions);

  for (int k = 0; k < 3; ++k) {
    const QTable q = random_q(mdp.pairs(), rng);
    const QTable ord = bellman_backup(mdp, policies.pi, q);
    const QTable acl = shifted_backup(mdp, policies.pi, gap, q);
    double worst = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) worst = std::max(worst, std::abs((ord[i] - acl[i]) - gap[i]));
    rep.residual(worst, kBackupTol, "per-backup difference vs gap");
  }

  const QTable q_ord = ordinary_fixed_point(mdp, policies.pi);
  const QTable q_acl = acl_fixed_point(mdp, policies, weights);
  const QTable propagated = resolvent_apply(mdp, policies.pi, gap);
  for (std::size_t i = 0; i < gap.size(); ++i) {
    const double diff = q_ord[i] - q_acl[i];
    if (std::abs(propagated[i]) > 1e-8) {
      rep.record((diff > 0.0) == (propagated[i] > 0.0), "sign mismatch at " + pair_name(i, mdp.n_actions));
    }
  }
  if (all_positive(gap)) {
    for (std::size_t i = 0; i < gap.size(); ++i) {
      rep.record(q_acl[i] <= q_ord[i] + kOrderSlack, "gap > 0 but Q_acl > Q_ord at " + pair_name(i, mdp.n_actions));
    }
  }
  if (all_negative(gap)) {
    for (std::size_t i = 0; i < gap.size(); ++i) {
      rep.record(q_acl[i] + kOrderSlack >= q_ord[i], "gap < 0 but Q_acl < Q_ord at " + pair_name(i, mdp.n_actions));
    }
  }
  return rep;
}

VerificationReport verify_prop2_exact(const TabularMDP& mdp, const TabularPolicyPair& policies,
                                      const WeightAssignment& weights, const std::optional<QTable>& err) {
  VerificationReport rep;
  rep.name = "prop2";
  const QTable gap = conservatism_gap(policies, weights, mdp.n_actions);
  QTable h = resolvent_apply(mdp, policies.pi, gap);
  for (double& v : h) v = -v;
  const QTable q_ord = ordinary_fixed_point(mdp, policies.pi);
  const QTable q_acl = acl_fixed_point(mdp, policies, weights);
  double worst = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) worst = std::max(worst, std::abs((q_acl[i] - q_ord[i]) - h[i]));
  rep.residual(worst, kTightTol, "Q_acl - Q_ord vs h");
  if (err) {
    if (err->size() != h.size()) throw std::invalid_argument("verify_prop2_exact: err table size");
    for (std::size_t i = 0; i < h.size(); ++i) {
      const double diff = q_acl[i] - q_ord[i];
      const double e = (*err)[i];
      rep.record(e >= 0.0 && diff >= h[i] - e && diff <= h[i] + e,
                 "sandwich h - err <= diff <= h + err fails at " + pair_name(i, mdp.n_actions));
    }
  }
  return rep;
}

VerificationReport verify_prop3(const TabularMDP& mdp, const TabularPolicyPair& policies,
                                const WeightAssignment& weights, double alpha, Rng& rng) {
  VerificationReport rep;
  rep.name = "prop3";
  const QTable gap = conservatism_gap(policies, weights, mdp.n_actions);
  const QTable d_cql = gap_to_cql(policies, weights, alpha, mdp.n_actions);
  QTable cql_shift(mdp.pairs());
  for (std::size_t i = 0; i < cql_shift.size(); ++i) {
    cql_shift[i] = alpha * (policies.mu[i] - policies.pi_beta[i]) / policies.pi_beta[i];
  }
  for (int k = 0; k < 3; ++k) {
    const QTable q = random_q(mdp.pairs(), rng);
    const QTable acl = shifted_backup(mdp, policies.pi, gap, q);
    const QTable cql = shifted_backup(mdp, policies.pi, cql_shift, q);
    double worst = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) worst = std::max(worst, std::abs((acl[i] - cql[i]) - d_cql[i]));
    rep.residual(worst, kBackupTol, "per-backup difference vs d_cql");
  }
  const QTable q_acl = acl_fixed_point(mdp, policies, weights);
  const QTable q_cql = cql_fixed_point(mdp, policies, alpha);
  if (all_positive(d_cql)) {
    for (std::size_t i = 0; i < d_cql.size(); ++i) {
      rep.record(q_acl[i] + kOrderSlack >= q_cql[i], "d_cql > 0 but Q_acl < Q_cql at " + pair_name(i, mdp.n_actions));
    }
  }
  if (all_negative(d_cql)) {
    for (std::size_t i = 0; i < d_cql.size(); ++i) {
      rep.record(q_acl[i] <= q_cql[i] + kOrderSlack, "d_cql < 0 but Q_acl > Q_cql at " + pair_name(i, mdp.n_actions));
    }
  }
  return rep;
}

VerificationReport verify_sandwich(const TabularMDP& mdp, const TabularPolicyPair& policies,
                                   const WeightAssignment& weights, double alpha, bool* applicable) {
  VerificationReport rep;
  rep.name = "sandwich";
  const QTable gap = conservatism_gap(policies, weights, mdp.n_actions);
  const QTable d_cql = gap_to_cql(policies, weights, alpha, mdp.n_actions);
  const bool ok = all_positive(gap) && all_positive(d_cql);
  if (applicable) *applicable = ok;
  if (!ok) return rep;
  const QTable q_ord = ordinary_fixed_point(mdp, policies.pi);
  const QTable q_acl = acl_fixed_point(mdp, policies, weights);
  const QTable q_cql = cql_fixed_point(mdp, policies, alpha);
  for (std::size_t i = 0; i < gap.size(); ++i) {
    rep.record(q_cql[i] <= q_acl[i] + kOrderSlack && q_acl[i] <= q_ord[i] + kOrderSlack,
               "Q_cql <= Q_acl <= Q_ord fails at " + pair_name(i, mdp.n_actions));
  }
  return rep;
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kIterTol = 1e-8;

// Keeps pi_beta away from zero so the gap ratios stay well conditioned.
PolicyTable smoothed_policy(std::size_t n_states, std::size_t n_actions, Rng& rng) {
  PolicyTable p = random_policy(n_states, n_actions, rng);
  for (double& v : p) v = 0.9 * v + 0.1 / static_cast<double>(n_actions);
  return p;
}

// w_mu chosen so that (w_mu mu - w_beta pi_beta) / pi_beta equals `gap`.
double w_mu_for_gap(double gap, double w_beta, double mu, double pi_beta) { return (gap + w_beta) * pi_beta / mu; }

// w_mu chosen so that ((alpha - w_mu) mu - (alpha - w_beta) pi_beta) / pi_beta equals `d`.
double w_mu_for_cql_gap(double d, double w_beta, double alpha, double mu, double pi_beta) {
  return alpha - (d + alpha - w_beta) * pi_beta / mu;
}

void check_iteration(VerificationReport& rep, const TabularMDP& mdp, const PolicyTable& pi, const QTable& shift,
                     const QTable& solved, const std::string& what) {
  const QTable iterated = iterate_fixed_point(mdp, pi, shift);
  rep.residual(max_abs_diff(iterated, solved), kIterTol, what + " resolvent vs iterated backup");
}

}  // namespace

SuiteReport run_suite(const SuiteOptions& opt) {
  std::map<std::string, VerificationReport> fam;
  auto family = [&](const std::string& name) -> VerificationReport& {
    auto& r = fam[name];
    r.name = name;
    return r;
  };
  SuiteReport out;

  for (std::size_t trial = 0; trial < opt.trials; ++trial) {
    Rng rng = Rng::stream(opt.seed, RngComponent::kTabular, trial);
    const std::size_t n_s = 2 + rng.index(4);
    const std::size_t n_a = 2 + rng.index(3);
    const TabularMDP mdp = TabularMDP::random(n_s, n_a, opt.gamma, rng);
    mdp.validate();
    const std::size_t n = mdp.pairs();
    const double alpha = opt.alpha;

    TabularPolicyPair pol;
    pol.pi = random_policy(n_s, n_a, rng);
    pol.pi_beta = smoothed_policy(n_s, n_a, rng);
    pol.mu = smoothed_policy(n_s, n_a, rng);
    pol.validate(n_s, n_a);

    // (a) random signed weights: identities and fixed-point agreement.
    WeightAssignment w{QTable(n), QTable(n)};
    for (std::size_t i = 0; i < n; ++i) {
      w.w_mu[i] = rng.uniform(-2.0, 2.0);
      w.w_beta[i] = rng.uniform(-2.0, 2.0);
    }
    {
      auto& it = family("fixed_point_iteration");
      const QTable zero(n, 0.0);
      check_iteration(it, mdp, pol.pi, zero, ordinary_fixed_point(mdp, pol.pi), "ordinary");
      check_iteration(it, mdp, pol.pi, conservatism_gap(pol, w, n_a), acl_fixed_point(mdp, pol, w), "acl");
      QTable cql_shift(n);
      for (std::size_t i = 0; i < n; ++i) cql_shift[i] = alpha * (pol.mu[i] - pol.pi_beta[i]) / pol.pi_beta[i];
      check_iteration(it, mdp, pol.pi, cql_shift, cql_fixed_point(mdp, pol, alpha), "cql");
    }
    family("prop1").merge(verify_prop1(mdp, pol, w, rng));
    family("prop2").merge(verify_prop2_exact(mdp, pol, w));
    family("prop3").merge(verify_prop3(mdp, pol, w, alpha, rng));
    {
      const QTable gap = conservatism_gap(pol, w, n_a);
      QTable h = resolvent_apply(mdp, pol.pi, gap);
      QTable err(n);
      for (std::size_t i = 0; i < n; ++i) err[i] = 0.5 * std::abs(h[i]);
      family("prop2").merge(verify_prop2_exact(mdp, pol, w, err));
    }

    // Special-case collapse.
    {
      auto& sc = family("special_cases");
      sc.residual(max_abs_diff(acl_fixed_point(mdp, pol, WeightAssignment::constant(n, alpha, alpha)),
                               cql_fixed_point(mdp, pol, alpha)),
                  1e-10, "w_mu = w_beta = alpha vs cql");
      sc.residual(max_abs_diff(acl_fixed_point(mdp, pol, WeightAssignment::constant(n, 0.0, 0.0)),
                               ordinary_fixed_point(mdp, pol.pi)),
                  1e-10, "w_mu = w_beta = 0 vs ordinary");
    }

    // Signed-gap corpora for the dominance relations.
    auto build = [&](auto&& gap_target, bool relative_to_cql) {
      WeightAssignment ww{QTable(n), QTable(n)};
      for (std::size_t i = 0; i < n; ++i) {
        ww.w_beta[i] = rng.uniform(0.0, 2.0);
        const double g = gap_target();
        ww.w_mu[i] = relative_to_cql ? w_mu_for_cql_gap(g, ww.w_beta[i], alpha, pol.mu[i], pol.pi_beta[i])
                                     : w_mu_for_gap(g, ww.w_beta[i], pol.mu[i], pol.pi_beta[i]);
      }
      return ww;
    };
    family("prop1").merge(verify_prop1(mdp, pol, build([&] { return rng.uniform(0.1, 1.0); }, false), rng));
    family("prop1").merge(verify_prop1(mdp, pol, build([&] { return rng.uniform(-1.0, -0.1); }, false), rng));
    family("prop3").merge(verify_prop3(mdp, pol, build([&] { return rng.uniform(0.1, 1.0); }, true), alpha, rng));
    family("prop3").merge(verify_prop3(mdp, pol, build([&] { return rng.uniform(-1.0, -0.1); }, true), alpha, rng));

    // Sandwich on the normalized instance (applies only if both gaps are
    // positive everywhere) and on a constructed instance where mu is a
    // non-normalized measure dominating pi_beta.
    {
      bool applicable = false;
      family("sandwich").merge(verify_sandwich(mdp, pol, w, alpha, &applicable));
      if (applicable) ++out.sandwich_instances;

      TabularPolicyPair scaled = pol;
      scaled.mu_is_measure = true;
      const PolicyTable base = smoothed_policy(n_s, n_a, rng);
      double scale = 0.0;
      for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, pol.pi_beta[i] / base[i]);
      for (std::size_t i = 0; i < n; ++i) scaled.mu[i] = 1.5 * scale * base[i];
      scaled.validate(n_s, n_a);
      WeightAssignment ws{QTable(n), QTable(n)};
      for (std::size_t i = 0; i < n; ++i) {
        const double cql_gap = alpha * (scaled.mu[i] - scaled.pi_beta[i]) / scaled.pi_beta[i];
        const double theta = rng.uniform(0.2, 0.8);
        ws.w_beta[i] = rng.uniform(0.0, alpha);
        ws.w_mu[i] = w_mu_for_gap(theta * cql_gap, ws.w_beta[i], scaled.mu[i], scaled.pi_beta[i]);
      }
      bool constructed = false;
      family("sandwich").merge(verify_sandwich(mdp, scaled, ws, alpha, &constructed));
      family("sandwich").record(constructed, "constructed sandwich instance lacks positive gaps");
      if (constructed) ++out.sandwich_instances;
    }
    ++out.instances;
  }

  for (auto& [name, rep] : fam) {
    out.checks_passed += rep.checks - rep.failures;
    out.checks_failed += rep.failures;
    out.max_residual = std::max(out.max_residual, rep.max_residual);
    for (const auto& v : rep.violations) out.violations.push_back(v);
    out.families.push_back(rep);
  }
  return out;
}

std::string SuiteReport::to_json() const {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["instances"] = instances;
  j["checks_passed"] = checks_passed;
  j["checks_failed"] = checks_failed;
  j["max_residual"] = max_residual;
  j["sandwich_instances"] = sandwich_instances;
  j["violations"] = violations;
  nlohmann::ordered_json fams = nlohmann::ordered_json::object();
  for (const auto& f : families) {
    fams[f.name] = {{"checks", f.checks}, {"failures", f.failures}, {"max_residual", f.max_residual}};
  }
  j["families"] = fams;
  return j.dump(2);
}

}  // namespace aclql::tabular
