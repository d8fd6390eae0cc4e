#include "aclql/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace aclql {

Matrix state_action(const Matrix& states, const Matrix& actions) {
  if (states.rows() != actions.rows()) throw std::invalid_argument("state_action: row count mismatch");
  Matrix x(states.rows(), states.cols() + actions.cols());
  x.leftCols(states.cols()) = states;
  x.rightCols(actions.cols()) = actions;
  return x;
}

Vector min_twin_q(const TwinCritic& critics, const Matrix& states, const Matrix& actions) {
  const Matrix x = state_action(states, actions);
  const Matrix q1 = critics.q1.forward(x);
  const Matrix q2 = critics.q2.forward(x);
  return q1.col(0).cwiseMin(q2.col(0));
}

Vector td_targets(const TwinCritic& targets, const Mlp& actor, const BatchSample& batch, double gamma,
                  const Matrix& next_noise) {
  const ActorSample next = actor_sample(actor, batch.next_states, next_noise);
  const Vector q_next = min_twin_q(targets, batch.next_states, next.action);
  Vector y(batch.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    y(i) = batch.rewards(i) + gamma * (1.0 - batch.dones(i)) * q_next(i);
  }
  return y;
}

double td_loss(const TwinCritic& critics, const BatchSample& batch, const Vector& targets, TwinGradients* grads) {
  const Matrix x = state_action(batch.states, batch.actions);
  const auto n = x.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  auto one = [&](const Mlp& q, Gradients* g) {
    MlpTape tape;
    const Matrix out = q.forward(x, tape);
    Matrix d(n, 1);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e = out(i, 0) - targets(i);
      acc += e * e;
      d(i, 0) = e * inv_n;
    }
    if (g) q.backward(tape, d, *g);
    total += 0.5 * acc * inv_n;
  };
  one(critics.q1, grads ? &grads->g1 : nullptr);
  one(critics.q2, grads ? &grads->g2 : nullptr);
  return total;
}

namespace {

// Shared by both penalties so that constant weights equal to alpha take the
// exact same floating-point path as the fixed-alpha penalty.
template <typename OodWeight, typename InWeight>
double weighted_gap(const TwinCritic& critics, const BatchSample& batch, OodWeight w_ood, InWeight w_in,
                    TwinGradients* grads) {
  const Matrix x_ood = state_action(batch.ood_states, batch.ood_actions);
  const Matrix x_in = state_action(batch.states, batch.actions);
  const double inv_ood = 1.0 / static_cast<double>(x_ood.rows());
  const double inv_in = 1.0 / static_cast<double>(x_in.rows());
  double total = 0.0;
  auto one = [&](const Mlp& q, Gradients* g) {
    MlpTape tape_ood;
    MlpTape tape_in;
    const Matrix q_ood = q.forward(x_ood, tape_ood);
    const Matrix q_in = q.forward(x_in, tape_in);
    Matrix d_ood(x_ood.rows(), 1);
    Matrix d_in(x_in.rows(), 1);
    double s_ood = 0.0;
    for (Eigen::Index i = 0; i < x_ood.rows(); ++i) {
      const double w = w_ood(i);
      s_ood += w * q_ood(i, 0);
      d_ood(i, 0) = w * inv_ood;
    }
    double s_in = 0.0;
    for (Eigen::Index i = 0; i < x_in.rows(); ++i) {
      const double w = w_in(i);
      s_in += w * q_in(i, 0);
      d_in(i, 0) = -w * inv_in;
    }
    if (g) {
      q.backward(tape_ood, d_ood, *g);
      q.backward(tape_in, d_in, *g);
    }
    total += s_ood * inv_ood - s_in * inv_in;
  };
  one(critics.q1, grads ? &grads->g1 : nullptr);
  one(critics.q2, grads ? &grads->g2 : nullptr);
  return total;
}

}  // namespace

double cql_penalty(const TwinCritic& critics, const BatchSample& batch, double alpha, TwinGradients* grads) {
  auto constant = [alpha](Eigen::Index) { return alpha; };
  return weighted_gap(critics, batch, constant, constant, grads);
}

double acl_penalty(const TwinCritic& critics, const Vector& w_mu_ood, const Vector& w_beta_in,
                   const BatchSample& batch, TwinGradients* grads) {
  if (w_mu_ood.size() != batch.ood_actions.rows() || w_beta_in.size() != batch.actions.rows()) {
    throw std::invalid_argument("acl_penalty: weight vectors do not match the batch");
  }
  return weighted_gap(
      critics, batch, [&](Eigen::Index i) { return w_mu_ood(i); }, [&](Eigen::Index i) { return w_beta_in(i); },
      grads);
}

std::vector<std::size_t> random_derangement(std::size_t n, Rng& rng) {
  if (n < 2) throw std::invalid_argument("random_derangement: need at least two elements");
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = rng.index(i);  // j < i
    std::swap(p[i], p[j]);
  }
  return p;
}

namespace {

Vector softmax(const Vector& x) {
  const double mx = x.maxCoeff();
  Vector e = (x.array() - mx).exp().matrix();
  return e / e.sum();
}

// Gradient through softmax: J^T g = s * (g - <g, s>).
Vector softmax_backward(const Vector& s, const Vector& g) {
  const double dot = s.dot(g);
  return (s.array() * (g.array() - dot)).matrix();
}

void check_pairing(const std::vector<std::size_t>& pair, Eigen::Index n, const char* what) {
  if (n < 2) throw std::invalid_argument(std::string("monotonicity_loss: ") + what + " batch needs >= 2 entries");
  if (static_cast<Eigen::Index>(pair.size()) != n) {
    throw std::invalid_argument(std::string("monotonicity_loss: ") + what + " pairing has wrong length");
  }
  std::vector<bool> seen(pair.size(), false);
  for (std::size_t v : pair) {
    if (static_cast<Eigen::Index>(v) >= n) throw std::invalid_argument("monotonicity_loss: pairing index out of range");
    if (seen[v]) throw std::invalid_argument(std::string("monotonicity_loss: ") + what + " pairing is not a permutation");
    seen[v] = true;
  }
}

}  // namespace

MonotonicityResult monotonicity_loss(const Vector& w_mu, const Vector& m_ood, const std::vector<std::size_t>& pair_mu,
                                     const Vector& w_beta, const Vector& m_in,
                                     const std::vector<std::size_t>& pair_beta) {
  if (w_mu.size() != m_ood.size() || w_beta.size() != m_in.size()) {
    throw std::invalid_argument("monotonicity_loss: weight and quality vectors differ in length");
  }
  check_pairing(pair_mu, w_mu.size(), "OOD");
  check_pairing(pair_beta, w_beta.size(), "in-dataset");

  MonotonicityResult res;
  {
    const Vector a = softmax(w_mu);
    const Vector p = softmax(m_ood);
    const auto n = a.size();
    const double inv = 1.0 / static_cast<double>(n);
    Vector g = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto j = static_cast<Eigen::Index>(pair_mu[static_cast<std::size_t>(i)]);
      const double r = (a(i) - a(j)) - (p(j) - p(i));
      res.value += r * r * inv;
      g(i) += 2.0 * r * inv;
      g(j) -= 2.0 * r * inv;
    }
    res.d_w_mu = softmax_backward(a, g);
  }
  {
    const Vector b = softmax(w_beta);
    const Vector q = softmax(m_in);
    const auto n = b.size();
    const double inv = 1.0 / static_cast<double>(n);
    Vector g = Vector::Zero(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto l = static_cast<Eigen::Index>(pair_beta[static_cast<std::size_t>(k)]);
      const double r = (b(k) - b(l)) - (q(k) - q(l));
      res.value += r * r * inv;
      g(k) += 2.0 * r * inv;
      g(l) -= 2.0 * r * inv;
    }
    res.d_w_beta = softmax_backward(b, g);
  }
  return res;
}

HingeResult surrogate_hinges(const Vector& w_mu, const Vector& w_beta, const Vector& ln_mu, const Vector& ln_beta,
                             const Vector& d_ord, const Vector& d_cql, double alpha) {
  const auto n = w_mu.size();
  if (w_beta.size() != n || ln_mu.size() != n || ln_beta.size() != n || d_ord.size() != n || d_cql.size() != n) {
    throw std::invalid_argument("surrogate_hinges: vectors differ in length");
  }
  if (n == 0) throw std::invalid_argument("surrogate_hinges: empty input");
  HingeResult res;
  res.d_w_mu = Vector::Zero(n);
  res.d_w_beta = Vector::Zero(n);
  const double inv = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(ln_mu(i)) || !std::isfinite(ln_beta(i))) {
      throw std::invalid_argument("surrogate_hinges: non-finite log-density at entry " + std::to_string(i));
    }
    const double cm = ln_mu(i) + 1.0;
    const double cb = ln_beta(i) + 1.0;
    const double ord = w_beta(i) * cb - w_mu(i) * cm + d_ord(i) * cb;
    if (ord > 0.0) {
      res.l_ord += ord * inv;
      res.d_w_beta(i) += cb * inv;
      res.d_w_mu(i) -= cm * inv;
    }
    const double cq = (w_mu(i) - alpha) * cm - (w_beta(i) - alpha) * cb + d_cql(i) * cb;
    if (cq > 0.0) {
      res.l_cql += cq * inv;
      res.d_w_mu(i) += cm * inv;
      res.d_w_beta(i) -= cb * inv;
    }
  }
  return res;
}

PositivityResult positivity_loss(const Vector& w_mu, const Vector& w_beta) {
  PositivityResult res;
  res.d_w_mu = Vector::Zero(w_mu.size());
  res.d_w_beta = Vector::Zero(w_beta.size());
  if (w_mu.size() > 0) {
    const double inv = 1.0 / static_cast<double>(w_mu.size());
    for (Eigen::Index i = 0; i < w_mu.size(); ++i) {
      if (w_mu(i) < 0.0) {
        res.value -= w_mu(i) * inv;
        res.d_w_mu(i) = -inv;
      }
    }
  }
  if (w_beta.size() > 0) {
    const double inv = 1.0 / static_cast<double>(w_beta.size());
    for (Eigen::Index i = 0; i < w_beta.size(); ++i) {
      if (w_beta(i) < 0.0) {
        res.value -= w_beta(i) * inv;
        res.d_w_beta(i) = -inv;
      }
    }
  }
  return res;
}

WeightOutputs evaluate_weights(const Mlp& weight_net, const BatchSample& batch) {
  const Matrix w_ood = weight_net.forward(state_action(batch.ood_states, batch.ood_actions));
  const Matrix w_in = weight_net.forward(state_action(batch.states, batch.actions));
  return {w_ood.col(0), w_ood.col(1), w_in.col(0), w_in.col(1)};
}

double weight_total_loss(const Mlp& weight_net, const BatchSample& batch, double alpha,
                         const std::vector<std::size_t>& pair_mu, const std::vector<std::size_t>& pair_beta,
                         Gradients* grads, LossReport* report) {
  MlpTape tape_ood;
  MlpTape tape_in;
  const Matrix out_ood = weight_net.forward(state_action(batch.ood_states, batch.ood_actions), tape_ood);
  const Matrix out_in = weight_net.forward(state_action(batch.states, batch.actions), tape_in);
  const auto n_ood = out_ood.rows();
  const auto n_in = out_in.rows();

  const auto mono = monotonicity_loss(out_ood.col(0), batch.m_ood, pair_mu, out_in.col(1), batch.m_in, pair_beta);

  // Hinge and positivity terms see OOD points first, then logged actions.
  const auto n_all = n_ood + n_in;
  Vector w_mu(n_all), w_beta(n_all), ln_mu(n_all), ln_beta(n_all), d_ord(n_all), d_cql(n_all);
  w_mu << out_ood.col(0), out_in.col(0);
  w_beta << out_ood.col(1), out_in.col(1);
  ln_mu << batch.ood_log_prob_pi, batch.in_log_prob_pi;
  ln_beta << batch.ood_log_prob_beta, batch.in_log_prob_beta;
  d_ord << batch.ood_d_ord, batch.d_ord;
  d_cql << batch.ood_d_cql, batch.d_cql;

  const auto hinge = surrogate_hinges(w_mu, w_beta, ln_mu, ln_beta, d_ord, d_cql, alpha);
  const auto pos = positivity_loss(w_mu, w_beta);

  const double total = hinge.l_ord + hinge.l_cql + mono.value + pos.value;
  if (report) {
    report->mono = mono.value;
    report->ord = hinge.l_ord;
    report->cql = hinge.l_cql;
    report->pos = pos.value;
    report->weight_total = total;
  }
  if (grads) {
    Matrix d_ood(n_ood, 2);
    Matrix d_in(n_in, 2);
    for (Eigen::Index i = 0; i < n_ood; ++i) {
      d_ood(i, 0) = hinge.d_w_mu(i) + pos.d_w_mu(i) + mono.d_w_mu(i);
      d_ood(i, 1) = hinge.d_w_beta(i) + pos.d_w_beta(i);
    }
    for (Eigen::Index i = 0; i < n_in; ++i) {
      d_in(i, 0) = hinge.d_w_mu(n_ood + i) + pos.d_w_mu(n_ood + i);
      d_in(i, 1) = hinge.d_w_beta(n_ood + i) + pos.d_w_beta(n_ood + i) + mono.d_w_beta(i);
    }
    weight_net.backward(tape_ood, d_ood, *grads);
    weight_net.backward(tape_in, d_in, *grads);
  }
  return total;
}

double bc_loss(const Mlp& behavior, const Matrix& states, const Matrix& actions, Gradients* grads) {
  MlpTape tape;
  const Matrix mean = behavior.forward(states, tape);
  if (mean.rows() != actions.rows() || mean.cols() != actions.cols()) {
    throw std::invalid_argument("bc_loss: action shape does not match network output");
  }
  const Matrix diff = mean - actions;
  const double inv = 1.0 / static_cast<double>(mean.rows());
  if (grads) behavior.backward(tape, (2.0 * inv) * diff, *grads);
  return diff.squaredNorm() * inv;
}

ActorLossResult actor_loss(const Mlp& actor, const TwinCritic& critics, const Matrix& states, const Matrix& noise,
                           double temperature, Gradients* grads) {
  const ActorSample sample = actor_sample(actor, states, noise);
  const Matrix x = state_action(states, sample.action);
  MlpTape t1;
  MlpTape t2;
  const Matrix q1 = critics.q1.forward(x, t1);
  const Matrix q2 = critics.q2.forward(x, t2);
  const auto n = states.rows();
  const double inv = 1.0 / static_cast<double>(n);

  ActorLossResult res;
  Matrix d_q1 = Matrix::Zero(n, 1);
  Matrix d_q2 = Matrix::Zero(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool first = q1(i, 0) <= q2(i, 0);
    const double q = first ? q1(i, 0) : q2(i, 0);
    res.value += (temperature * sample.log_prob(i) - q) * inv;
    res.mean_log_prob += sample.log_prob(i) * inv;
    (first ? d_q1 : d_q2)(i, 0) = -inv;
  }
  if (grads) {
    // Critic parameter gradients are discarded; only dQ/da is needed.
    Gradients scratch1 = critics.q1.zero_gradients();
    Gradients scratch2 = critics.q2.zero_gradients();
    const Matrix dx1 = critics.q1.backward(t1, d_q1, scratch1);
    const Matrix dx2 = critics.q2.backward(t2, d_q2, scratch2);
    const auto act_dim = sample.action.cols();
    const Matrix d_action = dx1.rightCols(act_dim) + dx2.rightCols(act_dim);
    const Vector d_log_prob = Vector::Constant(n, temperature * inv);
    actor_backward(actor, sample, d_action, d_log_prob, *grads);
  }
  return res;
}

}  // namespace aclql
