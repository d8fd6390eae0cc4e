#include "aclql/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "aclql/format.hpp"
#include "json.hpp"

namespace aclql {

namespace {

Matrix normals(Rng rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

Matrix gather(const Matrix& src, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = src.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

Vector gather(const Vector& src, std::span<const std::size_t> rows) {
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = src(static_cast<Eigen::Index>(rows[i]));
  return out;
}

std::vector<double> row_vector(const Matrix& m, Eigen::Index r) {
  std::vector<double> v(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) v[static_cast<std::size_t>(j)] = m(r, j);
  return v;
}

bool uses_learned_weights(const RunConfig& c) { return c.algorithm == Algorithm::kAclQl && !c.clamp_weights; }

void require_finite(double v, std::int64_t step, const char* component) {
  if (!std::isfinite(v)) {
    throw std::runtime_error("non-finite " + std::string(component) + " loss at step " + std::to_string(step));
  }
}

std::string step_name(std::int64_t step) {
  std::ostringstream s;
  s << "step_" << std::setw(8) << std::setfill('0') << step << ".json";
  return s.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

TrainingData TrainingData::build(const OfflineDataset& ds, const std::vector<QualityAnnotation>& quality,
                                 const DatasetStats& stats) {
  const auto n = static_cast<Eigen::Index>(ds.count_transitions());
  if (quality.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("TrainingData: quality annotations do not match the dataset");
  }
  TrainingData d;
  d.env = ds.env;
  d.states.resize(n, static_cast<Eigen::Index>(ds.obs_dim));
  d.next_states.resize(n, static_cast<Eigen::Index>(ds.obs_dim));
  d.actions.resize(n, static_cast<Eigen::Index>(ds.action_dim));
  d.rewards.resize(n);
  d.dones.resize(n);
  d.m.resize(n);
  Eigen::Index i = 0;
  for (const auto& ep : ds.episodes) {
    for (const auto& t : ep.transitions) {
      const auto& q = quality[static_cast<std::size_t>(i)];
      if (q.episode_id != t.episode_id || q.step_index != t.step_index) {
        throw std::invalid_argument("TrainingData: quality annotations are not in dataset order");
      }
      for (std::size_t k = 0; k < ds.obs_dim; ++k) {
        d.states(i, static_cast<Eigen::Index>(k)) = t.state[k];
        d.next_states(i, static_cast<Eigen::Index>(k)) = t.next_state[k];
      }
      for (std::size_t k = 0; k < ds.action_dim; ++k) d.actions(i, static_cast<Eigen::Index>(k)) = t.action[k];
      d.rewards(i) = t.reward;
      d.dones(i) = t.done ? 1.0 : 0.0;
      d.m(i) = q.m;
      ++i;
    }
  }
  d.gap_scale = stats.r_max - stats.r_min;
  return d;
}

TrainingData TrainingData::build(const OfflineDataset& ds, const RunConfig& config) {
  const DatasetStats stats = compute_stats(ds, ds.gamma);
  return build(ds, annotate_dataset(ds, stats, config.lambda_quality, config.quality_mode), stats);
}

TrainerState TrainerState::initialize(std::size_t obs_dim, std::size_t action_dim, const RunConfig& c) {
  auto init = [&](ApproximatorSpec spec, std::uint64_t k) {
    Rng rng = Rng::stream(c.seed, RngComponent::kInit, k);
    return Mlp::initialized(std::move(spec), rng);
  };
  TrainerState s;
  s.actor = init(ApproximatorSpec::actor(obs_dim, action_dim, c.hidden), 0);
  s.critics.q1 = init(ApproximatorSpec::critic(obs_dim, action_dim, c.hidden), 1);
  s.critics.q2 = init(ApproximatorSpec::critic(obs_dim, action_dim, c.hidden), 2);
  s.targets = s.critics;
  s.weight_net = init(ApproximatorSpec::weight_net(obs_dim, action_dim, c.hidden), 3);
  s.behavior = init(ApproximatorSpec::behavior(obs_dim, action_dim, c.hidden, c.bc_sigma), 4);
  s.log_temperature = ParameterBlock::zeros("log_temperature", {1});
  s.log_temperature.values[0] = std::log(c.initial_temperature);
  return s;
}

Checkpoint TrainerState::checkpoint(const std::string& config_hash) const {
  Checkpoint ck;
  ck.config_hash = config_hash;
  ck.step = step;
  ck.add_network("actor", actor);
  ck.add_network("q1", critics.q1);
  ck.add_network("q2", critics.q2);
  ck.add_network("q1_target", targets.q1);
  ck.add_network("q2_target", targets.q2);
  ck.add_network("weight", weight_net);
  ck.add_network("behavior", behavior);
  ck.add_scalar("log_temperature", log_temperature.values[0]);
  return ck;
}

TrainerState TrainerState::from_checkpoint(const Checkpoint& ck, double bc_sigma) {
  TrainerState s;
  s.actor = ck.network("actor", HeadKind::kTanhGaussian);
  s.critics.q1 = ck.network("q1", HeadKind::kLinear);
  s.critics.q2 = ck.network("q2", HeadKind::kLinear);
  s.targets.q1 = ck.network("q1_target", HeadKind::kLinear);
  s.targets.q2 = ck.network("q2_target", HeadKind::kLinear);
  s.weight_net = ck.network("weight", HeadKind::kTwoHeadedWeights);
  s.behavior = ck.network("behavior", HeadKind::kGaussianFixedSigma, bc_sigma);
  s.log_temperature = ParameterBlock::zeros("log_temperature", {1});
  s.log_temperature.values[0] = ck.scalar("log_temperature");
  s.step = ck.step;
  return s;
}

double pretrain_bc(Mlp& behavior, const TrainingData& data, const RunConfig& c) {
  const AdamOptions opt{c.lr_bc};
  double loss = 0.0;
  std::vector<std::size_t> rows(static_cast<std::size_t>(c.batch_size));
  for (std::int64_t step = 0; step < c.bc_steps; ++step) {
    Rng rng = Rng::stream(c.seed, RngComponent::kBcBatch, static_cast<std::uint64_t>(step));
    for (auto& r : rows) r = rng.index(data.size());
    Gradients g = behavior.zero_gradients();
    loss = bc_loss(behavior, gather(data.states, rows), gather(data.actions, rows), &g);
    require_finite(loss, step, "behavior-cloning");
    adam_step(behavior, g, opt);
  }
  return loss;
}

BatchSample make_batch(const TrainerState& s, const TrainingData& data, const RunConfig& c,
                       std::span<const std::size_t> rows, const Matrix& ood_noise) {
  BatchSample b;
  b.states = gather(data.states, rows);
  b.actions = gather(data.actions, rows);
  b.rewards = gather(data.rewards, rows);
  b.next_states = gather(data.next_states, rows);
  b.dones = gather(data.dones, rows);
  b.m_in = gather(data.m, rows);

  const auto batch = static_cast<Eigen::Index>(rows.size());
  const auto n_ood = static_cast<Eigen::Index>(c.n_ood_samples);
  b.n_ood = static_cast<std::size_t>(n_ood);
  b.ood_states.resize(batch * n_ood, b.states.cols());
  for (Eigen::Index i = 0; i < batch; ++i) {
    for (Eigen::Index j = 0; j < n_ood; ++j) b.ood_states.row(i * n_ood + j) = b.states.row(i);
  }
  const ActorSample pi = actor_sample(s.actor, b.ood_states, ood_noise);
  b.ood_actions = pi.action;
  b.ood_log_prob_pi = pi.log_prob;

  if (!uses_learned_weights(c)) return b;

  b.ood_log_prob_beta = behavior_log_prob(s.behavior, b.ood_states, b.ood_actions);
  b.in_log_prob_pi = actor_log_prob(s.actor, b.states, b.actions);
  b.in_log_prob_beta = behavior_log_prob(s.behavior, b.states, b.actions);

  const auto d = b.actions.cols();
  b.m_ood.resize(batch * n_ood);
  b.ood_d_ord.resize(batch * n_ood);
  b.ood_d_cql.resize(batch * n_ood);
  b.d_ord.resize(batch);
  b.d_cql.resize(batch);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const GapPair g = gaps(b.m_in(i), data.gap_scale);
    b.d_ord(i) = g.d_ord;
    b.d_cql(i) = g.d_cql;
    for (Eigen::Index j = 0; j < n_ood; ++j) {
      const Eigen::Index k = i * n_ood + j;
      const double m = ood_quality(b.m_in(i), std::span<const double>(b.ood_actions.row(k).data(), d),
                                   std::span<const double>(b.actions.row(i).data(), d));
      const GapPair go = gaps(m, data.gap_scale);
      b.m_ood(k) = m;
      b.ood_d_ord(k) = go.d_ord;
      b.ood_d_cql(k) = go.d_cql;
    }
  }
  return b;
}

LossReport weight_step(Mlp& weight_net, const BatchSample& batch, const RunConfig& c, Rng& pairing_rng) {
  const auto pair_mu = random_derangement(static_cast<std::size_t>(batch.ood_actions.rows()), pairing_rng);
  const auto pair_beta = random_derangement(batch.size(), pairing_rng);
  Gradients g = weight_net.zero_gradients();
  LossReport report;
  weight_total_loss(weight_net, batch, c.alpha_cql_anchor, pair_mu, pair_beta, &g, &report);
  adam_step(weight_net, g, AdamOptions{c.lr_weight});
  return report;
}

StepOutcome train_step(TrainerState& s, const TrainingData& data, const RunConfig& c) {
  const auto step = static_cast<std::uint64_t>(s.step);
  const auto act_dim = static_cast<Eigen::Index>(data.action_dim());
  const auto batch_size = static_cast<Eigen::Index>(c.batch_size);
  const double alpha = c.alpha_cql_anchor;

  std::vector<std::size_t> rows(static_cast<std::size_t>(batch_size));
  {
    Rng rng = Rng::stream(c.seed, RngComponent::kBatch, step);
    for (auto& r : rows) r = rng.index(data.size());
  }
  const Matrix ood_noise =
      normals(Rng::stream(c.seed, RngComponent::kPolicySample, step), batch_size * c.n_ood_samples, act_dim);
  const BatchSample batch = make_batch(s, data, c, rows, ood_noise);

  StepOutcome out;
  LossReport& rep = out.report;

  // Critic.
  const Vector y = td_targets(s.targets, s.actor, batch, c.gamma,
                              normals(Rng::stream(c.seed, RngComponent::kTargetSample, step), batch_size, act_dim));
  TwinGradients cg = TwinGradients::zeros_like(s.critics);
  rep.td = td_loss(s.critics, batch, y, &cg);
  switch (c.algorithm) {
    case Algorithm::kAclQl: {
      Vector w_mu, w_beta;
      if (c.clamp_weights) {
        w_mu = Vector::Constant(batch.ood_actions.rows(), alpha);
        w_beta = Vector::Constant(batch_size, alpha);
      } else {
        const WeightOutputs w = evaluate_weights(s.weight_net, batch);
        w_mu = w.w_mu_ood;
        w_beta = w.w_beta_in;
      }
      rep.penalty = acl_penalty(s.critics, w_mu, w_beta, batch, &cg);
      out.w_mu_mean = w_mu.mean();
      out.w_beta_mean = w_beta.mean();
      break;
    }
    case Algorithm::kCql:
      rep.penalty = cql_penalty(s.critics, batch, alpha, &cg);
      out.w_mu_mean = alpha;
      out.w_beta_mean = alpha;
      break;
    case Algorithm::kUnconstrained:
      break;
  }
  require_finite(rep.td + rep.penalty, s.step, "critic");
  adam_step(s.critics.q1, cg.g1, AdamOptions{c.lr_critic});
  adam_step(s.critics.q2, cg.g2, AdamOptions{c.lr_critic});

  // Weight net.
  if (uses_learned_weights(c)) {
    Rng pairing = Rng::stream(c.seed, RngComponent::kPairing, step);
    const LossReport w = weight_step(s.weight_net, batch, c, pairing);
    require_finite(w.weight_total, s.step, "weight-net");
    rep.mono = w.mono;
    rep.ord = w.ord;
    rep.cql = w.cql;
    rep.pos = w.pos;
    rep.weight_total = w.weight_total;
  }

  // Actor and temperature.
  {
    Gradients ag = s.actor.zero_gradients();
    const ActorLossResult a =
        actor_loss(s.actor, s.critics, batch.states,
                   normals(Rng::stream(c.seed, RngComponent::kActorSample, step), batch_size, act_dim),
                   s.temperature(), &ag);
    require_finite(a.value, s.step, "actor");
    rep.actor = a.value;
    adam_step(s.actor, ag, AdamOptions{c.lr_actor});
    const double target_entropy = -static_cast<double>(act_dim);
    const double g = -(a.mean_log_prob + target_entropy);
    adam_step(s.log_temperature, std::span<const double>(&g, 1), AdamOptions{c.lr_temperature});
  }

  polyak_update(s.targets.q1, s.critics.q1, c.polyak_rate);
  polyak_update(s.targets.q2, s.critics.q2, c.polyak_rate);
  ++s.step;
  return out;
}

EvalResult evaluate_policy(const Mlp& actor, const std::string& env, int episodes, std::uint64_t seed) {
  const Policy policy = [&actor](const std::vector<double>& obs, Rng&) {
    Matrix x(1, static_cast<Eigen::Index>(obs.size()));
    for (std::size_t i = 0; i < obs.size(); ++i) x(0, static_cast<Eigen::Index>(i)) = obs[i];
    return row_vector(actor_mean_action(actor, x), 0);
  };
  return evaluate_returns(env, policy, episodes, seed);
}

double avg_q_dataset(const Mlp& actor, const TwinCritic& critics, const Matrix& states) {
  if (states.rows() == 0) throw std::invalid_argument("avg_q_dataset: no states");
  return min_twin_q(critics, states, actor_mean_action(actor, states)).mean();
}

double avg_q_dataset_streaming(const Mlp& actor, const TwinCritic& critics, const Matrix& states) {
  if (states.rows() == 0) throw std::invalid_argument("avg_q_dataset: no states");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    const Matrix s = states.row(i);
    sum += min_twin_q(critics, s, actor_mean_action(actor, s))(0);
  }
  return sum / static_cast<double>(states.rows());
}

std::size_t select_model(const std::vector<ModelCandidate>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("select_model: no checkpoints");
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    const auto& b = candidates[best];
    if (c.avg_q > b.avg_q || (c.avg_q == b.avg_q && c.step >= b.step)) best = i;
  }
  return best;
}

std::string metrics_header() {
  return "step,td,penalty,mono,ord,cql,pos,actor,w_mu_mean,w_beta_mean,avg_q_dataset,eval_mean,eval_std";
}

std::string format_metrics_row(const MetricsRow& r) {
  const LossReport& l = r.losses;
  std::string s = std::to_string(r.step);
  for (double v : {l.td, l.penalty, l.mono, l.ord, l.cql, l.pos, l.actor, r.w_mu_mean, r.w_beta_mean,
                   r.avg_q_dataset, r.eval_mean, r.eval_std}) {
    s += ',';
    s += format_double(v);
  }
  return s;
}

RunResult train_run(const OfflineDataset& dataset, const RunConfig& config,
                    const std::optional<std::filesystem::path>& run_dir, const Mlp* behavior) {
  config.validate();
  const TrainingData data = TrainingData::build(dataset, config);
  const std::string hash = config.hash();
  RunResult res;
  TrainerState& s = res.final_state;
  s = TrainerState::initialize(data.obs_dim(), data.action_dim(), config);
  if (behavior) {
    s.behavior = *behavior;
  } else {
    pretrain_bc(s.behavior, data, config);
  }

  std::filesystem::path ckpt_dir;
  if (run_dir) {
    ckpt_dir = *run_dir / "checkpoints";
    std::filesystem::create_directories(ckpt_dir);
  }

  auto record = [&](const StepOutcome& o) {
    MetricsRow row;
    row.step = s.step;
    row.losses = o.report;
    row.w_mu_mean = o.w_mu_mean;
    row.w_beta_mean = o.w_beta_mean;
    row.avg_q_dataset = avg_q_dataset(s.actor, s.critics, data.states);
    const EvalResult e = evaluate_policy(s.actor, dataset.env, config.eval_episodes, config.seed);
    row.eval_mean = e.mean;
    row.eval_std = e.std;
    res.rows.push_back(row);
    res.candidates.push_back({s.step, row.avg_q_dataset});
    if (run_dir) s.checkpoint(hash).save(ckpt_dir / step_name(s.step));
  };

  StepOutcome last;
  record(last);
  while (s.step < config.train_steps) {
    last = train_step(s, data, config);
    if (s.step % config.eval_every == 0 || s.step == config.train_steps) record(last);
  }
  res.selected = select_model(res.candidates);

  if (run_dir) {
    std::string csv = metrics_header() + "\n";
    for (const auto& r : res.rows) csv += format_metrics_row(r) + "\n";
    write_text(*run_dir / "metrics.csv", csv);
    const auto& sel = res.candidates[res.selected];
    nlohmann::ordered_json j;
    j["version"] = 1;
    j["config_hash"] = hash;
    j["step"] = sel.step;
    j["avg_q_dataset"] = sel.avg_q;
    j["checkpoint"] = "checkpoints/" + step_name(sel.step);
    write_text(*run_dir / "selected.json", j.dump(2) + "\n");
    nlohmann::ordered_json manifest;
    manifest["version"] = 1;
    manifest["config_hash"] = hash;
    manifest["config"] = nlohmann::ordered_json::parse(config.to_json());
    manifest["env"] = dataset.env;
    manifest["transitions"] = data.size();
    write_text(*run_dir / "run.json", manifest.dump(2) + "\n");
  }
  return res;
}

}  // namespace aclql
