#include "aclql/approximator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace aclql {

namespace {

using RowMajorMap = Eigen::Map<Matrix>;
using ConstRowMajorMap = Eigen::Map<const Matrix>;

constexpr double kHalfLog2Pi = 0.91893853320467274178;

ConstRowMajorMap weight_of(const ParameterBlock& b) {
  return ConstRowMajorMap(b.values.data(), static_cast<Eigen::Index>(b.shape[0]),
                          static_cast<Eigen::Index>(b.shape[1]));
}

Eigen::Map<const Eigen::RowVectorXd> bias_of(const ParameterBlock& b) {
  return Eigen::Map<const Eigen::RowVectorXd>(b.values.data(), static_cast<Eigen::Index>(b.shape[0]));
}

void check_input(const ApproximatorSpec& spec, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != spec.input_dim) {
    throw std::invalid_argument("network input has " + std::to_string(x.cols()) + " columns, expected " +
                                std::to_string(spec.input_dim));
  }
}

double squash_log_std(double raw) {
  return kLogStdMin + 0.5 * (kLogStdMax - kLogStdMin) * (std::tanh(raw) + 1.0);
}

}  // namespace

ParameterBlock ParameterBlock::zeros(std::string name, std::vector<std::size_t> shape) {
  ParameterBlock b;
  b.name = std::move(name);
  b.shape = std::move(shape);
  const std::size_t n =
      std::accumulate(b.shape.begin(), b.shape.end(), std::size_t{1}, std::multiplies<std::size_t>());
  b.values.assign(n, 0.0);
  b.adam_m.assign(n, 0.0);
  b.adam_v.assign(n, 0.0);
  return b;
}

ApproximatorSpec ApproximatorSpec::actor(std::size_t obs_dim, std::size_t action_dim, std::vector<int> hidden) {
  return {obs_dim, 2 * action_dim, std::move(hidden), HeadKind::kTanhGaussian, 0.0};
}

ApproximatorSpec ApproximatorSpec::critic(std::size_t obs_dim, std::size_t action_dim, std::vector<int> hidden) {
  return {obs_dim + action_dim, 1, std::move(hidden), HeadKind::kLinear, 0.0};
}

ApproximatorSpec ApproximatorSpec::weight_net(std::size_t obs_dim, std::size_t action_dim,
                                              std::vector<int> hidden) {
  return {obs_dim + action_dim, 2, std::move(hidden), HeadKind::kTwoHeadedWeights, 0.0};
}

ApproximatorSpec ApproximatorSpec::behavior(std::size_t obs_dim, std::size_t action_dim, std::vector<int> hidden,
                                            double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("behavior sigma must be positive");
  return {obs_dim, action_dim, std::move(hidden), HeadKind::kGaussianFixedSigma, sigma};
}

Mlp::Mlp(ApproximatorSpec spec) : spec_(std::move(spec)) {
  if (spec_.input_dim == 0 || spec_.output_dim == 0) throw std::invalid_argument("network dimensions must be positive");
  std::size_t in = spec_.input_dim;
  std::size_t layer = 0;
  auto add_layer = [&](std::size_t out) {
    params_.push_back(ParameterBlock::zeros("l" + std::to_string(layer) + ".weight", {out, in}));
    params_.push_back(ParameterBlock::zeros("l" + std::to_string(layer) + ".bias", {out}));
    in = out;
    ++layer;
  };
  for (int h : spec_.hidden) {
    if (h <= 0) throw std::invalid_argument("hidden widths must be positive");
    add_layer(static_cast<std::size_t>(h));
  }
  add_layer(spec_.output_dim);
}

Mlp Mlp::initialized(ApproximatorSpec spec, Rng& rng) {
  Mlp net(std::move(spec));
  const std::size_t layers = net.layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    auto& w = net.params_[2 * l];
    auto& b = net.params_[2 * l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.shape[1]));
    double scale = 1.0;
    if (l + 1 == layers && net.spec_.head == HeadKind::kTanhGaussian) scale = 1e-2;
    for (double& v : w.values) v = scale * rng.uniform(-bound, bound);
    for (double& v : b.values) v = scale * rng.uniform(-bound, bound);
  }
  return net;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

Matrix Mlp::forward(const Matrix& x) const {
  check_input(spec_, x);
  Matrix h = x;
  const std::size_t layers = layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix z = h * weight_of(params_[2 * l]).transpose();
    z.rowwise() += bias_of(params_[2 * l + 1]);
    if (l + 1 < layers) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return h;
}

Matrix Mlp::forward(const Matrix& x, MlpTape& tape) const {
  check_input(spec_, x);
  const std::size_t layers = layer_count();
  tape.layer_inputs.resize(layers);
  tape.pre_activations.resize(layers > 0 ? layers - 1 : 0);
  Matrix h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix z = h * weight_of(params_[2 * l]).transpose();
    z.rowwise() += bias_of(params_[2 * l + 1]);
    tape.layer_inputs[l] = std::move(h);
    if (l + 1 < layers) {
      h = z.cwiseMax(0.0);
      tape.pre_activations[l] = std::move(z);
    } else {
      h = std::move(z);
    }
  }
  return h;
}

Matrix Mlp::backward(const MlpTape& tape, const Matrix& d_out, Gradients& grads) const {
  const std::size_t layers = layer_count();
  if (tape.layer_inputs.size() != layers) throw std::logic_error("backward called with a foreign tape");
  if (grads.size() != params_.size()) throw std::logic_error("gradient set does not match network");
  Matrix d = d_out;
  for (std::size_t l = layers; l-- > 0;) {
    const auto& w = params_[2 * l];
    RowMajorMap dw(grads[2 * l].data(), static_cast<Eigen::Index>(w.shape[0]),
                   static_cast<Eigen::Index>(w.shape[1]));
    Eigen::Map<Eigen::RowVectorXd> db(grads[2 * l + 1].data(), static_cast<Eigen::Index>(w.shape[0]));
    // Products go to aligned temporaries first: writing straight into the
    // vector-backed maps lets Eigen pick FMA or scalar code per element
    // depending on the heap address, which breaks run-to-run determinism.
    const Matrix gw = d.transpose() * tape.layer_inputs[l];
    const Eigen::RowVectorXd gb = d.colwise().sum();
    dw += gw;
    db += gb;
    Matrix dx = d * weight_of(w);
    if (l > 0) {
      const Matrix& pre = tape.pre_activations[l - 1];
      dx = (pre.array() > 0.0).select(dx, 0.0);
    }
    d = std::move(dx);
  }
  return d;
}

Gradients Mlp::zero_gradients() const {
  Gradients g;
  g.reserve(params_.size());
  for (const auto& p : params_) g.emplace_back(p.size(), 0.0);
  return g;
}

// ---------------------------------------------------------------------------

ActorSample actor_sample(const Mlp& actor, const Matrix& states, const Matrix& noise) {
  const auto act_dim = static_cast<Eigen::Index>(actor.spec().output_dim / 2);
  if (noise.rows() != states.rows() || noise.cols() != act_dim) {
    throw std::invalid_argument("actor_sample: noise shape does not match batch");
  }
  ActorSample s;
  const Matrix out = actor.forward(states, s.tape);
  const auto n = states.rows();
  s.noise = noise;
  s.raw_log_std = out.rightCols(act_dim);
  s.std.resize(n, act_dim);
  s.pre_tanh.resize(n, act_dim);
  s.action.resize(n, act_dim);
  s.log_prob.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double lp = 0.0;
    for (Eigen::Index j = 0; j < act_dim; ++j) {
      const double log_std = squash_log_std(s.raw_log_std(i, j));
      const double sd = std::exp(log_std);
      const double u = out(i, j) + sd * noise(i, j);
      const double a = std::tanh(u);
      s.std(i, j) = sd;
      s.pre_tanh(i, j) = u;
      s.action(i, j) = a;
      lp += -0.5 * noise(i, j) * noise(i, j) - log_std - kHalfLog2Pi -
            std::log(std::max(1.0 - a * a, kTanhJacobianFloor));
    }
    s.log_prob(i) = lp;
  }
  return s;
}

void actor_backward(const Mlp& actor, const ActorSample& s, const Matrix& d_action, const Vector& d_log_prob,
                    Gradients& grads) {
  const auto n = s.action.rows();
  const auto act_dim = s.action.cols();
  Matrix d_out(n, 2 * act_dim);
  const double half_range = 0.5 * (kLogStdMax - kLogStdMin);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < act_dim; ++j) {
      const double a = s.action(i, j);
      const double jac = 1.0 - a * a;
      // d/du of -log(1 - tanh(u)^2) is 2 tanh(u) unless the floor is active.
      const double dlogp_du = (jac > kTanhJacobianFloor) ? 2.0 * a : 0.0;
      const double du = d_action(i, j) * jac + d_log_prob(i) * dlogp_du;
      const double d_log_std = du * s.std(i, j) * s.noise(i, j) - d_log_prob(i);
      const double t = std::tanh(s.raw_log_std(i, j));
      d_out(i, j) = du;
      d_out(i, act_dim + j) = d_log_std * half_range * (1.0 - t * t);
    }
  }
  actor.backward(s.tape, d_out, grads);
}

Matrix actor_mean_action(const Mlp& actor, const Matrix& states) {
  const auto act_dim = static_cast<Eigen::Index>(actor.spec().output_dim / 2);
  return actor.forward(states).leftCols(act_dim).array().tanh().matrix();
}

Vector actor_log_prob(const Mlp& actor, const Matrix& states, const Matrix& actions) {
  const auto act_dim = static_cast<Eigen::Index>(actor.spec().output_dim / 2);
  if (actions.cols() != act_dim || actions.rows() != states.rows()) {
    throw std::invalid_argument("actor_log_prob: action shape does not match batch");
  }
  const Matrix out = actor.forward(states);
  Vector lp(states.rows());
  const double lim = 1.0 - 1e-6;
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < act_dim; ++j) {
      const double a = std::clamp(actions(i, j), -lim, lim);
      const double u = std::atanh(a);
      const double log_std = squash_log_std(out(i, act_dim + j));
      const double z = (u - out(i, j)) / std::exp(log_std);
      acc += -0.5 * z * z - log_std - kHalfLog2Pi - std::log(std::max(1.0 - a * a, kTanhJacobianFloor));
    }
    lp(i) = acc;
  }
  return lp;
}

// ---------------------------------------------------------------------------

Vector behavior_log_prob(const Mlp& behavior, const Matrix& states, const Matrix& actions) {
  const Matrix mean = behavior.forward(states);
  if (actions.rows() != mean.rows() || actions.cols() != mean.cols()) {
    throw std::invalid_argument("behavior_log_prob: action shape does not match batch");
  }
  const double sigma = behavior.spec().sigma;
  const double per_dim = -std::log(sigma) - kHalfLog2Pi;
  Vector lp(mean.rows());
  for (Eigen::Index i = 0; i < mean.rows(); ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < mean.cols(); ++j) {
      const double z = (actions(i, j) - mean(i, j)) / sigma;
      acc += -0.5 * z * z + per_dim;
    }
    lp(i) = acc;
  }
  return lp;
}

Matrix behavior_sample(const Mlp& behavior, const Matrix& states, const Matrix& noise) {
  Matrix a = behavior.forward(states) + behavior.spec().sigma * noise;
  return a.cwiseMax(-1.0).cwiseMin(1.0);
}

// ---------------------------------------------------------------------------

void adam_step(ParameterBlock& block, std::span<const double> grad, const AdamOptions& opt) {
  if (grad.size() != block.values.size()) {
    throw std::invalid_argument("adam_step: gradient size mismatch for block '" + block.name + "'");
  }
  for (double g : grad) {
    if (!std::isfinite(g)) throw std::invalid_argument("adam_step: non-finite gradient in block '" + block.name + "'");
  }
  block.adam_step += 1;
  const double t = static_cast<double>(block.adam_step);
  const double bc1 = 1.0 - std::pow(opt.beta1, t);
  const double bc2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double g = grad[i];
    double& m = block.adam_m[i];
    double& v = block.adam_v[i];
    m = opt.beta1 * m + (1.0 - opt.beta1) * g;
    v = opt.beta2 * v + (1.0 - opt.beta2) * g * g;
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    block.values[i] -= opt.lr * m_hat / (std::sqrt(v_hat) + opt.eps);
  }
}

void adam_step(Mlp& net, const Gradients& grads, const AdamOptions& opt) {
  auto& params = net.params();
  if (grads.size() != params.size()) throw std::invalid_argument("adam_step: gradient set does not match network");
  for (std::size_t i = 0; i < params.size(); ++i) adam_step(params[i], grads[i], opt);
}

void polyak_update(ParameterBlock& target, const ParameterBlock& online, double rate) {
  if (target.shape != online.shape) {
    throw std::invalid_argument("polyak_update: shape mismatch for block '" + target.name + "'");
  }
  for (std::size_t i = 0; i < target.values.size(); ++i) {
    target.values[i] = (1.0 - rate) * target.values[i] + rate * online.values[i];
  }
}

void polyak_update(Mlp& target, const Mlp& online, double rate) {
  auto& t = target.params();
  const auto& o = online.params();
  if (t.size() != o.size()) throw std::invalid_argument("polyak_update: network layouts differ");
  for (std::size_t i = 0; i < t.size(); ++i) polyak_update(t[i], o[i], rate);
}

// ---------------------------------------------------------------------------

std::vector<ParamView> param_views(Mlp& net, const Gradients& grads) {
  std::vector<ParamView> views;
  auto& params = net.params();
  for (std::size_t i = 0; i < params.size(); ++i) views.push_back({params[i].values, grads[i]});
  return views;
}

namespace {
constexpr double kNoiseMargin = 1e5;
}  // namespace

double finite_diff_check(const std::function<double()>& loss, const std::vector<ParamView>& params, double h,
                         std::uint64_t seed, std::size_t min_coords) {
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].values.size() != params[b].grad.size()) {
      throw std::invalid_argument("finite_diff_check: gradient size mismatch");
    }
    for (std::size_t i = 0; i < params[b].values.size(); ++i) coords.emplace_back(b, i);
  }
  if (coords.size() > min_coords) {
    Rng rng = Rng::stream(seed, RngComponent::kFiniteDiff);
    std::shuffle(coords.begin(), coords.end(), rng.engine());
    coords.resize(min_coords);
  }
  double worst = 0.0;
  for (const auto& [b, i] : coords) {
    double& x = params[b].values[i];
    const double saved = x;
    x = saved + h;
    const double up = loss();
    x = saved - h;
    const double down = loss();
    x = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = params[b].grad[i];
    // Rounding in the difference quotient; components at that level (exact
    // invariances such as a shared output bias) carry no signal.
    const double noise = kNoiseMargin * std::numeric_limits<double>::epsilon() *
                         std::max({std::abs(up), std::abs(down), 1.0}) / h;
    const double denom = std::max({std::abs(analytic), std::abs(numeric), noise, 1e-8});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  return worst;
}

}  // namespace aclql
