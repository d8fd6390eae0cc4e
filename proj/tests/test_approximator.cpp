#include "doctest.h"

#include <cmath>
#include <numbers>

#include "aclql/approximator.hpp"
#include "aclql/checkpoint.hpp"

using namespace aclql;

namespace {

void set_block(Mlp& net, const std::string& name, std::vector<double> values) {
  for (auto& b : net.params()) {
    if (b.name == name) {
      REQUIRE(b.values.size() == values.size());
      b.values = std::move(values);
      return;
    }
  }
  FAIL("no block " << name);
}

Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

}  // namespace

TEST_CASE("forward pass matches hand arithmetic") {
  Mlp net(ApproximatorSpec::critic(1, 1, {2}));
  REQUIRE(net.layer_count() == 2);
  set_block(net, "l0.weight", {1, 2, 3, -1});
  set_block(net, "l0.bias", {0.5, 0});
  set_block(net, "l1.weight", {2, 0.25});
  set_block(net, "l1.bias", {1});
  Matrix x(2, 2);
  x << 1, -1,  // hidden pre-activations (-0.5, 4) -> relu (0, 4)
      0, 1;    // (2.5, -1) -> (2.5, 0)
  const Matrix y = net.forward(x);
  CHECK(y(0, 0) == 2.0);
  CHECK(y(1, 0) == 6.0);
  CHECK(net.parameter_count() == 4 + 2 + 2 + 1);
}

TEST_CASE("backward agrees with central differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng = Rng::stream(seed, RngComponent::kSynthetic, 1);
    Mlp net = Mlp::initialized(ApproximatorSpec::critic(3, 2, {8, 8}), rng);
    const Matrix x = random_matrix(rng, 6, 5);
    const Matrix target = random_matrix(rng, 6, 1);
    auto loss = [&] { return 0.5 * (net.forward(x) - target).squaredNorm(); };
    MlpTape tape;
    const Matrix y = net.forward(x, tape);
    Gradients g = net.zero_gradients();
    const Matrix dx = net.backward(tape, y - target, g);
    CHECK(finite_diff_check(loss, param_views(net, g), 1e-5, seed, 1000) <= 1e-6);

    // Input gradient, checked by hand.
    Matrix xp = x;
    const double h = 1e-6;
    xp(2, 1) += h;
    const double up = 0.5 * (net.forward(xp) - target).squaredNorm();
    xp(2, 1) -= 2 * h;
    const double down = 0.5 * (net.forward(xp) - target).squaredNorm();
    CHECK(dx(2, 1) == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("finite difference checker flags a wrong gradient") {
  std::vector<double> v{0.3, -1.2, 2.0};
  std::vector<double> good{0.6, -2.4, 4.0};
  std::vector<double> bad{0.6, -2.4, 4.4};
  auto loss = [&] { return v[0] * v[0] + v[1] * v[1] + v[2] * v[2]; };
  CHECK(finite_diff_check(loss, {ParamView{v, good}}) <= 1e-8);
  CHECK(finite_diff_check(loss, {ParamView{v, bad}}) >= 0.09);
}

TEST_CASE("tanh-Gaussian density integrates to one") {
  Mlp actor(ApproximatorSpec::actor(1, 1, {3}));
  set_block(actor, "l1.bias", {0.3, -0.5});
  // Substitute a = tanh(u): the integral over a becomes an integral over u.
  const int n = 200000;
  const double lo = -12.0, hi = 12.0, du = (hi - lo) / n;
  Matrix states = Matrix::Zero(n, 1);
  Matrix actions(n, 1);
  Vector jac(n);
  for (int i = 0; i < n; ++i) {
    const double u = lo + (i + 0.5) * du;
    actions(i, 0) = std::tanh(u);
    jac(i) = 1.0 - actions(i, 0) * actions(i, 0);
  }
  const Vector lp = actor_log_prob(actor, states, actions);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (std::abs(actions(i, 0)) < 1.0 - 1e-9) total += std::exp(lp(i)) * jac(i) * du;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-4));

  // Sampled log-density agrees with the density evaluated at the sample.
  Matrix noise(1, 1);
  noise << 0.7;
  const ActorSample s = actor_sample(actor, Matrix::Zero(1, 1), noise);
  CHECK(s.log_prob(0) == doctest::Approx(actor_log_prob(actor, Matrix::Zero(1, 1), s.action)(0)).epsilon(1e-8));
  CHECK(actor_mean_action(actor, Matrix::Zero(1, 1))(0, 0) == doctest::Approx(std::tanh(0.3)));
}

TEST_CASE("actor sample gradients agree with central differences") {
  Rng rng = Rng::stream(3, RngComponent::kSynthetic, 2);
  Mlp actor = Mlp::initialized(ApproximatorSpec::actor(3, 2, {8}), rng);
  for (auto& b : actor.params()) {
    for (double& v : b.values) v += 0.3 * rng.normal();  // move away from the near-zero output layer
  }
  const Matrix states = random_matrix(rng, 5, 3);
  const Matrix noise = random_matrix(rng, 5, 2);
  const Matrix c = random_matrix(rng, 5, 2);
  auto loss = [&] {
    const ActorSample s = actor_sample(actor, states, noise);
    return (s.action.array() * c.array()).sum() + 0.7 * s.log_prob.sum();
  };
  const ActorSample s = actor_sample(actor, states, noise);
  Gradients g = actor.zero_gradients();
  actor_backward(actor, s, c, Vector::Constant(5, 0.7), g);
  CHECK(finite_diff_check(loss, param_views(actor, g), 1e-6, 3, 1000) <= 1e-5);
}

TEST_CASE("behavior policy log-density") {
  Mlp beta(ApproximatorSpec::behavior(1, 1, {2}, 0.3));
  set_block(beta, "l1.bias", {0.2});
  Matrix a(1, 1);
  a << 0.5;
  const double expected = -0.5 - std::log(0.3) - 0.5 * std::log(2.0 * std::numbers::pi);
  CHECK(behavior_log_prob(beta, Matrix::Zero(1, 1), a)(0) == doctest::Approx(expected).epsilon(1e-12));
  Matrix z(1, 1);
  z << 2.0;
  CHECK(behavior_sample(beta, Matrix::Zero(1, 1), z)(0, 0) == doctest::Approx(0.8));
  CHECK_THROWS(ApproximatorSpec::behavior(1, 1, {2}, 0.0));
}

TEST_CASE("Adam first step and Polyak averaging") {
  ParameterBlock b = ParameterBlock::zeros("w", {2});
  const std::vector<double> g{2.0, -0.5};
  adam_step(b, g, AdamOptions{0.1});
  CHECK(b.values[0] == doctest::Approx(-0.1 * 2.0 / (2.0 + 1e-8)));
  CHECK(b.values[1] == doctest::Approx(0.1 * 0.5 / (0.5 + 1e-8)));
  CHECK(b.adam_step == 1);
  const std::vector<double> bad{NAN, 0.0};
  CHECK_THROWS_AS(adam_step(b, bad, AdamOptions{}), std::invalid_argument);

  ParameterBlock target = ParameterBlock::zeros("t", {1});
  ParameterBlock online = ParameterBlock::zeros("t", {1});
  online.values[0] = 1.0;
  polyak_update(target, online, 0.005);
  CHECK(target.values[0] == doctest::Approx(0.005));
  polyak_update(target, online, 1.0);
  CHECK(target.values[0] == 1.0);
}

TEST_CASE("Adam minimizes a quadratic") {
  ParameterBlock b = ParameterBlock::zeros("w", {3});
  const std::vector<double> opt{1.0, -2.0, 0.5};
  for (int i = 0; i < 3000; ++i) {
    std::vector<double> g(3);
    for (int k = 0; k < 3; ++k) g[k] = 2.0 * (b.values[k] - opt[k]);
    adam_step(b, g, AdamOptions{0.01});
  }
  for (int k = 0; k < 3; ++k) CHECK(b.values[k] == doctest::Approx(opt[k]).epsilon(1e-3));
}

TEST_CASE("checkpoint round-trips every parameter bit") {
  Rng rng = Rng::stream(9, RngComponent::kSynthetic, 3);
  const Mlp net = Mlp::initialized(ApproximatorSpec::weight_net(4, 2, {16, 16}), rng);
  Checkpoint ck;
  ck.config_hash = "0123";
  ck.step = 42;
  ck.add_network("weight", net);
  ck.add_scalar("log_temperature", -1.0 / 3.0);
  const Checkpoint back = Checkpoint::from_json(ck.to_json());
  CHECK(back.step == 42);
  CHECK(back.config_hash == "0123");
  CHECK(back.scalar("log_temperature") == -1.0 / 3.0);
  CHECK(back.has_network("weight"));
  CHECK_FALSE(back.has_network("actor"));
  const Mlp restored = back.network("weight", HeadKind::kTwoHeadedWeights);
  REQUIRE(restored.params().size() == net.params().size());
  for (std::size_t i = 0; i < net.params().size(); ++i) CHECK(restored.params()[i].values == net.params()[i].values);
  CHECK(back.to_json() == ck.to_json());
}

TEST_CASE("initialization is deterministic per stream") {
  Rng a = Rng::stream(1, RngComponent::kInit, 0);
  Rng b = Rng::stream(1, RngComponent::kInit, 0);
  Rng c = Rng::stream(1, RngComponent::kInit, 1);
  const auto spec = ApproximatorSpec::critic(4, 2, {8});
  const Mlp na = Mlp::initialized(spec, a), nb = Mlp::initialized(spec, b), nc = Mlp::initialized(spec, c);
  CHECK(na.params()[0].values == nb.params()[0].values);
  CHECK(na.params()[0].values != nc.params()[0].values);
}
