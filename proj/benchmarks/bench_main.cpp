#include <benchmark/benchmark.h>

#include "aclql/envs.hpp"
#include "aclql/tabular.hpp"
#include "aclql/trainer.hpp"

namespace {

using namespace aclql;

struct Fixture {
  RunConfig config = RunConfig::desk();
  OfflineDataset dataset = gen_dataset("pointmass", DatasetQuality::kMedium, 50, 1);
  TrainingData data = TrainingData::build(dataset, config);
  TrainerState state = TrainerState::initialize(data.obs_dim(), data.action_dim(), config);
  std::vector<std::size_t> rows;
  Matrix ood_noise;
  BatchSample batch;

  Fixture() {
    Rng rng = Rng::stream(0, RngComponent::kBatch, 0);
    for (int i = 0; i < config.batch_size; ++i) rows.push_back(rng.index(data.size()));
    ood_noise = Matrix(config.batch_size * config.n_ood_samples, 2);
    for (Eigen::Index i = 0; i < ood_noise.size(); ++i) ood_noise.data()[i] = rng.normal();
    batch = make_batch(state, data, config, rows, ood_noise);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

void BM_MlpForward(benchmark::State& st) {
  auto& f = fixture();
  const Matrix x = state_action(f.batch.ood_states, f.batch.ood_actions);
  for (auto _ : st) benchmark::DoNotOptimize(f.state.critics.q1.forward(x));
}
BENCHMARK(BM_MlpForward);

void BM_MakeBatch(benchmark::State& st) {
  auto& f = fixture();
  for (auto _ : st) benchmark::DoNotOptimize(make_batch(f.state, f.data, f.config, f.rows, f.ood_noise));
}
BENCHMARK(BM_MakeBatch);

void BM_TdLoss(benchmark::State& st) {
  auto& f = fixture();
  const Matrix noise = f.ood_noise.topRows(f.config.batch_size);
  for (auto _ : st) {
    const Vector y = td_targets(f.state.targets, f.state.actor, f.batch, f.config.gamma, noise);
    TwinGradients g = TwinGradients::zeros_like(f.state.critics);
    benchmark::DoNotOptimize(td_loss(f.state.critics, f.batch, y, &g));
  }
}
BENCHMARK(BM_TdLoss);

void BM_AclPenalty(benchmark::State& st) {
  auto& f = fixture();
  const WeightOutputs w = evaluate_weights(f.state.weight_net, f.batch);
  for (auto _ : st) {
    TwinGradients g = TwinGradients::zeros_like(f.state.critics);
    benchmark::DoNotOptimize(acl_penalty(f.state.critics, w.w_mu_ood, w.w_beta_in, f.batch, &g));
  }
}
BENCHMARK(BM_AclPenalty);

void BM_WeightTotalLoss(benchmark::State& st) {
  auto& f = fixture();
  Rng rng = Rng::stream(0, RngComponent::kPairing, 0);
  const auto pm = random_derangement(static_cast<std::size_t>(f.batch.ood_actions.rows()), rng);
  const auto pb = random_derangement(f.batch.size(), rng);
  for (auto _ : st) {
    Gradients g = f.state.weight_net.zero_gradients();
    benchmark::DoNotOptimize(weight_total_loss(f.state.weight_net, f.batch, 10.0, pm, pb, &g));
  }
}
BENCHMARK(BM_WeightTotalLoss);

void BM_ActorLoss(benchmark::State& st) {
  auto& f = fixture();
  const Matrix noise = f.ood_noise.topRows(f.config.batch_size);
  for (auto _ : st) {
    Gradients g = f.state.actor.zero_gradients();
    benchmark::DoNotOptimize(actor_loss(f.state.actor, f.state.critics, f.batch.states, noise, 1.0, &g).value);
  }
}
BENCHMARK(BM_ActorLoss);

void BM_TrainStep(benchmark::State& st) {
  auto& f = fixture();
  RunConfig c = f.config;
  c.algorithm = static_cast<Algorithm>(st.range(0));
  TrainerState s = f.state;
  for (auto _ : st) benchmark::DoNotOptimize(train_step(s, f.data, c).report.td);
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_TabularSuite(benchmark::State& st) {
  tabular::SuiteOptions opt;
  opt.trials = 10;
  for (auto _ : st) benchmark::DoNotOptimize(tabular::run_suite(opt).checks_passed);
}
BENCHMARK(BM_TabularSuite)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
