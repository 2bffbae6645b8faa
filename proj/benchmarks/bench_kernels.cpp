#include <benchmark/benchmark.h>

#include "tpgm/models.hpp"
#include "tpgm/numerics.hpp"
#include "tpgm/projection.hpp"
#include "tpgm/rng.hpp"
#include "tpgm/tpgm.hpp"

using namespace tpgm;

static void BM_Project(benchmark::State& state) {
  const auto kind = static_cast<ProjectionKind>(state.range(1));
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor theta0 = rng.normal_matrix(n, n);
  const Tensor theta_t = theta0 + rng.normal_matrix(n, n);
  const double gamma = 0.5 * constraint_norm(kind, theta_t - theta0);
  for (auto _ : state) benchmark::DoNotOptimize(project(kind, theta0, theta_t, gamma));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}
BENCHMARK(BM_Project)->ArgsProduct({{8, 64, 256}, {static_cast<int>(ProjectionKind::L2), static_cast<int>(ProjectionKind::Mars)}});

static void BM_ThinSvd(benchmark::State& state) {
  const std::size_t d = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Tensor x = rng.normal_matrix(d, d / 2);
  for (auto _ : state) benchmark::DoNotOptimize(thin_svd(x));
}
BENCHMARK(BM_ThinSvd)->Arg(16)->Arg(32)->Arg(64);

static void BM_LossAndGrads(benchmark::State& state) {
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const Model m = Model::mlp({16, 32, 1}, Activation::Tanh, rng);
  Batch b;
  b.inputs = rng.normal_matrix(batch, 16);
  b.targets = rng.normal_matrix(batch, 1);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grads(m, b, LossKind::Mse));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_LossAndGrads)->Arg(32)->Arg(300);

static void BM_TpgmEpoch(benchmark::State& state) {
  Rng rng(4);
  const Model m = Model::mlp({16, 32, 1}, Activation::Tanh, rng);
  Batch train, val;
  train.inputs = rng.normal_matrix(320, 16);
  train.targets = rng.normal_matrix(320, 1);
  val.inputs = rng.normal_matrix(100, 16);
  val.targets = rng.normal_matrix(100, 1);
  TpgmConfig cfg;
  cfg.model.learning_rate = 0.05;
  cfg.model.epochs = 1;
  cfg.model.batch_size = 32;
  cfg.f_proj = ProjectionFrequency::every(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(tpgm_train(m, train, val, cfg));
}
BENCHMARK(BM_TpgmEpoch)->Arg(1)->Arg(10);
BENCHMARK_MAIN();
