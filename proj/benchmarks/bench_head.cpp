#include <benchmark/benchmark.h>

#include "asf/train.hpp"

using namespace asf;

namespace {

HeadConfig desk_config() {
  HeadConfig cfg;
  cfg.backbone_channels = 64;
  cfg.feature_channels = 32;
  cfg.observations = 8;
  cfg.activities = 6;
  cfg.groups = 4;
  return cfg;
}

Tensor<float> random_features(std::size_t c, std::size_t m, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t({c, m});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = float(rng.uniform(-1, 1));
  return t;
}

void BM_MatMul(benchmark::State& state) {
  const std::size_t n = std::size_t(state.range(0));
  auto a = constant(random_features(n, n, 1));
  auto b = constant(random_features(n, n, 2));
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b)->value.raw());
  state.SetItemsProcessed(int64_t(state.iterations()) * n * n * n);
}
BENCHMARK(BM_MatMul)->Arg(64)->Arg(128)->Arg(256);

void BM_MatMulExact(benchmark::State& state) {
  const std::size_t n = std::size_t(state.range(0));
  auto a = constant(random_features(n, n, 1));
  auto b = constant(random_features(n, n, 2));
  for (auto _ : state)
    benchmark::DoNotOptimize(matmul(a, b, /*exact=*/true)->value.raw());
}
BENCHMARK(BM_MatMulExact)->Arg(64)->Arg(128);

void BM_HeadForward(benchmark::State& state) {
  finite_checks() = false;
  const auto cfg = desk_config();
  HeadParams<float> params(cfg, {}, 3);
  auto ff = constant(random_features(cfg.backbone_channels, 64, 4));
  Tensor<float> mask({cfg.activities, cfg.activities});
  Rng rng(0);
  const DropoutSpec drop(cfg.dropout_rate, DropoutMode::Inference);
  for (auto _ : state) {
    auto trace = head_forward(ff, params, mask, drop, rng);
    benchmark::DoNotOptimize(trace.predictions.f_out->value.raw());
  }
  finite_checks() = true;
}
BENCHMARK(BM_HeadForward);

void BM_TrainStep(benchmark::State& state) {
  finite_checks() = false;
  const auto cfg = desk_config();
  HeadParams<float> params(cfg, {}, 3);
  const auto named = params.named_params();
  const auto vars = params.all_vars();
  auto ff = constant(random_features(cfg.backbone_channels, 64, 4));
  Tensor<float> mask({cfg.activities, cfg.activities});
  std::vector<std::uint8_t> labels = {1, 0, 0, 1, 0, 0};
  Rng rng(0);
  for (auto _ : state) {
    zero_grad(vars);
    auto trace = head_forward(ff, params, mask,
                              DropoutSpec(cfg.dropout_rate, DropoutMode::Training),
                              rng);
    auto loss = prediction_loss(trace.predictions, labels);
    backward(loss);
    sgd_step(named, 3.5e-2, 1.25e-5);
  }
  finite_checks() = true;
}
BENCHMARK(BM_TrainStep);

}  // namespace

BENCHMARK_MAIN();
