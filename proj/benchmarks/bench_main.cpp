#include "mupp/datagen.hpp"
#include "mupp/netcore.hpp"
#include "mupp/parallel.hpp"
#include "mupp/param_algebra.hpp"
#include "mupp/perturb_opt.hpp"

#include <benchmark/benchmark.h>

using namespace mupp;

namespace {

struct Fixture {
  NetworkState net;
  Batch batch;

  Fixture(int width, int B) {
    tune_allocator();
    net = init_network(preset("mupp", 2), {2, 16, width, 4}, {}, 0);
    const auto data = synthetic_gaussians({4, 16, 64, 2.0, 0}, Split::train);
    std::vector<int> rows(B);
    for (int i = 0; i < B; ++i) rows[i] = i;
    batch = {data.batch_inputs(rows), data.batch_labels(rows)};
  }
};

void BM_ForwardBackward(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)), 8);
  for (auto _ : state) {
    const auto c = forward(f.net, f.batch.inputs);
    const auto g = backward(f.net, c, evaluate_loss(LossKind::cross_entropy, c.f, f.batch.labels).chi);
    benchmark::DoNotOptimize(g.fro.data());
  }
}
BENCHMARK(BM_ForwardBackward)->RangeMultiplier(4)->Range(64, 2048)->Unit(benchmark::kMicrosecond);

void BM_SamStep(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  Fixture f(width, 8);
  const auto cfg = optimizer_bcd(preset("mupp", 2), width, 0.1, 0.1, LossKind::cross_entropy);
  OptimizerState st;
  for (auto _ : state) benchmark::DoNotOptimize(sam_step(f.net, st, cfg, f.batch, f.batch).loss);
}
BENCHMARK(BM_SamStep)->RangeMultiplier(4)->Range(64, 2048)->Unit(benchmark::kMicrosecond);

void BM_SamStepTelemetry(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  Fixture f(width, 1);
  const auto cfg = optimizer_bcd(preset("mupp", 2), width, 0.1, 0.1, LossKind::cross_entropy);
  const auto probe_init = forward(f.net, f.batch.inputs);
  TelemetryRequest req{TelemetryLevel::full, &f.batch.inputs, &probe_init};
  OptimizerState st;
  for (auto _ : state) benchmark::DoNotOptimize(sam_step(f.net, st, cfg, f.batch, f.batch, req).loss);
}
BENCHMARK(BM_SamStepTelemetry)->RangeMultiplier(4)->Range(64, 1024)->Unit(benchmark::kMicrosecond);

void BM_SpectralNorm(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Eigen::MatrixXd m = init_network(preset("mup", 2), {2, 16, n, 4}, {}, 1).layers[1];
  for (auto _ : state) benchmark::DoNotOptimize(spectral_norm(m));
}
BENCHMARK(BM_SpectralNorm)->RangeMultiplier(4)->Range(64, 1024)->Unit(benchmark::kMicrosecond);

void BM_Classify(benchmark::State& state) {
  const auto p = preset("mupp", static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(classify(p).stable);
}
BENCHMARK(BM_Classify)->Arg(2)->Arg(8)->Arg(32);

}  // namespace

BENCHMARK_MAIN();
