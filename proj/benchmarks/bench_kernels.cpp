#include <benchmark/benchmark.h>

#include "fpsr/dataset.hpp"
#include "fpsr/metrics.hpp"
#include "fpsr/models.hpp"
#include "fpsr/ops.hpp"
#include "fpsr/resample.hpp"
#include "fpsr/runtime.hpp"

using namespace fpsr;

namespace {

Tensor<float> random_tensor(Shape shape, std::uint64_t seed) {
  Tensor<float> t(std::move(shape));
  Rng r(seed);
  for (auto& v : t.mutable_data()) v = static_cast<float>(r.uniform(-1.0, 1.0));
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  const auto c = static_cast<std::int64_t>(state.range(0));
  const auto x = random_tensor({1, c, 48, 48}, 1);
  const auto w = random_tensor({c, c, 3, 3}, 2);
  const auto b = random_tensor({c}, 3);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, b, 1, 1));
  state.SetItemsProcessed(state.iterations() * 48 * 48 * c * c * 9);
}
BENCHMARK(BM_Conv2dForward)->Arg(16)->Arg(64);

void BM_Conv2dBackward(benchmark::State& state) {
  const auto x = random_tensor({1, 16, 48, 48}, 1);
  auto w = random_tensor({16, 16, 3, 3}, 2);
  auto b = random_tensor({16}, 3);
  w.set_requires_grad(true);
  b.set_requires_grad(true);
  for (auto _ : state) {
    backward(ops::sum(ops::conv2d(x, w, b, 1, 1)));
    w.clear_grad();
    b.clear_grad();
  }
}
BENCHMARK(BM_Conv2dBackward);

void BM_BicubicDownscale(benchmark::State& state) {
  const auto image = synth_sr_dataset(4, 1, static_cast<int>(state.range(0)))[0];
  for (auto _ : state) benchmark::DoNotOptimize(bicubic_resize(image, Ratio{1, 4}));
}
BENCHMARK(BM_BicubicDownscale)->Arg(192)->Arg(512);

void BM_NiqeScore(benchmark::State& state) {
  const auto corpus = synth_sr_dataset(5, 12, 192);
  const auto model = metrics::fit_pristine(corpus, 96, 0.75);
  const auto image = synth_sr_dataset(6, 1, 192)[0];
  for (auto _ : state) benchmark::DoNotOptimize(metrics::niqe(image, model));
}
BENCHMARK(BM_NiqeScore)->Unit(benchmark::kMillisecond);

void BM_EusrMultipass(benchmark::State& state) {
  const models::Eusr<float> model(models::EusrConfig::desk(), 7);
  const auto x = random_tensor({1, 3, 12, 12}, 8);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(models::multipass_x4(model, x, state.range(0) != 0));
}
BENCHMARK(BM_EusrMultipass)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
int main(int argc, char** argv) {
  fpsr::retain_freed_memory();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
