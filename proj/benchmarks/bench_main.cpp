#include <benchmark/benchmark.h>

#include "blgcn/hsi_io.hpp"
#include "blgcn/model.hpp"
#include "blgcn/superpixel.hpp"

namespace {

using namespace blgcn;

Matrix random(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(-1.0, 1.0);
  return m;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Matrix a = random(n, n, rng), b = random(n, 64, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * 64));
}
BENCHMARK(BM_Matmul)->Arg(128)->Arg(512)->Arg(1024);

void BM_Slic(benchmark::State& state) {
  SynthSpec spec;
  spec.height = spec.width = static_cast<std::size_t>(state.range(0));
  spec.noise = 0.02;
  const HsiCube cube = normalize(synth_dataset(spec));
  SlicParams params;
  params.superpixels = 200;
  for (auto _ : state) benchmark::DoNotOptimize(slic_segment(cube, params));
}
BENCHMARK(BM_Slic)->Arg(96)->Arg(145)->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (int k = 0; k < 6; ++k) {
      const std::size_t j = rng.below(n);
      if (j != i) a(i, j) = a(j, i) = 1;
    }
  ModelConfig c;
  c.in_dim = 201;
  c.classes = 16;
  BlgcnModel model(c);
  model.set_graph(renormalize(a));
  const Matrix features = random(n, c.in_dim, rng);
  NoGradGuard no_grad;
  for (auto _ : state) {
    Rng noise(3);
    benchmark::DoNotOptimize(model.forward(features, noise, Mode::Eval).log_probs.value());
  }
}
BENCHMARK(BM_Forward)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
