#include <benchmark/benchmark.h>

#include <random>

#include "stgan/data.hpp"
#include "stgan/losses.hpp"
#include "stgan/metrics.hpp"
#include "stgan/nets.hpp"
#include "stgan/ops.hpp"
#include "stgan/phantom.hpp"
#include "stgan/train.hpp"

using namespace stgan;

namespace {

Tensor<float> noise(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.f, 1.f);
  Tensor<float> t(s);
  for (auto& v : t.storage()) v = n(rng);
  return t;
}

ArchConfig bench_arch() {
  ArchConfig a;
  a.image_size = 64;
  a.base_channels = 8;
  a.n_residual_blocks = 4;
  a.n_discriminator_layers = 3;
  a.segmentor_depth = 3;
  return a;
}

Dataset phantom_set(Domain d, int n, int size) {
  PhantomSpec spec;
  spec.image_size = size;
  Dataset ds;
  for (int i = 0; i < n; ++i) {
    PhantomSample s = generate_sample(spec, d, std::uint64_t(i));
    ds.add(DataSample{s.image, i, 0, d}, s.mask);
  }
  return ds;
}

// Args: channels in/out, spatial size, kernel.
void BM_Conv2dForwardBackward(benchmark::State& state) {
  const int c = int(state.range(0)), hw = int(state.range(1)), k = int(state.range(2));
  const Tensor<float> x = noise({4, c, hw, hw}, 1);
  const Tensor<float> w = noise({c, c, k, k}, 2);
  const Tensor<float> zero(Shape{4, c, hw, hw});
  for (auto _ : state) {
    Graph<float> g(true);
    const Var xv = g.variable(x);
    const Var y = ops::conv2d(g, xv, g.variable(w), Var{}, {k, 1, k / 2, 0});
    g.backward(loss_ops::mean_abs_diff(g, y, g.constant_ref(zero)));
    benchmark::DoNotOptimize(g.grad(xv).data());
  }
  state.SetItemsProcessed(state.iterations() * 4);
}
BENCHMARK(BM_Conv2dForwardBackward)->Args({8, 64, 3})->Args({32, 16, 3})->Args({8, 64, 7});

void BM_GeneratorForward(benchmark::State& state) {
  const ArchConfig arch = bench_arch();
  const auto p = init_params<float>(NetKind::kGenerator, arch, 1);
  const Tensor<float> x = noise({int(state.range(0)), 1, 64, 64}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(generator_forward(p, arch, x).data());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GeneratorForward)->Arg(1)->Arg(4);

void BM_SegmentorForward(benchmark::State& state) {
  const ArchConfig arch = bench_arch();
  const auto p = init_params<float>(NetKind::kSegmentor, arch, 5);
  const Tensor<float> x = noise({4, 1, 64, 64}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(segmentor_forward(p, arch, x).data());
}
BENCHMARK(BM_SegmentorForward);

void BM_GanStep(benchmark::State& state) {
  const ArchConfig arch = bench_arch();
  const Dataset src = phantom_set(Domain::kSource, 4, 64);
  const Dataset tgt = phantom_set(Domain::kTarget, 4, 64);
  const std::size_t idx[4] = {0, 1, 2, 3};
  const Batch xb = make_batch(src, idx, true);
  const Batch yb = make_batch(tgt, idx, false);
  TrainConfig cfg;
  GanTrainer trainer(init_bundle(arch, 1), cfg);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step(xb, yb).l_total);
}
BENCHMARK(BM_GanStep)->Unit(benchmark::kMillisecond);

void BM_SurfaceDistances(benchmark::State& state) {
  PhantomSpec spec;
  spec.image_size = int(state.range(0));
  const LabelMask a = generate_sample(spec, Domain::kTarget, 1).mask;
  const LabelMask b = generate_sample(spec, Domain::kTarget, 2).mask;
  const auto sa = metrics::extract_boundary(a, metrics::Boundary::kLVEpi);
  const auto sb = metrics::extract_boundary(b, metrics::Boundary::kLVEpi);
  for (auto _ : state) {
    benchmark::DoNotOptimize(metrics::asd(*sa, *sb));
    benchmark::DoNotOptimize(metrics::hd(*sa, *sb));
  }
  state.counters["points"] = double(sa->points.size() + sb->points.size());
}
BENCHMARK(BM_SurfaceDistances)->Arg(64)->Arg(128)->Arg(256);

void BM_EvaluateVolume(benchmark::State& state) {
  PhantomSpec spec;
  std::vector<LabelMask> seg, gt;
  for (std::uint64_t i = 0; i < 10; ++i) {
    seg.push_back(generate_sample(spec, Domain::kTarget, i).mask);
    gt.push_back(generate_sample(spec, Domain::kTarget, i + 100).mask);
  }
  for (auto _ : state) benchmark::DoNotOptimize(metrics::evaluate_volume(seg, gt).dice);
}
BENCHMARK(BM_EvaluateVolume)->Unit(benchmark::kMillisecond);

void BM_PhantomSample(benchmark::State& state) {
  PhantomSpec spec;
  spec.image_size = int(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_sample(spec, Domain::kTarget, seed++).mask.v.data());
}
BENCHMARK(BM_PhantomSample)->Arg(64)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
