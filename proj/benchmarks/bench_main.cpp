#include <benchmark/benchmark.h>

#include <random>

#include "a2j/anchors.hpp"
#include "a2j/attention.hpp"
#include "a2j/data_synth.hpp"
#include "a2j/losses.hpp"
#include "a2j/model.hpp"

using namespace a2j;

namespace {

std::vector<float> uniform(std::size_t n, float lo, float hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

void BM_AnchorGrid(benchmark::State& state) {
  const auto stride = std::size_t(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(generate_anchor_grid(256, stride, {-100, 0, 100}));
}
BENCHMARK(BM_AnchorGrid)->Arg(16)->Arg(4);

void BM_Fuse(benchmark::State& state) {
  const auto anchors = anchor_grid_for_counts(64, std::size_t(state.range(0)), 3);
  const std::size_t A = anchors.size(), J = 42;
  const Tensor<float> off({A, J, 3}, uniform(A * J * 3, -8, 8, 1)), raw({A, J}, uniform(A * J, -2, 2, 2));
  for (auto _ : state) benchmark::DoNotOptimize(fuse(anchors, off, raw).joints);
}
BENCHMARK(BM_Fuse)->Arg(4)->Arg(16);

void BM_DeformableCore(benchmark::State& state) {
  const std::size_t queries = std::size_t(state.range(0)), d = 64, heads = 2, points = 2;
  const std::vector<LevelShape> levels{{8, 8, 0}, {4, 4, 64}, {2, 2, 80}, {1, 1, 84}};
  const std::size_t samples = heads * levels.size() * points;
  const Tensor<float> value({85, d}, uniform(85 * d, -1, 1, 3)), ref({queries, 2}, uniform(queries * 2, 0, 1, 4)),
      off({queries, samples * 2}, uniform(queries * samples * 2, -2, 2, 5)),
      w({queries, samples}, uniform(queries * samples, 0, 0.1f, 6));
  for (auto _ : state)
    benchmark::DoNotOptimize(ms_deform_attn_core(value, std::span<const LevelShape>(levels), ref, off, w, heads, points));
}
BENCHMARK(BM_DeformableCore)->Arg(48)->Arg(768);

void BM_ModelForward(benchmark::State& state) {
  ModelConfig cfg;
  cfg.anchors_per_side = std::size_t(state.range(0));
  const Model<float> model(cfg, 1);
  const auto image = generate_sample(SyntheticHandConfig{}, 3).image_tensor<float>();
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(image).prediction.joints);
}
BENCHMARK(BM_ModelForward)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_TrainingStep(benchmark::State& state) {
  ModelConfig cfg;
  const Model<float> model(cfg, 1);
  const auto sample = generate_sample(SyntheticHandConfig{}, 3);
  const auto image = sample.image_tensor<float>();
  for (auto _ : state) {
    const auto out = model.forward(image);
    const auto terms = compute_losses(out.prediction, model.anchors(), sample.targets, LossConfig{});
    terms.total.backward();
  }
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

}  // namespace

// The packaged benchmark_main archive carries LTO bytecode from another
// compiler release, so the entry point lives here.
BENCHMARK_MAIN();
