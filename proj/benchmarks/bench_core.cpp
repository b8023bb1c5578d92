#include <benchmark/benchmark.h>

#include <random>

#include "ppsam/finetune.hpp"
#include "ppsam/geometry.hpp"
#include "ppsam/metrics.hpp"
#include "ppsam/surrogate.hpp"

using namespace ppsam;

namespace {

BinaryMask disc(int side, int cx, int cy, int r) {
  BinaryMask m(side, side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) m.set(y, x, (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r);
  }
  return m;
}

ImageTensor random_tensor(int side, std::uint64_t seed) {
  ImageTensor t;
  t.channels = 3;
  t.height = side;
  t.width = side;
  t.data.resize(static_cast<std::size_t>(side) * side * 3);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.f, 1.f);
  for (auto& v : t.data) v = n(rng);
  return t;
}

void BM_ExtractBbox(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const auto m = disc(side, side / 2, side / 3, side / 5);
  for (auto _ : state) benchmark::DoNotOptimize(extract_bbox(m));
  state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_ExtractBbox)->Arg(256)->Arg(1024);

void BM_PerturbVariable(benchmark::State& state) {
  GeometryRng rng(1);
  const BoundingBox b{300, 300, 600, 700};
  for (auto _ : state) benchmark::DoNotOptimize(perturb_variable(b, 50, rng, {1024, 1024}));
}
BENCHMARK(BM_PerturbVariable);

void BM_Dice(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const auto a = disc(side, side / 2, side / 2, side / 4);
  const auto b = disc(side, side / 2 + 7, side / 2 - 3, side / 4);
  for (auto _ : state) benchmark::DoNotOptimize(dice(a, b));
  state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_Dice)->Arg(256)->Arg(1024);

void BM_TrainingLoss(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const auto gt = disc(side, side / 2, side / 2, side / 4);
  std::vector<double> logits(gt.size()), grad(gt.size());
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 2);
  for (auto& v : logits) v = n(rng);
  for (auto _ : state) benchmark::DoNotOptimize(training_loss(logits, gt, {}, grad));
}
BENCHMARK(BM_TrainingLoss)->Arg(256);

void BM_SurrogatePredict(benchmark::State& state) {
  SegmenterSpec spec;
  spec.input_resolution = static_cast<int>(state.range(0));
  SurrogateSegmenter m(spec);
  const auto img = random_tensor(spec.input_resolution, 3);
  const BoundingBox box{10, 12, spec.input_resolution * 3 / 4, spec.input_resolution * 2 / 3};
  for (auto _ : state) benchmark::DoNotOptimize(m.predict(img, box));
}
BENCHMARK(BM_SurrogatePredict)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_SurrogateTrainStep(benchmark::State& state) {
  SegmenterSpec spec;
  spec.input_resolution = static_cast<int>(state.range(0));
  SurrogateSegmenter m(spec);
  apply_freeze_policy(m, {});
  AdamW opt(m, {1e-2, 1e-4});
  const auto img = random_tensor(spec.input_resolution, 4);
  const int r = spec.input_resolution;
  const auto gt = disc(r, r / 2, r / 2, r / 5);
  const BoundingBox box{r / 2 - r / 5 - 8, r / 2 - r / 5 - 8, r / 2 + r / 5 + 8, r / 2 + r / 5 + 8};
  std::vector<double> logits(gt.size()), grad(gt.size());
  std::vector<float> grad_f(gt.size());
  for (auto _ : state) {
    m.zero_grad();
    const auto out = m.forward_train(img, box);
    std::copy(out.begin(), out.end(), logits.begin());
    training_loss(logits, gt, {}, grad);
    std::copy(grad.begin(), grad.end(), grad_f.begin());
    m.backward(grad_f);
    opt.step();
  }
}
BENCHMARK(BM_SurrogateTrainStep)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
