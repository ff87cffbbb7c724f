#include <benchmark/benchmark.h>

#include <random>

#include "nedb/constrained_noise.hpp"
#include "nedb/distance_attention.hpp"
#include "nedb/gradcheck.hpp"
#include "nedb/morphology.hpp"
#include "nedb/network.hpp"
#include "nedb/ops.hpp"
#include "nedb/tape.hpp"

using namespace nedb;

namespace {

void BM_Conv3x3(benchmark::State& state) {
  const auto c = state.range(0), s = state.range(1);
  std::mt19937_64 rng(0);
  const Tensor x = random_tensor({1, c, s, s}, rng);
  const Tensor w = random_tensor({c, c, 3, 3}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, Tensor(), {1, 1, 1}));
  state.SetItemsProcessed(state.iterations() * c * c * 9 * s * s);
}
BENCHMARK(BM_Conv3x3)->Args({16, 32})->Args({32, 32})->Args({64, 16})->Unit(benchmark::kMicrosecond);

void BM_ExtractNoise(benchmark::State& state) {
  const auto bank = ConstrainedKernelBank::create({static_cast<int>(state.range(0))}, InitScheme::kLaplaceLikeD,
                                                  ProjectionMode::kImproved, 0);
  std::mt19937_64 rng(1);
  const Tensor img = random_tensor({1, 3, 128, 128}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(extract_noise(bank, img));
}
BENCHMARK(BM_ExtractNoise)->Arg(3)->Arg(5)->Arg(7)->Unit(benchmark::kMicrosecond);

void BM_ProjectBank(benchmark::State& state) {
  auto bank = ConstrainedKernelBank::create({5}, InitScheme::kRandom, ProjectionMode::kImproved, 0);
  for (auto _ : state) benchmark::DoNotOptimize(bank.project());
}
BENCHMARK(BM_ProjectBank);

void BM_DistanceAttention(benchmark::State& state) {
  const auto s = state.range(0);
  const bool distance = state.range(1) != 0;
  std::mt19937_64 rng(2);
  const auto p = NonLocalParams::init(64, rng);
  const Tensor x = random_tensor({1, 64, s, s}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(attention_forward(p, x, distance));
}
BENCHMARK(BM_DistanceAttention)->Args({8, 0})->Args({8, 1})->Args({16, 1})->Args({32, 1})->Unit(benchmark::kMillisecond);

void BM_EdgeBand(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution bit(0.3);
  BinaryMask m(512, 512);
  for (auto& b : m.bits) b = bit(rng) ? 1 : 0;
  const auto se = StructuringElement::make(ElementShape::kEllipse, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(edge_gt(m, se));
}
BENCHMARK(BM_EdgeBand)->Arg(3)->Arg(5)->Arg(9)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  NedbConfig c;
  c.base_width = 8;
  c.input_size = static_cast<int>(state.range(0));
  NedbModel model(c);
  std::mt19937_64 rng(4);
  const Tensor img = random_tensor({4, 3, c.input_size, c.input_size}, rng);
  for (auto _ : state) {
    Tape tape;
    TapeScope scope(tape);
    const auto r = model.forward(img, Mode::kTrain);
    benchmark::DoNotOptimize(tape.backward(ops::mean(r.mask)));
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
