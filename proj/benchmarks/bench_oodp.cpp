#include <benchmark/benchmark.h>

#include <numeric>
#include <random>

#include "oodp/harness.hpp"

using namespace oodp;

namespace {

Tensor<float> random_frames(int n, int c, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1, 1);
  Tensor<float> t(n, c, h, w);
  for (auto& v : t.span()) v = d(rng);
  return t;
}

const std::vector<data::TransitionRecord>& records() {
  static const auto r = [] {
    const auto suite = env::generate_env_suite(1, 1, 7);
    return harness::collect_balanced(suite.train, 64, 1);
  }();
  return r;
}

void BM_SimulatorStepRender(benchmark::State& state) {
  const auto layout = env::generate_env_suite(1, 1, 3).train[0];
  auto s = env::spawn_state(layout, 1);
  int a = 0;
  for (auto _ : state) {
    s = env::step(layout, s, static_cast<env::Action>(a++ % env::kNumActions));
    benchmark::DoNotOptimize(env::render(layout, s));
  }
}
BENCHMARK(BM_SimulatorStepRender);

void BM_Conv2dForward(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const int c = static_cast<int>(state.range(0));
  nn::Conv2d<float> conv("c", c, c, 3, 1, 1, rng);
  const auto x = random_frames(4, c, 80, 80, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x, true));
}
BENCHMARK(BM_Conv2dForward)->Arg(3)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Conv2dBackward(benchmark::State& state) {
  std::mt19937_64 rng(1);
  nn::Conv2d<float> conv("c", 32, 32, 3, 1, 1, rng);
  const auto x = random_frames(4, 32, 80, 80, 2);
  const auto y = conv.forward(x, true);
  for (auto _ : state) benchmark::DoNotOptimize(conv.backward(y));
}
BENCHMARK(BM_Conv2dBackward)->Unit(benchmark::kMillisecond);

void BM_DetectorForward(benchmark::State& state) {
  std::mt19937_64 rng(3);
  perception::ObjectDetector<float> det({3, 1, 80, 80}, rng);
  const auto x = random_frames(static_cast<int>(state.range(0)), 3, 80, 80, 4);
  for (auto _ : state) benchmark::DoNotOptimize(det.forward(x, false));
}
BENCHMARK(BM_DetectorForward)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_CropWindow(benchmark::State& state) {
  const auto mask = random_frames(1, 1, 80, 80, 5);
  std::vector<float> out(33 * 33);
  for (auto _ : state) {
    dynamics::crop_window<float>(mask.plane(0, 0), 80, 80, {40.3f, 21.7f}, 33, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_CropWindow);

void BM_ComposePrediction(benchmark::State& state) {
  const auto frame = random_frames(16, 3, 80, 80, 6);
  const auto bg = random_frames(16, 3, 80, 80, 7);
  const auto masks = random_frames(16, 1, 80, 80, 8);
  const std::vector<Vec2<float>> motions(16, {1.5f, -2.25f});
  for (auto _ : state) benchmark::DoNotOptimize(composition::compose_prediction<float>(frame, masks, motions, bg));
}
BENCHMARK(BM_ComposePrediction)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  harness::TrainConfig cfg;
  OodpModel<float> model(harness::model_config(cfg, 80, 80));
  nn::Adam<float> opt(model.parameters(), {1e-4f});
  std::vector<std::size_t> idx(static_cast<std::size_t>(state.range(0)));
  std::iota(idx.begin(), idx.end(), 0);
  const auto batch = harness::make_batch(records(), idx, false);
  const auto weights = objective::LossWeights::for_variant(objective::Variant::WithoutProposal);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.compute_gradients(batch, objective::Variant::WithoutProposal, weights));
    opt.step();
  }
}
BENCHMARK(BM_TrainStep)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
