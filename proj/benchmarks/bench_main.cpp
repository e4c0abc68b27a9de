#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "dsnet/features.hpp"
#include "dsnet/losses.hpp"
#include "dsnet/model.hpp"
#include "dsnet/ops.hpp"

namespace {

using namespace dsnet;

Tensor random(Shape shape, std::uint64_t seed, bool grad = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

// Args: channels in, channels out, height, width.
void BM_Conv2dForward(benchmark::State& state) {
  const auto ci = static_cast<std::size_t>(state.range(0)), co = static_cast<std::size_t>(state.range(1));
  const auto h = static_cast<std::size_t>(state.range(2)), w = static_cast<std::size_t>(state.range(3));
  const Tensor x = random({4, ci, h, w}, 1), k = random({co, ci, 5, 5}, 2), b = random({co}, 3);
  for (auto _ : state) {
    Graph g(false);
    benchmark::DoNotOptimize(ops::conv2d(g, x, k, b, {2, 2}).data().data());
  }
  state.counters["MAC/s"] =
      benchmark::Counter(static_cast<double>(4 * co * ci * 25 * h * w), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Conv2dForward)->Args({3, 32, 150, 80})->Args({32, 64, 75, 40})->Args({128, 256, 19, 10});

void BM_Conv2dBackward(benchmark::State& state) {
  const auto ci = static_cast<std::size_t>(state.range(0)), co = static_cast<std::size_t>(state.range(1));
  const auto h = static_cast<std::size_t>(state.range(2)), w = static_cast<std::size_t>(state.range(3));
  const Tensor x = random({4, ci, h, w}, 1, true), k = random({co, ci, 5, 5}, 2, true), b = random({co}, 3, true);
  for (auto _ : state) {
    Graph g;
    g.backward(ops::square_sum(g, ops::conv2d(g, x, k, b, {2, 2})));
    benchmark::DoNotOptimize(k.grad().data());
  }
}
BENCHMARK(BM_Conv2dBackward)->Args({3, 32, 150, 80})->Args({32, 64, 75, 40});

model::ModelConfig reduced() {
  model::ModelConfig c;
  c.conv_channels = {8, 16, 16, 32};
  c.kernel = 3;
  c.projector_bottleneck = 8;
  c.restorer_hidden = 32;
  c.classifier_hidden = 16;
  return c;
}

void BM_TrainStepReduced(benchmark::State& state) {
  model::DsNet net(reduced(), 1);
  const Tensor x = random({16, 3, 64, 32}, 4), xn = random({16, 3, 64, 32}, 5);
  std::vector<int> labels(16);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 4);
  for (auto _ : state) {
    net.zero_grad();
    Graph g;
    g.backward(losses::total_loss(g, net.forward_train(g, x, xn), labels, {}).total);
  }
}
BENCHMARK(BM_TrainStepReduced)->Unit(benchmark::kMillisecond);

void BM_InferFullSize(benchmark::State& state) {
  model::DsNet net(model::ModelConfig{}, 1);
  net.set_mode(ops::Mode::kEval);
  const Tensor x = random({1, 3, 600, 80}, 6);
  for (auto _ : state) {
    Graph g(false);
    benchmark::DoNotOptimize(net.forward_infer(g, x).data().data());
  }
}
BENCHMARK(BM_InferFullSize)->Unit(benchmark::kMillisecond)->Iterations(2);

void BM_OrthogonalityLoss(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const Tensor a = random({32, d}, 7, true), b = random({32, d}, 8, true);
  for (auto _ : state) {
    Graph g;
    g.backward(losses::orthogonality_loss(g, a, b));
  }
}
BENCHMARK(BM_OrthogonalityLoss)->Arg(32)->Arg(256);

void BM_FeatureExtraction(benchmark::State& state) {
  audio::Waveform wave;
  wave.samples.resize(static_cast<std::size_t>(state.range(0)) * audio::kTargetSampleRate);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (std::size_t i = 0; i < wave.samples.size(); ++i)
    wave.samples[i] = 0.3 * std::sin(0.05 * static_cast<double>(i)) + 0.1 * u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(features::extract(wave));
}
BENCHMARK(BM_FeatureExtraction)->Arg(3)->Arg(6)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
