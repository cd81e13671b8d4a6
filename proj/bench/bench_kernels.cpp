// Parallel kernels against the serial reference, on AlexNet-like shapes.

#include <benchmark/benchmark.h>

#include <random>

#include "support.hpp"
#include "tma/kernels.hpp"
#include "tma/reference.hpp"

using namespace tma;

namespace {

std::vector<double> weights(std::size_t n) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 0.1);
  std::vector<double> w(n);
  for (double& v : w) v = g(rng);
  return w;
}

struct ConvShape {
  Shape input;
  int out;
  Window window;
};

// conv1 and conv3 of AlexNet at width 0.25 on a 384-pixel image
const ConvShape kConv[] = {{{3, 384, 288}, 16, {11, 4, 2}}, {{48, 23, 17}, 96, {3, 1, 1}}};

template <bool Parallel>
void conv_forward(benchmark::State& state) {
  const ConvShape& c = kConv[state.range(0)];
  const Tensor x = test::random_tensor(c.input, 2);
  const auto w = weights(static_cast<std::size_t>(c.out) * c.input.channels * c.window.kernel * c.window.kernel);
  const auto b = weights(c.out);
  for (auto _ : state)
    benchmark::DoNotOptimize(Parallel ? kernels::conv2d_forward(x, w, b, c.out, c.window)
                                      : reference::conv2d_forward(x, w, b, c.out, c.window));
}

template <bool Parallel>
void conv_backward(benchmark::State& state) {
  const ConvShape& c = kConv[state.range(0)];
  const auto w = weights(static_cast<std::size_t>(c.out) * c.input.channels * c.window.kernel * c.window.kernel);
  const Shape out{c.out, c.window.output_length(c.input.height), c.window.output_length(c.input.width)};
  const Tensor g = test::random_tensor(out, 3);
  for (auto _ : state)
    benchmark::DoNotOptimize(Parallel ? kernels::conv2d_backward_input(g, w, c.input, c.window)
                                      : reference::conv2d_backward_input(g, w, c.input, c.window));
}

template <bool Parallel>
void maxpool(benchmark::State& state) {
  const Tensor x = test::random_tensor(Shape{16, 95, 71}, 4);
  for (auto _ : state)
    benchmark::DoNotOptimize(Parallel ? kernels::maxpool2d_forward(x, Window{3, 2, 0})
                                      : reference::maxpool2d_forward(x, Window{3, 2, 0}));
}

template <bool Parallel>
void bilinear(benchmark::State& state) {
  const Tensor x = test::random_tensor(Shape{3, 288, 384}, 5);
  for (auto _ : state)
    benchmark::DoNotOptimize(Parallel ? kernels::resample_bilinear(x, 169, 225)
                                      : reference::resample_bilinear(x, 169, 225));
}

template <bool Parallel>
void blur(benchmark::State& state) {
  const Tensor x = test::random_tensor(Shape{3, 288, 384}, 6);
  for (auto _ : state)
    benchmark::DoNotOptimize(Parallel ? kernels::gaussian_blur(x, 1.2) : reference::gaussian_blur(x, 1.2));
}

template <bool Parallel>
void histogram(benchmark::State& state) {
  const Tensor x = test::random_tensor(Shape{64, 23, 17}, 7, 0.0, 2.0);
  std::vector<double> centers;
  for (int i = 0; i <= 20; ++i) centers.push_back(0.05 * i);
  for (auto _ : state)
    benchmark::DoNotOptimize(Parallel ? kernels::soft_histogram(x, centers, 0.1, 2.0)
                                      : reference::soft_histogram(x, centers, 0.1, 2.0));
}

}  // namespace

BENCHMARK(conv_forward<true>)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(conv_forward<false>)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(conv_backward<true>)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(conv_backward<false>)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(maxpool<true>)->Unit(benchmark::kMicrosecond);
BENCHMARK(maxpool<false>)->Unit(benchmark::kMicrosecond);
BENCHMARK(bilinear<true>)->Unit(benchmark::kMicrosecond);
BENCHMARK(bilinear<false>)->Unit(benchmark::kMicrosecond);
BENCHMARK(blur<true>)->Unit(benchmark::kMicrosecond);
BENCHMARK(blur<false>)->Unit(benchmark::kMicrosecond);
BENCHMARK(histogram<true>)->Unit(benchmark::kMicrosecond);
BENCHMARK(histogram<false>)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
