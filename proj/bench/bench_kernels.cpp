// OpenMP kernels against the serial reference on detector-sized operands.
// Set OMP_NUM_THREADS to compare thread counts.

#include <benchmark/benchmark.h>

#include "graspfs/kernels.hpp"
#include "graspfs/reference_kernels.hpp"
#include "graspfs/rng.hpp"

using namespace graspfs;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

// (in channels, out channels, spatial size) of the detector's conv layers
void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({1, 4, 64})->Args({4, 8, 32})->Args({8, 16, 16})->Args({16, 16, 16});
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const auto ic = static_cast<std::size_t>(state.range(0)), oc = static_cast<std::size_t>(state.range(1)),
             s = static_cast<std::size_t>(state.range(2));
  const Tensor x = random_tensor({ic, s, s}, 1), w = random_tensor({oc, ic, 3, 3}, 2), b = random_tensor({oc}, 3);
  for (auto _ : state) {
    Tensor y = Parallel ? kernels::conv2d_forward(x, w, b, 1, 1) : reference::conv2d_forward(x, w, b, 1, 1);
    benchmark::DoNotOptimize(y.data().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * oc * ic * s * s * 9));
}

template <bool Parallel>
void BM_ConvBackwardInput(benchmark::State& state) {
  const auto ic = static_cast<std::size_t>(state.range(0)), oc = static_cast<std::size_t>(state.range(1)),
             s = static_cast<std::size_t>(state.range(2));
  const Tensor g = random_tensor({oc, s, s}, 1), w = random_tensor({oc, ic, 3, 3}, 2);
  const Shape in{ic, s, s};
  for (auto _ : state) {
    Tensor y = Parallel ? kernels::conv2d_backward_input(g, w, in, 1, 1)
                        : reference::conv2d_backward_input(g, w, in, 1, 1);
    benchmark::DoNotOptimize(y.data().data());
  }
}

template <bool Parallel>
void BM_ConvBackwardParams(benchmark::State& state) {
  const auto ic = static_cast<std::size_t>(state.range(0)), oc = static_cast<std::size_t>(state.range(1)),
             s = static_cast<std::size_t>(state.range(2));
  const Tensor x = random_tensor({ic, s, s}, 1), g = random_tensor({oc, s, s}, 2);
  Tensor gw({oc, ic, 3, 3}), gb({oc});
  for (auto _ : state) {
    if (Parallel) kernels::conv2d_backward_params(x, g, 1, 1, gw, gb);
    else reference::conv2d_backward_params(x, g, 1, 1, gw, gb);
    benchmark::DoNotOptimize(gw.data().data());
  }
}

template <bool Parallel>
void BM_GuidedRelu(benchmark::State& state) {
  const Tensor f = random_tensor({4, 64, 64}, 1), r = random_tensor({4, 64, 64}, 2);
  for (auto _ : state) {
    Tensor y = Parallel ? kernels::guided_relu_backward(f, r) : reference::guided_relu_backward(f, r);
    benchmark::DoNotOptimize(y.data().data());
  }
}

template <bool Parallel>
void BM_MaxPool(benchmark::State& state) {
  const Tensor x = random_tensor({8, 32, 32}, 1);
  for (auto _ : state) {
    PoolResult p = Parallel ? kernels::maxpool_forward(x, 2, 2) : reference::maxpool_forward(x, 2, 2);
    benchmark::DoNotOptimize(p.output.data().data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/omp")->Apply(conv_args);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/reference")->Apply(conv_args);
BENCHMARK(BM_ConvBackwardInput<true>)->Name("conv_backward_input/omp")->Apply(conv_args);
BENCHMARK(BM_ConvBackwardInput<false>)->Name("conv_backward_input/reference")->Apply(conv_args);
BENCHMARK(BM_ConvBackwardParams<true>)->Name("conv_backward_params/omp")->Apply(conv_args);
BENCHMARK(BM_ConvBackwardParams<false>)->Name("conv_backward_params/reference")->Apply(conv_args);
BENCHMARK(BM_GuidedRelu<true>)->Name("guided_relu/omp");
BENCHMARK(BM_GuidedRelu<false>)->Name("guided_relu/reference");
BENCHMARK(BM_MaxPool<true>)->Name("maxpool/omp");
BENCHMARK(BM_MaxPool<false>)->Name("maxpool/reference");

BENCHMARK_MAIN();
