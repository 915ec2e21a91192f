// OpenMP kernels against their serial references, on shapes the mini models
// actually run: a dense 3x3 conv, a depthwise 3x3 conv and the CAM upsample.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "weldcam/kernels.hpp"

using namespace weldcam;

namespace {

struct ConvCase {
  Conv2dGeometry g;
  std::vector<double> input, kernels, output, grad_output, grad_input, grad_kernels;
};

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

// batch 16 at the first block's resolution for 128x128 inputs
ConvCase make_conv(std::size_t groups) {
  const std::size_t c = 16;
  const Shape in{16, 16, 16, c};
  const Shape k{3, 3, c / groups, c};
  ConvCase cc;
  cc.g = conv2d_geometry(in, k, 1, Padding::same, groups);
  const std::size_t n_in = 16 * 16 * 16 * c, n_k = 9 * (c / groups) * c;
  const std::size_t n_out = cc.g.batch * cc.g.out_h * cc.g.out_w * cc.g.out_c;
  cc.input = noise(n_in, 1);
  cc.kernels = noise(n_k, 2);
  cc.grad_output = noise(n_out, 3);
  cc.output.resize(n_out);
  cc.grad_input.resize(n_in);
  cc.grad_kernels.resize(n_k);
  return cc;
}

template <auto Kernel>
void conv_forward(benchmark::State& state) {
  ConvCase cc = make_conv(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    Kernel(cc.g, cc.input, cc.kernels, cc.output);
    benchmark::DoNotOptimize(cc.output.data());
  }
}

template <auto Kernel>
void conv_backward_input(benchmark::State& state) {
  ConvCase cc = make_conv(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    Kernel(cc.g, cc.kernels, cc.grad_output, cc.grad_input);
    benchmark::DoNotOptimize(cc.grad_input.data());
  }
}

template <auto Kernel>
void conv_backward_kernels(benchmark::State& state) {
  ConvCase cc = make_conv(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    Kernel(cc.g, cc.input, cc.grad_output, cc.grad_kernels);
    benchmark::DoNotOptimize(cc.grad_kernels.data());
  }
}

template <auto Kernel>
void resize(benchmark::State& state) {
  const ResizeGeometry g{16, 16, 128, 128};
  const auto in = noise(16 * 16, 4);
  std::vector<double> out(128 * 128);
  for (auto _ : state) {
    Kernel(g, in, out);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

// Arg: conv groups (1 = dense, 16 = depthwise)
BENCHMARK(conv_forward<kernels::conv2d_forward>)->Name("conv_forward/parallel")->Arg(1)->Arg(16);
BENCHMARK(conv_forward<kernels::reference::conv2d_forward>)->Name("conv_forward/reference")->Arg(1)->Arg(16);
BENCHMARK(conv_backward_input<kernels::conv2d_backward_input>)->Name("conv_backward_input/parallel")->Arg(1)->Arg(16);
BENCHMARK(conv_backward_input<kernels::reference::conv2d_backward_input>)
    ->Name("conv_backward_input/reference")
    ->Arg(1)
    ->Arg(16);
BENCHMARK(conv_backward_kernels<kernels::conv2d_backward_kernels>)
    ->Name("conv_backward_kernels/parallel")
    ->Arg(1)
    ->Arg(16);
BENCHMARK(conv_backward_kernels<kernels::reference::conv2d_backward_kernels>)
    ->Name("conv_backward_kernels/reference")
    ->Arg(1)
    ->Arg(16);
BENCHMARK(resize<kernels::resize_bilinear>)->Name("resize_bilinear/parallel");
BENCHMARK(resize<kernels::reference::resize_bilinear>)->Name("resize_bilinear/reference");

BENCHMARK_MAIN();
