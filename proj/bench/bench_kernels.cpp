// Parallel (im2col + BLAS, OpenMP over channels) kernels against the serial
// direct-loop references, on layer shapes taken from the generator.
//
//   ./build/bench/bench_kernels --benchmark_filter=conv2d
//
// Arguments are {channels_in, channels_out, spatial side, batch}.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "hgan/kernels.hpp"
#include "hgan/reference.hpp"

namespace {

using hgan::ConvGeometry;
using hgan::Shape;
using hgan::Tensor;

struct ConvCase {
    Tensor<float> x;
    std::vector<float> weight;
    std::vector<float> bias;
    int out_channels = 0;
    Tensor<float> dy;
};

std::vector<float> random_values(std::size_t n, std::mt19937& rng)
{
    std::normal_distribution<float> d(0.0f, 0.02f);
    std::vector<float> v(n);
    for (auto& e : v)
        e = d(rng);
    return v;
}

Tensor<float> random_tensor(Shape s, std::mt19937& rng)
{
    Tensor<float> t(s);
    const auto v = random_values(t.size(), rng);
    std::copy(v.begin(), v.end(), t.data());
    return t;
}

ConvCase make_conv(const benchmark::State& state, bool transpose)
{
    std::mt19937 rng(7);
    const int cin = static_cast<int>(state.range(0));
    const int cout = static_cast<int>(state.range(1));
    const int side = static_cast<int>(state.range(2));
    const int batch = static_cast<int>(state.range(3));
    const ConvGeometry g;
    ConvCase c;
    c.x = random_tensor({cin, batch, side, side}, rng);
    c.weight = random_values(static_cast<std::size_t>(cin) * cout * g.kernel * g.kernel, rng);
    c.bias = random_values(static_cast<std::size_t>(cout), rng);
    c.out_channels = cout;
    const int out = transpose ? hgan::deconv_output_size(side, g) : hgan::conv_output_size(side, g);
    c.dy = random_tensor({cout, batch, out, out}, rng);
    return c;
}

void conv_flops(benchmark::State& state, bool transpose)
{
    const double side = static_cast<double>(state.range(2));
    const double out = transpose ? side * 2 : side / 2;
    const double spatial = transpose ? side * side : out * out;
    state.counters["GFLOP/s"] =
        benchmark::Counter(2.0 * state.range(0) * state.range(1) * 16 * spatial * state.range(3) * 1e-9 *
                               static_cast<double>(state.iterations()),
                           benchmark::Counter::kIsRate);
}

template <bool Parallel>
void BM_conv2d_forward(benchmark::State& state)
{
    const ConvCase c = make_conv(state, false);
    for (auto _ : state) {
        auto y = Parallel ? hgan::kernels::conv2d_forward<float>(c.x, c.weight, c.bias, c.out_channels, {})
                          : hgan::reference::conv2d_forward<float>(c.x, c.weight, c.bias, c.out_channels, {});
        benchmark::DoNotOptimize(y.data());
    }
    conv_flops(state, false);
}

template <bool Parallel>
void BM_conv2d_backward(benchmark::State& state)
{
    const ConvCase c = make_conv(state, false);
    Tensor<float> dx;
    std::vector<float> dw(c.weight.size()), db(c.bias.size());
    for (auto _ : state) {
        if (Parallel)
            hgan::kernels::conv2d_backward<float>(c.x, c.weight, c.dy, {}, &dx, dw, db);
        else
            hgan::reference::conv2d_backward<float>(c.x, c.weight, c.dy, {}, &dx, dw, db);
        benchmark::DoNotOptimize(dx.data());
    }
    conv_flops(state, false);
}

template <bool Parallel>
void BM_conv_transpose2d_forward(benchmark::State& state)
{
    const ConvCase c = make_conv(state, true);
    for (auto _ : state) {
        auto y = Parallel
                     ? hgan::kernels::conv_transpose2d_forward<float>(c.x, c.weight, c.bias, c.out_channels, {})
                     : hgan::reference::conv_transpose2d_forward<float>(c.x, c.weight, c.bias, c.out_channels, {});
        benchmark::DoNotOptimize(y.data());
    }
    conv_flops(state, true);
}

template <bool Parallel>
void BM_conv_transpose2d_backward(benchmark::State& state)
{
    const ConvCase c = make_conv(state, true);
    Tensor<float> dx;
    std::vector<float> dw(c.weight.size()), db(c.bias.size());
    for (auto _ : state) {
        if (Parallel)
            hgan::kernels::conv_transpose2d_backward<float>(c.x, c.weight, c.dy, {}, &dx, dw, db);
        else
            hgan::reference::conv_transpose2d_backward<float>(c.x, c.weight, c.dy, {}, &dx, dw, db);
        benchmark::DoNotOptimize(dx.data());
    }
    conv_flops(state, true);
}

template <bool Parallel>
void BM_batchnorm(benchmark::State& state)
{
    std::mt19937 rng(3);
    const int c = static_cast<int>(state.range(0));
    const int side = static_cast<int>(state.range(2));
    const int batch = static_cast<int>(state.range(3));
    const Tensor<float> x = random_tensor({c, batch, side, side}, rng);
    const Tensor<float> dy = random_tensor(x.shape(), rng);
    const std::vector<float> gamma(static_cast<std::size_t>(c), 1.0f), beta(static_cast<std::size_t>(c), 0.0f);
    Tensor<float> y(x.shape()), dx(x.shape());
    std::vector<float> mean, inv_std, dgamma(gamma.size()), dbeta(gamma.size());
    for (auto _ : state) {
        if (Parallel) {
            hgan::kernels::batchnorm_forward_train<float>(x, gamma, beta, 1e-5f, y, mean, inv_std);
            hgan::kernels::batchnorm_backward<float>(x, gamma, mean, inv_std, dy, dx, dgamma, dbeta);
        } else {
            hgan::reference::batchnorm_forward_train<float>(x, gamma, beta, 1e-5f, y, mean, inv_std);
            hgan::reference::batchnorm_backward<float>(x, gamma, mean, inv_std, dy, dx, dgamma, dbeta);
        }
        benchmark::DoNotOptimize(dx.data());
    }
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) * 4 *
                            static_cast<std::int64_t>(x.size() * sizeof(float)));
}

// Outermost encoder layer, a middle layer and a narrow deep layer.
void conv_shapes(benchmark::internal::Benchmark* b)
{
    b->Args({1, 64, 64, 16})->Args({64, 128, 32, 16})->Args({256, 512, 8, 16})->Unit(benchmark::kMillisecond);
}

void deconv_shapes(benchmark::internal::Benchmark* b)
{
    b->Args({512, 256, 8, 16})->Args({256, 64, 16, 16})->Args({128, 1, 32, 16})->Unit(benchmark::kMillisecond);
}

void bn_shapes(benchmark::internal::Benchmark* b)
{
    b->Args({64, 64, 32, 16})->Args({512, 512, 4, 16})->Unit(benchmark::kMicrosecond);
}

}  // namespace

BENCHMARK(BM_conv2d_forward<true>)->Name("conv2d_forward/parallel")->Apply(conv_shapes);
BENCHMARK(BM_conv2d_forward<false>)->Name("conv2d_forward/reference")->Apply(conv_shapes);
BENCHMARK(BM_conv2d_backward<true>)->Name("conv2d_backward/parallel")->Apply(conv_shapes);
BENCHMARK(BM_conv2d_backward<false>)->Name("conv2d_backward/reference")->Apply(conv_shapes);
BENCHMARK(BM_conv_transpose2d_forward<true>)->Name("conv_transpose2d_forward/parallel")->Apply(deconv_shapes);
BENCHMARK(BM_conv_transpose2d_forward<false>)->Name("conv_transpose2d_forward/reference")->Apply(deconv_shapes);
BENCHMARK(BM_conv_transpose2d_backward<true>)->Name("conv_transpose2d_backward/parallel")->Apply(deconv_shapes);
BENCHMARK(BM_conv_transpose2d_backward<false>)->Name("conv_transpose2d_backward/reference")->Apply(deconv_shapes);
BENCHMARK(BM_batchnorm<true>)->Name("batchnorm_train/parallel")->Apply(bn_shapes);
BENCHMARK(BM_batchnorm<false>)->Name("batchnorm_train/reference")->Apply(bn_shapes);

BENCHMARK_MAIN();
