#include <benchmark/benchmark.h>

#include "ckmflow/kernels.hpp"
#include "ckmflow/net.hpp"
#include "ckmflow/parallel.hpp"
#include "ckmflow/rng.hpp"
#include "ckmflow/serial_ref.hpp"

// Parallel kernel library vs the naive single-threaded reference on the
// shapes the trainer actually runs: 3x3 convolutions at the encoder widths
// and a full velocity-net forward pass.

namespace {

using namespace ckmflow;

Tensorf random_tensor(int c, int h, int w, uint64_t seed) {
    Tensorf t(c, h, w);
    Rng rng(seed);
    for (auto& x : t.v) x = float(rng.normal());
    return t;
}

std::vector<float> random_vec(size_t n, uint64_t seed) {
    std::vector<float> v(n);
    Rng rng(seed);
    for (auto& x : v) x = float(rng.normal());
    return v;
}

void bm_conv3x3_parallel(benchmark::State& state) {
    const int c = int(state.range(0)), hw = int(state.range(1));
    Tensorf x = random_tensor(c, hw, hw, 1);
    std::vector<float> w = random_vec(size_t(c) * c * 9, 2), b = random_vec(size_t(c), 3);
    Tensorf y;
    for (auto _ : state) {
        conv2d_forward(x, w.data(), b.data(), c, 3, 1, 1, y);
        benchmark::DoNotOptimize(y.v.data());
    }
}

// The reference has no standalone conv entry point, so the conv comparison
// pins the library to one thread instead; the net-level benchmark below
// compares the genuinely independent implementations.
void bm_conv3x3_serial(benchmark::State& state) {
    const int c = int(state.range(0)), hw = int(state.range(1));
    Tensorf x = random_tensor(c, hw, hw, 1);
    std::vector<float> w = random_vec(size_t(c) * c * 9, 2), b = random_vec(size_t(c), 3);
    Tensorf y;
    const int prev = current_jobs();
    set_jobs(1);
    for (auto _ : state) {
        conv2d_forward(x, w.data(), b.data(), c, 3, 1, 1, y);
        benchmark::DoNotOptimize(y.v.data());
    }
    set_jobs(prev);
}

VelocityNetConfig net_cfg() {
    VelocityNetConfig cfg;
    cfg.in_channels = 4;
    cfg.out_channels = 1;
    cfg.base_width = 16;
    cfg.depth = 2;
    return cfg;
}

void bm_net_forward_parallel(benchmark::State& state) {
    VelocityNet<float> net(net_cfg());
    net.randomize_all(7);
    Tensorf x = random_tensor(1, 32, 32, 11), c = random_tensor(3, 32, 32, 12);
    VelocityNet<float>::Cache cc;
    for (auto _ : state) {
        Tensorf v = net.forward(net.params().values, x, 0.5, c, cc);
        benchmark::DoNotOptimize(v.v.data());
    }
}

void bm_net_forward_reference(benchmark::State& state) {
    VelocityNet<float> net(net_cfg());
    net.randomize_all(7);
    Tensorf x = random_tensor(1, 32, 32, 11), c = random_tensor(3, 32, 32, 12);
    for (auto _ : state) {
        Tensorf v = ref::velocity_forward(net_cfg(), net.params().values, x, 0.5, c);
        benchmark::DoNotOptimize(v.v.data());
    }
}

}  // namespace

BENCHMARK(bm_conv3x3_parallel)->Args({16, 32})->Args({32, 16})->Args({64, 8});
BENCHMARK(bm_conv3x3_serial)->Args({16, 32})->Args({32, 16})->Args({64, 8});
BENCHMARK(bm_net_forward_parallel);
BENCHMARK(bm_net_forward_reference);

BENCHMARK_MAIN();
