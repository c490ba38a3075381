#include <benchmark/benchmark.h>

#include "robustq/autodiff.hpp"
#include "robustq/regularizers.hpp"
#include "robustq/rng.hpp"
#include "robustq/tensor.hpp"

namespace {

robustq::Tensor random_tensor(robustq::Shape shape, std::uint64_t seed) {
    robustq::Rng rng(seed);
    robustq::Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.normal();
    return t;
}

void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_tensor({n, n}, 1);
    const auto b = random_tensor({n, n}, 2);
    for (auto _ : state) benchmark::DoNotOptimize(robustq::kernels::matmul(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

// batch 32, 1x12x12 input, 8 3x3 filters
void BM_Conv2d(benchmark::State& state) {
    const auto x = random_tensor({32, 1, 12, 12}, 3);
    const auto w = random_tensor({8, 1, 3, 3}, 4);
    for (auto _ : state) benchmark::DoNotOptimize(robustq::kernels::conv2d(x, w, {1, 1}));
}
BENCHMARK(BM_Conv2d);

// forward plus backward of sym2 on a [64,64] weight
void BM_SymLoss2Backward(benchmark::State& state) {
    const auto w = random_tensor({64, 64}, 5);
    for (auto _ : state) {
        robustq::Graph g;
        auto id = g.parameter(w);
        auto loss = robustq::sym_loss2(g, id);
        g.backward(loss);
        benchmark::DoNotOptimize(g.grad(id));
    }
}
BENCHMARK(BM_SymLoss2Backward);

}  // namespace
