#include <benchmark/benchmark.h>

#include "robustq/error_model.hpp"
#include "robustq/quantizer.hpp"
#include "robustq/rng.hpp"

namespace {

robustq::Tensor weights(std::size_t rows, std::size_t cols) {
    robustq::Rng rng(7);
    robustq::Tensor t({rows, cols});
    for (double& v : t.data()) v = 0.1 * rng.normal();
    return t;
}

void BM_FitAndQuantize(benchmark::State& state) {
    const auto w = weights(64, 256);
    const auto scheme = robustq::QuantScheme::weight(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        auto p = robustq::fit_params(w, scheme);
        benchmark::DoNotOptimize(robustq::quantize(w, p, scheme));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.numel()));
}
BENCHMARK(BM_FitAndQuantize)->Arg(2)->Arg(4)->Arg(8);

void BM_MseGridFit(benchmark::State& state) {
    const auto w = weights(64, 256);
    const auto scheme = robustq::QuantScheme::weight(4, robustq::FitMethod::mse_grid);
    for (auto _ : state) benchmark::DoNotOptimize(robustq::fit_params(w, scheme));
}
BENCHMARK(BM_MseGridFit);

void BM_QuantErrorClamped(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(robustq::quant_error_clamped(0.8, 1.0, 4));
}
BENCHMARK(BM_QuantErrorClamped);

void BM_McQuantError(benchmark::State& state) {
    robustq::McRequest req;
    req.samples = static_cast<std::size_t>(state.range(0));
    req.alpha = 2.5;
    req.bits = 4;
    for (auto _ : state) benchmark::DoNotOptimize(robustq::mc_quant_error(req));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_McQuantError)->Arg(100'000)->Arg(1'000'000);

}  // namespace
