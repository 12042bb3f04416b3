#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "vacl/kernels.hpp"
#include "vacl/netgraph.hpp"
#include "vacl/regularizers.hpp"

namespace {

using GemmFn = void (*)(std::span<const double>, std::span<const double>, std::span<double>, std::size_t,
                        std::size_t, std::size_t);

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

void run_gemm(benchmark::State& state, GemmFn fn) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const std::vector<double> a = random_values(n * n, 1), b = random_values(n * n, 2);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        fn(a, b, c, n, n, n);
        benchmark::DoNotOptimize(c.data());
        benchmark::ClobberMemory();
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

void BM_GemmNN_Serial(benchmark::State& s) { run_gemm(s, vacl::kernels::serial::gemm_nn); }
void BM_GemmNN_Parallel(benchmark::State& s) { run_gemm(s, vacl::kernels::parallel::gemm_nn); }
void BM_GemmNT_Serial(benchmark::State& s) { run_gemm(s, vacl::kernels::serial::gemm_nt); }
void BM_GemmNT_Parallel(benchmark::State& s) { run_gemm(s, vacl::kernels::parallel::gemm_nt); }
void BM_GemmTN_Serial(benchmark::State& s) { run_gemm(s, vacl::kernels::serial::gemm_tn); }
void BM_GemmTN_Parallel(benchmark::State& s) { run_gemm(s, vacl::kernels::parallel::gemm_tn); }

BENCHMARK(BM_GemmNN_Serial)->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(BM_GemmNN_Parallel)->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(BM_GemmNT_Serial)->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(BM_GemmNT_Parallel)->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(BM_GemmTN_Serial)->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(BM_GemmTN_Parallel)->Arg(64)->Arg(256)->Arg(512);

// Cross-layer variance-aware terms over a 19-member, 64-channel group.
struct PenaltyFixture {
    vacl::ModelGraph graph = vacl::build_residual_mlp(3, {64}, {9}, 10);
    vacl::CrossLayerGroupSet groups = vacl::extract_cross_layer_groups(graph);
    vacl::ParamMap params = vacl::init_params(graph, 7);
    std::vector<vacl::ChannelGroup> channels = vacl::cross_layer_channels(groups);
};

template <typename ForEach>
void run_channel_terms(benchmark::State& state, ForEach for_each) {
    const PenaltyFixture f;
    std::vector<double> values(f.channels.size());
    for (auto _ : state) {
        for_each(f.channels.size(), [&](std::size_t c) {
            const std::vector<double> w = vacl::gather(f.params, f.channels[c]);
            values[c] = vacl::l2_norm(w) + vacl::variance_aware(w);
        });
        benchmark::DoNotOptimize(values.data());
    }
}

void BM_ChannelTerms_Serial(benchmark::State& s) { run_channel_terms(s, vacl::kernels::serial::for_each_index); }
void BM_ChannelTerms_Parallel(benchmark::State& s) {
    run_channel_terms(s, vacl::kernels::parallel::for_each_index);
}
BENCHMARK(BM_ChannelTerms_Serial);
BENCHMARK(BM_ChannelTerms_Parallel);

void BM_VaclPenaltyGradient(benchmark::State& state) {
    const PenaltyFixture f;
    const vacl::PenaltySpec spec{vacl::PenaltyKind::VACL, 5e-4, vacl::Partition::All, 1e-4};
    for (auto _ : state) benchmark::DoNotOptimize(vacl::penalty_gradient(spec, f.graph, f.groups, f.params));
}
BENCHMARK(BM_VaclPenaltyGradient);

}  // namespace

BENCHMARK_MAIN();
