// Serial reference against the OpenMP path for the replica-level kernels.
// With one core the two should be within noise; the point is that the
// parallel path adds no overhead worth worrying about.
#include <benchmark/benchmark.h>

#include <cmath>

#include "bbm/engine.hpp"
#include "bbm/genealogy.hpp"
#include "bbm/parallel.hpp"
#include "bbm/pipeline.hpp"

namespace {

bbm::SimulateOptions options(double t) {
    bbm::SimulateOptions o;
    o.t = t;
    o.replicas = 64;
    o.companion_s = 0.0;
    o.genealogy_replicas = 0;
    return o;
}

void BM_Summaries(benchmark::State& state, bbm::Execution exec) {
    const auto o = options(static_cast<double>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(bbm::simulate_records(o, exec));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(o.replicas));
}

void BM_LocalMaxima(benchmark::State& state, bbm::Execution exec) {
    const double t = static_cast<double>(state.range(0));
    for (auto _ : state) {
        auto counts = bbm::map_replicas(0, 32, [&](std::uint64_t r) {
            bbm::SimConfig c;
            c.horizon = t;
            c.replica = r;
            return bbm::local_maxima(bbm::simulate_exact(c), std::sqrt(t)).size();
        }, exec);
        benchmark::DoNotOptimize(counts);
    }
}

}  // namespace

BENCHMARK_CAPTURE(BM_Summaries, serial, bbm::Execution::serial)->Arg(8)->Arg(12)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Summaries, parallel, bbm::Execution::parallel)->Arg(8)->Arg(12)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_LocalMaxima, serial, bbm::Execution::serial)->Arg(6)->Arg(9)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_LocalMaxima, parallel, bbm::Execution::parallel)->Arg(6)->Arg(9)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
