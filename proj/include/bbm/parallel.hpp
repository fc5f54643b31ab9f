#pragma once

// Replica-level parallelism.  Every replica writes only its own result slot
// and draws only from its own keyed stream, so the output is identical for
// any thread count and for the serial reference path.

#include <atomic>
#include <cstdint>
#include <exception>
#include <type_traits>
#include <vector>

#include <omp.h>

namespace bbm {

enum class Execution : std::uint8_t { serial, parallel };

/// Number of worker threads used by Execution::parallel (0 = OpenMP default).
void set_thread_count(int threads);
int thread_count() noexcept;

/// Serial reference: results[i] = f(first + i).
template <class F>
auto map_replicas_serial(std::uint64_t first, std::uint64_t count, F&& f) {
    using R = std::invoke_result_t<F&, std::uint64_t>;
    std::vector<R> out;
    out.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) out.push_back(f(first + i));
    return out;
}

/// OpenMP version with dynamic scheduling.  The first exception thrown by
/// any replica is rethrown after the loop.
template <class F>
auto map_replicas_parallel(std::uint64_t first, std::uint64_t count, F&& f) {
    using R = std::invoke_result_t<F&, std::uint64_t>;
    std::vector<R> out(count);
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    const auto n = static_cast<std::int64_t>(count);
#pragma omp parallel for schedule(dynamic, 8) num_threads(thread_count())
    for (std::int64_t i = 0; i < n; ++i) {
        if (failed.load(std::memory_order_relaxed)) continue;
        try {
            out[static_cast<std::size_t>(i)] = f(first + static_cast<std::uint64_t>(i));
        } catch (...) {
#pragma omp critical(bbm_map_replicas_error)
            if (!error) error = std::current_exception();
            failed.store(true, std::memory_order_relaxed);
        }
    }
    if (error) std::rethrow_exception(error);
    return out;
}

template <class F>
auto map_replicas(std::uint64_t first, std::uint64_t count, F&& f, Execution exec = Execution::parallel) {
    return exec == Execution::serial ? map_replicas_serial(first, count, f) : map_replicas_parallel(first, count, f);
}

}  // namespace bbm
