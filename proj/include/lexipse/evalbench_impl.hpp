#pragma once

// Template definitions for evalbench.hpp.

#include "lexipse/errors.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

namespace lexipse {

namespace detail {
LatencySummary summarize_latencies(std::vector<double>& millis);
}

/// `make_worker()` is called once per thread and must return a callable taking
/// a query index.
template <typename WorkerFactory>
BenchReport qps_bench_fn(std::size_t query_count, const QpsOptions& opts, WorkerFactory&& make_worker) {
    if (query_count == 0) throw InvalidArgument("benchmark needs at least one query");
    if (opts.threads == 0) throw InvalidArgument("benchmark needs at least one thread");
    if (!(opts.duration.count() > 0.0)) throw InvalidArgument("benchmark duration must be positive");
    if (opts.warmup.count() < 0.0) throw InvalidArgument("warmup must be non-negative");

    using clock = std::chrono::steady_clock;
    std::atomic<std::uint64_t> cursor{0};
    std::vector<std::vector<double>> latencies(opts.threads);
    std::vector<clock::time_point> last_finish(opts.threads);

    const auto start = clock::now();
    const auto measure_from = start + std::chrono::duration_cast<clock::duration>(opts.warmup);
    const auto stop_at = measure_from + std::chrono::duration_cast<clock::duration>(opts.duration);

    auto body = [&](std::size_t t) {
        auto worker = make_worker();
        auto& lat = latencies[t];
        auto now = clock::now();
        last_finish[t] = measure_from;
        while (now < stop_at) {
            const auto q = static_cast<std::size_t>(cursor.fetch_add(1, std::memory_order_relaxed) % query_count);
            const auto t0 = now;
            worker(q);
            now = clock::now();
            if (t0 >= measure_from) {
                lat.push_back(std::chrono::duration<double, std::milli>(now - t0).count());
                last_finish[t] = now;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(opts.threads - 1);
    for (std::size_t t = 1; t < opts.threads; ++t) pool.emplace_back(body, t);
    body(0);
    for (auto& th : pool) th.join();

    BenchReport report;
    report.threads = opts.threads;
    std::vector<double> all;
    for (auto& l : latencies) all.insert(all.end(), l.begin(), l.end());
    report.queries_completed = all.size();
    const auto end = *std::max_element(last_finish.begin(), last_finish.end());
    report.wall_seconds = std::max(std::chrono::duration<double>(end - measure_from).count(), 1e-9);
    report.qps = static_cast<double>(report.queries_completed) / report.wall_seconds;
    report.latency = detail::summarize_latencies(all);
    return report;
}

}  // namespace lexipse
