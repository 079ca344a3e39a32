#ifndef HRGROUP_PARALLEL_HPP
#define HRGROUP_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <optional>
#include <thread>
#include <vector>

namespace hrgroup {

/// Runs job(i) for i in [0, n) on up to `workers` threads and returns the
/// results in index order. Jobs must not depend on each other, so the output
/// is the same for every worker count. Every job runs even when some throw;
/// the exception of the lowest failing index is then rethrown.
template <class Job>
auto parallel_map(std::size_t n, int workers, Job&& job) -> std::vector<decltype(job(std::size_t{}))> {
    using R = decltype(job(std::size_t{}));
    std::vector<std::optional<R>> slots(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};

    auto run = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                slots[i].emplace(job(i));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };

    const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
    if (threads <= 1) {
        run();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(threads - 1);
        for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(run);
        run();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<R> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

} // namespace hrgroup

#endif
