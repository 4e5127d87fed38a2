#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace smallball {

/// Trial-level parallelism. `threads == 0` means one worker per hardware thread.
struct Parallel {
    unsigned threads = 1;

    unsigned resolved() const noexcept {
        if (threads > 0) {
            return threads;
        }
        return std::max(1U, std::thread::hardware_concurrency());
    }
};

/// Calls body(i) for every i in [0, count). Work is handed out dynamically, so
/// callers must write results into per-index slots; any reduction happens after
/// the call in index order, which keeps results independent of the thread count.
template <class Body>
void parallel_for(std::size_t count, Parallel par, Body&& body) {
    const auto workers = static_cast<std::size_t>(std::min<std::size_t>(par.resolved(), count));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            body(i);
        }
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const auto i = next.fetch_add(1);
            if (i >= count) {
                return;
            }
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) {
                    first_error = std::current_exception();
                }
                next.store(count);
                return;
            }
        }
    };

    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back(worker);
    }
    pool.clear();
    if (first_error) {
        std::rethrow_exception(first_error);
    }
}

}  // namespace smallball
