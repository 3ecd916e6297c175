#pragma once
// Minimal indexed worker pool. Work items are claimed through an atomic
// counter; callers that need determinism write results into per-index slots
// and reduce in index order afterwards, so the answer never depends on the
// thread count or on scheduling.

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace xda {

inline unsigned default_threads() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc ? hc : 1;
}

template <class F>
inline void parallel_for(size_t count, unsigned threads, F&& fn) {
    if (count == 0) return;
    if (threads <= 1 || count == 1) {
        for (size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto worker = [&] {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!error) error = std::current_exception();
                next.store(count); // stop handing out work
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const unsigned n = std::min<size_t>(threads, count);
    pool.reserve(n - 1);
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

} // namespace xda
