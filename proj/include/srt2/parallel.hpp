#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace srt2 {

/// Runs body(i) for i in [0, n) on up to `threads` workers over contiguous chunks.
/// Bodies must write to disjoint outputs; results are then independent of `threads`.
/// A worker stops at its first exception; the one from the lowest chunk is rethrown.
template <typename Body>
void parallel_for(std::ptrdiff_t n, int threads, Body&& body) {
    const std::ptrdiff_t workers = std::clamp<std::ptrdiff_t>(threads, 1, std::max<std::ptrdiff_t>(n, 1));
    if (workers == 1) {
        for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
        return;
    }
    const std::ptrdiff_t chunk = (n + workers - 1) / workers;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    {
        std::vector<std::jthread> pool;
        for (std::ptrdiff_t w = 0; w < workers; ++w) {
            const std::ptrdiff_t lo = w * chunk, hi = std::min(n, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back([lo, hi, &body, &err = errors[std::size_t(w)]] {
                try {
                    for (std::ptrdiff_t i = lo; i < hi; ++i) body(i);
                } catch (...) {
                    err = std::current_exception();
                }
            });
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace srt2
