#pragma once

#include <cstddef>
#include <functional>

namespace aircast {

// Global cap on worker threads. 0 restores the hardware default.
// Results never depend on the thread count: parallel loops only write to
// disjoint slots and reductions run in a fixed order afterwards.
void set_max_threads(int n);
int max_threads();

namespace detail {
void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);
}

/// Calls fn(i) for i in [0, n), possibly from several threads.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  detail::parallel_chunks(n, [&fn](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) fn(i);
  });
}

/// Chunked variant; fn(lo, hi) handles a contiguous index range.
template <typename Fn>
void parallel_for_chunks(std::size_t n, Fn&& fn) {
  detail::parallel_chunks(n, std::function<void(std::size_t, std::size_t)>(std::forward<Fn>(fn)));
}

}  // namespace aircast
