#include "aircast/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace aircast {

namespace {
std::atomic<int> g_max_threads{0};

int effective_threads() {
  int cap = g_max_threads.load(std::memory_order_relaxed);
  if (cap > 0) return cap;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}
}  // namespace

void set_max_threads(int n) { g_max_threads.store(n < 0 ? 0 : n, std::memory_order_relaxed); }

int max_threads() { return effective_threads(); }

namespace detail {

void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  std::size_t workers = static_cast<std::size_t>(effective_threads());
  workers = std::min(workers, n);
  if (workers <= 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(workers);
  std::size_t base = n / workers;
  std::size_t rem = n % workers;
  std::size_t lo = 0;
  for (std::size_t w = 0; w < workers; ++w) {
    std::size_t hi = lo + base + (w < rem ? 1 : 0);
    threads.emplace_back([&body, lo, hi] { body(lo, hi); });
    lo = hi;
  }
  for (auto& t : threads) t.join();
}

}  // namespace detail

}  // namespace aircast
