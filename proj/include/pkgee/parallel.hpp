#pragma once

// Minimal indexed parallel-for. Work items are claimed from an atomic
// counter, and every item writes only to its own output slot, so the caller
// can reduce the slots in index order and get the same bits for any thread
// count.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace pkgee {

/// Worker count: `requested` if nonzero, else PKGEE_THREADS, else the
/// hardware concurrency (at least 1).
unsigned worker_count(unsigned requested = 0);

template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = worker_count(threads);
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n, std::memory_order_relaxed);
        return;
      }
    }
  };
  const std::size_t count = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(count - 1);
  for (std::size_t t = 1; t < count; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace pkgee
