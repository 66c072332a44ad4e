#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace blab {

namespace detail {
inline std::atomic<unsigned>& worker_cap() {
  static std::atomic<unsigned> cap{std::max(1u, std::thread::hardware_concurrency())};
  return cap;
}
}  // namespace detail

/// Caps the number of worker threads used by parallel loops (0 = hardware).
inline void set_thread_count(unsigned n) {
  detail::worker_cap() = n == 0 ? std::max(1u, std::thread::hardware_concurrency()) : n;
}

inline unsigned thread_count() { return detail::worker_cap(); }

/// Runs body(i) for i in [0, n). Static contiguous chunks, so per-chunk
/// reductions are deterministic for a fixed thread count.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(thread_count(), std::max<std::size_t>(n / 64, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace blab
