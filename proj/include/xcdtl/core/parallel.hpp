#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace xcdtl {

/// Worker count: `requested` (0 = hardware concurrency), capped by XCDTL_THREADS.
inline std::size_t thread_count(std::size_t requested = 0) {
  std::size_t n = requested;
  if (n == 0) n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* cap = std::getenv("XCDTL_THREADS"); cap != nullptr && *cap != '\0') {
    char* end = nullptr;
    const long v = std::strtol(cap, &end, 10);
    if (end != cap && v >= 1) n = std::min(n, static_cast<std::size_t>(v));
  }
  return std::max<std::size_t>(1, n);
}

/**
 * Runs body(i) for i in [0, n) on up to `threads` workers.
 *
 * Work items are claimed dynamically, so body must write only to
 * item-indexed storage; results are then independent of scheduling.
 * The first exception thrown by any item is rethrown after all workers join.
 */
template <class Body>
void parallel_for(std::size_t n, Body&& body, std::size_t threads = 0) {
  const std::size_t workers = std::min(thread_count(threads), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace xcdtl
