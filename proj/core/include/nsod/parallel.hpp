#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace nsod {

/// Effective worker count: `requested` (0 means hardware concurrency),
/// capped by the NSOD_WORKERS environment variable when set.
inline int worker_count(int requested = 0) {
  int w = requested > 0 ? requested
                        : static_cast<int>(std::thread::hardware_concurrency());
  if (w < 1) w = 1;
  if (const char* env = std::getenv("NSOD_WORKERS")) {
    try {
      const int cap = std::stoi(env);
      if (cap >= 1) w = std::min(w, cap);
    } catch (...) {
      // Unparseable values are ignored rather than fatal.
    }
  }
  return w;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Callers must
/// write results into preallocated, index-addressed slots so the output
/// is independent of scheduling order. The first exception thrown by any
/// worker is rethrown on the calling thread.
inline void parallel_for(std::size_t n,
                         const std::function<void(std::size_t)>& fn,
                         int workers = 0) {
  const int w = worker_count(workers);
  if (n == 0) return;
  if (w <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;
  auto body = [&] {
    while (!failed.load(std::memory_order_relaxed)) {
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) break;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        break;
      }
    }
  };
  std::vector<std::thread> pool;
  const int nt = static_cast<int>(std::min<std::size_t>(n, w));
  pool.reserve(nt);
  for (int t = 0; t < nt; ++t) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace nsod
