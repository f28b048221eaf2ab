#ifndef SIMPLEX_TRACK__PARALLEL_HPP_
#define SIMPLEX_TRACK__PARALLEL_HPP_

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace simplex_track
{

/// Resolves a worker count; 0 means one per hardware thread.
inline unsigned resolve_workers(unsigned requested)
{
  if (requested > 0) {
    return requested;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/**
 * Calls fn(i) for every i in [0, n) on up to `workers` threads. Work is
 * handed out in chunks from a shared counter; callers write results by index,
 * so output never depends on scheduling. The first exception is rethrown.
 */
template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn &&fn, std::size_t chunk = 64)
{
  workers = resolve_workers(workers);
  if (workers == 1 || n <= chunk) {
    for (std::size_t i = 0; i < n; ++i) {
      fn(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&]() {
    while (!failed.load(std::memory_order_relaxed)) {
      const std::size_t begin = next.fetch_add(chunk);
      if (begin >= n) {
        return;
      }
      const std::size_t end = std::min(n, begin + chunk);
      try {
        for (std::size_t i = begin; i < end; ++i) {
          fn(i);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) {
          error = std::current_exception();
        }
        failed = true;
        return;
      }
    }
  };
  std::vector<std::jthread> pool;
  const auto n_threads = static_cast<unsigned>(std::min<std::size_t>(workers, (n + chunk - 1) / chunk));
  pool.reserve(n_threads);
  for (unsigned w = 0; w < n_threads; ++w) {
    pool.emplace_back(body);
  }
  pool.clear();
  if (error) {
    std::rethrow_exception(error);
  }
}

}  // namespace simplex_track

#endif  // SIMPLEX_TRACK__PARALLEL_HPP_
