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

namespace mckean {

//! Worker count from MCKEAN_THREADS, falling back to the hardware count.
inline std::size_t
default_thread_count()
{
  if (const char* env = std::getenv("MCKEAN_THREADS")) {
    try {
      long v = std::stol(env);
      if (v > 0)
        return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

//! Calls `body(begin, end)` on contiguous chunks of [0, n).
//!
//! Chunks are disjoint, so a body that writes only to its own indices gives
//! results independent of `threads`. The first exception thrown by any chunk
//! is rethrown on the calling thread.
template<class Body>
void
parallel_for(std::size_t n, std::size_t threads, Body&& body)
{
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    if (n > 0)
      body(std::size_t{ 0 }, n);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t w = 0; w < threads; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end)
      break;
    pool.emplace_back([&, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error)
          error = std::current_exception();
      }
    });
  }
  for (auto& t : pool)
    t.join();
  if (error)
    std::rethrow_exception(error);
}

//! Calls `task(i)` for every i in [0, n), handing indices to `threads`
//! workers on demand. Tasks must write only to slots keyed by i; the
//! schedule then has no effect on the results.
template<class Task>
void
parallel_tasks(std::size_t n, std::size_t threads, Task&& task)
{
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i)
      task(i);
    return;
  }
  std::atomic<std::size_t> next{ 0 };
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error)
            error = std::current_exception();
        }
      }
    });
  for (auto& t : pool)
    t.join();
  if (error)
    std::rethrow_exception(error);
}

} // namespace mckean
