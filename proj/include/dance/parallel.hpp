#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace dance {

// Runs fn(0..count-1). Work items must write only to their own output slot;
// results are then independent of the worker count and of scheduling.
inline void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  if (workers <= 1 || count == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  workers = std::min(workers, count);
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex err_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        int i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace dance
