/// \file parallel.hpp
/// \brief Deterministic fork-join parallel loop.
///
/// Work items are distributed in contiguous static blocks; callers must
/// write results into per-item slots (never accumulate across items inside
/// the loop), which keeps every reduction order fixed and results
/// bit-identical for any thread count.
#pragma once

#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace fpcov {

inline void parallel_for(int count, int threads,
                         const std::function<void(int)>& fn) {
  if (count <= 0) return;
  const int t = std::max(1, std::min(threads, count));
  if (t == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::exception_ptr first_error = nullptr;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(t);
  const int base = count / t;
  const int extra = count % t;
  int start = 0;
  for (int w = 0; w < t; ++w) {
    const int len = base + (w < extra ? 1 : 0);
    const int lo = start;
    const int hi = start + len;
    start = hi;
    pool.emplace_back([&, lo, hi]() {
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace fpcov
