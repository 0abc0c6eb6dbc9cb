#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace sdrom {

// Number of worker threads used by parallel_for. 0 picks the hardware count.
inline int& thread_count() {
  static int n = 0;
  return n;
}

inline int effective_threads() {
  int n = thread_count();
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  return std::max(1, n);
}

// Runs fn(i) for i in [0, n). Each index is independent; results must be
// written to disjoint slots so the outcome is identical for any thread count.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const int nthreads = std::min<std::size_t>(effective_threads(), n);
  if (nthreads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        if (!failed.exchange(true)) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace sdrom
