#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace ymlab {

namespace detail {
inline std::atomic<int>& worker_slot() {
  static std::atomic<int> workers = [] {
    if (const char* env = std::getenv("YMLAB_WORKERS")) {
      int v = std::atoi(env);
      if (v > 0) return v;
    }
    return 1;
  }();
  return workers;
}
}  // namespace detail

/// Global bound on the number of threads used by data-parallel sections.
inline int worker_count() { return detail::worker_slot().load(); }
inline void set_worker_count(int n) { detail::worker_slot().store(std::max(1, n)); }

/// Runs fn(begin, end) over disjoint chunks of [0, count). Chunks never share
/// output locations, so results are independent of the worker count.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const int workers = worker_count();
  if (workers <= 1 || count < 4096) {
    fn(std::size_t{0}, count);
    return;
  }
  const std::size_t chunk = (count + workers - 1) / workers;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    const std::size_t b = w * chunk;
    const std::size_t e = std::min(count, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
}

/// Pairwise (tree) summation. The order is fixed by the length alone, which
/// makes reductions bit-reproducible.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 16) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

}  // namespace ymlab
