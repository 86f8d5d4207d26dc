#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace flatpi {

/// Worker count for data-parallel loops; jobs <= 0 means hardware threads.
inline int resolve_jobs(int jobs) {
  if (jobs > 0) return jobs;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(i) for i in [0, count) on up to `jobs` threads using a static
/// block partition. Callers write results into per-index slots and reduce
/// in index order afterwards, so output never depends on the thread count.
/// The first exception (lowest block) is rethrown.
template <class Fn>
void parallel_for(long count, int jobs, Fn&& fn) {
  const int workers = static_cast<int>(std::min<long>(resolve_jobs(jobs), std::max<long>(count, 1)));
  if (workers <= 1) {
    for (long i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    const long begin = count * w / workers, end = count * (w + 1) / workers;
    pool.emplace_back([&, w, begin, end] {
      try {
        for (long i = begin; i < end; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace flatpi
