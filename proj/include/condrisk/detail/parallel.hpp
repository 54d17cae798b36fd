#pragma once

#include <atomic>
#include <exception>
#include <thread>
#include <vector>

#include <Eigen/Core>

namespace condrisk::detail {

/// fn(i) for i in [0, n) on up to `threads` workers. Results must be written
/// to per-index slots; the first failing index (lowest i) is rethrown so the
/// error seen by callers does not depend on scheduling.
template <class Fn>
void parallel_for(Eigen::Index n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (Eigen::Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<Eigen::Index> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  auto worker = [&] {
    for (Eigen::Index i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  const auto extra = std::min<Eigen::Index>(threads, n) - 1;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(extra));
  for (Eigen::Index t = 0; t < extra; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace condrisk::detail
