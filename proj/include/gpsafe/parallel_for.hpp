#pragma once

#include "gpsafe/kernel.hpp"

#include <atomic>
#include <exception>
#include <mutex>

namespace gpsafe {

// Runs body(i) for i in [0, n). Under Execution::parallel the loop is an
// OpenMP parallel for; the first exception thrown by any iteration is
// rethrown on the calling thread after the loop.
template <class Body>
void for_each_index(Index n, Execution exec, Body&& body) {
  if (exec == Execution::serial) {
    for (Index i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::mutex mu;
#pragma omp parallel for schedule(dynamic, 16)
  for (Index i = 0; i < n; ++i) {
    if (failed.load(std::memory_order_relaxed)) continue;
    try {
      body(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (!error) error = std::current_exception();
      failed.store(true, std::memory_order_relaxed);
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace gpsafe
