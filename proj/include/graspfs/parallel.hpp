#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

namespace graspfs {

// OpenMP loop over [0, n) whose body may throw. The exception from the lowest
// failing index is rethrown after the loop, so the error a caller sees does
// not depend on thread scheduling.
template <class Fn>
void parallel_for(std::size_t n, Fn&& body) {
  std::exception_ptr error;
  std::size_t error_index = n;
  std::mutex mutex;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(mutex);
      if (static_cast<std::size_t>(i) < error_index) {
        error_index = static_cast<std::size_t>(i);
        error = std::current_exception();
      }
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace graspfs
