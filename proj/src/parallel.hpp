#pragma once

#include <cstddef>
#include <exception>

namespace dpspin::detail {

/// body(i) for i in [0, n) across OpenMP workers. Iterations must write
/// disjoint outputs. The first exception is rethrown on the calling thread.
template <class Body>
void parallel_for(std::size_t n, Body&& body, int chunk = 8) {
  std::exception_ptr error;
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, chunk)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(dpspin_parallel_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace dpspin::detail
