#pragma once

#include <cstddef>
#include <exception>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hmmfit {

/// 0 means "not set": falls back to HMMFIT_THREADS, then to the OpenMP
/// default. Always returns at least 1.
int resolve_threads(int requested);

/// Reference loop: body(i) for i = 0..n-1 in order.
template <class Body>
void serial_for(std::size_t n, Body&& body) {
  for (std::size_t i = 0; i < n; ++i) body(i);
}

/// Runs body(i) for i = 0..n-1 on up to `threads` OpenMP threads. Each index
/// must write only its own output slot. An exception thrown by any body is
/// rethrown after the loop (lowest index wins), so the outcome does not
/// depend on scheduling.
template <class Body>
void parallel_for(std::size_t n, int threads, Body&& body) {
  std::vector<std::exception_ptr> errors(n);
  const long count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads) if (threads > 1)
  for (long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Dispatches to serial_for when `serial` is set, parallel_for otherwise.
template <class Body>
void for_replicates(std::size_t n, int threads, bool serial, Body&& body) {
  if (serial) {
    serial_for(n, body);
  } else {
    parallel_for(n, threads, body);
  }
}

}  // namespace hmmfit
