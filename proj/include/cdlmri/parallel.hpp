#ifndef CDLMRI_PARALLEL_HPP
#define CDLMRI_PARALLEL_HPP

#include <cstddef>

#include <omp.h>

namespace cdlmri {

/// Caps the worker count for patch-parallel loops. 0 keeps the runtime default.
inline void set_thread_count(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

inline int thread_count() { return omp_get_max_threads(); }

/// Runs body(i) for i in [0, n). Each index must write only its own slot;
/// results are then independent of the schedule and the thread count.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 64)
  for (long long i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
}

}  // namespace cdlmri

#endif  // CDLMRI_PARALLEL_HPP
