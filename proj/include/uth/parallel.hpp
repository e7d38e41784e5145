#pragma once

#include <cstddef>

#ifdef UTH_HAVE_OPENMP
#include <omp.h>
#endif

namespace uth {

// Runs body(i) for i in [0, n). Iterations must write disjoint outputs; the
// result is then independent of the thread count.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
#ifdef UTH_HAVE_OPENMP
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    body(static_cast<std::size_t>(i));
  }
#else
  for (std::size_t i = 0; i < n; ++i) body(i);
#endif
}

inline int max_threads() {
#ifdef UTH_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_threads(int n) {
#ifdef UTH_HAVE_OPENMP
  omp_set_num_threads(n);
#else
  (void)n;
#endif
}

}  // namespace uth
