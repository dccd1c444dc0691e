#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace contractgen::parallel {

/// Process-wide soft cap on worker threads used by the kernels.
/// 0 = use the OpenMP default; 1 = force the serial reference path.
void set_threads(int n);
int threads();

/// Hardware/OpenMP thread count available to this process.
inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline bool parallel_enabled() {
#ifdef _OPENMP
  return threads() != 1;
#else
  return false;
#endif
}

}  // namespace contractgen::parallel
