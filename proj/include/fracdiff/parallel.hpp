#pragma once

#include <algorithm>
#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fracdiff::parallel {

// Fixed work decomposition for parallel kernels.
//
// The chunk count is a pure function of the problem size - never of the
// thread count - and partial results are reduced in ascending chunk order in
// both the serial and the OpenMP paths. Floating-point addition order is
// therefore identical everywhere, which makes the OpenMP kernels bitwise
// equal to the serial reference for any number of threads.
inline int chunk_count(int n_items) {
  return std::max(1, std::min(n_items, 8));
}

// Half-open index range [first, second) of `chunk` out of `n_chunks` over
// `n_items` items, balanced to within one item.
inline std::pair<int, int> chunk_bounds(int n_items, int n_chunks, int chunk) {
  const int base = n_items / n_chunks;
  const int rem = n_items % n_chunks;
  const int lo = chunk * base + std::min(chunk, rem);
  const int hi = lo + base + (chunk < rem ? 1 : 0);
  return {lo, hi};
}

#ifdef _OPENMP
inline bool openmp_enabled() { return true; }
inline int max_threads() { return omp_get_max_threads(); }
#else
inline bool openmp_enabled() { return false; }
inline int max_threads() { return 1; }
#endif

}  // namespace fracdiff::parallel
