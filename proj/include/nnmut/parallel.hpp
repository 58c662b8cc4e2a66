#pragma once

#ifdef NNMUT_OMP
#include <omp.h>
#define NNMUT_OMP_PRAGMA(content) _Pragma(content)
#else
#define NNMUT_OMP_PRAGMA(content)
#endif

namespace nnmut {

#ifdef NNMUT_OMP
inline int max_threads() { return omp_get_max_threads(); }
inline void set_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}
#else
inline int max_threads() { return 1; }
inline void set_threads(int) {}
#endif

}  // namespace nnmut
