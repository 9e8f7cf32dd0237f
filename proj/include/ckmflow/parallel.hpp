#ifndef CKMFLOW_PARALLEL_HPP
#define CKMFLOW_PARALLEL_HPP

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ckmflow {

// Caps worker parallelism process-wide. 0 keeps the OpenMP runtime default.
// All kernels partition work over independent output elements with a fixed
// inner summation order, so results are identical for any thread count;
// jobs=1 additionally serializes execution.
inline void set_jobs(int jobs) {
#ifdef _OPENMP
    if (jobs > 0) omp_set_num_threads(jobs);
#else
    (void)jobs;
#endif
}

inline int current_jobs() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace ckmflow

#endif
