#ifndef CKMFLOW_OPTIMIZER_HPP
#define CKMFLOW_OPTIMIZER_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "ckmflow/common.hpp"

namespace ckmflow {

template <typename T>
struct AdamState {
    std::vector<T> m, v;
    int64_t step = 0;

    void reset(size_t n) {
        m.assign(n, T(0));
        v.assign(n, T(0));
        step = 0;
    }
};

// Standard bias-corrected Adam. Rejects the step (throws, mutating nothing)
// when any gradient entry is non-finite.
template <typename T>
void adam_step(std::vector<T>& params, const std::vector<T>& grads, AdamState<T>& st,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    if (params.size() != grads.size()) throw usage_error("adam: length mismatch");
    if (st.m.size() != params.size()) st.reset(params.size());
    for (T g : grads)
        if (!std::isfinite(double(g))) throw numeric_error("adam: non-finite gradient");

    st.step += 1;
    const double c1 = 1.0 - std::pow(beta1, double(st.step));
    const double c2 = 1.0 - std::pow(beta2, double(st.step));
    const long long n = (long long)params.size();
#pragma omp parallel for
    for (long long i = 0; i < n; ++i) {
        const size_t k = size_t(i);
        const double g = double(grads[k]);
        const double m = beta1 * double(st.m[k]) + (1.0 - beta1) * g;
        const double v = beta2 * double(st.v[k]) + (1.0 - beta2) * g * g;
        st.m[k] = T(m);
        st.v[k] = T(v);
        params[k] -= T(lr * (m / c1) / (std::sqrt(v / c2) + eps));
    }
}

}  // namespace ckmflow

#endif
