#ifndef CKMFLOW_RNG_HPP
#define CKMFLOW_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include "ckmflow/common.hpp"

namespace ckmflow {

// Deterministic RNG. The mt19937_64 engine is fully specified by the C++
// standard; the distributions below are hand-rolled because the standard
// library distribution objects are not bit-portable across implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1) with 53 random bits
    double u01() { return double(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

    // uniform integer in [0, n)
    uint64_t randint(uint64_t n) {
        // rejection sampling to avoid modulo bias
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // standard normal via Box-Muller; the spare value is cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = u01();
        } while (u1 <= 0.0);
        u2 = u01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ckmflow

#endif
