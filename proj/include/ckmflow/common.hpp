#ifndef CKMFLOW_COMMON_HPP
#define CKMFLOW_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ckmflow {

// Error taxonomy mapped to CLI exit codes: usage=1, data=2, numeric=3.
struct usage_error : std::runtime_error {
    explicit usage_error(const std::string& msg) : std::runtime_error(msg) {}
};
struct data_error : std::runtime_error {
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and a stream index.
inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
    return splitmix64(base ^ splitmix64(stream + 0x51ED270B7A14F4ECull));
}

}  // namespace ckmflow

#endif
