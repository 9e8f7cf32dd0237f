#ifndef CKMFLOW_IMAGE_IO_HPP
#define CKMFLOW_IMAGE_IO_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "ckmflow/common.hpp"

namespace ckmflow {

// Binary PGM (P5), maxval 255.
inline void write_pgm(const std::string& path, const uint8_t* data, int h, int w) {
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw data_error("cannot open for writing: " + path);
    std::fprintf(f, "P5\n%d %d\n255\n", w, h);
    size_t n = size_t(h) * w;
    if (std::fwrite(data, 1, n, f) != n) {
        std::fclose(f);
        throw data_error("short write: " + path);
    }
    std::fclose(f);
}

// Clamps to [0,255] and rounds half away from zero before export.
inline void write_pgm_from_float(const std::string& path, const float* data, int h, int w) {
    std::vector<uint8_t> bytes(size_t(h) * w);
    for (size_t i = 0; i < bytes.size(); ++i) {
        float x = std::clamp(data[i], 0.0f, 255.0f);
        bytes[i] = uint8_t(std::lround(x));
    }
    write_pgm(path, bytes.data(), h, w);
}

}  // namespace ckmflow

#endif
