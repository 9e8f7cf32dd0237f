#ifndef CKMFLOW_SCENE_HPP
#define CKMFLOW_SCENE_HPP

#include <complex>
#include <cstdint>
#include <vector>

#include "ckmflow/tensor.hpp"

namespace ckmflow {

// Axis-aligned rectangle in pixel-center coordinates, bounds inclusive.
// row0 == row1 (or col0 == col1) makes a zero-thickness wall segment.
struct BuildingRect {
    int row0 = 0, col0 = 0, row1 = 0, col1 = 0;

    bool contains(int r, int c) const {
        return r >= row0 && r <= row1 && c >= col0 && c <= col1;
    }
};

struct Scene {
    int height_px = 0;
    int width_px = 0;
    double cell_size = 1.0;  // meters per pixel
    int bs_row = 0, bs_col = 0;
    int n_antennas = 2;
    std::vector<BuildingRect> buildings;
    uint64_t rng_seed = 0;

    bool indoor(int r, int c) const {
        for (const auto& b : buildings)
            if (b.contains(r, c)) return true;
        return false;
    }
};

struct SceneConfig {
    int height_px = 32;
    int width_px = 32;
    double cell_size = 4.0;
    int n_antennas = 8;
    int n_buildings = 3;
    int min_extent_px = 4;  // building side length range
    int max_extent_px = 9;
    int max_tries = 100;
};

struct PropagationParams {
    double pl0 = 40.0;        // dB at reference distance
    double ref_dist = 1.0;    // meters
    double exponent = 3.0;    // path-loss exponent
    double wall_loss = 10.0;  // dB per crossed wall segment
    double shadow_sigma = 6.0;
    int shadow_corr_px = 5;
    int n_paths = 3;
    double path_decay = 0.6;
    double floor_margin_db = 10.0;  // g_min sits this far below the outdoor minimum
};

struct GainMap {
    int h = 0, w = 0;
    Tensorf values;  // dB, c=1
    float g_min = 0.0f, g_max = 0.0f;
    std::vector<uint8_t> quantized;

    float dequantize(int r, int c) const {
        return g_min + float(quantized[size_t(r) * w + c]) * (g_max - g_min) / 255.0f;
    }
};

struct CovarianceMap {
    CMatf R;           // Hermitian, trace N_t
    int row = 0, col = 0;
};

Scene generate_scene(uint64_t seed, const SceneConfig& cfg);

GainMap compute_gain_map(const Scene& scene, const PropagationParams& p);

// ULA response a[n] = exp(i*pi*n*sin(theta)), half-wavelength spacing.
std::vector<std::complex<double>> steering_vector(double theta, int n_antennas);

// Number of building wall segments crossed by the open segment between the
// two pixel centers. Duplicate edges of degenerate rectangles count once.
int count_wall_crossings(const Scene& scene, double r0, double c0, double r1, double c1);

CovarianceMap compute_scm(const Scene& scene, int row, int col, const PropagationParams& p);

// Builds values (dB) plus the quantized 8-bit view; in-building pixels are
// floored at g_min.
void quantize_gain(GainMap& gm);

std::vector<uint8_t> oracle_mask(const Scene& scene);  // 1 = outdoor

}  // namespace ckmflow

#endif
