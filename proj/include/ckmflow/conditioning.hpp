#ifndef CKMFLOW_CONDITIONING_HPP
#define CKMFLOW_CONDITIONING_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ckmflow/dataset.hpp"
#include "ckmflow/tensor.hpp"

namespace ckmflow {

struct DegradationConfig {
    int factor = 4;            // block stride s; must divide H and W
    float noise_sigma = 30.0f; // pixel units on the 0..255 scale
    uint64_t rng_seed = 0;
};

enum class MaskMode { oracle, estimated };

MaskMode parse_mask_mode(const std::string& s);

// Record-level conditioning settings; the per-record noise seed is
// derive_seed(noise_seed, record_index).
struct CondConfig {
    int factor = 4;
    float noise_sigma = 30.0f;
    uint64_t noise_seed = 1;
    float tau_b = 8.0f;
    MaskMode mask_mode = MaskMode::oracle;
};

// y[i,j] = x[i*s, j*s] + N(0, sigma^2); unclamped to keep the noise Gaussian.
Tensorf degrade(const Tensorf& x, const DegradationConfig& cfg);

// Separable Catmull-Rom (a = -0.5), align-corners mapping, edge-clamped taps.
Tensorf upsample_bicubic(const Tensorf& y, int H, int W);
Tensorf upsample_bilinear(const Tensorf& y, int H, int W);

// Threshold (strictly above tau_b) then one 3x3 closing pass.
Tensorf extract_mask(const Tensorf& y_up, float tau_b);

// e = 1 on mask-1 pixels with at least one 4-neighbor mask-0 pixel.
Tensorf extract_edges(const Tensorf& m);

// [upsampled observation, mask, edges]; oracle_mask is consulted only in
// MaskMode::oracle and must then be a 1 x H x W binary tensor.
Tensorf assemble_condition_a(const Tensorf& y_lowres, int H, int W, MaskMode mode, float tau_b,
                             const Tensorf& oracle_mask);

// Neighbors in ring order; channels 2k / 2k+1 hold neighbor k's real / imag plane.
Tensorf assemble_condition_b(const std::vector<CMatf>& neighbors);

Tensorf cov_to_tensor(const CMatf& m);  // 2 x n x n, real plane then imag plane
CMatf tensor_to_cov(const Tensorf& t);

// The noisy stride-s observation for one record; the same tensor feeds both
// the condition assembly and the interpolation baselines.
Tensorf degraded_observation(const Dataset& ds, size_t i, const CondConfig& cfg);

// Full per-record pipeline over a loaded dataset.
Tensorf build_condition(const Dataset& ds, size_t i, const CondConfig& cfg);
Tensorf build_target(const Dataset& ds, size_t i);

// Per-channel z-score parameters. Condition channels that carry the same
// quantity as a target channel (the upsampled observation, neighbor
// real/imag planes) reuse that target channel's statistics.
struct NormStats {
    std::vector<float> target_mu, target_sigma;
    std::vector<float> cond_mu, cond_sigma;
};

NormStats compute_norm_stats(const Dataset& ds, const std::vector<size_t>& train_indices,
                             const CondConfig& cfg);

Tensorf normalize(const Tensorf& t, const std::vector<float>& mu,
                  const std::vector<float>& sigma);
Tensorf denormalize(const Tensorf& t, const std::vector<float>& mu,
                    const std::vector<float>& sigma);

void save_norm_stats(const std::string& path, const NormStats& s);
NormStats load_norm_stats(const std::string& path);

}  // namespace ckmflow

#endif
