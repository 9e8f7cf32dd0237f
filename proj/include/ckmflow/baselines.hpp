#ifndef CKMFLOW_BASELINES_HPP
#define CKMFLOW_BASELINES_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ckmflow/conditioning.hpp"
#include "ckmflow/dataset.hpp"
#include "ckmflow/flow.hpp"
#include "ckmflow/tensor.hpp"

namespace ckmflow {

enum class Method { gfm, regression, ddpm, knn, bilinear, bicubic };

Method parse_method(const std::string& s);
std::string method_name(Method m);
bool method_needs_checkpoint(Method m);

// Inverse-distance weighting over the k nearest observation grid points
// (ties broken by observation index); exact grid hits copy the observation.
// k is clamped to the number of observations.
Tensorf knn_reconstruct_a(const Tensorf& y, int H, int W, int k = 4);

// Elementwise average of the neighbor matrices, then Hermitian projection.
CMatf knn_reconstruct_b(const std::vector<CMatf>& neighbors);

Tensorf bilinear_reconstruct(const Tensorf& y, int H, int W);
Tensorf bicubic_reconstruct(const Tensorf& y, int H, int W);

// Direct regression with the shared backbone: zero state tensor, t = 0,
// a single forward pass.
Tensorf regression_reconstruct_gain(const VelocityNet<float>& net, const Dataset& ds, size_t i,
                                    const CondConfig& cond, const NormStats& stats);
CMatf regression_reconstruct_cov(const VelocityNet<float>& net, const Dataset& ds, size_t i,
                                 const CondConfig& cond, const NormStats& stats);

// Ancestral epsilon-prediction sampling from x_T ~ N(0, I); the network is
// fed t/T and the final step adds no noise. Runs in the normalized domain.
Tensorf ddpm_sample(const VelocityNet<float>& net, const Tensorf& c_norm, const DdpmConfig& cfg,
                    uint64_t seed);

// Full per-record pipeline around ddpm_sample, mirroring reconstruct_gain /
// reconstruct_cov. The per-record noise seed is derive_seed(seed, i).
Tensorf ddpm_reconstruct_gain(const VelocityNet<float>& net, const Dataset& ds, size_t i,
                              const CondConfig& cond, const NormStats& stats,
                              const DdpmConfig& cfg, uint64_t seed);
CMatf ddpm_reconstruct_cov(const VelocityNet<float>& net, const Dataset& ds, size_t i,
                           const CondConfig& cond, const NormStats& stats,
                           const DdpmConfig& cfg, uint64_t seed, bool clip_psd = false);

}  // namespace ckmflow

#endif
