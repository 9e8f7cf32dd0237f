#include "ckmflow/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "ckmflow/rng.hpp"

namespace ckmflow {

Method parse_method(const std::string& s) {
    if (s == "gfm") return Method::gfm;
    if (s == "regression") return Method::regression;
    if (s == "ddpm") return Method::ddpm;
    if (s == "knn") return Method::knn;
    if (s == "bilinear") return Method::bilinear;
    if (s == "bicubic") return Method::bicubic;
    throw usage_error("unknown method '" + s +
                      "' (expected gfm, regression, ddpm, knn, bilinear or bicubic)");
}

std::string method_name(Method m) {
    switch (m) {
        case Method::gfm: return "gfm";
        case Method::regression: return "regression";
        case Method::ddpm: return "ddpm";
        case Method::knn: return "knn";
        case Method::bilinear: return "bilinear";
        case Method::bicubic: return "bicubic";
    }
    throw usage_error("unknown method");
}

bool method_needs_checkpoint(Method m) {
    return m == Method::gfm || m == Method::regression || m == Method::ddpm;
}

Tensorf knn_reconstruct_a(const Tensorf& y, int H, int W, int k) {
    if (y.c != 1) throw usage_error("knn expects a single-channel observation");
    if (y.h < 1 || y.w < 1 || H % y.h != 0 || W % y.w != 0)
        throw usage_error("observation grid must divide the target grid");
    if (k < 1) throw usage_error("k must be >= 1");
    const int sy = H / y.h, sx = W / y.w;
    const int nobs = y.h * y.w;
    const int kk = std::min(k, nobs);

    Tensorf out(1, H, W);
#pragma omp parallel for
    for (int r = 0; r < H; ++r) {
        std::vector<std::pair<int64_t, int>> cand(static_cast<size_t>(nobs));
        for (int c = 0; c < W; ++c) {
            if (r % sy == 0 && c % sx == 0) {
                out.at(0, r, c) = y.at(0, r / sy, c / sx);
                continue;
            }
            for (int oy = 0; oy < y.h; ++oy)
                for (int ox = 0; ox < y.w; ++ox) {
                    const int64_t dy = r - oy * sy, dx = c - ox * sx;
                    cand[size_t(oy * y.w + ox)] = {dy * dy + dx * dx, oy * y.w + ox};
                }
            std::partial_sort(cand.begin(), cand.begin() + kk, cand.end());
            double num = 0.0, den = 0.0;
            for (int j = 0; j < kk; ++j) {
                const double w = 1.0 / std::sqrt(double(cand[size_t(j)].first));
                num += w * double(y.v[size_t(cand[size_t(j)].second)]);
                den += w;
            }
            out.at(0, r, c) = float(num / den);
        }
    }
    return out;
}

CMatf knn_reconstruct_b(const std::vector<CMatf>& neighbors) {
    if (neighbors.empty()) throw usage_error("knn needs at least one neighbor matrix");
    const int n = neighbors[0].n;
    for (const CMatf& m : neighbors)
        if (m.n != n) throw usage_error("neighbor matrices differ in size");
    CMatf avg(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            std::complex<double> acc(0.0, 0.0);
            for (const CMatf& m : neighbors) acc += std::complex<double>(m.at(i, j));
            avg.at(i, j) = std::complex<float>(acc / double(neighbors.size()));
        }
    return hermitian_project(avg);
}

Tensorf bilinear_reconstruct(const Tensorf& y, int H, int W) {
    return upsample_bilinear(y, H, W);
}

Tensorf bicubic_reconstruct(const Tensorf& y, int H, int W) {
    return upsample_bicubic(y, H, W);
}

namespace {

Tensorf regression_predict(const VelocityNet<float>& net, const Dataset& ds, size_t i,
                           const CondConfig& cond, const NormStats& stats) {
    const Tensorf c =
        normalize(build_condition(ds, i, cond), stats.cond_mu, stats.cond_sigma);
    const Tensorf zero(net.config().out_channels, c.h, c.w);
    VelocityNet<float>::Cache cc;
    Tensorf v = net.forward(net.params().values, zero, 0.0, c, cc);
    return denormalize(v, stats.target_mu, stats.target_sigma);
}

}  // namespace

Tensorf regression_reconstruct_gain(const VelocityNet<float>& net, const Dataset& ds, size_t i,
                                    const CondConfig& cond, const NormStats& stats) {
    if (ds.task != Task::gain) throw usage_error("gain reconstruction needs a gain dataset");
    return regression_predict(net, ds, i, cond, stats);
}

CMatf regression_reconstruct_cov(const VelocityNet<float>& net, const Dataset& ds, size_t i,
                                 const CondConfig& cond, const NormStats& stats) {
    if (ds.task != Task::covariance)
        throw usage_error("covariance reconstruction needs a covariance dataset");
    return hermitian_project(tensor_to_cov(regression_predict(net, ds, i, cond, stats)));
}

Tensorf ddpm_sample(const VelocityNet<float>& net, const Tensorf& c_norm, const DdpmConfig& cfg,
                    uint64_t seed) {
    const std::vector<double> betas = ddpm_betas(cfg);
    const std::vector<double> ab = ddpm_alpha_bar(cfg);
    const std::vector<float>& theta = net.params().values;

    Rng rng(seed);
    Tensorf x(net.config().out_channels, c_norm.h, c_norm.w);
    for (float& v : x.v) v = float(rng.normal());

    VelocityNet<float>::Cache cc;
    for (int t = cfg.steps; t >= 1; --t) {
        const double beta = betas[size_t(t - 1)];
        const double coef = beta / std::sqrt(1.0 - ab[size_t(t - 1)]);
        const double inv_sqrt_a = 1.0 / std::sqrt(1.0 - beta);
        const Tensorf eps =
            net.forward(theta, x, double(t) / double(cfg.steps), c_norm, cc);
        for (size_t j = 0; j < x.v.size(); ++j)
            x.v[j] = float(inv_sqrt_a * (double(x.v[j]) - coef * double(eps.v[j])));
        if (t > 1) {
            const double sigma = std::sqrt(beta);
            for (float& v : x.v) v += float(sigma * rng.normal());
        }
        if (!x.all_finite())
            throw numeric_error("ddpm state non-finite at step " + std::to_string(t));
    }
    return x;
}

namespace {

Tensorf ddpm_predict(const VelocityNet<float>& net, const Dataset& ds, size_t i,
                     const CondConfig& cond, const NormStats& stats, const DdpmConfig& cfg,
                     uint64_t seed) {
    const Tensorf c =
        normalize(build_condition(ds, i, cond), stats.cond_mu, stats.cond_sigma);
    const Tensorf x = ddpm_sample(net, c, cfg, derive_seed(seed, i));
    return denormalize(x, stats.target_mu, stats.target_sigma);
}

}  // namespace

Tensorf ddpm_reconstruct_gain(const VelocityNet<float>& net, const Dataset& ds, size_t i,
                              const CondConfig& cond, const NormStats& stats,
                              const DdpmConfig& cfg, uint64_t seed) {
    if (ds.task != Task::gain) throw usage_error("gain reconstruction needs a gain dataset");
    return ddpm_predict(net, ds, i, cond, stats, cfg, seed);
}

CMatf ddpm_reconstruct_cov(const VelocityNet<float>& net, const Dataset& ds, size_t i,
                           const CondConfig& cond, const NormStats& stats,
                           const DdpmConfig& cfg, uint64_t seed, bool clip_psd) {
    if (ds.task != Task::covariance)
        throw usage_error("covariance reconstruction needs a covariance dataset");
    CMatf r = hermitian_project(tensor_to_cov(ddpm_predict(net, ds, i, cond, stats, cfg, seed)));
    if (clip_psd) r = psd_clip(r);
    return r;
}

}  // namespace ckmflow
