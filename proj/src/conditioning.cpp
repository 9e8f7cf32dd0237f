#include "ckmflow/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "ckmflow/common.hpp"
#include "ckmflow/rng.hpp"

namespace ckmflow {

MaskMode parse_mask_mode(const std::string& s) {
    if (s == "oracle") return MaskMode::oracle;
    if (s == "estimated") return MaskMode::estimated;
    throw usage_error("unknown mask mode '" + s + "' (expected oracle or estimated)");
}

Tensorf degrade(const Tensorf& x, const DegradationConfig& cfg) {
    if (x.c != 1) throw usage_error("degrade expects a single-channel grid");
    if (cfg.factor < 1 || x.h % cfg.factor != 0 || x.w % cfg.factor != 0)
        throw usage_error("degradation factor must be >= 1 and divide both dimensions");
    if (cfg.noise_sigma < 0) throw usage_error("noise_sigma must be >= 0");

    const int s = cfg.factor;
    Tensorf y(1, x.h / s, x.w / s);
    Rng rng(cfg.rng_seed);
    for (int i = 0; i < y.h; ++i)
        for (int j = 0; j < y.w; ++j) {
            float n = cfg.noise_sigma > 0 ? float(rng.normal(0.0, cfg.noise_sigma)) : 0.0f;
            y.at(0, i, j) = x.at(0, i * s, j * s) + n;
        }
    return y;
}

namespace {

// Catmull-Rom weight, kernel parameter a = -0.5.
double cubic_w(double t) {
    t = std::abs(t);
    if (t <= 1.0) return 1.5 * t * t * t - 2.5 * t * t + 1.0;
    if (t < 2.0) return -0.5 * (t * t * t - 5.0 * t * t + 8.0 * t - 4.0);
    return 0.0;
}

// One separable pass along a length-n axis resized to m, align-corners.
void resize_axis_cubic(const std::vector<double>& src, std::vector<double>& dst, int lines,
                       int n, int m, int src_stride, int src_line, int dst_stride,
                       int dst_line) {
    const double scale = m > 1 ? double(n - 1) / double(m - 1) : 0.0;
    for (int k = 0; k < lines; ++k) {
        for (int d = 0; d < m; ++d) {
            double pos = d * scale;
            int base = int(std::floor(pos));
            double frac = pos - base;
            double acc = 0;
            for (int t = -1; t <= 2; ++t) {
                int idx = std::clamp(base + t, 0, n - 1);
                acc += cubic_w(frac - t) * src[size_t(k) * src_line + size_t(idx) * src_stride];
            }
            dst[size_t(k) * dst_line + size_t(d) * dst_stride] = acc;
        }
    }
}

void resize_axis_linear(const std::vector<double>& src, std::vector<double>& dst, int lines,
                        int n, int m, int src_stride, int src_line, int dst_stride,
                        int dst_line) {
    const double scale = m > 1 ? double(n - 1) / double(m - 1) : 0.0;
    for (int k = 0; k < lines; ++k) {
        for (int d = 0; d < m; ++d) {
            double pos = d * scale;
            int base = std::clamp(int(std::floor(pos)), 0, n - 1);
            int next = std::min(base + 1, n - 1);
            double frac = pos - base;
            double a = src[size_t(k) * src_line + size_t(base) * src_stride];
            double b = src[size_t(k) * src_line + size_t(next) * src_stride];
            dst[size_t(k) * dst_line + size_t(d) * dst_stride] = a + frac * (b - a);
        }
    }
}

template <typename PassFn>
Tensorf upsample_impl(const Tensorf& y, int H, int W, PassFn pass) {
    if (y.c != 1) throw usage_error("upsample expects a single-channel grid");
    if (H < 1 || W < 1) throw usage_error("target size must be positive");

    std::vector<double> src(y.v.begin(), y.v.end());
    if (y.h == 1 && y.w == 1) {
        Tensorf out(1, H, W);
        out.fill(y.v[0]);
        return out;
    }

    // horizontal pass (rows keep height y.h), then vertical pass
    std::vector<double> mid(size_t(y.h) * W);
    pass(src, mid, y.h, y.w, W, 1, y.w, 1, W);
    std::vector<double> full(size_t(H) * W);
    pass(mid, full, W, y.h, H, W, 1, W, 1);

    Tensorf out(1, H, W);
    for (size_t i = 0; i < full.size(); ++i) out.v[i] = float(full[i]);
    return out;
}

}  // namespace

Tensorf upsample_bicubic(const Tensorf& y, int H, int W) {
    return upsample_impl(y, H, W, resize_axis_cubic);
}

Tensorf upsample_bilinear(const Tensorf& y, int H, int W) {
    return upsample_impl(y, H, W, resize_axis_linear);
}

Tensorf extract_mask(const Tensorf& y_up, float tau_b) {
    if (y_up.c != 1) throw usage_error("extract_mask expects a single-channel grid");
    const int h = y_up.h, w = y_up.w;
    Tensorf thr(1, h, w), dil(1, h, w), m(1, h, w);
    for (size_t i = 0; i < thr.v.size(); ++i) thr.v[i] = y_up.v[i] > tau_b ? 1.0f : 0.0f;

    auto window_op = [&](const Tensorf& in, Tensorf& out, bool take_max) {
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                float acc = take_max ? 0.0f : 1.0f;
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        int rr = std::clamp(r + dr, 0, h - 1);
                        int cc = std::clamp(c + dc, 0, w - 1);
                        float v = in.at(0, rr, cc);
                        acc = take_max ? std::max(acc, v) : std::min(acc, v);
                    }
                out.at(0, r, c) = acc;
            }
    };
    window_op(thr, dil, true);
    window_op(dil, m, false);
    return m;
}

Tensorf extract_edges(const Tensorf& m) {
    if (m.c != 1) throw usage_error("extract_edges expects a single-channel mask");
    const int h = m.h, w = m.w;
    Tensorf e(1, h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            if (m.at(0, r, c) != 1.0f) {
                e.at(0, r, c) = 0.0f;
                continue;
            }
            bool boundary = false;
            const int dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
            for (int k = 0; k < 4 && !boundary; ++k) {
                int rr = r + dr[k], cc = c + dc[k];
                if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                if (m.at(0, rr, cc) == 0.0f) boundary = true;
            }
            e.at(0, r, c) = boundary ? 1.0f : 0.0f;
        }
    return e;
}

Tensorf assemble_condition_a(const Tensorf& y_lowres, int H, int W, MaskMode mode, float tau_b,
                             const Tensorf& oracle_mask) {
    Tensorf y_up = upsample_bicubic(y_lowres, H, W);
    Tensorf m;
    if (mode == MaskMode::oracle) {
        if (oracle_mask.c != 1 || oracle_mask.h != H || oracle_mask.w != W)
            throw data_error("oracle mask shape mismatch");
        m = oracle_mask;
    } else {
        m = extract_mask(y_up, tau_b);
    }
    Tensorf e = extract_edges(m);
    return concat_channels(concat_channels(y_up, m), e);
}

Tensorf assemble_condition_b(const std::vector<CMatf>& neighbors) {
    if (neighbors.empty()) throw usage_error("assemble_condition_b needs neighbors");
    const int n = neighbors[0].n;
    Tensorf c(int(neighbors.size()) * 2, n, n);
    for (size_t k = 0; k < neighbors.size(); ++k) {
        if (neighbors[k].n != n) throw data_error("neighbor covariance size mismatch");
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                c.at(int(2 * k), i, j) = neighbors[k].at(i, j).real();
                c.at(int(2 * k + 1), i, j) = neighbors[k].at(i, j).imag();
            }
    }
    return c;
}

Tensorf cov_to_tensor(const CMatf& m) {
    Tensorf t(2, m.n, m.n);
    for (int i = 0; i < m.n; ++i)
        for (int j = 0; j < m.n; ++j) {
            t.at(0, i, j) = m.at(i, j).real();
            t.at(1, i, j) = m.at(i, j).imag();
        }
    return t;
}

CMatf tensor_to_cov(const Tensorf& t) {
    if (t.c != 2 || t.h != t.w) throw usage_error("covariance tensor must be 2 x n x n");
    CMatf m(t.h);
    for (int i = 0; i < t.h; ++i)
        for (int j = 0; j < t.w; ++j)
            m.at(i, j) = std::complex<float>(t.at(0, i, j), t.at(1, i, j));
    return m;
}

Tensorf degraded_observation(const Dataset& ds, size_t i, const CondConfig& cfg) {
    if (ds.task != Task::gain)
        throw usage_error("degraded observations exist only for the gain task");
    Tensorf x = ds.gain_target(i);
    DegradationConfig d{cfg.factor, cfg.noise_sigma, derive_seed(cfg.noise_seed, i)};
    return degrade(x, d);
}

Tensorf build_condition(const Dataset& ds, size_t i, const CondConfig& cfg) {
    if (ds.task == Task::gain) {
        Tensorf y = degraded_observation(ds, i, cfg);
        return assemble_condition_a(y, int(ds.d0), int(ds.d1), cfg.mask_mode, cfg.tau_b,
                                    ds.gain_mask(i));
    }
    std::vector<CMatf> nb;
    nb.reserve(ds.d1);
    for (size_t j = 1; j <= ds.d1; ++j) nb.push_back(ds.cov_matrix(i, j));
    return assemble_condition_b(nb);
}

Tensorf build_target(const Dataset& ds, size_t i) {
    if (ds.task == Task::gain) return ds.gain_target(i);
    return cov_to_tensor(ds.cov_matrix(i, 0));
}

NormStats compute_norm_stats(const Dataset& ds, const std::vector<size_t>& train_indices,
                             const CondConfig& cfg) {
    if (train_indices.empty()) throw usage_error("norm stats need a non-empty train split");

    const int tc = ds.task == Task::gain ? 1 : 2;
    const int cc = ds.task == Task::gain ? 3 : int(ds.d1) * 2;

    // pass 1: per-channel means, sequential in record order
    std::vector<double> t_sum(size_t(tc), 0.0), c_sum(size_t(cc), 0.0);
    size_t t_n = 0, c_n = 0;
    for (size_t idx : train_indices) {
        Tensorf x = build_target(ds, idx);
        const size_t plane = size_t(x.h) * x.w;
        t_n += plane;
        for (int ch = 0; ch < tc; ++ch) {
            const float* p = x.channel(ch);
            for (size_t k = 0; k < plane; ++k) t_sum[size_t(ch)] += p[k];
        }
        if (ds.task == Task::gain) {
            Tensorf c = build_condition(ds, idx, cfg);
            c_n += plane;
            for (int ch = 1; ch < 3; ++ch) {
                const float* p = c.channel(ch);
                for (size_t k = 0; k < plane; ++k) c_sum[size_t(ch)] += p[k];
            }
        }
    }
    std::vector<double> t_mu(static_cast<size_t>(tc)), c_mu(size_t(cc), 0.0);
    for (int ch = 0; ch < tc; ++ch) t_mu[size_t(ch)] = t_sum[size_t(ch)] / double(t_n);
    if (ds.task == Task::gain)
        for (int ch = 1; ch < 3; ++ch) c_mu[size_t(ch)] = c_sum[size_t(ch)] / double(c_n);

    // pass 2: centered second moments
    std::vector<double> t_ss(size_t(tc), 0.0), c_ss(size_t(cc), 0.0);
    for (size_t idx : train_indices) {
        Tensorf x = build_target(ds, idx);
        const size_t plane = size_t(x.h) * x.w;
        for (int ch = 0; ch < tc; ++ch) {
            const float* p = x.channel(ch);
            for (size_t k = 0; k < plane; ++k) {
                double d = p[k] - t_mu[size_t(ch)];
                t_ss[size_t(ch)] += d * d;
            }
        }
        if (ds.task == Task::gain) {
            Tensorf c = build_condition(ds, idx, cfg);
            for (int ch = 1; ch < 3; ++ch) {
                const float* p = c.channel(ch);
                for (size_t k = 0; k < plane; ++k) {
                    double d = p[k] - c_mu[size_t(ch)];
                    c_ss[size_t(ch)] += d * d;
                }
            }
        }
    }

    auto finish = [](double ss, size_t n) {
        double sd = std::sqrt(ss / double(n));
        if (sd < 1e-6) {
            std::cerr << "warning: near-constant channel, flooring sigma at 1e-6\n";
            sd = 1e-6;
        }
        return float(sd);
    };

    NormStats s;
    s.target_mu.resize(size_t(tc));
    s.target_sigma.resize(size_t(tc));
    for (int ch = 0; ch < tc; ++ch) {
        s.target_mu[size_t(ch)] = float(t_mu[size_t(ch)]);
        s.target_sigma[size_t(ch)] = finish(t_ss[size_t(ch)], t_n);
    }
    s.cond_mu.resize(size_t(cc));
    s.cond_sigma.resize(size_t(cc));
    if (ds.task == Task::gain) {
        s.cond_mu[0] = s.target_mu[0];
        s.cond_sigma[0] = s.target_sigma[0];
        for (int ch = 1; ch < 3; ++ch) {
            s.cond_mu[size_t(ch)] = float(c_mu[size_t(ch)]);
            s.cond_sigma[size_t(ch)] = finish(c_ss[size_t(ch)], c_n);
        }
    } else {
        for (int k = 0; k < int(ds.d1); ++k) {
            s.cond_mu[size_t(2 * k)] = s.target_mu[0];
            s.cond_sigma[size_t(2 * k)] = s.target_sigma[0];
            s.cond_mu[size_t(2 * k + 1)] = s.target_mu[1];
            s.cond_sigma[size_t(2 * k + 1)] = s.target_sigma[1];
        }
    }
    return s;
}

Tensorf normalize(const Tensorf& t, const std::vector<float>& mu,
                  const std::vector<float>& sigma) {
    if (size_t(t.c) != mu.size() || mu.size() != sigma.size())
        throw usage_error("normalization stats do not match channel count");
    Tensorf out = t;
    const size_t plane = size_t(t.h) * t.w;
    for (int ch = 0; ch < t.c; ++ch) {
        float* p = out.channel(ch);
        const float m = mu[size_t(ch)], s = sigma[size_t(ch)];
        for (size_t k = 0; k < plane; ++k) p[k] = (p[k] - m) / s;
    }
    return out;
}

Tensorf denormalize(const Tensorf& t, const std::vector<float>& mu,
                    const std::vector<float>& sigma) {
    if (size_t(t.c) != mu.size() || mu.size() != sigma.size())
        throw usage_error("normalization stats do not match channel count");
    Tensorf out = t;
    const size_t plane = size_t(t.h) * t.w;
    for (int ch = 0; ch < t.c; ++ch) {
        float* p = out.channel(ch);
        const float m = mu[size_t(ch)], s = sigma[size_t(ch)];
        for (size_t k = 0; k < plane; ++k) p[k] = p[k] * s + m;
    }
    return out;
}

void save_norm_stats(const std::string& path, const NormStats& s) {
    nlohmann::json j;
    j["target_mu"] = s.target_mu;
    j["target_sigma"] = s.target_sigma;
    j["cond_mu"] = s.cond_mu;
    j["cond_sigma"] = s.cond_sigma;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw data_error("cannot write norm stats: " + path);
    f << j.dump(2) << "\n";
}

NormStats load_norm_stats(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw data_error("cannot open norm stats: " + path);
    nlohmann::json j;
    try {
        f >> j;
        NormStats s;
        s.target_mu = j.at("target_mu").get<std::vector<float>>();
        s.target_sigma = j.at("target_sigma").get<std::vector<float>>();
        s.cond_mu = j.at("cond_mu").get<std::vector<float>>();
        s.cond_sigma = j.at("cond_sigma").get<std::vector<float>>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw data_error("bad norm stats file " + path + ": " + e.what());
    }
}

}  // namespace ckmflow
