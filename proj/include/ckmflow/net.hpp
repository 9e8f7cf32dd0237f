#ifndef CKMFLOW_NET_HPP
#define CKMFLOW_NET_HPP

#include <cmath>
#include <string>
#include <vector>

#include "ckmflow/common.hpp"
#include "ckmflow/kernels.hpp"
#include "ckmflow/rng.hpp"
#include "ckmflow/tensor.hpp"

namespace ckmflow {

struct VelocityNetConfig {
    int in_channels = 4;   // target channels + condition channels
    int out_channels = 1;  // target channels
    int base_width = 16;
    int depth = 2;
    int time_embed_dim = 64;
};

// emb[2i] = sin(t' * w_i), emb[2i+1] = cos(t' * w_i), w_i = 10000^(-2i/dim),
// with t' = 1000 * t.
template <typename T>
std::vector<T> time_embedding(double t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw usage_error("time_embed_dim must be even and >= 2");
    std::vector<T> e(static_cast<size_t>(dim));
    const double tp = 1000.0 * t;
    for (int i = 0; i < dim / 2; ++i) {
        double w = std::pow(10000.0, -2.0 * double(i) / double(dim));
        e[size_t(2 * i)] = T(std::sin(tp * w));
        e[size_t(2 * i + 1)] = T(std::cos(tp * w));
    }
    return e;
}

// Flat parameter vector with a named slice directory in registration order.
template <typename T>
struct ParamStore {
    struct Slice {
        std::string name;
        size_t offset = 0;
        std::vector<int> shape;
        size_t size = 0;
    };
    std::vector<T> values;
    std::vector<Slice> slices;

    size_t add(const std::string& name, std::vector<int> shape) {
        size_t n = 1;
        for (int d : shape) n *= size_t(d);
        Slice s{name, values.size(), std::move(shape), n};
        slices.push_back(s);
        values.resize(values.size() + n, T(0));
        return s.offset;
    }
    const Slice& find(const std::string& name) const {
        for (const auto& s : slices)
            if (s.name == name) return s;
        throw usage_error("no parameter slice named " + name);
    }
    const Slice& containing(size_t index) const {
        for (const auto& s : slices)
            if (index >= s.offset && index < s.offset + s.size) return s;
        throw usage_error("parameter index out of range");
    }
};

// Encoder-decoder velocity field v(x_t, t, c). Layer graph:
//   concat[x_t; c] -> stem 3x3
//   per encoder stage: 3x3 conv, +time bias, SiLU (skip source), stride-2 3x3
//   bottleneck: 3x3 conv, +time bias, SiLU, 3x3 conv, SiLU
//   per decoder stage: nearest x2, 3x3 conv, +time bias, concat skip, 3x3 conv, SiLU
//   1x1 conv (zero-initialized) -> v
// Time path: sinusoid -> linear -> SiLU -> linear, then per-stage linear
// projections of that feature become the per-channel biases.
template <typename T>
class VelocityNet {
public:
    explicit VelocityNet(const VelocityNetConfig& cfg) : cfg_(cfg) {
        if (cfg.depth < 1) throw usage_error("depth must be >= 1");
        if (cfg.out_channels < 1 || cfg.in_channels <= cfg.out_channels)
            throw usage_error("in_channels must exceed out_channels");
        if (cfg.base_width < 1) throw usage_error("base_width must be >= 1");
        build_layout();
    }

    const VelocityNetConfig& config() const { return cfg_; }
    ParamStore<T>& params() { return store_; }
    const ParamStore<T>& params() const { return store_; }
    size_t param_count() const { return store_.values.size(); }

    // Kaiming-uniform fan-in for every layer except the final 1x1 conv,
    // which stays zero so the initial velocity field is the zero map.
    void init_params(uint64_t seed) {
        draw(seed, /*include_final=*/false);
    }
    // Same but the final conv is drawn too; forward output is then generic
    // in every parameter, which the gradient checks need.
    void randomize_all(uint64_t seed) {
        draw(seed, /*include_final=*/true);
    }

    struct Cache {
        Tensor<T> xin, stem_out;
        std::vector<Tensor<T>> enc_pre, enc_act, enc_down;
        Tensor<T> mid_pre1, mid_act1, mid_pre2, mid_act2;
        // decoder vectors in execution order (deepest stage first)
        std::vector<Tensor<T>> dec_up, dec_c1, dec_cat, dec_pre2, dec_act;
        std::vector<T> emb, t1_pre, t1_act, tfeat;
        double t = 0;
        bool valid = false;
    };

    Tensor<T> forward(const std::vector<T>& theta, const Tensor<T>& x_t, double t,
                      const Tensor<T>& c, Cache& cc) const {
        check_inputs(theta, x_t, t, c);
        const int d = cfg_.depth;
        cc = Cache{};
        cc.t = t;
        cc.enc_pre.resize(size_t(d));
        cc.enc_act.resize(size_t(d));
        cc.enc_down.resize(size_t(d));
        cc.dec_up.resize(size_t(d));
        cc.dec_c1.resize(size_t(d));
        cc.dec_cat.resize(size_t(d));
        cc.dec_pre2.resize(size_t(d));
        cc.dec_act.resize(size_t(d));

        // time feature
        cc.emb = time_embedding<T>(t, cfg_.time_embed_dim);
        cc.t1_pre.resize(size_t(cfg_.time_embed_dim));
        linear_forward(cc.emb.data(), theta.data() + lin1_.w, theta.data() + lin1_.b,
                       lin1_.out_d, lin1_.in_d, cc.t1_pre.data());
        cc.t1_act = vec_silu(cc.t1_pre);
        cc.tfeat.resize(size_t(cfg_.time_embed_dim));
        linear_forward(cc.t1_act.data(), theta.data() + lin2_.w, theta.data() + lin2_.b,
                       lin2_.out_d, lin2_.in_d, cc.tfeat.data());

        cc.xin = concat_channels(x_t, c);
        conv2d_forward(cc.xin, theta.data() + stem_.w, theta.data() + stem_.b, stem_.out_c, 3,
                       1, 1, cc.stem_out);

        const Tensor<T>* cur = &cc.stem_out;
        for (int s = 0; s < d; ++s) {
            conv2d_forward(*cur, theta.data() + enc_conv_[size_t(s)].w,
                           theta.data() + enc_conv_[size_t(s)].b, enc_conv_[size_t(s)].out_c,
                           3, 1, 1, cc.enc_pre[size_t(s)]);
            apply_time_bias(theta, enc_time_[size_t(s)], cc.tfeat, cc.enc_pre[size_t(s)]);
            silu_forward(cc.enc_pre[size_t(s)], cc.enc_act[size_t(s)]);
            conv2d_forward(cc.enc_act[size_t(s)], theta.data() + enc_down_[size_t(s)].w,
                           theta.data() + enc_down_[size_t(s)].b, enc_down_[size_t(s)].out_c,
                           3, 2, 1, cc.enc_down[size_t(s)]);
            cur = &cc.enc_down[size_t(s)];
        }

        conv2d_forward(*cur, theta.data() + mid1_.w, theta.data() + mid1_.b, mid1_.out_c, 3, 1,
                       1, cc.mid_pre1);
        apply_time_bias(theta, mid_time_, cc.tfeat, cc.mid_pre1);
        silu_forward(cc.mid_pre1, cc.mid_act1);
        conv2d_forward(cc.mid_act1, theta.data() + mid2_.w, theta.data() + mid2_.b, mid2_.out_c,
                       3, 1, 1, cc.mid_pre2);
        silu_forward(cc.mid_pre2, cc.mid_act2);
        cur = &cc.mid_act2;

        for (int e = 0; e < d; ++e) {
            const int s = d - 1 - e;
            upsample2x_forward(*cur, cc.dec_up[size_t(e)]);
            conv2d_forward(cc.dec_up[size_t(e)], theta.data() + dec_conv1_[size_t(e)].w,
                           theta.data() + dec_conv1_[size_t(e)].b, dec_conv1_[size_t(e)].out_c,
                           3, 1, 1, cc.dec_c1[size_t(e)]);
            apply_time_bias(theta, dec_time_[size_t(e)], cc.tfeat, cc.dec_c1[size_t(e)]);
            cc.dec_cat[size_t(e)] = concat_channels(cc.dec_c1[size_t(e)], cc.enc_act[size_t(s)]);
            conv2d_forward(cc.dec_cat[size_t(e)], theta.data() + dec_conv2_[size_t(e)].w,
                           theta.data() + dec_conv2_[size_t(e)].b, dec_conv2_[size_t(e)].out_c,
                           3, 1, 1, cc.dec_pre2[size_t(e)]);
            silu_forward(cc.dec_pre2[size_t(e)], cc.dec_act[size_t(e)]);
            cur = &cc.dec_act[size_t(e)];
        }

        Tensor<T> v;
        conv2d_forward(*cur, theta.data() + out_.w, theta.data() + out_.b, out_.out_c, 1, 1, 0,
                       v);
        cc.valid = true;
        return v;
    }

    // Accumulates parameter gradients into grad (same layout as theta) and
    // returns the gradient with respect to x_t. Never mutates the cache.
    Tensor<T> backward(const std::vector<T>& theta, const Cache& cc, const Tensor<T>& grad_v,
                       std::vector<T>& grad) const {
        if (!cc.valid) throw usage_error("backward called with a stale forward cache");
        if (theta.size() != store_.values.size() || grad.size() != theta.size())
            throw usage_error("parameter/gradient vector length mismatch");
        const int d = cfg_.depth;
        std::vector<T> gfeat(size_t(cfg_.time_embed_dim), T(0));

        Tensor<T> g;
        conv2d_backward_params(cc.dec_act.empty() ? cc.mid_act2 : cc.dec_act[size_t(d - 1)],
                               grad_v, 1, 1, 0, grad.data() + out_.w, grad.data() + out_.b);
        conv2d_backward_input(grad_v, theta.data() + out_.w, out_.in_c,
                              cc.dec_act[size_t(d - 1)].h, cc.dec_act[size_t(d - 1)].w, 1, 1, 0,
                              g);

        std::vector<Tensor<T>> skip_grad(static_cast<size_t>(d));
        for (int e = d - 1; e >= 0; --e) {
            const int s = d - 1 - e;
            Tensor<T> gpre2;
            silu_backward(cc.dec_pre2[size_t(e)], g, gpre2);
            conv2d_backward_params(cc.dec_cat[size_t(e)], gpre2, 3, 1, 1,
                                   grad.data() + dec_conv2_[size_t(e)].w,
                                   grad.data() + dec_conv2_[size_t(e)].b);
            Tensor<T> gcat;
            conv2d_backward_input(gpre2, theta.data() + dec_conv2_[size_t(e)].w,
                                  dec_conv2_[size_t(e)].in_c, cc.dec_cat[size_t(e)].h,
                                  cc.dec_cat[size_t(e)].w, 3, 1, 1, gcat);
            Tensor<T> gc1, gskip;
            split_channels(gcat, cc.dec_c1[size_t(e)].c, gc1, gskip);
            skip_grad[size_t(s)] = std::move(gskip);
            time_bias_backward(theta, dec_time_[size_t(e)], cc, gc1, grad, gfeat);
            conv2d_backward_params(cc.dec_up[size_t(e)], gc1, 3, 1, 1,
                                   grad.data() + dec_conv1_[size_t(e)].w,
                                   grad.data() + dec_conv1_[size_t(e)].b);
            Tensor<T> gup;
            conv2d_backward_input(gc1, theta.data() + dec_conv1_[size_t(e)].w,
                                  dec_conv1_[size_t(e)].in_c, cc.dec_up[size_t(e)].h,
                                  cc.dec_up[size_t(e)].w, 3, 1, 1, gup);
            upsample2x_backward(gup, g);
        }

        {
            Tensor<T> gpre2;
            silu_backward(cc.mid_pre2, g, gpre2);
            conv2d_backward_params(cc.mid_act1, gpre2, 3, 1, 1, grad.data() + mid2_.w,
                                   grad.data() + mid2_.b);
            Tensor<T> gact1;
            conv2d_backward_input(gpre2, theta.data() + mid2_.w, mid2_.in_c, cc.mid_act1.h,
                                  cc.mid_act1.w, 3, 1, 1, gact1);
            Tensor<T> gpre1;
            silu_backward(cc.mid_pre1, gact1, gpre1);
            time_bias_backward(theta, mid_time_, cc, gpre1, grad, gfeat);
            const Tensor<T>& mid_in = cc.enc_down[size_t(d - 1)];
            conv2d_backward_params(mid_in, gpre1, 3, 1, 1, grad.data() + mid1_.w,
                                   grad.data() + mid1_.b);
            conv2d_backward_input(gpre1, theta.data() + mid1_.w, mid1_.in_c, mid_in.h, mid_in.w,
                                  3, 1, 1, g);
        }

        for (int s = d - 1; s >= 0; --s) {
            conv2d_backward_params(cc.enc_act[size_t(s)], g, 3, 2, 1,
                                   grad.data() + enc_down_[size_t(s)].w,
                                   grad.data() + enc_down_[size_t(s)].b);
            Tensor<T> gact;
            conv2d_backward_input(g, theta.data() + enc_down_[size_t(s)].w,
                                  enc_down_[size_t(s)].in_c, cc.enc_act[size_t(s)].h,
                                  cc.enc_act[size_t(s)].w, 3, 2, 1, gact);
            for (size_t i = 0; i < gact.v.size(); ++i)
                gact.v[i] += skip_grad[size_t(s)].v[i];
            Tensor<T> gpre;
            silu_backward(cc.enc_pre[size_t(s)], gact, gpre);
            time_bias_backward(theta, enc_time_[size_t(s)], cc, gpre, grad, gfeat);
            const Tensor<T>& in = s == 0 ? cc.stem_out : cc.enc_down[size_t(s - 1)];
            conv2d_backward_params(in, gpre, 3, 1, 1, grad.data() + enc_conv_[size_t(s)].w,
                                   grad.data() + enc_conv_[size_t(s)].b);
            conv2d_backward_input(gpre, theta.data() + enc_conv_[size_t(s)].w,
                                  enc_conv_[size_t(s)].in_c, in.h, in.w, 3, 1, 1, g);
        }

        conv2d_backward_params(cc.xin, g, 3, 1, 1, grad.data() + stem_.w,
                               grad.data() + stem_.b);
        Tensor<T> gxin;
        conv2d_backward_input(g, theta.data() + stem_.w, stem_.in_c, cc.xin.h, cc.xin.w, 3, 1,
                              1, gxin);

        // time MLP
        std::vector<T> gt1act(size_t(cfg_.time_embed_dim), T(0));
        linear_backward(cc.t1_act.data(), theta.data() + lin2_.w, gfeat.data(), lin2_.out_d,
                        lin2_.in_d, grad.data() + lin2_.w, grad.data() + lin2_.b, gt1act.data());
        std::vector<T> gt1pre = vec_silu_backward(cc.t1_pre, gt1act);
        linear_backward(cc.emb.data(), theta.data() + lin1_.w, gt1pre.data(), lin1_.out_d,
                        lin1_.in_d, grad.data() + lin1_.w, grad.data() + lin1_.b,
                        static_cast<T*>(nullptr));

        Tensor<T> gx, gc;
        split_channels(gxin, cfg_.out_channels, gx, gc);
        return gx;
    }

private:
    struct ConvSlices {
        size_t w = 0, b = 0;
        int out_c = 0, in_c = 0;
    };
    struct LinSlices {
        size_t w = 0, b = 0;
        int out_d = 0, in_d = 0;
    };

    VelocityNetConfig cfg_;
    ParamStore<T> store_;
    ConvSlices stem_, mid1_, mid2_, out_;
    std::vector<ConvSlices> enc_conv_, enc_down_, dec_conv1_, dec_conv2_;
    std::vector<LinSlices> enc_time_, dec_time_;
    LinSlices mid_time_, lin1_, lin2_;

    ConvSlices reg_conv(const std::string& name, int out_c, int in_c, int k) {
        ConvSlices cs;
        cs.out_c = out_c;
        cs.in_c = in_c;
        cs.w = store_.add(name + ".w", {out_c, in_c, k, k});
        cs.b = store_.add(name + ".b", {out_c});
        return cs;
    }
    LinSlices reg_lin(const std::string& name, int out_d, int in_d) {
        LinSlices ls;
        ls.out_d = out_d;
        ls.in_d = in_d;
        ls.w = store_.add(name + ".w", {out_d, in_d});
        ls.b = store_.add(name + ".b", {out_d});
        return ls;
    }

    void build_layout() {
        const int bw = cfg_.base_width, d = cfg_.depth, E = cfg_.time_embed_dim;
        stem_ = reg_conv("stem", bw, cfg_.in_channels, 3);
        for (int s = 0; s < d; ++s) {
            const int w = bw << s;
            enc_conv_.push_back(reg_conv("enc" + std::to_string(s) + ".conv", w, w, 3));
            enc_time_.push_back(reg_lin("enc" + std::to_string(s) + ".time", w, E));
            enc_down_.push_back(reg_conv("enc" + std::to_string(s) + ".down", 2 * w, w, 3));
        }
        const int B = bw << d;
        mid1_ = reg_conv("mid.conv1", B, B, 3);
        mid_time_ = reg_lin("mid.time", B, E);
        mid2_ = reg_conv("mid.conv2", B, B, 3);
        for (int e = 0; e < d; ++e) {
            const int s = d - 1 - e;
            const int w = bw << s;
            dec_conv1_.push_back(reg_conv("dec" + std::to_string(s) + ".conv1", w, 2 * w, 3));
            dec_time_.push_back(reg_lin("dec" + std::to_string(s) + ".time", w, E));
            dec_conv2_.push_back(reg_conv("dec" + std::to_string(s) + ".conv2", w, 2 * w, 3));
        }
        out_ = reg_conv("out", cfg_.out_channels, bw, 1);
        lin1_ = reg_lin("time.lin1", E, E);
        lin2_ = reg_lin("time.lin2", E, E);
    }

    void draw(uint64_t seed, bool include_final) {
        Rng rng(seed);
        for (auto& s : store_.slices) {
            const bool is_weight = s.shape.size() >= 2;
            const bool final_conv = s.name == "out.w" || s.name == "out.b";
            if (final_conv && !include_final) {
                std::fill(store_.values.begin() + ptrdiff_t(s.offset),
                          store_.values.begin() + ptrdiff_t(s.offset + s.size), T(0));
                continue;
            }
            if (!is_weight) {
                std::fill(store_.values.begin() + ptrdiff_t(s.offset),
                          store_.values.begin() + ptrdiff_t(s.offset + s.size), T(0));
                continue;
            }
            size_t fan_in = 1;
            for (size_t k = 1; k < s.shape.size(); ++k) fan_in *= size_t(s.shape[k]);
            const double bound = std::sqrt(6.0 / double(fan_in));
            for (size_t i = 0; i < s.size; ++i)
                store_.values[s.offset + i] = T(rng.uniform(-bound, bound));
        }
    }

    void check_inputs(const std::vector<T>& theta, const Tensor<T>& x_t, double t,
                      const Tensor<T>& c) const {
        if (theta.size() != store_.values.size())
            throw usage_error("parameter vector length mismatch");
        if (x_t.c != cfg_.out_channels || c.c != cfg_.in_channels - cfg_.out_channels)
            throw usage_error("velocity net channel mismatch");
        if (x_t.h != c.h || x_t.w != c.w) throw usage_error("x_t and condition dims differ");
        const int div = 1 << cfg_.depth;
        if (x_t.h % div != 0 || x_t.w % div != 0)
            throw usage_error("spatial dims must be divisible by 2^depth");
        if (t < 0.0 || t > 1.0) throw usage_error("t must lie in [0,1]");
        if (!x_t.all_finite() || !c.all_finite())
            throw numeric_error("non-finite velocity net input");
    }

    void apply_time_bias(const std::vector<T>& theta, const LinSlices& ls,
                         const std::vector<T>& tfeat, Tensor<T>& x) const {
        std::vector<T> bias(static_cast<size_t>(ls.out_d));
        linear_forward(tfeat.data(), theta.data() + ls.w, theta.data() + ls.b, ls.out_d,
                       ls.in_d, bias.data());
        add_channel_bias(x, bias.data(), x);
    }

    void time_bias_backward(const std::vector<T>& theta, const LinSlices& ls, const Cache& cc,
                            const Tensor<T>& gpost, std::vector<T>& grad,
                            std::vector<T>& gfeat) const {
        std::vector<T> gbias(size_t(ls.out_d), T(0));
        channel_bias_grad(gpost, gbias.data());
        linear_backward(cc.tfeat.data(), theta.data() + ls.w, gbias.data(), ls.out_d, ls.in_d,
                        grad.data() + ls.w, grad.data() + ls.b, gfeat.data());
    }

    static std::vector<T> vec_silu(const std::vector<T>& x) {
        std::vector<T> y(x.size());
        for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] * sigmoid(x[i]);
        return y;
    }
    static std::vector<T> vec_silu_backward(const std::vector<T>& pre,
                                            const std::vector<T>& gy) {
        std::vector<T> g(pre.size());
        for (size_t i = 0; i < pre.size(); ++i) {
            T s = sigmoid(pre[i]);
            g[i] = gy[i] * s * (T(1) + pre[i] * (T(1) - s));
        }
        return g;
    }
};

struct GradCheckReport {
    struct Entry {
        std::string layer;
        double max_rel_err = 0.0;
        int sampled = 0;
    };
    std::vector<Entry> layers;
    double max_rel_err = 0.0;
    int total_sampled = 0;
};

// Central-difference check of the analytic gradients, run in double so the
// finite-difference noise floor sits far below the tolerances. Samples at
// least min_per_layer coordinates per slice and at least total_min overall.
GradCheckReport grad_check(const VelocityNetConfig& cfg, uint64_t seed, double eps = 1e-3,
                           int min_per_layer = 4, int total_min = 200);

}  // namespace ckmflow

#endif
