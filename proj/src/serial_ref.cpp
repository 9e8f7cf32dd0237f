#include "ckmflow/serial_ref.hpp"

#include <cmath>

namespace ckmflow::ref {

namespace {

template <typename T>
struct Cursor {
    const std::vector<T>& v;
    size_t pos = 0;
    const T* take(size_t n) {
        const T* p = v.data() + pos;
        pos += n;
        return p;
    }
};

template <typename T>
T act(T x) {
    return x / (T(1) + std::exp(-x));
}

template <typename T>
Tensor<T> conv(const Tensor<T>& in, const T* w, const T* b, int out_c, int k, int stride,
               int pad) {
    const int oh = (in.h + 2 * pad - k) / stride + 1;
    const int ow = (in.w + 2 * pad - k) / stride + 1;
    Tensor<T> out(out_c, oh, ow);
    for (int oc = 0; oc < out_c; ++oc)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                T s = b[oc];
                for (int ic = 0; ic < in.c; ++ic)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int iy = oy * stride - pad + ky;
                            const int ix = ox * stride - pad + kx;
                            if (iy < 0 || iy >= in.h || ix < 0 || ix >= in.w) continue;
                            s += w[((size_t(oc) * in.c + ic) * k + ky) * k + kx] *
                                 in.at(ic, iy, ix);
                        }
                out.at(oc, oy, ox) = s;
            }
    return out;
}

template <typename T>
std::vector<T> matvec(const T* w, const T* b, int out_d, int in_d, const std::vector<T>& x) {
    std::vector<T> y(static_cast<size_t>(out_d));
    for (int o = 0; o < out_d; ++o) {
        T s = b[o];
        for (int i = 0; i < in_d; ++i) s += w[size_t(o) * in_d + i] * x[size_t(i)];
        y[size_t(o)] = s;
    }
    return y;
}

template <typename T>
void add_bias(Tensor<T>& x, const std::vector<T>& bias) {
    for (int c = 0; c < x.c; ++c)
        for (int y = 0; y < x.h; ++y)
            for (int z = 0; z < x.w; ++z) x.at(c, y, z) += bias[size_t(c)];
}

template <typename T>
Tensor<T> silu_map(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (auto& e : y.v) e = act(e);
    return y;
}

template <typename T>
Tensor<T> up2(const Tensor<T>& x) {
    Tensor<T> y(x.c, x.h * 2, x.w * 2);
    for (int c = 0; c < x.c; ++c)
        for (int iy = 0; iy < y.h; ++iy)
            for (int ix = 0; ix < y.w; ++ix) y.at(c, iy, ix) = x.at(c, iy / 2, ix / 2);
    return y;
}

template <typename T>
Tensor<T> cat(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> y(a.c + b.c, a.h, a.w);
    for (size_t i = 0; i < a.v.size(); ++i) y.v[i] = a.v[i];
    for (size_t i = 0; i < b.v.size(); ++i) y.v[a.v.size() + i] = b.v[i];
    return y;
}

}  // namespace

template <typename T>
Tensor<T> velocity_forward(const VelocityNetConfig& cfg, const std::vector<T>& theta,
                           const Tensor<T>& x_t, double t, const Tensor<T>& c) {
    const int bw = cfg.base_width, d = cfg.depth, E = cfg.time_embed_dim;
    Cursor<T> cur{theta};

    struct ConvP {
        const T* w;
        const T* b;
        int oc;
    };
    struct LinP {
        const T* w;
        const T* b;
        int od, id;
    };
    auto take_conv = [&](int oc, int ic, int k) {
        ConvP p;
        p.w = cur.take(size_t(oc) * ic * k * k);
        p.b = cur.take(size_t(oc));
        p.oc = oc;
        return p;
    };
    auto take_lin = [&](int od, int id) {
        LinP p;
        p.w = cur.take(size_t(od) * id);
        p.b = cur.take(size_t(od));
        p.od = od;
        p.id = id;
        return p;
    };

    ConvP stem = take_conv(bw, cfg.in_channels, 3);
    std::vector<ConvP> ec, ed;
    std::vector<LinP> et;
    for (int s = 0; s < d; ++s) {
        const int w = bw << s;
        ec.push_back(take_conv(w, w, 3));
        et.push_back(take_lin(w, E));
        ed.push_back(take_conv(2 * w, w, 3));
    }
    const int B = bw << d;
    ConvP m1 = take_conv(B, B, 3);
    LinP mt = take_lin(B, E);
    ConvP m2 = take_conv(B, B, 3);
    std::vector<ConvP> dc1, dc2;
    std::vector<LinP> dt;
    for (int e = 0; e < d; ++e) {
        const int w = bw << (d - 1 - e);
        dc1.push_back(take_conv(w, 2 * w, 3));
        dt.push_back(take_lin(w, E));
        dc2.push_back(take_conv(w, 2 * w, 3));
    }
    ConvP fin = take_conv(cfg.out_channels, bw, 1);
    LinP l1 = take_lin(E, E);
    LinP l2 = take_lin(E, E);

    std::vector<T> emb(static_cast<size_t>(E));
    const double tp = 1000.0 * t;
    for (int i = 0; i < E / 2; ++i) {
        const double w = std::pow(10000.0, -2.0 * double(i) / double(E));
        emb[size_t(2 * i)] = T(std::sin(tp * w));
        emb[size_t(2 * i + 1)] = T(std::cos(tp * w));
    }
    std::vector<T> f = matvec(l1.w, l1.b, l1.od, l1.id, emb);
    for (auto& e : f) e = act(e);
    f = matvec(l2.w, l2.b, l2.od, l2.id, f);

    Tensor<T> h = conv(cat(x_t, c), stem.w, stem.b, stem.oc, 3, 1, 1);
    std::vector<Tensor<T>> skips;
    for (int s = 0; s < d; ++s) {
        Tensor<T> p = conv(h, ec[size_t(s)].w, ec[size_t(s)].b, ec[size_t(s)].oc, 3, 1, 1);
        add_bias(p, matvec(et[size_t(s)].w, et[size_t(s)].b, et[size_t(s)].od, et[size_t(s)].id,
                           f));
        Tensor<T> a = silu_map(p);
        skips.push_back(a);
        h = conv(a, ed[size_t(s)].w, ed[size_t(s)].b, ed[size_t(s)].oc, 3, 2, 1);
    }
    {
        Tensor<T> p = conv(h, m1.w, m1.b, m1.oc, 3, 1, 1);
        add_bias(p, matvec(mt.w, mt.b, mt.od, mt.id, f));
        Tensor<T> a = silu_map(p);
        h = silu_map(conv(a, m2.w, m2.b, m2.oc, 3, 1, 1));
    }
    for (int e = 0; e < d; ++e) {
        const int s = d - 1 - e;
        Tensor<T> u = up2(h);
        Tensor<T> p = conv(u, dc1[size_t(e)].w, dc1[size_t(e)].b, dc1[size_t(e)].oc, 3, 1, 1);
        add_bias(p, matvec(dt[size_t(e)].w, dt[size_t(e)].b, dt[size_t(e)].od, dt[size_t(e)].id,
                           f));
        Tensor<T> k = cat(p, skips[size_t(s)]);
        h = silu_map(conv(k, dc2[size_t(e)].w, dc2[size_t(e)].b, dc2[size_t(e)].oc, 3, 1, 1));
    }
    return conv(h, fin.w, fin.b, fin.oc, 1, 1, 0);
}

template Tensor<float> velocity_forward<float>(const VelocityNetConfig&,
                                               const std::vector<float>&, const Tensor<float>&,
                                               double, const Tensor<float>&);
template Tensor<double> velocity_forward<double>(const VelocityNetConfig&,
                                                 const std::vector<double>&,
                                                 const Tensor<double>&, double,
                                                 const Tensor<double>&);

}  // namespace ckmflow::ref
