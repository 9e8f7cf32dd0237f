#ifndef CKMFLOW_KERNELS_HPP
#define CKMFLOW_KERNELS_HPP

#include <cmath>

#include "ckmflow/tensor.hpp"

// Layer primitives for the velocity network. Every kernel parallelizes over
// independent output elements and keeps a fixed inner summation order, so
// results are bitwise identical for any thread count. Weight layout for a
// k x k convolution is [out_c][in_c][k][k], row-major.

namespace ckmflow {

// Output rows for which iy = oy*stride - pad + ky stays inside [0, n).
inline int conv_lo(int pad, int kk, int stride) {
    return pad > kk ? (pad - kk + stride - 1) / stride : 0;
}
inline int conv_hi(int n, int pad, int kk, int stride, int out_n) {
    const int q = n - 1 + pad - kk;
    if (q < 0) return 0;
    return q / stride + 1 > out_n ? out_n : q / stride + 1;
}

template <typename T>
void conv2d_forward(const Tensor<T>& in, const T* w, const T* b, int out_c, int k, int stride,
                    int pad, Tensor<T>& out) {
    const int in_c = in.c, h = in.h, wd = in.w;
    const int oh = (h + 2 * pad - k) / stride + 1;
    const int ow = (wd + 2 * pad - k) / stride + 1;
    out = Tensor<T>(out_c, oh, ow);
#pragma omp parallel for
    for (int oc = 0; oc < out_c; ++oc) {
        T* oplane = out.channel(oc);
        const T bias = b ? b[oc] : T(0);
        for (size_t i = 0; i < size_t(oh) * ow; ++i) oplane[i] = bias;
        for (int ic = 0; ic < in_c; ++ic) {
            const T* iplane = in.channel(ic);
            const T* wp = w + (size_t(oc) * in_c + ic) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                const int oy_lo = conv_lo(pad, ky, stride);
                const int oy_hi = conv_hi(h, pad, ky, stride, oh);
                for (int kx = 0; kx < k; ++kx) {
                    const T wgt = wp[size_t(ky) * k + kx];
                    const int ox_lo = conv_lo(pad, kx, stride);
                    const int ox_hi = conv_hi(wd, pad, kx, stride, ow);
                    for (int oy = oy_lo; oy < oy_hi; ++oy) {
                        T* orow = oplane + size_t(oy) * ow;
                        const T* irow = iplane + size_t(oy * stride - pad + ky) * wd;
                        for (int ox = ox_lo; ox < ox_hi; ++ox)
                            orow[ox] += wgt * irow[ox * stride + kx - pad];
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_input(const Tensor<T>& gout, const T* w, int in_c, int in_h, int in_w,
                           int k, int stride, int pad, Tensor<T>& gin) {
    const int out_c = gout.c, oh = gout.h, ow = gout.w;
    gin = Tensor<T>(in_c, in_h, in_w);
#pragma omp parallel for
    for (int ic = 0; ic < in_c; ++ic) {
        T* gplane = gin.channel(ic);
        for (int oc = 0; oc < out_c; ++oc) {
            const T* goplane = gout.channel(oc);
            const T* wp = w + (size_t(oc) * in_c + ic) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                const int oy_lo = conv_lo(pad, ky, stride);
                const int oy_hi = conv_hi(in_h, pad, ky, stride, oh);
                for (int kx = 0; kx < k; ++kx) {
                    const T wgt = wp[size_t(ky) * k + kx];
                    const int ox_lo = conv_lo(pad, kx, stride);
                    const int ox_hi = conv_hi(in_w, pad, kx, stride, ow);
                    for (int oy = oy_lo; oy < oy_hi; ++oy) {
                        T* grow = gplane + size_t(oy * stride - pad + ky) * in_w;
                        const T* gorow = goplane + size_t(oy) * ow;
                        for (int ox = ox_lo; ox < ox_hi; ++ox)
                            grow[ox * stride + kx - pad] += wgt * gorow[ox];
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_params(const Tensor<T>& in, const Tensor<T>& gout, int k, int stride,
                            int pad, T* gw, T* gb) {
    const int in_c = in.c, h = in.h, wd = in.w;
    const int out_c = gout.c, oh = gout.h, ow = gout.w;
#pragma omp parallel for
    for (int oc = 0; oc < out_c; ++oc) {
        const T* goplane = gout.channel(oc);
        for (int ic = 0; ic < in_c; ++ic) {
            const T* iplane = in.channel(ic);
            for (int ky = 0; ky < k; ++ky) {
                const int oy_lo = conv_lo(pad, ky, stride);
                const int oy_hi = conv_hi(h, pad, ky, stride, oh);
                for (int kx = 0; kx < k; ++kx) {
                    const int ox_lo = conv_lo(pad, kx, stride);
                    const int ox_hi = conv_hi(wd, pad, kx, stride, ow);
                    T acc(0);
                    for (int oy = oy_lo; oy < oy_hi; ++oy) {
                        const T* gorow = goplane + size_t(oy) * ow;
                        const T* irow = iplane + size_t(oy * stride - pad + ky) * wd;
                        for (int ox = ox_lo; ox < ox_hi; ++ox)
                            acc += gorow[ox] * irow[ox * stride + kx - pad];
                    }
                    gw[((size_t(oc) * in_c + ic) * k + ky) * k + kx] += acc;
                }
            }
        }
        if (gb) {
            T acc(0);
            for (size_t i = 0; i < size_t(oh) * ow; ++i) acc += goplane[i];
            gb[oc] += acc;
        }
    }
}

template <typename T>
inline T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
void silu_forward(const Tensor<T>& in, Tensor<T>& out) {
    out = Tensor<T>(in.c, in.h, in.w);
    const size_t n = in.v.size();
#pragma omp parallel for
    for (long long i = 0; i < (long long)n; ++i) {
        T s = sigmoid(in.v[size_t(i)]);
        out.v[size_t(i)] = in.v[size_t(i)] * s;
    }
}

template <typename T>
void silu_backward(const Tensor<T>& pre, const Tensor<T>& gout, Tensor<T>& gin) {
    gin = Tensor<T>(pre.c, pre.h, pre.w);
    const size_t n = pre.v.size();
#pragma omp parallel for
    for (long long i = 0; i < (long long)n; ++i) {
        T x = pre.v[size_t(i)];
        T s = sigmoid(x);
        gin.v[size_t(i)] = gout.v[size_t(i)] * s * (T(1) + x * (T(1) - s));
    }
}

template <typename T>
void upsample2x_forward(const Tensor<T>& in, Tensor<T>& out) {
    out = Tensor<T>(in.c, in.h * 2, in.w * 2);
#pragma omp parallel for
    for (int c = 0; c < in.c; ++c)
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x) out.at(c, y, x) = in.at(c, y / 2, x / 2);
}

template <typename T>
void upsample2x_backward(const Tensor<T>& gout, Tensor<T>& gin) {
    gin = Tensor<T>(gout.c, gout.h / 2, gout.w / 2);
#pragma omp parallel for
    for (int c = 0; c < gin.c; ++c)
        for (int y = 0; y < gin.h; ++y)
            for (int x = 0; x < gin.w; ++x)
                gin.at(c, y, x) = gout.at(c, 2 * y, 2 * x) + gout.at(c, 2 * y, 2 * x + 1) +
                                  gout.at(c, 2 * y + 1, 2 * x) + gout.at(c, 2 * y + 1, 2 * x + 1);
}

// out = in + bias broadcast per channel; in-place safe when &in == &out.
template <typename T>
void add_channel_bias(const Tensor<T>& in, const T* bias, Tensor<T>& out) {
    if (&out != &in) out = in;
#pragma omp parallel for
    for (int c = 0; c < out.c; ++c) {
        T* p = out.channel(c);
        const T b = bias[c];
        for (size_t i = 0; i < size_t(out.h) * out.w; ++i) p[i] += b;
    }
}

template <typename T>
void channel_bias_grad(const Tensor<T>& gout, T* gbias) {
#pragma omp parallel for
    for (int c = 0; c < gout.c; ++c) {
        T acc(0);
        const T* p = gout.channel(c);
        for (size_t i = 0; i < size_t(gout.h) * gout.w; ++i) acc += p[i];
        gbias[c] += acc;
    }
}

template <typename T>
void linear_forward(const T* x, const T* w, const T* b, int out_dim, int in_dim, T* y) {
#pragma omp parallel for
    for (int o = 0; o < out_dim; ++o) {
        T acc = b ? b[o] : T(0);
        const T* wp = w + size_t(o) * in_dim;
        for (int i = 0; i < in_dim; ++i) acc += wp[i] * x[i];
        y[o] = acc;
    }
}

template <typename T>
void linear_backward(const T* x, const T* w, const T* gy, int out_dim, int in_dim, T* gw,
                     T* gb, T* gx) {
    if (gw) {
#pragma omp parallel for
        for (int o = 0; o < out_dim; ++o) {
            T* gwp = gw + size_t(o) * in_dim;
            for (int i = 0; i < in_dim; ++i) gwp[i] += gy[o] * x[i];
            if (gb) gb[o] += gy[o];
        }
    }
    if (gx) {
#pragma omp parallel for
        for (int i = 0; i < in_dim; ++i) {
            T acc(0);
            for (int o = 0; o < out_dim; ++o) acc += w[size_t(o) * in_dim + i] * gy[o];
            gx[i] += acc;
        }
    }
}

}  // namespace ckmflow

#endif
