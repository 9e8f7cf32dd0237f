#ifndef CKMFLOW_TENSOR_HPP
#define CKMFLOW_TENSOR_HPP

#include <algorithm>
#include <cassert>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

namespace ckmflow {

// Dense channels-first tensor (C, H, W), row-major within a channel.
template <typename T>
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<T> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(size_t(c_) * h_ * w_, T(0)) {}

    size_t size() const { return v.size(); }
    size_t plane() const { return size_t(h) * w; }

    T& at(int ch, int y, int x) { return v[(size_t(ch) * h + y) * w + x]; }
    const T& at(int ch, int y, int x) const { return v[(size_t(ch) * h + y) * w + x]; }

    T* channel(int ch) { return v.data() + size_t(ch) * plane(); }
    const T* channel(int ch) const { return v.data() + size_t(ch) * plane(); }

    void fill(T x) { std::fill(v.begin(), v.end(), x); }

    bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

    bool all_finite() const {
        for (T x : v)
            if (!std::isfinite(double(x))) return false;
        return true;
    }
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    assert(a.h == b.h && a.w == b.w);
    Tensor<T> out(a.c + b.c, a.h, a.w);
    std::copy(a.v.begin(), a.v.end(), out.v.begin());
    std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
    return out;
}

template <typename T>
void split_channels(const Tensor<T>& src, int c_first, Tensor<T>& a, Tensor<T>& b) {
    assert(c_first > 0 && c_first < src.c);
    a = Tensor<T>(c_first, src.h, src.w);
    b = Tensor<T>(src.c - c_first, src.h, src.w);
    std::copy(src.v.begin(), src.v.begin() + ptrdiff_t(a.v.size()), a.v.begin());
    std::copy(src.v.begin() + ptrdiff_t(a.v.size()), src.v.end(), b.v.begin());
}

// Square complex matrix stored densely, row-major.
template <typename T>
struct ComplexMat {
    int n = 0;
    std::vector<std::complex<T>> m;

    ComplexMat() = default;
    explicit ComplexMat(int n_) : n(n_), m(size_t(n_) * n_, std::complex<T>(0, 0)) {}

    std::complex<T>& at(int i, int j) { return m[size_t(i) * n + j]; }
    const std::complex<T>& at(int i, int j) const { return m[size_t(i) * n + j]; }
};

using CMatf = ComplexMat<float>;
using CMatd = ComplexMat<double>;

}  // namespace ckmflow

#endif
