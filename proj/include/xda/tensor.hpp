#pragma once
// Dense-tensor aliases and the handful of pointwise primitives the model is
// built from. Eigen supplies storage and matrix products; everything with
// learnable semantics (activations, normalization, softmax with padding)
// lives here in explicit form so the backward pass can mirror it exactly.

#include <Eigen/Core>
#include <cmath>
#include <cstdint>

#include "xda/rng.hpp"

namespace xda {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Exact (erf-based) GeLU and its derivative.
template <class T>
inline T gelu_scalar(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * T(0.70710678118654752440)));
}
template <class T>
inline T gelu_grad_scalar(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.70710678118654752440)));
    const T pdf = std::exp(T(-0.5) * x * x) * T(0.39894228040143267794); // 1/sqrt(2*pi)
    return cdf + x * pdf;
}

template <class T>
inline Mat<T> gelu(const Mat<T>& x) {
    return x.unaryExpr([](T v) { return gelu_scalar(v); });
}
template <class T>
inline Mat<T> gelu_grad(const Mat<T>& x) {
    return x.unaryExpr([](T v) { return gelu_grad_scalar(v); });
}

// Row-wise softmax over the first n_keys columns; columns beyond n_keys are
// forced to zero probability (they are padding keys). Rows at or past
// n_queries become all-zero rows rather than softmax of an empty support.
template <class T>
inline void softmax_rows_masked(Mat<T>& s, Eigen::Index n_queries, Eigen::Index n_keys) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        if (i >= n_queries) {
            s.row(i).setZero();
            continue;
        }
        T mx = s(i, 0);
        for (Eigen::Index j = 1; j < n_keys; ++j) mx = std::max(mx, s(i, j));
        T sum = T(0);
        for (Eigen::Index j = 0; j < n_keys; ++j) {
            T e = std::exp(s(i, j) - mx);
            s(i, j) = e;
            sum += e;
        }
        const T inv = T(1) / sum;
        for (Eigen::Index j = 0; j < n_keys; ++j) s(i, j) *= inv;
        for (Eigen::Index j = n_keys; j < s.cols(); ++j) s(i, j) = T(0);
    }
}

// LayerNorm over the last (feature) dimension with learnable gain/bias.
// Caches normalized activations and inverse stddev for the backward pass.
template <class T>
struct LayerNormCache {
    Mat<T> xhat;
    Vec<T> inv_std;
};

template <class T>
inline Mat<T> layernorm(const Mat<T>& x, const Vec<T>& gain, const Vec<T>& bias, T eps,
                        LayerNormCache<T>* cache) {
    const Eigen::Index n = x.rows(), d = x.cols();
    Mat<T> out(n, d);
    if (cache) {
        cache->xhat.resize(n, d);
        cache->inv_std.resize(n);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const T mean = x.row(i).mean();
        T var = T(0);
        for (Eigen::Index j = 0; j < d; ++j) {
            const T c = x(i, j) - mean;
            var += c * c;
        }
        var /= static_cast<T>(d);
        const T inv = T(1) / std::sqrt(var + eps);
        for (Eigen::Index j = 0; j < d; ++j) {
            const T xh = (x(i, j) - mean) * inv;
            if (cache) cache->xhat(i, j) = xh;
            out(i, j) = xh * gain(j) + bias(j);
        }
        if (cache) cache->inv_std(i) = inv;
    }
    return out;
}

// dL/dx given dL/dy for layernorm; also accumulates gain/bias grads.
template <class T>
inline Mat<T> layernorm_backward(const Mat<T>& dy, const LayerNormCache<T>& c, const Vec<T>& gain,
                                 Vec<T>& dgain, Vec<T>& dbias) {
    const Eigen::Index n = dy.rows(), d = dy.cols();
    Mat<T> dx(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
        for (Eigen::Index j = 0; j < d; ++j) {
            const T dxh = dy(i, j) * gain(j);
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * c.xhat(i, j);
            dgain(j) += dy(i, j) * c.xhat(i, j);
            dbias(j) += dy(i, j);
        }
        const T inv_d = T(1) / static_cast<T>(d);
        for (Eigen::Index j = 0; j < d; ++j) {
            const T dxh = dy(i, j) * gain(j);
            dx(i, j) = c.inv_std(i) * (dxh - inv_d * sum_dxhat - c.xhat(i, j) * inv_d * sum_dxhat_xhat);
        }
    }
    return dx;
}

template <class T>
inline void init_normal(Mat<T>& m, Rng& rng, double stddev = 0.02) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<T>(rng.normal() * stddev);
}
template <class T>
inline void init_normal(Vec<T>& v, Rng& rng, double stddev = 0.02) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = static_cast<T>(rng.normal() * stddev);
}

} // namespace xda
