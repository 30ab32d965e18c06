#pragma once

#include <cmath>

#include "rft/tensor.hpp"

namespace rft {

namespace detail {

// Stable softmax of a score vector (max subtraction keeps exp finite for
// any |score| <= ~700 spread).
template <typename Scalar>
inline VecX<Scalar> softmax_vec(VecX<Scalar> s) {
    Scalar m = s.maxCoeff();
    VecX<Scalar> e = (s.array() - m).exp().matrix();
    return e / e.sum();
}

// Scores of one query row against every key row. Explicit per-key dots keep
// each entry a function of (q, k_j) alone, so a row computed against a key
// subset or superset reproduces the same bits for shared keys.
template <typename Scalar>
inline VecX<Scalar> row_scores(const Eigen::Map<const MatX<Scalar>>& K,
                               const Eigen::Map<const MatX<Scalar>>& Q, Index row,
                               Scalar scale) {
    VecX<Scalar> s(K.rows());
    for (Index j = 0; j < K.rows(); ++j) s[j] = Q.row(row).dot(K.row(j)) * scale;
    return s;
}

}  // namespace detail

// c[i,j] = sum_k a[i,k] * b[k,j]
template <typename Scalar>
TensorT<Scalar> matmul(const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw DimensionError("matmul: need rank-2 operands, got " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()));
    if (a.dim(1) != b.dim(0))
        throw DimensionError("matmul: inner dimensions " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    TensorT<Scalar> c({a.dim(0), b.dim(1)});
    c.matrix().noalias() = a.matrix() * b.matrix();
    return c;
}

template <typename Scalar>
TensorT<Scalar> softmax_lastdim(const TensorT<Scalar>& x) {
    if (x.rank() == 0 || x.dim(x.rank() - 1) == 0)
        throw DimensionError("softmax_lastdim: empty last dimension");
    Index cols = x.dim(x.rank() - 1);
    Index rows = x.numel() / cols;
    TensorT<Scalar> out(x.shape());
    auto xin = x.matrix(rows, cols);
    auto o = out.matrix(rows, cols);
    for (Index i = 0; i < rows; ++i)
        o.row(i) = detail::softmax_vec<Scalar>(xin.row(i).transpose()).transpose();
    return out;
}

// Per-slice normalization over the last dimension: zero mean, unit (biased)
// variance before gain/bias; eps sits inside the square root so constant
// slices map to zero instead of dividing by zero.
template <typename Scalar>
TensorT<Scalar> layer_norm(const TensorT<Scalar>& x, const TensorT<Scalar>& gain,
                           const TensorT<Scalar>& bias, Scalar eps) {
    if (x.rank() == 0) throw DimensionError("layer_norm: rank-0 input");
    Index cols = x.dim(x.rank() - 1);
    if (gain.numel() != cols || bias.numel() != cols)
        throw DimensionError("layer_norm: gain/bias length " + std::to_string(gain.numel()) +
                             "/" + std::to_string(bias.numel()) + " vs last dim " +
                             std::to_string(cols));
    Index rows = x.numel() / cols;
    TensorT<Scalar> out(x.shape());
    auto xin = x.matrix(rows, cols);
    auto o = out.matrix(rows, cols);
    Eigen::Map<const VecX<Scalar>> g(gain.data(), cols), b(bias.data(), cols);
    for (Index i = 0; i < rows; ++i) {
        Scalar mean = xin.row(i).mean();
        ArrX<Scalar> centered = xin.row(i).transpose().array() - mean;
        Scalar var = centered.square().sum() / static_cast<Scalar>(cols);
        ArrX<Scalar> normed = centered / std::sqrt(var + eps);
        o.row(i) = (normed * g.array() + b.array()).matrix().transpose();
    }
    return out;
}

template <typename Scalar>
TensorT<Scalar> gelu(const TensorT<Scalar>& x) {
    TensorT<Scalar> out(x.shape());
    for (Index i = 0; i < x.numel(); ++i) {
        Scalar v = x[i];
        out[i] = Scalar(0.5) * v * (Scalar(1) + std::erf(v / std::sqrt(Scalar(2))));
    }
    return out;
}

// softmax(Q K^T scale) row weights, exposed so callers can check the
// convexity of attention outputs directly.
template <typename Scalar>
TensorT<Scalar> attention_weights(const TensorT<Scalar>& Q, const TensorT<Scalar>& K,
                                  Scalar scale) {
    if (Q.rank() != 2 || K.rank() != 2 || Q.dim(1) != K.dim(1))
        throw DimensionError("attention_weights: Q " + shape_str(Q.shape()) + " vs K " +
                             shape_str(K.shape()));
    if (K.dim(0) == 0) throw DimensionError("attention_weights: empty key context");
    TensorT<Scalar> w({Q.dim(0), K.dim(0)});
    auto q = Q.matrix();
    auto k = K.matrix();
    auto o = w.matrix();
    for (Index i = 0; i < q.rows(); ++i)
        o.row(i) = detail::softmax_vec<Scalar>(detail::row_scores(k, q, i, scale)).transpose();
    return w;
}

// softmax(Q K^T scale) V, one independent row per query. Each output row is a
// convex combination of V rows.
template <typename Scalar>
TensorT<Scalar> attention(const TensorT<Scalar>& Q, const TensorT<Scalar>& K,
                          const TensorT<Scalar>& V, Scalar scale) {
    if (Q.rank() != 2 || K.rank() != 2 || V.rank() != 2)
        throw DimensionError("attention: need rank-2 Q/K/V");
    if (Q.dim(1) != K.dim(1))
        throw DimensionError("attention: query dim " + std::to_string(Q.dim(1)) +
                             " vs key dim " + std::to_string(K.dim(1)));
    if (K.dim(0) != V.dim(0))
        throw DimensionError("attention: key count " + std::to_string(K.dim(0)) +
                             " vs value count " + std::to_string(V.dim(0)));
    if (K.dim(0) == 0) throw DimensionError("attention: empty key/value context");
    TensorT<Scalar> out({Q.dim(0), V.dim(1)});
    auto q = Q.matrix();
    auto k = K.matrix();
    auto v = V.matrix();
    auto o = out.matrix();
    for (Index i = 0; i < q.rows(); ++i) {
        VecX<Scalar> w = detail::softmax_vec<Scalar>(detail::row_scores(k, q, i, scale));
        VecX<Scalar> acc = VecX<Scalar>::Zero(v.cols());
        for (Index j = 0; j < v.rows(); ++j) acc += w[j] * v.row(j).transpose();
        o.row(i) = acc.transpose();
    }
    return out;
}

template <typename Scalar>
TensorT<Scalar> attention(const TensorT<Scalar>& Q, const TensorT<Scalar>& K,
                          const TensorT<Scalar>& V) {
    return attention(Q, K, V, Scalar(1) / std::sqrt(static_cast<Scalar>(Q.dim(1))));
}

// Batched heads: Q [heads x tq x hd], K/V [heads x tk x hd]. Head slices are
// contiguous in the flat buffer, so this is the 2-d kernel per head.
template <typename Scalar>
TensorT<Scalar> multihead_attention(const TensorT<Scalar>& Q, const TensorT<Scalar>& K,
                                    const TensorT<Scalar>& V, Scalar scale) {
    if (Q.rank() != 3 || K.rank() != 3 || V.rank() != 3)
        throw DimensionError("multihead_attention: need rank-3 Q/K/V");
    if (Q.dim(0) != K.dim(0) || K.dim(0) != V.dim(0))
        throw DimensionError("multihead_attention: head count mismatch");
    Index heads = Q.dim(0), tq = Q.dim(1), hd = Q.dim(2);
    Index tk = K.dim(1);
    TensorT<Scalar> out({heads, tq, hd});
    for (Index h = 0; h < heads; ++h) {
        TensorT<Scalar> qh({tq, hd}), kh({tk, hd}), vh({tk, hd});
        std::copy_n(Q.data() + h * tq * hd, tq * hd, qh.data());
        std::copy_n(K.data() + h * tk * hd, tk * hd, kh.data());
        std::copy_n(V.data() + h * tk * hd, tk * hd, vh.data());
        TensorT<Scalar> oh = attention(qh, kh, vh, scale);
        std::copy_n(oh.data(), tq * hd, out.data() + h * tq * hd);
    }
    return out;
}

}  // namespace rft
