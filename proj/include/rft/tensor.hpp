#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rft/error.hpp"

namespace rft {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using ArrX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

inline Index numel_of(const Shape& shape) {
    Index n = 1;
    for (Index d : shape) {
        if (d < 0) throw DimensionError("negative extent in shape");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

// Dense n-d array over a flat row-major buffer. Values are held in an Eigen
// array so elementwise work stays expression-based; 2-d views are Eigen maps
// over the same storage (no copies, no strides).
template <typename Scalar>
class TensorT {
public:
    using Storage = ArrX<Scalar>;

    TensorT() = default;

    explicit TensorT(Shape shape)
        : shape_(std::move(shape)), data_(Storage::Zero(numel_of(shape_))) {}

    TensorT(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != numel_of(shape_))
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_str(shape_));
    }

    static TensorT zeros(Shape shape) { return TensorT(std::move(shape)); }

    static TensorT full(Shape shape, Scalar value) {
        TensorT t(std::move(shape));
        t.data_.setConstant(value);
        return t;
    }

    // External-input constructor: rejects non-finite values.
    static TensorT from_data(Shape shape, std::span<const Scalar> values) {
        Index n = numel_of(shape);
        if (static_cast<Index>(values.size()) != n)
            throw DimensionError("from_data: " + std::to_string(values.size()) +
                                 " values for shape " + shape_str(shape));
        TensorT t;
        t.shape_ = std::move(shape);
        t.data_ = Eigen::Map<const Storage>(values.data(), n);
        if (!t.all_finite()) throw RangeError("from_data: non-finite value in input");
        return t;
    }

    static TensorT from_data(Shape shape, std::initializer_list<Scalar> values) {
        return from_data(std::move(shape), std::span<const Scalar>(values.begin(), values.size()));
    }

    const Shape& shape() const { return shape_; }
    Index rank() const { return static_cast<Index>(shape_.size()); }
    Index dim(Index i) const { return shape_[static_cast<size_t>(i)]; }
    Index numel() const { return data_.size(); }
    bool empty() const { return data_.size() == 0; }

    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }

    Scalar& operator[](Index i) { return data_[i]; }
    Scalar operator[](Index i) const { return data_[i]; }

    Scalar& at(Index i, Index j) { return data_[i * dim(1) + j]; }
    Scalar at(Index i, Index j) const { return data_[i * dim(1) + j]; }
    Scalar& at(Index i, Index j, Index k) { return data_[(i * dim(1) + j) * dim(2) + k]; }
    Scalar at(Index i, Index j, Index k) const { return data_[(i * dim(1) + j) * dim(2) + k]; }

    Storage& array() { return data_; }
    const Storage& array() const { return data_; }

    // Row-major 2-d view of the flat buffer.
    Eigen::Map<MatX<Scalar>> matrix(Index rows, Index cols) {
        if (rows * cols != numel())
            throw DimensionError("matrix view " + std::to_string(rows) + "x" +
                                 std::to_string(cols) + " over " + std::to_string(numel()) +
                                 " elements");
        return Eigen::Map<MatX<Scalar>>(data_.data(), rows, cols);
    }
    Eigen::Map<const MatX<Scalar>> matrix(Index rows, Index cols) const {
        if (rows * cols != numel())
            throw DimensionError("matrix view " + std::to_string(rows) + "x" +
                                 std::to_string(cols) + " over " + std::to_string(numel()) +
                                 " elements");
        return Eigen::Map<const MatX<Scalar>>(data_.data(), rows, cols);
    }
    Eigen::Map<MatX<Scalar>> matrix() {
        if (rank() != 2) throw DimensionError("matrix view needs rank-2, got " + shape_str(shape_));
        return matrix(dim(0), dim(1));
    }
    Eigen::Map<const MatX<Scalar>> matrix() const {
        if (rank() != 2) throw DimensionError("matrix view needs rank-2, got " + shape_str(shape_));
        return matrix(dim(0), dim(1));
    }

    TensorT reshaped(Shape shape) const {
        if (numel_of(shape) != numel())
            throw DimensionError("reshape " + shape_str(shape_) + " -> " + shape_str(shape));
        return TensorT(std::move(shape), data_);
    }

    bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

    bool all_finite() const { return data_.isFinite().all(); }

    Scalar max_abs() const { return data_.size() ? data_.abs().maxCoeff() : Scalar(0); }
    Scalar norm_l2() const { return std::sqrt(static_cast<Scalar>(data_.square().sum())); }

    bool operator==(const TensorT& o) const {
        return shape_ == o.shape_ && (data_.size() == 0 || (data_ == o.data_).all());
    }

private:
    Shape shape_;
    Storage data_;
};

using Tensor = TensorT<double>;

namespace detail {
template <typename Scalar>
void require_same_shape(const TensorT<Scalar>& a, const TensorT<Scalar>& b, const char* op) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}
}  // namespace detail

template <typename Scalar>
TensorT<Scalar> operator+(const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
    detail::require_same_shape(a, b, "operator+");
    return TensorT<Scalar>(a.shape(), a.array() + b.array());
}

template <typename Scalar>
TensorT<Scalar> operator-(const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
    detail::require_same_shape(a, b, "operator-");
    return TensorT<Scalar>(a.shape(), a.array() - b.array());
}

template <typename Scalar>
TensorT<Scalar> operator*(Scalar s, const TensorT<Scalar>& a) {
    return TensorT<Scalar>(a.shape(), s * a.array());
}

template <typename Scalar>
TensorT<Scalar> operator*(const TensorT<Scalar>& a, Scalar s) {
    return s * a;
}

}  // namespace rft
