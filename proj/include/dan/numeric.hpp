#pragma once

// Dense row-major matrices and the handful of elementwise kernels the models
// need. No BLAS: the largest product at full scale is 4096x573 and the naive
// i-k-j loop is fast enough for that.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dan {

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

template <class T = double>
class Matrix {
public:
    using value_type = T;

    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{0})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(rows_, cols_));
        }
    }
    Matrix(std::initializer_list<std::initializer_list<T>> rows) {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw ShapeError("ragged matrix initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix column(std::span<const T> values) {
        return Matrix(values.size(), 1, std::vector<T>(values.begin(), values.end()));
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
    bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
    std::string shape() const { return shape_string(rows_, cols_); }

    template <class U>
    Matrix<U> cast() const {
        return Matrix<U>(rows_, cols_, std::vector<U>(data_.begin(), data_.end()));
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

    static std::string shape_string(std::size_t r, std::size_t c) {
        return std::to_string(r) + "x" + std::to_string(c);
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

template <class T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: cannot multiply " + a.shape() + " by " + b.shape());
    }
    Matrix<T> out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        T* o = out.row(i).data();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const T aik = a(i, k);
            const T* br = b.row(k).data();
            for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aik * br[j];
        }
    }
    return out;
}

/// w*x + b with the column vector b broadcast over the columns of w*x.
template <class T>
Matrix<T> affine(const Matrix<T>& w, const Matrix<T>& x, const Matrix<T>& b) {
    if (b.rows() != w.rows() || b.cols() != 1) {
        throw ShapeError("affine: bias " + b.shape() + " does not broadcast over " +
                         Matrix<T>::shape_string(w.rows(), x.cols()));
    }
    Matrix<T> out = matmul(w, x);
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += b[i];
    return out;
}

/// y[j] = sum_i x[i] * w(i, j) + b[j]; the transposed product used by every
/// layer, since weights are stored fan_in x fan_out.
template <class T>
void affine_transposed(const Matrix<T>& w, std::span<const T> x, std::span<const T> b,
                       std::span<T> y) {
    if (x.size() != w.rows() || y.size() != w.cols() || (!b.empty() && b.size() != w.cols())) {
        throw ShapeError("affine_transposed: weights " + w.shape() + " with input length " +
                         std::to_string(x.size()) + " and output length " +
                         std::to_string(y.size()));
    }
    if (b.empty())
        std::fill(y.begin(), y.end(), T{0});
    else
        std::copy(b.begin(), b.end(), y.begin());
    const std::size_t n = w.cols();
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const T xi = x[i];
        if (xi == T{0}) continue;
        const T* wr = w.row(i).data();
        for (std::size_t j = 0; j < n; ++j) y[j] += xi * wr[j];
    }
}

template <class T>
T sigmoid(T x) noexcept {
    if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
    const T e = std::exp(x);
    return e / (T{1} + e);
}

template <class T>
Matrix<T> sigmoid(const Matrix<T>& x) {
    Matrix<T> out = x;
    for (auto& v : out.values()) v = sigmoid(v);
    return out;
}

template <class T>
T mse(std::span<const T> pred, std::span<const T> gold) {
    if (pred.size() != gold.size()) {
        throw ShapeError("mse: length " + std::to_string(pred.size()) + " vs " +
                         std::to_string(gold.size()));
    }
    if (pred.empty()) return T{0};
    T sum{0};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const T d = pred[i] - gold[i];
        sum += d * d;
    }
    return sum / static_cast<T>(pred.size());
}

template <class T>
T mse(const Matrix<T>& pred, const Matrix<T>& gold) {
    if (!pred.same_shape(gold)) throw ShapeError("mse: shape " + pred.shape() + " vs " + gold.shape());
    return mse(pred.values(), gold.values());
}

template <class T>
bool all_finite(std::span<const T> v) {
    return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

template <class T>
std::vector<T> mean_rows(const Matrix<T>& m) {
    if (m.rows() == 0) throw ParameterError("mean of an empty set of rows");
    std::vector<T> out(m.cols(), T{0});
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        for (std::size_t c = 0; c < m.cols(); ++c) out[c] += row[c];
    }
    for (auto& v : out) v /= static_cast<T>(m.rows());
    return out;
}

}  // namespace dan
