#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "wagcn/errors.hpp"

namespace wagcn {

// Dense 2-D matrix, row-major. The scalar type selects the working precision
// (float for speed, double for gradcheck and the determinism guarantees).
template <typename T>
class Tensor2 {
public:
    Tensor2() = default;
    Tensor2(std::size_t rows, std::size_t cols, T fill = T(0))
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Tensor2(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw validation_error("Tensor2: data length " + std::to_string(data_.size()) +
                                   " does not match shape " + shape_str());
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    T operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    T& at(std::size_t i) { return data_[i]; }
    T at(std::size_t i) const { return data_[i]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    bool same_shape(const Tensor2& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    void fill(T v) { data_.assign(data_.size(), v); }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using Tensor2d = Tensor2<double>;
using Tensor2f = Tensor2<float>;

namespace detail {
// C = alpha * op(A) * op(B) + beta * C, row-major. Backed by BLAS when available.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, std::size_t lda, const double* b, std::size_t ldb,
          double beta, double* c, std::size_t ldc);
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          float alpha, const float* a, std::size_t lda, const float* b, std::size_t ldb,
          float beta, float* c, std::size_t ldc);
} // namespace detail

// c = a * b (plain product). Shapes checked, errors name both operands.
template <typename T>
Tensor2<T> matmul(const Tensor2<T>& a, const Tensor2<T>& b) {
    if (a.cols() != b.rows())
        throw validation_error("matmul: inner dimensions disagree, " + a.shape_str() +
                               " vs " + b.shape_str());
    Tensor2<T> c(a.rows(), b.cols());
    if (!c.empty() && a.cols() > 0)
        detail::gemm(false, false, a.rows(), b.cols(), a.cols(), T(1), a.data(), a.cols(),
                     b.data(), b.cols(), T(0), c.data(), c.cols());
    return c;
}

// c += alpha * op(a) * op(b); op is transpose when the flag is set.
template <typename T>
void gemm_acc(Tensor2<T>& c, bool trans_a, bool trans_b, T alpha,
              const Tensor2<T>& a, const Tensor2<T>& b) {
    const std::size_t m = trans_a ? a.cols() : a.rows();
    const std::size_t k = trans_a ? a.rows() : a.cols();
    const std::size_t kb = trans_b ? b.cols() : b.rows();
    const std::size_t n = trans_b ? b.rows() : b.cols();
    if (k != kb || m != c.rows() || n != c.cols())
        throw validation_error("gemm_acc: shape mismatch " + a.shape_str() + " * " +
                               b.shape_str() + " -> " + c.shape_str());
    if (c.empty() || k == 0) return;
    detail::gemm(trans_a, trans_b, m, n, k, alpha, a.data(), a.cols(), b.data(), b.cols(),
                 T(1), c.data(), c.cols());
}

template <typename T>
Tensor2<T> transpose(const Tensor2<T>& a) {
    Tensor2<T> t(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
    return t;
}

} // namespace wagcn
