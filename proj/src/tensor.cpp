#include "wagcn/tensor.hpp"

#ifdef WAGCN_USE_CBLAS
#include <cblas.h>
#ifdef WAGCN_HAVE_OPENBLAS_THREADS
extern "C" void openblas_set_num_threads(int);
namespace {
// Run-to-run bitwise reproducibility requires a fixed accumulation order, so
// the BLAS backend is pinned to one thread.
const bool g_openblas_single_thread = [] {
    openblas_set_num_threads(1);
    return true;
}();
} // namespace
#endif
#endif

namespace wagcn::detail {

#ifdef WAGCN_USE_CBLAS

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, std::size_t lda, const double* b, std::size_t ldb,
          double beta, double* c, std::size_t ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb),
                beta, c, static_cast<int>(ldc));
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          float alpha, const float* a, std::size_t lda, const float* b, std::size_t ldb,
          float beta, float* c, std::size_t ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb),
                beta, c, static_cast<int>(ldc));
}

#else

// Portable fallback: ikj order so the inner loop streams over contiguous rows.
template <typename T>
static void gemm_ref(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                     T alpha, const T* a, std::size_t lda, const T* b, std::size_t ldb,
                     T beta, T* c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * ldc;
        if (beta == T(0)) {
            for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
        } else if (beta != T(1)) {
            for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
        }
        for (std::size_t p = 0; p < k; ++p) {
            const T av = alpha * (trans_a ? a[p * lda + i] : a[i * lda + p]);
            if (av == T(0)) continue;
            if (!trans_b) {
                const T* brow = b + p * ldb;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            } else {
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * ldb + p];
            }
        }
    }
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, std::size_t lda, const double* b, std::size_t ldb,
          double beta, double* c, std::size_t ldc) {
    gemm_ref(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          float alpha, const float* a, std::size_t lda, const float* b, std::size_t ldb,
          float beta, float* c, std::size_t ldc) {
    gemm_ref(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

#endif

} // namespace wagcn::detail
