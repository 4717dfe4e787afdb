#include "seedlab/numerics/kernels.hpp"

namespace seedlab::kernels::scalar {

void gemm_f64(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
              std::size_t ldb, double* c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * ldc;
        for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
        for (std::size_t l = 0; l < k; ++l) {
            const double av = a[i * lda + l];
            const double* brow = b + l * ldb;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_s8s32(std::size_t m, std::size_t n, std::size_t k, const std::int8_t* a, std::size_t lda,
                const std::int8_t* b, std::size_t ldb, std::int32_t* c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        std::int32_t* crow = c + i * ldc;
        for (std::size_t j = 0; j < n; ++j) crow[j] = 0;
        for (std::size_t l = 0; l < k; ++l) {
            const std::int32_t av = a[i * lda + l];
            const std::int8_t* brow = b + l * ldb;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * static_cast<std::int32_t>(brow[j]);
        }
    }
}

}  // namespace seedlab::kernels::scalar
