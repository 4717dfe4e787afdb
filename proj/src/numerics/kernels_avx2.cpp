#include "seedlab/numerics/kernels.hpp"

#if defined(__AVX2__)
#include <immintrin.h>
#endif

namespace seedlab::kernels::avx2 {

#if defined(__AVX2__)

namespace {

// Two rows by sixteen columns of C held in registers across the whole k loop.
inline void block_2x16(std::size_t k, const double* a0, const double* a1, const double* b, std::size_t ldb,
                       double* c0, double* c1) {
    __m256d r00 = _mm256_setzero_pd(), r01 = _mm256_setzero_pd(), r02 = _mm256_setzero_pd(),
            r03 = _mm256_setzero_pd();
    __m256d r10 = _mm256_setzero_pd(), r11 = _mm256_setzero_pd(), r12 = _mm256_setzero_pd(),
            r13 = _mm256_setzero_pd();
    for (std::size_t l = 0; l < k; ++l) {
        const double* bp = b + l * ldb;
        const __m256d b0 = _mm256_loadu_pd(bp);
        const __m256d b1 = _mm256_loadu_pd(bp + 4);
        const __m256d b2 = _mm256_loadu_pd(bp + 8);
        const __m256d b3 = _mm256_loadu_pd(bp + 12);
        const __m256d x0 = _mm256_set1_pd(a0[l]);
        const __m256d x1 = _mm256_set1_pd(a1[l]);
        r00 = _mm256_add_pd(r00, _mm256_mul_pd(x0, b0));
        r01 = _mm256_add_pd(r01, _mm256_mul_pd(x0, b1));
        r02 = _mm256_add_pd(r02, _mm256_mul_pd(x0, b2));
        r03 = _mm256_add_pd(r03, _mm256_mul_pd(x0, b3));
        r10 = _mm256_add_pd(r10, _mm256_mul_pd(x1, b0));
        r11 = _mm256_add_pd(r11, _mm256_mul_pd(x1, b1));
        r12 = _mm256_add_pd(r12, _mm256_mul_pd(x1, b2));
        r13 = _mm256_add_pd(r13, _mm256_mul_pd(x1, b3));
    }
    _mm256_storeu_pd(c0, r00);
    _mm256_storeu_pd(c0 + 4, r01);
    _mm256_storeu_pd(c0 + 8, r02);
    _mm256_storeu_pd(c0 + 12, r03);
    _mm256_storeu_pd(c1, r10);
    _mm256_storeu_pd(c1 + 4, r11);
    _mm256_storeu_pd(c1 + 8, r12);
    _mm256_storeu_pd(c1 + 12, r13);
}

inline void block_1x4(std::size_t k, const double* a0, const double* b, std::size_t ldb, double* c0) {
    __m256d r = _mm256_setzero_pd();
    for (std::size_t l = 0; l < k; ++l) {
        r = _mm256_add_pd(r, _mm256_mul_pd(_mm256_set1_pd(a0[l]), _mm256_loadu_pd(b + l * ldb)));
    }
    _mm256_storeu_pd(c0, r);
}

inline void tail_1x1(std::size_t k, const double* a0, const double* b, std::size_t ldb, double* c0) {
    double acc = 0.0;
    for (std::size_t l = 0; l < k; ++l) acc += a0[l] * b[l * ldb];
    *c0 = acc;
}

}  // namespace

void gemm_f64(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
              std::size_t ldb, double* c, std::size_t ldc) {
    std::size_t i = 0;
    for (; i + 2 <= m; i += 2) {
        const double* a0 = a + i * lda;
        const double* a1 = a0 + lda;
        double* c0 = c + i * ldc;
        double* c1 = c0 + ldc;
        std::size_t j = 0;
        for (; j + 16 <= n; j += 16) block_2x16(k, a0, a1, b + j, ldb, c0 + j, c1 + j);
        for (; j + 4 <= n; j += 4) {
            block_1x4(k, a0, b + j, ldb, c0 + j);
            block_1x4(k, a1, b + j, ldb, c1 + j);
        }
        for (; j < n; ++j) {
            tail_1x1(k, a0, b + j, ldb, c0 + j);
            tail_1x1(k, a1, b + j, ldb, c1 + j);
        }
    }
    for (; i < m; ++i) {
        const double* a0 = a + i * lda;
        double* c0 = c + i * ldc;
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) block_1x4(k, a0, b + j, ldb, c0 + j);
        for (; j < n; ++j) tail_1x1(k, a0, b + j, ldb, c0 + j);
    }
}

void gemm_s8s32(std::size_t m, std::size_t n, std::size_t k, const std::int8_t* a, std::size_t lda,
                const std::int8_t* b, std::size_t ldb, std::int32_t* c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        const std::int8_t* arow = a + i * lda;
        std::int32_t* crow = c + i * ldc;
        std::size_t j = 0;
        for (; j + 16 <= n; j += 16) {
            __m256i acc0 = _mm256_setzero_si256();
            __m256i acc1 = _mm256_setzero_si256();
            for (std::size_t l = 0; l < k; ++l) {
                const __m256i av = _mm256_set1_epi32(arow[l]);
                const __m128i raw = _mm_loadu_si128(reinterpret_cast<const __m128i*>(b + l * ldb + j));
                const __m256i b0 = _mm256_cvtepi8_epi32(raw);
                const __m256i b1 = _mm256_cvtepi8_epi32(_mm_srli_si128(raw, 8));
                acc0 = _mm256_add_epi32(acc0, _mm256_mullo_epi32(av, b0));
                acc1 = _mm256_add_epi32(acc1, _mm256_mullo_epi32(av, b1));
            }
            _mm256_storeu_si256(reinterpret_cast<__m256i*>(crow + j), acc0);
            _mm256_storeu_si256(reinterpret_cast<__m256i*>(crow + j + 8), acc1);
        }
        for (; j + 8 <= n; j += 8) {
            __m256i acc = _mm256_setzero_si256();
            for (std::size_t l = 0; l < k; ++l) {
                const __m256i av = _mm256_set1_epi32(arow[l]);
                const __m256i bv =
                    _mm256_cvtepi8_epi32(_mm_loadl_epi64(reinterpret_cast<const __m128i*>(b + l * ldb + j)));
                acc = _mm256_add_epi32(acc, _mm256_mullo_epi32(av, bv));
            }
            _mm256_storeu_si256(reinterpret_cast<__m256i*>(crow + j), acc);
        }
        for (; j < n; ++j) {
            std::int32_t acc = 0;
            for (std::size_t l = 0; l < k; ++l) acc += static_cast<std::int32_t>(arow[l]) * b[l * ldb + j];
            crow[j] = acc;
        }
    }
}

#else

void gemm_f64(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
              std::size_t ldb, double* c, std::size_t ldc) {
    scalar::gemm_f64(m, n, k, a, lda, b, ldb, c, ldc);
}

void gemm_s8s32(std::size_t m, std::size_t n, std::size_t k, const std::int8_t* a, std::size_t lda,
                const std::int8_t* b, std::size_t ldb, std::int32_t* c, std::size_t ldc) {
    scalar::gemm_s8s32(m, n, k, a, lda, b, ldb, c, ldc);
}

#endif

}  // namespace seedlab::kernels::avx2
