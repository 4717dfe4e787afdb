#pragma once

// Inner-loop kernels with a scalar reference and an AVX2 variant.
//
// Both f64 GEMM variants accumulate every output element in the same order
// (l = 0..k-1, separate multiply and add, no FMA), so they agree bitwise. The
// int8 GEMM accumulates exactly in int32 and also agrees bitwise.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace seedlab::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

// True when the CPU supports the AVX2 variant and it was compiled in.
bool avx2_available();

// Kernel set used by the dispatching entry points. Defaults to the best
// available; SEEDLAB_KERNELS=scalar forces the reference path.
Isa active_isa();
void set_active_isa(Isa isa);

// C[m,n] = A[m,k] * B[k,n]; C is overwritten. Leading dimensions in elements.
using GemmF64Fn = void (*)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                           const double* b, std::size_t ldb, double* c, std::size_t ldc);
// C[m,n] = A[m,k] * B[k,n] with int32 accumulation.
using GemmS8Fn = void (*)(std::size_t m, std::size_t n, std::size_t k, const std::int8_t* a, std::size_t lda,
                          const std::int8_t* b, std::size_t ldb, std::int32_t* c, std::size_t ldc);

namespace scalar {
void gemm_f64(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
              std::size_t ldb, double* c, std::size_t ldc);
void gemm_s8s32(std::size_t m, std::size_t n, std::size_t k, const std::int8_t* a, std::size_t lda,
                const std::int8_t* b, std::size_t ldb, std::int32_t* c, std::size_t ldc);
}  // namespace scalar

namespace avx2 {
void gemm_f64(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
              std::size_t ldb, double* c, std::size_t ldc);
void gemm_s8s32(std::size_t m, std::size_t n, std::size_t k, const std::int8_t* a, std::size_t lda,
                const std::int8_t* b, std::size_t ldb, std::int32_t* c, std::size_t ldc);
}  // namespace avx2

GemmF64Fn gemm_f64_for(Isa isa);
GemmS8Fn gemm_s8s32_for(Isa isa);

void gemm_f64(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
              std::size_t ldb, double* c, std::size_t ldc);
void gemm_s8s32(std::size_t m, std::size_t n, std::size_t k, const std::int8_t* a, std::size_t lda,
                const std::int8_t* b, std::size_t ldb, std::int32_t* c, std::size_t ldc);

}  // namespace seedlab::kernels
