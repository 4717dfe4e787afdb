#include <cstdlib>
#include <string>

#include "seedlab/numerics/kernels.hpp"

namespace seedlab::kernels {

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool avx2_available() {
#if defined(SEEDLAB_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

namespace {

Isa detect() {
    if (const char* env = std::getenv("SEEDLAB_KERNELS")) {
        if (std::string(env) == "scalar") return Isa::scalar;
    }
    return avx2_available() ? Isa::avx2 : Isa::scalar;
}

Isa& current() {
    static Isa isa = detect();
    return isa;
}

}  // namespace

Isa active_isa() { return current(); }

void set_active_isa(Isa isa) { current() = (isa == Isa::avx2 && !avx2_available()) ? Isa::scalar : isa; }

GemmF64Fn gemm_f64_for(Isa isa) { return isa == Isa::avx2 ? &avx2::gemm_f64 : &scalar::gemm_f64; }

GemmS8Fn gemm_s8s32_for(Isa isa) { return isa == Isa::avx2 ? &avx2::gemm_s8s32 : &scalar::gemm_s8s32; }

void gemm_f64(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
              std::size_t ldb, double* c, std::size_t ldc) {
    gemm_f64_for(current())(m, n, k, a, lda, b, ldb, c, ldc);
}

void gemm_s8s32(std::size_t m, std::size_t n, std::size_t k, const std::int8_t* a, std::size_t lda,
                const std::int8_t* b, std::size_t ldb, std::int32_t* c, std::size_t ldc) {
    gemm_s8s32_for(current())(m, n, k, a, lda, b, ldb, c, ldc);
}

}  // namespace seedlab::kernels
