#include "nvtk/kernels.hpp"

#include "kernels_detail.hpp"
#include "nvtk/common.hpp"

namespace nvtk::kernels {

namespace {

bool cpu_has_avx2() {
#if NVTK_HAVE_AVX2_KERNELS
    return __builtin_cpu_supports("avx2") != 0;
#else
    return false;
#endif
}

Isa detect_isa() { return cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar; }

Isa g_isa = detect_isa();

} // namespace

Isa active_isa() { return g_isa; }

void force_isa(Isa isa) {
    if (isa == Isa::Avx2 && !cpu_has_avx2())
        throw ConfigError("kernels: AVX2 not available on this CPU");
    g_isa = isa;
}

void reset_isa() { g_isa = detect_isa(); }

double dot(const double* a, const double* b, std::size_t n) {
#if NVTK_HAVE_AVX2_KERNELS
    if (g_isa == Isa::Avx2) return detail::dot_avx2(a, b, n);
#endif
    return detail::dot_scalar(a, b, n);
}

double sqdist(const double* a, const double* b, std::size_t n) {
#if NVTK_HAVE_AVX2_KERNELS
    if (g_isa == Isa::Avx2) return detail::sqdist_avx2(a, b, n);
#endif
    return detail::sqdist_scalar(a, b, n);
}

void accumulate_u32(std::uint32_t* acc, const std::uint32_t* x, std::size_t n) {
#if NVTK_HAVE_AVX2_KERNELS
    if (g_isa == Isa::Avx2) return detail::accumulate_u32_avx2(acc, x, n);
#endif
    detail::accumulate_u32_scalar(acc, x, n);
}

double sum_sq_dev_u32(const std::uint32_t* h, std::size_t n, std::uint32_t ref) {
#if NVTK_HAVE_AVX2_KERNELS
    if (g_isa == Isa::Avx2) return detail::sum_sq_dev_u32_avx2(h, n, ref);
#endif
    return detail::sum_sq_dev_u32_scalar(h, n, ref);
}

} // namespace nvtk::kernels
