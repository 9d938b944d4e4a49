#include "kernels_detail.hpp"

#if NVTK_HAVE_AVX2_KERNELS

#include <immintrin.h>

namespace nvtk::kernels::detail {

namespace {

inline double hsum256(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

} // namespace

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    double s = hsum256(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sqdist_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4));
        acc0 = _mm256_fmadd_pd(d0, d0, acc0);
        acc1 = _mm256_fmadd_pd(d1, d1, acc1);
    }
    for (; i + 4 <= n; i += 4) {
        __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        acc0 = _mm256_fmadd_pd(d, d, acc0);
    }
    double s = hsum256(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

void accumulate_u32_avx2(std::uint32_t* acc, const std::uint32_t* x, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256i va = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(acc + i));
        __m256i vx = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(x + i));
        _mm256_storeu_si256(reinterpret_cast<__m256i*>(acc + i), _mm256_add_epi32(va, vx));
    }
    for (; i < n; ++i) acc[i] += x[i];
}

double sum_sq_dev_u32_avx2(const std::uint32_t* h, std::size_t n, std::uint32_t ref) {
    // widen u32 lanes to double before squaring; ref bounded by the block length
    const __m256d vref = _mm256_set1_pd(static_cast<double>(ref));
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m128i hi = _mm_loadu_si128(reinterpret_cast<const __m128i*>(h + i));
        // u32 -> i64 -> double is exact for counts < 2^52
        __m256i wide = _mm256_cvtepu32_epi64(hi);
        alignas(32) long long tmp[4];
        _mm256_store_si256(reinterpret_cast<__m256i*>(tmp), wide);
        __m256d vh = _mm256_set_pd(static_cast<double>(tmp[3]), static_cast<double>(tmp[2]),
                                   static_cast<double>(tmp[1]), static_cast<double>(tmp[0]));
        __m256d d = _mm256_sub_pd(vh, vref);
        acc = _mm256_fmadd_pd(d, d, acc);
    }
    double s = hsum256(acc);
    for (; i < n; ++i) {
        const double d = static_cast<double>(h[i]) - static_cast<double>(ref);
        s += d * d;
    }
    return s;
}

} // namespace nvtk::kernels::detail

#endif // NVTK_HAVE_AVX2_KERNELS
