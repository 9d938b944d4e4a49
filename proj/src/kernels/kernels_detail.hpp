#pragma once

#include <cstddef>
#include <cstdint>

namespace nvtk::kernels::detail {

double dot_scalar(const double* a, const double* b, std::size_t n);
double sqdist_scalar(const double* a, const double* b, std::size_t n);
void accumulate_u32_scalar(std::uint32_t* acc, const std::uint32_t* x, std::size_t n);
double sum_sq_dev_u32_scalar(const std::uint32_t* h, std::size_t n, std::uint32_t ref);

#if defined(__x86_64__) || defined(_M_X64)
#define NVTK_HAVE_AVX2_KERNELS 1
double dot_avx2(const double* a, const double* b, std::size_t n);
double sqdist_avx2(const double* a, const double* b, std::size_t n);
void accumulate_u32_avx2(std::uint32_t* acc, const std::uint32_t* x, std::size_t n);
double sum_sq_dev_u32_avx2(const std::uint32_t* h, std::size_t n, std::uint32_t ref);
#else
#define NVTK_HAVE_AVX2_KERNELS 0
#endif

} // namespace nvtk::kernels::detail
