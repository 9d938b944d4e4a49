#pragma once

#include <cstddef>
#include <cstdint>

// Data-parallel inner loops shared by the descriptor, hashing and SVM paths.
// Every kernel has a scalar reference implementation and may have SIMD
// variants; the active variant is chosen once at startup from CPU features
// and can be pinned for equivalence testing.

namespace nvtk::kernels {

enum class Isa { Scalar, Avx2 };

Isa active_isa();

// Test hook. Pinning Avx2 on a CPU without it throws.
void force_isa(Isa isa);
void reset_isa();

// Sum_i a[i]*b[i].
double dot(const double* a, const double* b, std::size_t n);

// Sum_i (a[i]-b[i])^2.
double sqdist(const double* a, const double* b, std::size_t n);

// acc[i] += x[i], element-wise histogram accumulation.
void accumulate_u32(std::uint32_t* acc, const std::uint32_t* x, std::size_t n);

// Sum_i (h[i] - ref)^2 with h unsigned counts; ref is the mode count.
double sum_sq_dev_u32(const std::uint32_t* h, std::size_t n, std::uint32_t ref);

} // namespace nvtk::kernels
