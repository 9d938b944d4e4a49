#include "kernels_detail.hpp"

namespace nvtk::kernels::detail {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sqdist_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

void accumulate_u32_scalar(std::uint32_t* acc, const std::uint32_t* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) acc[i] += x[i];
}

double sum_sq_dev_u32_scalar(const std::uint32_t* h, std::size_t n, std::uint32_t ref) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        // counts fit comfortably in double; difference may be negative
        const double d = static_cast<double>(h[i]) - static_cast<double>(ref);
        s += d * d;
    }
    return s;
}

} // namespace nvtk::kernels::detail
