#include "nvtk/common.hpp"

#include <charconv>
#include <cstdio>

namespace nvtk {

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    }
    return std::string(buf, ptr);
}

std::string version_string() { return "0.1.0"; }

} // namespace nvtk
