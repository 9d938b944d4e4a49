#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace nvtk {

// Motion of one tracked salient point over L+1 consecutive frames.
struct Tracklet {
    std::int64_t id = 0;
    std::int64_t start_frame = 0;
    std::vector<std::array<double, 2>> points; // length L+1, one per frame

    std::int64_t middle_frame(int L) const { return start_frame + L / 2; }
};

} // namespace nvtk
