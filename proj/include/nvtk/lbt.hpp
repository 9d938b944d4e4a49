#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nvtk/common.hpp"
#include "nvtk/tracklet.hpp"

// Local Binary Tracklet descriptor: per-step motion quantized into a one-hot
// polar pattern, concatenated over the tracklet, then aggregated per
// spatio-temporal patch and concatenated into frame descriptors.

namespace nvtk::lbt {

struct MotionStep {
    double orientation = 0.0; // radians in [-pi, pi], full-quadrant angle
    double magnitude = 0.0;   // pixels/frame
};

struct QuantizerConfig {
    int orientation_bins = 8;
    int magnitude_bins = 5;
    double magnitude_cap = 10.0; // values at or above map to the top bin

    int pattern_size() const { return orientation_bins * magnitude_bins; }
};

// One-hot polar pattern for a single motion step.
struct MotionPattern {
    int size = 0;
    int bit = 0; // index of the single set bit: m_bin * orientation_bins + o_bin
};

// Concatenation of L one-hot patterns; popcount is exactly L.
struct TrackletCode {
    std::vector<std::uint8_t> bits;
};

struct PatchHistogram {
    std::vector<std::uint32_t> counts;
    int patch = 0;
    std::int64_t frame = 0;
};

struct FrameDescriptor {
    std::int64_t frame = 0;
    std::vector<std::uint32_t> values; // S * b_o * b_m * L entries, patches row-major
};

enum class PatchMembership {
    MiddlePoint, // the tracklet's middle point lies inside the patch
    AnyPoint     // any of its points does
};

struct LbtConfig {
    int tracklet_len = 11; // L; tracklets carry L+1 points
    QuantizerConfig quantizer;
    int tess_rows = 4;
    int tess_cols = 6;
    double frame_width = 0.0;
    double frame_height = 0.0;
    PatchMembership membership = PatchMembership::MiddlePoint;

    int patches() const { return tess_rows * tess_cols; }
    int code_length() const { return quantizer.pattern_size() * tracklet_len; }
    int descriptor_length() const { return patches() * code_length(); }
};

// Steps between consecutive points; zero displacement yields (0, 0).
std::vector<MotionStep> derive_motion(const Tracklet& tr, int tracklet_len);

MotionPattern quantize(const MotionStep& step, const QuantizerConfig& cfg);

TrackletCode tracklet_code(const Tracklet& tr, const QuantizerConfig& cfg, int tracklet_len);

// Element-wise sum of pre-selected codes; empty selection yields zeros.
PatchHistogram aggregate(std::span<const TrackletCode> codes, std::int64_t frame, int patch,
                         int code_length);

// Concatenates S patch histograms in row-major patch order.
FrameDescriptor frame_descriptor(std::span<const PatchHistogram> patches, const LbtConfig& cfg,
                                 std::int64_t frame);

// Element-wise sum over frames; rejects inconsistent descriptor lengths.
std::vector<std::uint32_t> video_descriptor(std::span<const FrameDescriptor> frames);

// Patch index of a point under the config tessellation, or -1 when outside
// the frame bounds. The right/bottom edges belong to the last patch.
int patch_of_point(double x, double y, const LbtConfig& cfg);

// Full pipeline: selects, per (frame, patch) cell, the codes of tracklets
// whose membership point lies in the patch and whose middle frame equals the
// cell frame, and emits one descriptor per frame in the covered range.
std::vector<FrameDescriptor> extract_descriptors(const std::vector<Tracklet>& tracklets,
                                                 const LbtConfig& cfg);

// Data-driven magnitude cap: 95th percentile (nearest-rank) of step magnitudes.
double suggest_magnitude_cap(const std::vector<Tracklet>& tracklets, int tracklet_len);

// CSV exchange: header "frame,v0..v{d-1}", one row per frame.
void write_descriptors_csv(const std::string& path, std::span<const FrameDescriptor> descriptors);
std::vector<FrameDescriptor> read_descriptors_csv(const std::string& path);

} // namespace nvtk::lbt
