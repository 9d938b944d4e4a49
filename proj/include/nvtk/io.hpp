#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "nvtk/common.hpp"
#include "nvtk/tracklet.hpp"

// File formats at the boundary to external sensing pipelines. All multi-byte
// integers and floats are little-endian; CSVs are UTF-8, comma-separated,
// with mandatory headers and '.' as the decimal point.

namespace nvtk::io {

struct TrajectoryRecord {
    std::int64_t t = 0; // sample index, strictly increasing within a stream
    double x = 0.0;
    double y = 0.0;
};

struct TrackletFileRecord {
    std::int64_t tracklet_id = 0;
    std::int64_t frame = 0;
    double x = 0.0;
    double y = 0.0;
};

struct FlowVec {
    float dx = 0.0f;
    float dy = 0.0f;
};

// Dense per-pixel displacement field. Binary container: magic "NVFL",
// u32 width, u32 height, then width*height (dx, dy) f32 pairs, row-major.
struct FlowMap {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<FlowVec> cells;

    const FlowVec& at(std::uint32_t x, std::uint32_t y) const { return cells[std::size_t(y) * width + x]; }
    FlowVec& at(std::uint32_t x, std::uint32_t y) { return cells[std::size_t(y) * width + x]; }
};

// Single-channel variant of the flow container, magic "NVM1".
struct ScalarMap {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<float> values;

    float at(std::uint32_t x, std::uint32_t y) const { return values[std::size_t(y) * width + x]; }
    float& at(std::uint32_t x, std::uint32_t y) { return values[std::size_t(y) * width + x]; }
};

// Per-frame binary labels plus optional pixel masks.
struct LabelTrack {
    std::vector<std::uint8_t> frame_labels;
    std::vector<std::vector<std::uint8_t>> pixel_masks; // empty or one mask per frame
    std::uint32_t mask_width = 0;
    std::uint32_t mask_height = 0;
};

// ---- trajectories (CSV "t,x,y") --------------------------------------------

class TrajectoryReader {
public:
    explicit TrajectoryReader(const std::string& path);
    std::optional<TrajectoryRecord> next();
    std::size_t count() const { return count_; }

private:
    std::ifstream in_;
    std::string path_;
    std::size_t line_no_ = 0;
    std::size_t count_ = 0;
    bool have_prev_ = false;
    std::int64_t prev_t_ = 0;
};

std::vector<TrajectoryRecord> read_trajectory(const std::string& path);
void write_trajectory(const std::string& path, const std::vector<TrajectoryRecord>& records);

// ---- flow and scalar maps ---------------------------------------------------

FlowMap read_flowmap(const std::string& path);
void write_flowmap(const std::string& path, const FlowMap& map);

ScalarMap read_scalarmap(const std::string& path);
void write_scalarmap(const std::string& path, const ScalarMap& map);

// ---- tracklets (CSV "tracklet_id,frame,x,y") --------------------------------

struct TrackletReadResult {
    std::vector<Tracklet> tracklets;
    std::size_t dropped = 0; // wrong-length ids discarded in non-strict mode
};

// Groups rows by tracklet_id and sorts by frame. Frames within one id must be
// consecutive. Ids with a point count other than L+1 are rejected (strict) or
// dropped with a warning count (non-strict).
TrackletReadResult read_tracklets(const std::string& path, int L, bool strict);
void write_tracklets(const std::string& path, const std::vector<Tracklet>& tracklets);

// ---- feature map sequences (binary "NVFM") ----------------------------------

// Header: magic "NVFM", u32 grid_w, u32 grid_h, u32 dim, u32 n_frames, then
// per frame grid_w*grid_h*dim f32 values, cell-major (dim contiguous per
// cell, cells row-major).
class FeatureMapReader {
public:
    explicit FeatureMapReader(const std::string& path);
    std::uint32_t grid_w() const { return grid_w_; }
    std::uint32_t grid_h() const { return grid_h_; }
    std::uint32_t dim() const { return dim_; }
    std::uint32_t frame_count() const { return n_frames_; }
    // One frame at a time; nullopt once all frames are consumed.
    std::optional<std::vector<float>> next_frame();

private:
    std::ifstream in_;
    std::string path_;
    std::uint32_t grid_w_ = 0, grid_h_ = 0, dim_ = 0, n_frames_ = 0, read_ = 0;
};

class FeatureMapWriter {
public:
    FeatureMapWriter(const std::string& path, std::uint32_t grid_w, std::uint32_t grid_h,
                     std::uint32_t dim, std::uint32_t n_frames);
    void write_frame(const std::vector<float>& values);
    ~FeatureMapWriter();

private:
    std::ofstream out_;
    std::string path_;
    std::uint32_t grid_w_, grid_h_, dim_, n_frames_, written_ = 0;
};

// ---- labels ------------------------------------------------------------------

// CSV "frame,label" with labels in {0,1}; frames must be 0..n-1 in order.
std::vector<std::uint8_t> read_frame_labels(const std::string& path);
void write_frame_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

// Mask stack: magic "NVMS", u32 width, u32 height, u32 n_frames, then
// n_frames * width*height bytes in {0,1}.
LabelTrack read_mask_stack(const std::string& path);
void write_mask_stack(const std::string& path, const LabelTrack& track);

} // namespace nvtk::io
