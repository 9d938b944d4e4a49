#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "nvtk/io.hpp"

// Irregularity of binary-code histograms over overlapped video blocks:
// per-block sum of squared deviations from the dominant code, assembled into
// per-frame maps, upsampled, fused with flow magnitude and motion-masked.

namespace nvtk::tcp {

struct BlockSpec {
    int block_len = 14; // L_b frames per block
    int overlap = 13;   // frames shared with the next block; stride = block_len - overlap
    int grid_rows = 5;
    int grid_cols = 8;

    int cells() const { return grid_rows * grid_cols; }
};

// Binary-code indices of one frame, grid row-major.
struct CodeGrid {
    std::vector<std::uint64_t> codes;
};

struct Block {
    std::int64_t middle_frame = 0;
    int cell = 0;
    std::vector<std::uint64_t> codes; // block_len codes of this cell
};

// Sparse histogram over code bins; counts sum to block_len.
struct BlockHistogram {
    std::map<std::uint64_t, std::uint32_t> counts;
    std::int64_t middle_frame = 0;
    int cell = 0;
};

struct FusionWeights {
    double alpha = 0.5; // flow-magnitude weight
    double beta = 0.5;  // tcp weight
};

// Sliding blocks with stride block_len - overlap, labeled by middle frame.
std::vector<Block> build_blocks(std::span<const CodeGrid> frames, const BlockSpec& spec);

BlockHistogram block_histogram(const Block& block);

// Sum over bins of (h(j) - h(j_max))^2 with j_max the mode (lowest index on
// ties). The vector spans the chosen bin universe; all-zero input is an error.
double tcp_measure(std::span<const std::uint32_t> counts);

// Same measure for a sparse histogram over an explicit bin universe; bins in
// the universe but absent from the histogram count as zero.
double tcp_measure(const BlockHistogram& hist, std::span<const std::uint64_t> universe);

struct TcpOptions {
    // bins observed anywhere in the video form the universe unless all_bins
    // asks for the literal 2^code_bits universe
    bool all_bins = false;
    int code_bits = 7;
    double background_threshold = 0.1; // normalized values below are zeroed
};

struct TcpResult {
    std::vector<io::ScalarMap> maps;   // one grid map per frame, zero outside coverage
    std::vector<double> frame_signal;  // per-frame sum of raw tcp values, max-normalized
    std::vector<std::uint8_t> covered; // frame is the middle of at least one block
};

// Full pipeline: blocks, histograms, measure, per-video max normalization of
// the maps and the frame signal, then background subtraction on the maps.
TcpResult compute_tcp(std::span<const CodeGrid> frames, const BlockSpec& spec, const TcpOptions& opts);

// Nearest-patch replication to pixel resolution.
io::ScalarMap upsample(const io::ScalarMap& map, std::uint32_t width, std::uint32_t height);

// Element-wise alpha*flow + beta*tcp on a shared grid.
io::ScalarMap fuse(const io::ScalarMap& tcp_map, const io::ScalarMap& flow_magnitude,
                   const FusionWeights& weights);

// Keeps map values where the flow magnitude is nonzero, zero elsewhere.
io::ScalarMap motion_mask(const io::ScalarMap& map, const io::FlowMap& flow);

// Per-cell sum of pixel flow magnitudes under a grid tessellation.
io::ScalarMap pool_flow_magnitude(const io::FlowMap& flow, int grid_rows, int grid_cols);

} // namespace nvtk::tcp
