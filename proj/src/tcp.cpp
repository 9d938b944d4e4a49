#include "nvtk/tcp.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "nvtk/kernels.hpp"

namespace nvtk::tcp {

namespace {

void check_spec(const BlockSpec& spec) {
    if (spec.block_len < 1) throw ConfigError("tcp: block_len must be >= 1");
    if (spec.overlap < 0 || spec.overlap >= spec.block_len)
        throw ConfigError("tcp: overlap must satisfy 0 <= overlap < block_len");
    if (spec.grid_rows < 1 || spec.grid_cols < 1) throw ConfigError("tcp: grid must be >= 1x1");
}

} // namespace

std::vector<Block> build_blocks(std::span<const CodeGrid> frames, const BlockSpec& spec) {
    check_spec(spec);
    if (frames.size() < std::size_t(spec.block_len))
        throw ValidationError("tcp: need at least block_len frames, got " + std::to_string(frames.size()));
    for (const auto& f : frames)
        if (f.codes.size() != std::size_t(spec.cells()))
            throw ValidationError("tcp: frame grid size mismatch");

    const int stride = spec.block_len - spec.overlap;
    std::vector<Block> blocks;
    for (std::size_t start = 0; start + std::size_t(spec.block_len) <= frames.size();
         start += std::size_t(stride)) {
        const std::int64_t middle = std::int64_t(start) + spec.block_len / 2;
        for (int cell = 0; cell < spec.cells(); ++cell) {
            Block b;
            b.middle_frame = middle;
            b.cell = cell;
            b.codes.reserve(std::size_t(spec.block_len));
            for (int l = 0; l < spec.block_len; ++l)
                b.codes.push_back(frames[start + std::size_t(l)].codes[std::size_t(cell)]);
            blocks.push_back(std::move(b));
        }
    }
    return blocks;
}

BlockHistogram block_histogram(const Block& block) {
    BlockHistogram h;
    h.middle_frame = block.middle_frame;
    h.cell = block.cell;
    for (std::uint64_t code : block.codes) ++h.counts[code];
    return h;
}

double tcp_measure(std::span<const std::uint32_t> counts) {
    if (counts.empty()) throw ValidationError("tcp: empty histogram");
    std::uint32_t mode = 0;
    bool any = false;
    for (std::uint32_t c : counts) {
        any = any || c > 0;
        mode = std::max(mode, c);
    }
    if (!any) throw ValidationError("tcp: histogram has zero total count");
    return kernels::sum_sq_dev_u32(counts.data(), counts.size(), mode);
}

double tcp_measure(const BlockHistogram& hist, std::span<const std::uint64_t> universe) {
    if (hist.counts.empty()) throw ValidationError("tcp: empty histogram");
    std::vector<std::uint32_t> dense;
    dense.reserve(universe.size());
    for (std::uint64_t bin : universe) {
        auto it = hist.counts.find(bin);
        dense.push_back(it != hist.counts.end() ? it->second : 0);
    }
    return tcp_measure(dense);
}

TcpResult compute_tcp(std::span<const CodeGrid> frames, const BlockSpec& spec, const TcpOptions& opts) {
    auto blocks = build_blocks(frames, spec);

    std::vector<std::uint64_t> universe;
    if (opts.all_bins) {
        if (opts.code_bits < 1 || opts.code_bits > 24)
            throw ConfigError("tcp: all_bins universe needs code_bits in [1, 24]");
        universe.resize(std::size_t(1) << opts.code_bits);
        for (std::size_t i = 0; i < universe.size(); ++i) universe[i] = i;
    } else {
        std::set<std::uint64_t> seen;
        for (const auto& f : frames) seen.insert(f.codes.begin(), f.codes.end());
        universe.assign(seen.begin(), seen.end());
    }

    TcpResult result;
    result.maps.resize(frames.size());
    for (auto& m : result.maps) {
        m.width = std::uint32_t(spec.grid_cols);
        m.height = std::uint32_t(spec.grid_rows);
        m.values.assign(std::size_t(spec.cells()), 0.0f);
    }
    result.covered.assign(frames.size(), 0);

    for (const auto& block : blocks) {
        const double v = tcp_measure(block_histogram(block), universe);
        auto& map = result.maps[std::size_t(block.middle_frame)];
        map.values[std::size_t(block.cell)] = float(v);
        result.covered[std::size_t(block.middle_frame)] = 1;
    }

    result.frame_signal.assign(frames.size(), 0.0);
    for (std::size_t t = 0; t < frames.size(); ++t) {
        double sum = 0.0;
        for (float v : result.maps[t].values) sum += v;
        result.frame_signal[t] = sum;
    }

    // per-video max normalization, then background subtraction on the maps
    float max_v = 0.0f;
    for (const auto& m : result.maps)
        for (float v : m.values) max_v = std::max(max_v, v);
    if (max_v > 0.0f) {
        for (auto& m : result.maps)
            for (float& v : m.values) {
                v /= max_v;
                if (v < opts.background_threshold) v = 0.0f;
            }
    }
    double max_s = 0.0;
    for (double v : result.frame_signal) max_s = std::max(max_s, v);
    if (max_s > 0.0)
        for (double& v : result.frame_signal) v /= max_s;
    return result;
}

io::ScalarMap upsample(const io::ScalarMap& map, std::uint32_t width, std::uint32_t height) {
    if (map.width == 0 || map.height == 0) throw ValidationError("tcp: cannot upsample an empty map");
    if (width < map.width || height < map.height)
        throw ValidationError("tcp: upsample target smaller than source");
    io::ScalarMap out;
    out.width = width;
    out.height = height;
    out.values.resize(std::size_t(width) * height);
    for (std::uint32_t y = 0; y < height; ++y) {
        const std::uint32_t sy = std::uint32_t(std::uint64_t(y) * map.height / height);
        for (std::uint32_t x = 0; x < width; ++x) {
            const std::uint32_t sx = std::uint32_t(std::uint64_t(x) * map.width / width);
            out.at(x, y) = map.at(sx, sy);
        }
    }
    return out;
}

io::ScalarMap fuse(const io::ScalarMap& tcp_map, const io::ScalarMap& flow_magnitude,
                   const FusionWeights& weights) {
    if (weights.alpha < 0.0 || weights.beta < 0.0 || weights.alpha + weights.beta <= 0.0)
        throw ConfigError("tcp: fusion weights must be non-negative with a positive sum");
    if (tcp_map.width != flow_magnitude.width || tcp_map.height != flow_magnitude.height)
        throw ValidationError("tcp: fuse grid mismatch");
    io::ScalarMap out = tcp_map;
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = float(weights.alpha * flow_magnitude.values[i] + weights.beta * tcp_map.values[i]);
    return out;
}

io::ScalarMap motion_mask(const io::ScalarMap& map, const io::FlowMap& flow) {
    if (map.width != flow.width || map.height != flow.height)
        throw ValidationError("tcp: motion mask size mismatch");
    io::ScalarMap out = map;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        const auto& f = flow.cells[i];
        if (f.dx == 0.0f && f.dy == 0.0f) out.values[i] = 0.0f;
    }
    return out;
}

io::ScalarMap pool_flow_magnitude(const io::FlowMap& flow, int grid_rows, int grid_cols) {
    if (grid_rows < 1 || grid_cols < 1) throw ConfigError("tcp: grid must be >= 1x1");
    if (flow.width == 0 || flow.height == 0) throw ValidationError("tcp: empty flow map");
    io::ScalarMap out;
    out.width = std::uint32_t(grid_cols);
    out.height = std::uint32_t(grid_rows);
    out.values.assign(std::size_t(grid_rows) * grid_cols, 0.0f);
    for (std::uint32_t y = 0; y < flow.height; ++y) {
        const std::uint32_t gy = std::uint32_t(std::uint64_t(y) * std::uint32_t(grid_rows) / flow.height);
        for (std::uint32_t x = 0; x < flow.width; ++x) {
            const std::uint32_t gx = std::uint32_t(std::uint64_t(x) * std::uint32_t(grid_cols) / flow.width);
            const auto& f = flow.at(x, y);
            out.at(gx, gy) += float(std::hypot(double(f.dx), double(f.dy)));
        }
    }
    return out;
}

} // namespace nvtk::tcp
