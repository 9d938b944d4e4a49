#include "nvtk/lbt.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

#include "nvtk/kernels.hpp"

namespace nvtk::lbt {

namespace {

constexpr double kPi = std::numbers::pi;

void check_quantizer(const QuantizerConfig& cfg) {
    if (cfg.orientation_bins < 2) throw ConfigError("lbt: orientation_bins must be >= 2");
    if (cfg.magnitude_bins < 1) throw ConfigError("lbt: magnitude_bins must be >= 1");
    if (cfg.magnitude_cap <= 0.0) throw ConfigError("lbt: magnitude_cap must be > 0");
}

void check_tracklet(const Tracklet& tr, int tracklet_len) {
    if (tr.points.size() != std::size_t(tracklet_len) + 1)
        throw ValidationError("lbt: tracklet " + std::to_string(tr.id) + " has " +
                              std::to_string(tr.points.size()) + " points, expected " +
                              std::to_string(tracklet_len + 1));
}

} // namespace

std::vector<MotionStep> derive_motion(const Tracklet& tr, int tracklet_len) {
    check_tracklet(tr, tracklet_len);
    std::vector<MotionStep> steps;
    steps.reserve(tracklet_len);
    for (int l = 1; l <= tracklet_len; ++l) {
        const double dx = tr.points[l][0] - tr.points[l - 1][0];
        const double dy = tr.points[l][1] - tr.points[l - 1][1];
        MotionStep s;
        s.magnitude = std::hypot(dx, dy);
        s.orientation = s.magnitude > 0.0 ? std::atan2(dy, dx) : 0.0;
        steps.push_back(s);
    }
    return steps;
}

MotionPattern quantize(const MotionStep& step, const QuantizerConfig& cfg) {
    check_quantizer(cfg);
    const double bin_width = 2.0 * kPi / cfg.orientation_bins;
    int o_bin = static_cast<int>(std::floor((step.orientation + kPi) / bin_width));
    o_bin = std::clamp(o_bin, 0, cfg.orientation_bins - 1);

    int m_bin;
    if (step.magnitude >= cfg.magnitude_cap) {
        m_bin = cfg.magnitude_bins - 1;
    } else {
        m_bin = static_cast<int>(std::floor(step.magnitude / (cfg.magnitude_cap / cfg.magnitude_bins)));
        m_bin = std::clamp(m_bin, 0, cfg.magnitude_bins - 1);
    }

    MotionPattern p;
    p.size = cfg.pattern_size();
    p.bit = m_bin * cfg.orientation_bins + o_bin;
    return p;
}

TrackletCode tracklet_code(const Tracklet& tr, const QuantizerConfig& cfg, int tracklet_len) {
    const auto steps = derive_motion(tr, tracklet_len);
    TrackletCode code;
    code.bits.assign(std::size_t(cfg.pattern_size()) * tracklet_len, 0);
    for (int l = 0; l < tracklet_len; ++l) {
        const auto p = quantize(steps[l], cfg);
        code.bits[std::size_t(l) * p.size + p.bit] = 1;
    }
    return code;
}

PatchHistogram aggregate(std::span<const TrackletCode> codes, std::int64_t frame, int patch,
                         int code_length) {
    PatchHistogram hist;
    hist.frame = frame;
    hist.patch = patch;
    hist.counts.assign(std::size_t(code_length), 0);
    std::vector<std::uint32_t> one(static_cast<std::size_t>(code_length), 0u);
    for (const auto& code : codes) {
        if (code.bits.size() != std::size_t(code_length))
            throw ValidationError("lbt: code length mismatch in aggregation");
        for (std::size_t i = 0; i < one.size(); ++i) one[i] = code.bits[i];
        kernels::accumulate_u32(hist.counts.data(), one.data(), one.size());
    }
    return hist;
}

FrameDescriptor frame_descriptor(std::span<const PatchHistogram> patches, const LbtConfig& cfg,
                                 std::int64_t frame) {
    if (patches.size() != std::size_t(cfg.patches()))
        throw ValidationError("lbt: expected " + std::to_string(cfg.patches()) + " patch histograms, got " +
                              std::to_string(patches.size()));
    FrameDescriptor d;
    d.frame = frame;
    d.values.reserve(std::size_t(cfg.descriptor_length()));
    for (int s = 0; s < cfg.patches(); ++s) {
        const auto& h = patches[s];
        if (h.patch != s) throw ValidationError("lbt: patch histograms out of order");
        if (h.counts.size() != std::size_t(cfg.code_length()))
            throw ValidationError("lbt: histogram length mismatch");
        d.values.insert(d.values.end(), h.counts.begin(), h.counts.end());
    }
    return d;
}

std::vector<std::uint32_t> video_descriptor(std::span<const FrameDescriptor> frames) {
    if (frames.empty()) throw ValidationError("lbt: video descriptor of zero frames");
    std::vector<std::uint32_t> sum(frames.front().values.size(), 0);
    for (const auto& f : frames) {
        if (f.values.size() != sum.size())
            throw ValidationError("lbt: inconsistent tessellation across frames");
        kernels::accumulate_u32(sum.data(), f.values.data(), sum.size());
    }
    return sum;
}

int patch_of_point(double x, double y, const LbtConfig& cfg) {
    if (x < 0.0 || y < 0.0 || x > cfg.frame_width || y > cfg.frame_height) return -1;
    const double cell_w = cfg.frame_width / cfg.tess_cols;
    const double cell_h = cfg.frame_height / cfg.tess_rows;
    int col = std::min(static_cast<int>(x / cell_w), cfg.tess_cols - 1);
    int row = std::min(static_cast<int>(y / cell_h), cfg.tess_rows - 1);
    return row * cfg.tess_cols + col;
}

std::vector<FrameDescriptor> extract_descriptors(const std::vector<Tracklet>& tracklets,
                                                 const LbtConfig& cfg) {
    check_quantizer(cfg.quantizer);
    if (cfg.frame_width <= 0.0 || cfg.frame_height <= 0.0)
        throw ConfigError("lbt: frame dimensions must be positive");
    if (cfg.tess_rows < 1 || cfg.tess_cols < 1) throw ConfigError("lbt: tessellation must be >= 1x1");

    // sum codes straight into (frame, patch) cells
    std::map<std::int64_t, std::vector<std::vector<std::uint32_t>>> cells;
    const std::size_t code_len = std::size_t(cfg.code_length());
    for (const auto& tr : tracklets) {
        check_tracklet(tr, cfg.tracklet_len);
        const std::int64_t mid_frame = tr.middle_frame(cfg.tracklet_len);
        std::vector<int> target_patches;
        if (cfg.membership == PatchMembership::MiddlePoint) {
            const auto& mid = tr.points[std::size_t(cfg.tracklet_len) / 2];
            const int p = patch_of_point(mid[0], mid[1], cfg);
            if (p >= 0) target_patches.push_back(p);
        } else {
            for (const auto& pt : tr.points) {
                const int p = patch_of_point(pt[0], pt[1], cfg);
                if (p >= 0 && std::find(target_patches.begin(), target_patches.end(), p) == target_patches.end())
                    target_patches.push_back(p);
            }
        }
        if (target_patches.empty()) continue;
        const auto code = tracklet_code(tr, cfg.quantizer, cfg.tracklet_len);
        std::vector<std::uint32_t> wide(code_len);
        for (std::size_t i = 0; i < code_len; ++i) wide[i] = code.bits[i];
        auto& frame_cells = cells[mid_frame];
        if (frame_cells.empty()) frame_cells.assign(std::size_t(cfg.patches()), std::vector<std::uint32_t>());
        for (int p : target_patches) {
            auto& cell = frame_cells[std::size_t(p)];
            if (cell.empty()) cell.assign(code_len, 0);
            kernels::accumulate_u32(cell.data(), wide.data(), code_len);
        }
    }

    std::vector<FrameDescriptor> out;
    if (cells.empty()) return out;
    const std::int64_t first = cells.begin()->first;
    const std::int64_t last = cells.rbegin()->first;
    for (std::int64_t t = first; t <= last; ++t) {
        FrameDescriptor d;
        d.frame = t;
        d.values.assign(std::size_t(cfg.descriptor_length()), 0);
        auto it = cells.find(t);
        if (it != cells.end()) {
            for (int p = 0; p < cfg.patches(); ++p) {
                const auto& cell = it->second[std::size_t(p)];
                if (cell.empty()) continue;
                std::copy(cell.begin(), cell.end(), d.values.begin() + std::size_t(p) * code_len);
            }
        }
        out.push_back(std::move(d));
    }
    return out;
}

double suggest_magnitude_cap(const std::vector<Tracklet>& tracklets, int tracklet_len) {
    std::vector<double> mags;
    for (const auto& tr : tracklets)
        for (const auto& s : derive_motion(tr, tracklet_len)) mags.push_back(s.magnitude);
    if (mags.empty()) throw ValidationError("lbt: no magnitudes to derive a cap from");
    std::sort(mags.begin(), mags.end());
    std::size_t rank = static_cast<std::size_t>(std::ceil(0.95 * double(mags.size())));
    rank = std::clamp<std::size_t>(rank, 1, mags.size());
    const double cap = mags[rank - 1];
    return cap > 0.0 ? cap : 1.0;
}

void write_descriptors_csv(const std::string& path, std::span<const FrameDescriptor> descriptors) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError(path + ": cannot create file");
    if (descriptors.empty()) throw ValidationError("lbt: nothing to write");
    const std::size_t d = descriptors.front().values.size();
    out << "frame";
    for (std::size_t i = 0; i < d; ++i) out << ",v" << i;
    out << '\n';
    for (const auto& fd : descriptors) {
        if (fd.values.size() != d) throw ValidationError("lbt: inconsistent descriptor lengths");
        out << fd.frame;
        for (auto v : fd.values) out << ',' << v;
        out << '\n';
    }
}

std::vector<FrameDescriptor> read_descriptors_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");
    std::string header;
    if (!std::getline(in, header)) throw ParseError(path + ":1: missing header");
    std::size_t dims = 0;
    for (char c : header) dims += (c == ',');
    std::vector<FrameDescriptor> out;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        FrameDescriptor fd;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        auto [p1, ec1] = std::from_chars(p, end, fd.frame);
        if (ec1 != std::errc()) throw ParseError(path + ":" + std::to_string(line_no) + ": bad frame index");
        p = p1;
        fd.values.reserve(dims);
        while (p != end) {
            if (*p != ',') throw ParseError(path + ":" + std::to_string(line_no) + ": expected comma");
            ++p;
            std::uint32_t v = 0;
            auto [p2, ec2] = std::from_chars(p, end, v);
            if (ec2 != std::errc()) throw ParseError(path + ":" + std::to_string(line_no) + ": bad count");
            fd.values.push_back(v);
            p = p2;
        }
        if (fd.values.size() != dims)
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(dims) +
                             " values");
        out.push_back(std::move(fd));
    }
    return out;
}

} // namespace nvtk::lbt
