#include "nvtk/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <map>

namespace nvtk::io {

namespace {

[[noreturn]] void parse_fail(const std::string& path, std::size_t line, const std::string& what) {
    throw ParseError(path + ":" + std::to_string(line) + ": " + what);
}

[[noreturn]] void validate_fail(const std::string& path, std::size_t line, const std::string& what) {
    throw ValidationError(path + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string_view> split_csv(std::string_view line, std::vector<std::string_view>& out) {
    out.clear();
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string_view strip_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

bool parse_i64(std::string_view s, std::int64_t& v) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc() && p == s.data() + s.size();
}

bool parse_f64(std::string_view s, double& v) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc() && p == s.data() + s.size();
}

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ofstream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

bool get_u32(std::ifstream& in, std::uint32_t& v) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
    v = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
        (std::uint32_t(b[3]) << 24);
    return true;
}

bool get_f32(std::ifstream& in, float& v) {
    std::uint32_t u;
    if (!get_u32(in, u)) return false;
    v = std::bit_cast<float>(u);
    return true;
}

std::ifstream open_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open file");
    return in;
}

std::ofstream create_binary(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError(path + ": cannot create file");
    return out;
}

void expect_magic(std::ifstream& in, const std::string& path, const char* magic) {
    char got[4];
    if (!in.read(got, 4) || std::memcmp(got, magic, 4) != 0)
        throw ParseError(path + ": bad magic, expected \"" + magic + "\"");
}

} // namespace

// ---- trajectories ------------------------------------------------------------

TrajectoryReader::TrajectoryReader(const std::string& path) : in_(path), path_(path) {
    if (!in_) throw ParseError(path + ": cannot open file");
    std::string header;
    if (!std::getline(in_, header)) throw ParseError(path + ":1: missing header, expected \"t,x,y\"");
    ++line_no_;
    if (strip_cr(header) != "t,x,y") parse_fail(path_, 1, "bad header, expected \"t,x,y\"");
}

std::optional<TrajectoryRecord> TrajectoryReader::next() {
    std::string line;
    while (std::getline(in_, line)) {
        ++line_no_;
        std::string_view sv = strip_cr(line);
        if (sv.empty()) continue;
        std::vector<std::string_view> fields;
        split_csv(sv, fields);
        if (fields.size() != 3) parse_fail(path_, line_no_, "expected 3 fields, got " + std::to_string(fields.size()));
        TrajectoryRecord r;
        if (!parse_i64(fields[0], r.t)) parse_fail(path_, line_no_, "bad sample index");
        if (!parse_f64(fields[1], r.x) || !parse_f64(fields[2], r.y))
            parse_fail(path_, line_no_, "bad coordinate");
        if (!std::isfinite(r.x) || !std::isfinite(r.y))
            validate_fail(path_, line_no_, "non-finite coordinate");
        if (have_prev_ && r.t <= prev_t_)
            validate_fail(path_, line_no_, "sample index not strictly increasing");
        have_prev_ = true;
        prev_t_ = r.t;
        ++count_;
        return r;
    }
    return std::nullopt;
}

std::vector<TrajectoryRecord> read_trajectory(const std::string& path) {
    TrajectoryReader reader(path);
    std::vector<TrajectoryRecord> out;
    while (auto r = reader.next()) out.push_back(*r);
    return out;
}

void write_trajectory(const std::string& path, const std::vector<TrajectoryRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError(path + ": cannot create file");
    out << "t,x,y\n";
    for (const auto& r : records)
        out << r.t << ',' << format_double(r.x) << ',' << format_double(r.y) << '\n';
}

// ---- flow maps ---------------------------------------------------------------

FlowMap read_flowmap(const std::string& path) {
    auto in = open_binary(path);
    expect_magic(in, path, "NVFL");
    FlowMap map;
    if (!get_u32(in, map.width) || !get_u32(in, map.height))
        throw ParseError(path + ": truncated header");
    const std::size_t n = std::size_t(map.width) * map.height;
    map.cells.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!get_f32(in, map.cells[i].dx) || !get_f32(in, map.cells[i].dy))
            throw ParseError(path + ": truncated payload at cell " + std::to_string(i));
        if (!std::isfinite(map.cells[i].dx) || !std::isfinite(map.cells[i].dy))
            throw ValidationError(path + ": non-finite flow at cell " + std::to_string(i));
    }
    return map;
}

void write_flowmap(const std::string& path, const FlowMap& map) {
    if (map.cells.size() != std::size_t(map.width) * map.height)
        throw ValidationError(path + ": cell count does not match dimensions");
    auto out = create_binary(path);
    out.write("NVFL", 4);
    put_u32(out, map.width);
    put_u32(out, map.height);
    for (const auto& c : map.cells) {
        put_f32(out, c.dx);
        put_f32(out, c.dy);
    }
}

ScalarMap read_scalarmap(const std::string& path) {
    auto in = open_binary(path);
    expect_magic(in, path, "NVM1");
    ScalarMap map;
    if (!get_u32(in, map.width) || !get_u32(in, map.height))
        throw ParseError(path + ": truncated header");
    const std::size_t n = std::size_t(map.width) * map.height;
    map.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!get_f32(in, map.values[i]))
            throw ParseError(path + ": truncated payload at cell " + std::to_string(i));
        if (!std::isfinite(map.values[i]))
            throw ValidationError(path + ": non-finite value at cell " + std::to_string(i));
    }
    return map;
}

void write_scalarmap(const std::string& path, const ScalarMap& map) {
    if (map.values.size() != std::size_t(map.width) * map.height)
        throw ValidationError(path + ": value count does not match dimensions");
    auto out = create_binary(path);
    out.write("NVM1", 4);
    put_u32(out, map.width);
    put_u32(out, map.height);
    for (float v : map.values) put_f32(out, v);
}

// ---- tracklets ---------------------------------------------------------------

TrackletReadResult read_tracklets(const std::string& path, int L, bool strict) {
    if (L < 1) throw ConfigError("read_tracklets: L must be >= 1");
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");
    std::string header;
    if (!std::getline(in, header)) throw ParseError(path + ":1: missing header");
    if (strip_cr(header) != "tracklet_id,frame,x,y")
        parse_fail(path, 1, "bad header, expected \"tracklet_id,frame,x,y\"");

    struct Group {
        std::vector<TrackletFileRecord> rows;
        std::size_t first_line = 0;
    };
    std::map<std::int64_t, Group> groups;
    std::string line;
    std::size_t line_no = 1;
    std::vector<std::string_view> fields;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view sv = strip_cr(line);
        if (sv.empty()) continue;
        split_csv(sv, fields);
        if (fields.size() != 4) parse_fail(path, line_no, "expected 4 fields");
        TrackletFileRecord r;
        if (!parse_i64(fields[0], r.tracklet_id) || !parse_i64(fields[1], r.frame))
            parse_fail(path, line_no, "bad integer field");
        if (!parse_f64(fields[2], r.x) || !parse_f64(fields[3], r.y))
            parse_fail(path, line_no, "bad coordinate");
        if (!std::isfinite(r.x) || !std::isfinite(r.y)) validate_fail(path, line_no, "non-finite coordinate");
        auto& g = groups[r.tracklet_id];
        if (g.rows.empty()) g.first_line = line_no;
        g.rows.push_back(r);
    }

    TrackletReadResult result;
    for (auto& [id, group] : groups) {
        auto& rows = group.rows;
        std::sort(rows.begin(), rows.end(),
                  [](const TrackletFileRecord& a, const TrackletFileRecord& b) { return a.frame < b.frame; });
        for (std::size_t i = 1; i < rows.size(); ++i) {
            if (rows[i].frame == rows[i - 1].frame)
                throw ValidationError(path + ": tracklet " + std::to_string(id) + " has duplicate frame " +
                                      std::to_string(rows[i].frame));
            if (rows[i].frame != rows[i - 1].frame + 1)
                throw ValidationError(path + ": tracklet " + std::to_string(id) + " has a frame gap between " +
                                      std::to_string(rows[i - 1].frame) + " and " + std::to_string(rows[i].frame));
        }
        if (rows.size() != std::size_t(L) + 1) {
            if (strict)
                throw ValidationError(path + ": tracklet " + std::to_string(id) + " has " +
                                      std::to_string(rows.size()) + " points, expected " + std::to_string(L + 1));
            ++result.dropped;
            continue;
        }
        Tracklet tr;
        tr.id = id;
        tr.start_frame = rows.front().frame;
        tr.points.reserve(rows.size());
        for (const auto& r : rows) tr.points.push_back({r.x, r.y});
        result.tracklets.push_back(std::move(tr));
    }
    return result;
}

void write_tracklets(const std::string& path, const std::vector<Tracklet>& tracklets) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError(path + ": cannot create file");
    out << "tracklet_id,frame,x,y\n";
    for (const auto& tr : tracklets) {
        for (std::size_t i = 0; i < tr.points.size(); ++i)
            out << tr.id << ',' << (tr.start_frame + std::int64_t(i)) << ',' << format_double(tr.points[i][0])
                << ',' << format_double(tr.points[i][1]) << '\n';
    }
}

// ---- feature map sequences ----------------------------------------------------

FeatureMapReader::FeatureMapReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw ParseError(path + ": cannot open file");
    expect_magic(in_, path, "NVFM");
    if (!get_u32(in_, grid_w_) || !get_u32(in_, grid_h_) || !get_u32(in_, dim_) || !get_u32(in_, n_frames_))
        throw ParseError(path + ": truncated header");
    if (grid_w_ == 0 || grid_h_ == 0 || dim_ == 0)
        throw ValidationError(path + ": zero grid dimension");
}

std::optional<std::vector<float>> FeatureMapReader::next_frame() {
    if (read_ >= n_frames_) return std::nullopt;
    const std::size_t n = std::size_t(grid_w_) * grid_h_ * dim_;
    std::vector<float> frame(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!get_f32(in_, frame[i]))
            throw ParseError(path_ + ": truncated frame " + std::to_string(read_));
        if (!std::isfinite(frame[i]))
            throw ValidationError(path_ + ": non-finite feature in frame " + std::to_string(read_));
    }
    ++read_;
    return frame;
}

FeatureMapWriter::FeatureMapWriter(const std::string& path, std::uint32_t grid_w, std::uint32_t grid_h,
                                   std::uint32_t dim, std::uint32_t n_frames)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path), grid_w_(grid_w), grid_h_(grid_h),
      dim_(dim), n_frames_(n_frames) {
    if (!out_) throw ParseError(path + ": cannot create file");
    out_.write("NVFM", 4);
    put_u32(out_, grid_w_);
    put_u32(out_, grid_h_);
    put_u32(out_, dim_);
    put_u32(out_, n_frames_);
}

void FeatureMapWriter::write_frame(const std::vector<float>& values) {
    if (written_ >= n_frames_) throw ValidationError(path_ + ": more frames written than declared");
    if (values.size() != std::size_t(grid_w_) * grid_h_ * dim_)
        throw ValidationError(path_ + ": frame size mismatch");
    for (float v : values) put_f32(out_, v);
    ++written_;
}

FeatureMapWriter::~FeatureMapWriter() = default;

// ---- labels --------------------------------------------------------------------

std::vector<std::uint8_t> read_frame_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");
    std::string header;
    if (!std::getline(in, header)) throw ParseError(path + ":1: missing header");
    if (strip_cr(header) != "frame,label") parse_fail(path, 1, "bad header, expected \"frame,label\"");
    std::vector<std::uint8_t> labels;
    std::string line;
    std::size_t line_no = 1;
    std::vector<std::string_view> fields;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view sv = strip_cr(line);
        if (sv.empty()) continue;
        split_csv(sv, fields);
        if (fields.size() != 2) parse_fail(path, line_no, "expected 2 fields");
        std::int64_t frame, label;
        if (!parse_i64(fields[0], frame) || !parse_i64(fields[1], label))
            parse_fail(path, line_no, "bad integer field");
        if (frame != std::int64_t(labels.size()))
            validate_fail(path, line_no, "frame indices must be 0..n-1 in order");
        if (label != 0 && label != 1) validate_fail(path, line_no, "label must be 0 or 1");
        labels.push_back(static_cast<std::uint8_t>(label));
    }
    return labels;
}

void write_frame_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError(path + ": cannot create file");
    out << "frame,label\n";
    for (std::size_t i = 0; i < labels.size(); ++i) out << i << ',' << int(labels[i]) << '\n';
}

LabelTrack read_mask_stack(const std::string& path) {
    auto in = open_binary(path);
    expect_magic(in, path, "NVMS");
    LabelTrack track;
    std::uint32_t n_frames = 0;
    if (!get_u32(in, track.mask_width) || !get_u32(in, track.mask_height) || !get_u32(in, n_frames))
        throw ParseError(path + ": truncated header");
    const std::size_t frame_size = std::size_t(track.mask_width) * track.mask_height;
    track.pixel_masks.resize(n_frames);
    for (std::uint32_t f = 0; f < n_frames; ++f) {
        auto& mask = track.pixel_masks[f];
        mask.resize(frame_size);
        if (!in.read(reinterpret_cast<char*>(mask.data()), std::streamsize(frame_size)))
            throw ParseError(path + ": truncated mask frame " + std::to_string(f));
        for (std::uint8_t v : mask)
            if (v > 1) throw ValidationError(path + ": mask values must be 0 or 1");
    }
    return track;
}

void write_mask_stack(const std::string& path, const LabelTrack& track) {
    auto out = create_binary(path);
    out.write("NVMS", 4);
    put_u32(out, track.mask_width);
    put_u32(out, track.mask_height);
    put_u32(out, static_cast<std::uint32_t>(track.pixel_masks.size()));
    const std::size_t frame_size = std::size_t(track.mask_width) * track.mask_height;
    for (const auto& mask : track.pixel_masks) {
        if (mask.size() != frame_size) throw ValidationError(path + ": mask size mismatch");
        out.write(reinterpret_cast<const char*>(mask.data()), std::streamsize(frame_size));
    }
}

} // namespace nvtk::io
