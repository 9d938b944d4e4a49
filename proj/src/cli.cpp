#include "nvtk/cli.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "nvtk/binhash.hpp"
#include "nvtk/common.hpp"
#include "nvtk/evalkit.hpp"
#include "nvtk/hierarchy.hpp"
#include "nvtk/io.hpp"
#include "nvtk/lbt.hpp"
#include "nvtk/mjpf.hpp"
#include "nvtk/ocsvm.hpp"
#include "nvtk/sim.hpp"
#include "nvtk/swdbn.hpp"
#include "nvtk/tcp.hpp"

namespace nvtk::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json default_config() {
    return json{
        {"seed", 0},
        {"simulate",
         {{"corners", json::array({json::array({0.0, 0.0}), json::array({10.0, 0.0}),
                                   json::array({10.0, 6.0}), json::array({0.0, 6.0})})},
          {"speed", 0.1},
          {"noise_sigma", 0.01},
          {"laps", 5},
          {"anomaly",
           {{"type", "none"}, {"trigger_index", 0}, {"start_index", 0}, {"duration", 1}}}}},
        {"lbt",
         {{"tracklet_len", 11},
          {"orientation_bins", 8},
          {"magnitude_bins", 5},
          {"magnitude_cap", 0.0},
          {"tess_rows", 4},
          {"tess_cols", 6},
          {"frame_width", 640.0},
          {"frame_height", 480.0},
          {"membership", "middle_point"},
          {"strict", false}}},
        {"ocsvm",
         {{"nu", 0.1}, {"kernel", "rbf"}, {"gamma", 0.0}, {"tolerance", 1e-6}, {"max_iter", 200000}}},
        {"itq", {{"bits", 7}, {"iterations", 50}, {"max_train_rows", 50000}}},
        {"tcp",
         {{"block_len", 14},
          {"overlap", 13},
          {"background_threshold", 0.1},
          {"all_bins", false},
          {"alpha", 0.5},
          {"beta", 0.5}}},
        {"swdbn",
         {{"som_rows", 10},
          {"som_cols", 12},
          {"epochs", 30},
          {"alpha", 0.75},
          {"beta", 0.25},
          {"ukf_process_noise", 1e-2},
          {"mkf_process_noise", 1e-4},
          {"observation_noise", 1e-4},
          {"dt", 1.0},
          {"dwell_bins", json::array({1, 2, 3, 4, 5, 8, 12, 20})},
          {"smoothing", 1.0},
          {"psi_adjacency", "grid4"}}},
        {"mjpf", {{"n_particles", 200}, {"resample_threshold", 0.5}, {"norm", "mahalanobis"}}},
        {"hierarchy",
         {{"theta", -1.0},
          {"max_levels", 8},
          {"merge_spawns", false},
          {"som_rows", 3},
          {"som_cols", 3},
          {"som_epochs", 20},
          {"y_threshold", -1.0},
          {"y_threshold_percentile", 99.0},
          {"seed_fraction", 0.25}}},
        {"eval", {{"percentile", 97.0}}},
    };
}

void merge_checked(json& base, const json& overlay, const std::string& prefix) {
    if (!overlay.is_object()) throw ConfigError("config: section \"" + prefix + "\" must be an object");
    for (auto it = overlay.begin(); it != overlay.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key())) throw ConfigError("config: unknown key \"" + path + "\"");
        json& slot = base[it.key()];
        if (slot.is_object() && !slot.empty() && it.value().is_object()) {
            merge_checked(slot, it.value(), path);
        } else {
            slot = it.value();
        }
    }
}

void apply_set(json& cfg, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got \"" + kv + "\"");
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw; // plain strings need no quoting

    json* node = &cfg;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->contains(part)) throw ConfigError("config: unknown key \"" + key + "\"");
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    if (node->is_object()) throw ConfigError("config: \"" + key + "\" is a section, not a value");
    *node = value;
}

void validate_config(const json& cfg) {
    const auto& mj = cfg.at("mjpf");
    if (mj.at("n_particles").get<int>() < 1) throw ConfigError("config: mjpf.n_particles must be >= 1");
    const std::string norm = mj.at("norm").get<std::string>();
    if (norm != "mahalanobis" && norm != "euclidean")
        throw ConfigError("config: mjpf.norm must be \"mahalanobis\" or \"euclidean\"");
    const double nu = cfg.at("ocsvm").at("nu").get<double>();
    if (nu <= 0.0 || nu > 1.0) throw ConfigError("config: ocsvm.nu must be in (0, 1]");
    const std::string kernel = cfg.at("ocsvm").at("kernel").get<std::string>();
    if (kernel != "rbf" && kernel != "linear")
        throw ConfigError("config: ocsvm.kernel must be \"rbf\" or \"linear\"");
    if (cfg.at("itq").at("bits").get<int>() < 1) throw ConfigError("config: itq.bits must be >= 1");
    const auto& tcp = cfg.at("tcp");
    if (tcp.at("overlap").get<int>() < 0 || tcp.at("overlap").get<int>() >= tcp.at("block_len").get<int>())
        throw ConfigError("config: tcp.overlap must satisfy 0 <= overlap < block_len");
    const auto& sw = cfg.at("swdbn");
    if (std::abs(sw.at("alpha").get<double>() + sw.at("beta").get<double>() - 1.0) > 1e-12 ||
        sw.at("alpha").get<double>() <= sw.at("beta").get<double>())
        throw ConfigError("config: swdbn weights must satisfy alpha + beta = 1 and alpha > beta");
    const std::string adj = sw.at("psi_adjacency").get<std::string>();
    if (adj != "grid4" && adj != "all_pairs")
        throw ConfigError("config: swdbn.psi_adjacency must be \"grid4\" or \"all_pairs\"");
    const std::string membership = cfg.at("lbt").at("membership").get<std::string>();
    if (membership != "middle_point" && membership != "any_point")
        throw ConfigError("config: lbt.membership must be \"middle_point\" or \"any_point\"");
    const double frac = cfg.at("hierarchy").at("seed_fraction").get<double>();
    if (frac <= 0.0 || frac > 1.0) throw ConfigError("config: hierarchy.seed_fraction must be in (0, 1]");
}

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
};

json load_config(const CommonOpts& opts) {
    json cfg = default_config();
    if (!opts.config_path.empty()) {
        std::ifstream in(opts.config_path);
        if (!in) throw ConfigError(opts.config_path + ": cannot open config file");
        json overlay = json::parse(in, nullptr, false);
        if (overlay.is_discarded()) throw ConfigError(opts.config_path + ": invalid JSON");
        merge_checked(cfg, overlay, "");
    }
    for (const auto& kv : opts.sets) apply_set(cfg, kv);
    try {
        validate_config(cfg);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// outputs land under their final name only after a complete write
void atomic_output(const std::string& path, const std::function<void(const std::string&)>& writer) {
    const std::string tmp = path + ".tmp";
    writer(tmp);
    fs::rename(tmp, path);
}

void write_manifest(const std::string& first_output, const std::string& subcommand, const json& cfg) {
    json m;
    m["tool"] = "nvtk";
    m["version"] = version_string();
    m["subcommand"] = subcommand;
    m["seed"] = cfg.at("seed");
    m["config_hash"] = hex64(fnv1a64(cfg.dump()));
    atomic_output(first_output + ".manifest.json", [&](const std::string& tmp) {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw ParseError(tmp + ": cannot create file");
        out << m.dump(2) << '\n';
    });
}

sim::ScenarioSpec scenario_from_json(const json& j, std::uint64_t default_seed) {
    sim::ScenarioSpec spec;
    const auto corners = j.at("corners").get<std::vector<std::vector<double>>>();
    if (corners.size() != 4) throw ConfigError("scenario: corners must list 4 points");
    for (std::size_t i = 0; i < 4; ++i) {
        if (corners[i].size() != 2) throw ConfigError("scenario: each corner needs 2 coordinates");
        spec.corners[i] = {corners[i][0], corners[i][1]};
    }
    spec.speed = j.at("speed").get<double>();
    spec.noise_sigma = j.at("noise_sigma").get<double>();
    spec.laps = j.at("laps").get<int>();
    spec.seed = j.value("seed", default_seed);
    const auto& an = j.at("anomaly");
    const std::string type = an.at("type").get<std::string>();
    if (type == "u_turn") {
        spec.u_turn = sim::UTurnAnomaly{an.at("trigger_index").get<std::size_t>()};
    } else if (type == "stop") {
        spec.stop = sim::StopAnomaly{an.at("start_index").get<std::size_t>(),
                                     an.at("duration").get<std::size_t>()};
    } else if (type != "none") {
        throw ConfigError("scenario: anomaly.type must be none, u_turn or stop");
    }
    return spec;
}

swdbn::SharedLevelConfig shared_level_config(const json& cfg) {
    const auto& sw = cfg.at("swdbn");
    swdbn::SharedLevelConfig sl;
    sl.som.rows = sw.at("som_rows").get<int>();
    sl.som.cols = sw.at("som_cols").get<int>();
    sl.som.epochs = sw.at("epochs").get<int>();
    sl.som.weights.alpha = sw.at("alpha").get<double>();
    sl.som.weights.beta = sw.at("beta").get<double>();
    sl.som.seed = cfg.at("seed").get<std::uint64_t>();
    sl.ukf_process_noise = sw.at("ukf_process_noise").get<double>();
    sl.mkf_process_noise = sw.at("mkf_process_noise").get<double>();
    sl.observation_noise = sw.at("observation_noise").get<double>();
    sl.dt = sw.at("dt").get<double>();
    sl.dwell_bin_upper = sw.at("dwell_bins").get<std::vector<int>>();
    sl.smoothing = sw.at("smoothing").get<double>();
    sl.adjacency = sw.at("psi_adjacency").get<std::string>() == "all_pairs" ? swdbn::PsiAdjacency::AllPairs
                                                                            : swdbn::PsiAdjacency::Grid4;
    return sl;
}

// ---- codes file: "grid_w grid_h bits" header then one hex line per frame ----

void write_codes_file(const std::string& path, std::uint32_t grid_w, std::uint32_t grid_h, int bits,
                      const std::vector<std::vector<binhash::BinaryCode>>& frames) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError(path + ": cannot create file");
    out << grid_w << ' ' << grid_h << ' ' << bits << '\n';
    for (const auto& frame : frames) {
        for (std::size_t i = 0; i < frame.size(); ++i) {
            if (i) out << ' ';
            out << binhash::code_to_hex(frame[i]);
        }
        out << '\n';
    }
}

struct CodesFile {
    std::uint32_t grid_w = 0, grid_h = 0;
    int bits = 0;
    std::vector<tcp::CodeGrid> frames;
};

CodesFile read_codes_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");
    CodesFile cf;
    if (!(in >> cf.grid_w >> cf.grid_h >> cf.bits)) throw ParseError(path + ":1: bad codes header");
    if (cf.bits < 1 || cf.bits > 64) throw ValidationError(path + ": bits out of range");
    std::string line;
    std::getline(in, line);
    std::size_t line_no = 1;
    const std::size_t cells = std::size_t(cf.grid_w) * cf.grid_h;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        tcp::CodeGrid grid;
        std::size_t pos = 0;
        while (pos < line.size()) {
            std::size_t sp = line.find(' ', pos);
            if (sp == std::string::npos) sp = line.size();
            grid.codes.push_back(
                binhash::code_index(binhash::hex_to_code(line.substr(pos, sp - pos), cf.bits)));
            pos = sp + 1;
        }
        if (grid.codes.size() != cells)
            throw ValidationError(path + ":" + std::to_string(line_no) + ": expected " +
                                  std::to_string(cells) + " codes");
        cf.frames.push_back(std::move(grid));
    }
    return cf;
}

// scores CSV: any header, first column index, second column value
std::vector<double> read_score_column(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ":1: missing header");
    std::vector<double> values;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        if (c1 == std::string::npos) throw ParseError(path + ":" + std::to_string(line_no) + ": bad row");
        auto c2 = line.find(',', c1 + 1);
        if (c2 == std::string::npos) c2 = line.size();
        try {
            values.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
        } catch (const std::exception&) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": bad score value");
        }
    }
    return values;
}

// ---- subcommand bodies ------------------------------------------------------

int cmd_simulate(const json& cfg, const std::string& spec_path, const std::string& out_path,
                 const std::string& labels_path) {
    sim::ScenarioSpec spec;
    if (!spec_path.empty()) {
        std::ifstream in(spec_path);
        if (!in) throw ConfigError(spec_path + ": cannot open scenario spec");
        json j = json::parse(in, nullptr, false);
        if (j.is_discarded()) throw ConfigError(spec_path + ": invalid JSON");
        spec = scenario_from_json(j, cfg.at("seed").get<std::uint64_t>());
    } else {
        spec = scenario_from_json(cfg.at("simulate"), cfg.at("seed").get<std::uint64_t>());
    }
    const auto result = sim::simulate(spec);
    atomic_output(out_path, [&](const std::string& tmp) { io::write_trajectory(tmp, result.trajectory); });
    if (!labels_path.empty())
        atomic_output(labels_path, [&](const std::string& tmp) { io::write_frame_labels(tmp, result.labels); });
    write_manifest(out_path, "simulate", cfg);
    return 0;
}

lbt::LbtConfig lbt_config(const json& cfg) {
    const auto& jl = cfg.at("lbt");
    lbt::LbtConfig lc;
    lc.tracklet_len = jl.at("tracklet_len").get<int>();
    lc.quantizer.orientation_bins = jl.at("orientation_bins").get<int>();
    lc.quantizer.magnitude_bins = jl.at("magnitude_bins").get<int>();
    lc.quantizer.magnitude_cap = jl.at("magnitude_cap").get<double>();
    lc.tess_rows = jl.at("tess_rows").get<int>();
    lc.tess_cols = jl.at("tess_cols").get<int>();
    lc.frame_width = jl.at("frame_width").get<double>();
    lc.frame_height = jl.at("frame_height").get<double>();
    lc.membership = jl.at("membership").get<std::string>() == "any_point" ? lbt::PatchMembership::AnyPoint
                                                                          : lbt::PatchMembership::MiddlePoint;
    return lc;
}

int cmd_lbt_extract(const json& cfg, const std::string& tracklets_path, const std::string& out_path,
                    std::string sidecar_path) {
    lbt::LbtConfig lc = lbt_config(cfg);
    const bool strict = cfg.at("lbt").at("strict").get<bool>();
    const auto read = io::read_tracklets(tracklets_path, lc.tracklet_len, strict);
    if (read.dropped > 0)
        std::cerr << "warning: dropped " << read.dropped << " tracklets with the wrong length\n";
    if (lc.quantizer.magnitude_cap <= 0.0)
        lc.quantizer.magnitude_cap = lbt::suggest_magnitude_cap(read.tracklets, lc.tracklet_len);
    const auto descriptors = lbt::extract_descriptors(read.tracklets, lc);
    if (descriptors.empty()) throw ValidationError("lbt-extract: no descriptors produced");
    atomic_output(out_path, [&](const std::string& tmp) { lbt::write_descriptors_csv(tmp, descriptors); });

    if (sidecar_path.empty()) sidecar_path = out_path + ".json";
    json sidecar;
    sidecar["tracklet_len"] = lc.tracklet_len;
    sidecar["orientation_bins"] = lc.quantizer.orientation_bins;
    sidecar["magnitude_bins"] = lc.quantizer.magnitude_bins;
    sidecar["magnitude_cap"] = lc.quantizer.magnitude_cap;
    sidecar["tess_rows"] = lc.tess_rows;
    sidecar["tess_cols"] = lc.tess_cols;
    sidecar["frame_width"] = lc.frame_width;
    sidecar["frame_height"] = lc.frame_height;
    sidecar["membership"] =
        lc.membership == lbt::PatchMembership::AnyPoint ? "any_point" : "middle_point";
    sidecar["descriptor_length"] = lc.descriptor_length();
    atomic_output(sidecar_path, [&](const std::string& tmp) {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw ParseError(tmp + ": cannot create file");
        out << sidecar.dump(2) << '\n';
    });
    write_manifest(out_path, "lbt-extract", cfg);
    return 0;
}

int cmd_lbt_train(const json& cfg, const std::string& in_path, const std::string& out_path) {
    const auto descriptors = lbt::read_descriptors_csv(in_path);
    if (descriptors.size() < 2) throw ValidationError("lbt-train: need at least 2 descriptors");
    std::vector<std::vector<double>> X;
    X.reserve(descriptors.size());
    for (const auto& d : descriptors) X.emplace_back(d.values.begin(), d.values.end());

    const auto& jo = cfg.at("ocsvm");
    ocsvm::OcSvmConfig oc;
    oc.nu = jo.at("nu").get<double>();
    oc.kernel.type = jo.at("kernel").get<std::string>() == "linear" ? ocsvm::KernelType::Linear
                                                                    : ocsvm::KernelType::Rbf;
    oc.kernel.gamma = jo.at("gamma").get<double>();
    oc.tolerance = jo.at("tolerance").get<double>();
    oc.max_iter = jo.at("max_iter").get<int>();
    const auto model = ocsvm::train(X, oc);
    atomic_output(out_path, [&](const std::string& tmp) { ocsvm::save(model, tmp); });
    write_manifest(out_path, "lbt-train", cfg);
    return 0;
}

int cmd_lbt_score(const json& cfg, const std::string& model_path, const std::string& in_path,
                  const std::string& out_path) {
    const auto model = ocsvm::load(model_path);
    const auto descriptors = lbt::read_descriptors_csv(in_path);
    atomic_output(out_path, [&](const std::string& tmp) {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw ParseError(tmp + ": cannot create file");
        out << "frame,score\n";
        for (const auto& d : descriptors) {
            std::vector<double> x(d.values.begin(), d.values.end());
            out << d.frame << ',' << format_double(ocsvm::score(model, x)) << '\n';
        }
    });
    write_manifest(out_path, "lbt-score", cfg);
    return 0;
}

Eigen::MatrixXd feature_rows(const std::string& path, io::FeatureMapReader& reader) {
    const std::size_t cells = std::size_t(reader.grid_w()) * reader.grid_h();
    const std::size_t dim = reader.dim();
    Eigen::MatrixXd X(Eigen::Index(cells * reader.frame_count()), Eigen::Index(dim));
    Eigen::Index row = 0;
    while (auto frame = reader.next_frame()) {
        for (std::size_t c = 0; c < cells; ++c) {
            for (std::size_t d = 0; d < dim; ++d) X(row, Eigen::Index(d)) = (*frame)[c * dim + d];
            ++row;
        }
    }
    if (row == 0) throw ValidationError(path + ": no feature frames");
    return X;
}

int cmd_itq_fit(const json& cfg, const std::string& in_path, const std::string& out_path) {
    io::FeatureMapReader reader(in_path);
    const auto X = feature_rows(in_path, reader);
    const auto& ji = cfg.at("itq");
    binhash::ItqOptions opts;
    opts.iterations = ji.at("iterations").get<int>();
    opts.max_train_rows = ji.at("max_train_rows").get<std::size_t>();
    opts.seed = cfg.at("seed").get<std::uint64_t>();
    const auto fit = binhash::fit(X, ji.at("bits").get<int>(), opts);
    atomic_output(out_path, [&](const std::string& tmp) { binhash::save(fit.model, tmp); });
    write_manifest(out_path, "itq-fit", cfg);
    return 0;
}

int cmd_itq_encode(const json& cfg, const std::string& model_path, const std::string& in_path,
                   const std::string& out_path) {
    const auto model = binhash::load(model_path);
    io::FeatureMapReader reader(in_path);
    const std::size_t cells = std::size_t(reader.grid_w()) * reader.grid_h();
    std::vector<std::vector<binhash::BinaryCode>> frames;
    while (auto frame = reader.next_frame()) {
        std::vector<binhash::BinaryCode> codes;
        codes.reserve(cells);
        for (std::size_t c = 0; c < cells; ++c) {
            Eigen::VectorXd x(reader.dim());
            for (std::uint32_t d = 0; d < reader.dim(); ++d) x(d) = (*frame)[c * reader.dim() + d];
            codes.push_back(binhash::encode(model, x));
        }
        frames.push_back(std::move(codes));
    }
    atomic_output(out_path, [&](const std::string& tmp) {
        write_codes_file(tmp, reader.grid_w(), reader.grid_h(), model.bits, frames);
    });
    write_manifest(out_path, "itq-encode", cfg);
    return 0;
}

int cmd_tcp(const json& cfg, const std::string& codes_path, const std::string& out_path,
            const std::string& maps_dir) {
    const auto codes = read_codes_file(codes_path);
    const auto& jt = cfg.at("tcp");
    tcp::BlockSpec spec;
    spec.block_len = jt.at("block_len").get<int>();
    spec.overlap = jt.at("overlap").get<int>();
    spec.grid_rows = int(codes.grid_h);
    spec.grid_cols = int(codes.grid_w);
    tcp::TcpOptions opts;
    opts.all_bins = jt.at("all_bins").get<bool>();
    opts.code_bits = codes.bits;
    opts.background_threshold = jt.at("background_threshold").get<double>();
    const auto result = tcp::compute_tcp(codes.frames, spec, opts);

    atomic_output(out_path, [&](const std::string& tmp) {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw ParseError(tmp + ": cannot create file");
        out << "frame,value\n";
        for (std::size_t t = 0; t < result.frame_signal.size(); ++t)
            out << t << ',' << format_double(result.frame_signal[t]) << '\n';
    });
    if (!maps_dir.empty()) {
        fs::create_directories(maps_dir);
        for (std::size_t t = 0; t < result.maps.size(); ++t) {
            char name[32];
            std::snprintf(name, sizeof(name), "frame_%06zu.nvm", t);
            atomic_output((fs::path(maps_dir) / name).string(),
                          [&](const std::string& tmp) { io::write_scalarmap(tmp, result.maps[t]); });
        }
    }
    write_manifest(out_path, "tcp", cfg);
    return 0;
}

int cmd_fuse(const json& cfg, const std::string& tcp_map_path, const std::string& flow_path,
             const std::string& out_path, bool upsample_and_mask) {
    const auto tcp_map = io::read_scalarmap(tcp_map_path);
    const auto flow = io::read_flowmap(flow_path);
    const auto& jt = cfg.at("tcp");
    tcp::FusionWeights weights{jt.at("alpha").get<double>(), jt.at("beta").get<double>()};
    const auto pooled = tcp::pool_flow_magnitude(flow, int(tcp_map.height), int(tcp_map.width));
    io::ScalarMap fused = tcp::fuse(tcp_map, pooled, weights);
    if (upsample_and_mask) {
        fused = tcp::upsample(fused, flow.width, flow.height);
        fused = tcp::motion_mask(fused, flow);
    }
    atomic_output(out_path, [&](const std::string& tmp) { io::write_scalarmap(tmp, fused); });
    write_manifest(out_path, "fuse", cfg);
    return 0;
}

int cmd_sl_train(const json& cfg, const std::string& in_path, const std::string& out_path) {
    const auto trajectory = io::read_trajectory(in_path);
    const auto model = swdbn::train_shared_level(trajectory, shared_level_config(cfg));
    atomic_output(out_path, [&](const std::string& tmp) { swdbn::save(model, tmp); });
    write_manifest(out_path, "sl-train", cfg);
    return 0;
}

int cmd_mjpf_run(const json& cfg, const std::string& model_path, const std::string& in_path,
                 const std::string& out_path) {
    const auto model = swdbn::load(model_path);
    const auto trajectory = io::read_trajectory(in_path);
    const auto& jm = cfg.at("mjpf");
    mjpf::MjpfConfig mc;
    mc.n_particles = jm.at("n_particles").get<int>();
    mc.resample_threshold = jm.at("resample_threshold").get<double>();
    mc.seed = cfg.at("seed").get<std::uint64_t>();
    mc.norm = jm.at("norm").get<std::string>() == "euclidean" ? mjpf::AbnormalityNorm::Euclidean
                                                              : mjpf::AbnormalityNorm::Mahalanobis;
    const auto signal = mjpf::run(trajectory, model, mc);
    atomic_output(out_path, [&](const std::string& tmp) { mjpf::write_signal_csv(tmp, signal); });
    write_manifest(out_path, "mjpf-run", cfg);
    return 0;
}

int cmd_hier_build(const json& cfg, const std::string& in_path, const std::string& out_path) {
    const auto trajectory = io::read_trajectory(in_path);
    const auto sl = shared_level_config(cfg);
    const auto steps = swdbn::ukf_filter(
        trajectory, swdbn::LinearModel::make(sl.dt, sl.ukf_process_noise, sl.observation_noise));
    const auto states = swdbn::generalized_states(steps);
    const auto samples = hierarchy::samples_from_states(states);

    const auto& jh = cfg.at("hierarchy");
    hierarchy::HierarchyConfig hc;
    hc.theta = jh.at("theta").get<double>();
    hc.max_levels = jh.at("max_levels").get<int>();
    hc.merge_spawns = jh.at("merge_spawns").get<bool>();
    hc.som_rows = jh.at("som_rows").get<int>();
    hc.som_cols = jh.at("som_cols").get<int>();
    hc.som_epochs = jh.at("som_epochs").get<int>();
    hc.y_threshold = jh.at("y_threshold").get<double>();
    hc.y_threshold_percentile = jh.at("y_threshold_percentile").get<double>();
    hc.seed = cfg.at("seed").get<std::uint64_t>();

    const double frac = jh.at("seed_fraction").get<double>();
    std::vector<std::size_t> v0(std::max<std::size_t>(1, std::size_t(double(samples.size()) * frac)));
    for (std::size_t i = 0; i < v0.size(); ++i) v0[i] = i;

    const auto model =
        hierarchy::build(samples, v0, [] { return std::make_unique<hierarchy::RidgePredictor>(); }, hc);
    // the manifest references sibling level files, so it is written in place
    hierarchy::save(model, out_path);
    write_manifest(out_path, "hier-build", cfg);
    return 0;
}

int cmd_hier_eval(const json& cfg, const std::string& model_path, const std::string& in_path,
                  const std::string& out_path) {
    const auto model = hierarchy::load(model_path);
    const auto trajectory = io::read_trajectory(in_path);
    const auto sl = shared_level_config(cfg);
    const auto steps = swdbn::ukf_filter(
        trajectory, swdbn::LinearModel::make(sl.dt, sl.ukf_process_noise, sl.observation_noise));
    const auto states = swdbn::generalized_states(steps);
    const auto samples = hierarchy::samples_from_states(states);

    atomic_output(out_path, [&](const std::string& tmp) {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw ParseError(tmp + ": cannot create file");
        out << "k,Y,abnormal,claimed_level\n";
        for (std::size_t k = 0; k < samples.size(); ++k) {
            const auto ev = hierarchy::evaluate(model, samples[k]);
            out << k << ',' << format_double(ev.y) << ',' << (ev.abnormal ? 1 : 0) << ','
                << ev.claimed_level << '\n';
        }
    });
    write_manifest(out_path, "hier-eval", cfg);
    return 0;
}

int cmd_eval(const json& cfg, const std::string& scores_path, const std::string& labels_path,
             const std::string& out_path, const std::string& roc_path, const std::string& tau_path,
             bool negate) {
    const auto scores = read_score_column(scores_path);
    const auto labels = io::read_frame_labels(labels_path);
    if (scores.size() != labels.size())
        throw ValidationError("eval: score count " + std::to_string(scores.size()) +
                              " does not match label count " + std::to_string(labels.size()));
    std::vector<evalkit::ScoredSample> set;
    set.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i)
        set.push_back({negate ? -scores[i] : scores[i], labels[i] != 0});
    const auto curve = evalkit::roc(set);
    const double auc_v = evalkit::auc(curve);
    const double eer_v = evalkit::eer(curve);

    json j;
    j["auc"] = auc_v;
    j["eer"] = eer_v;
    if (!tau_path.empty()) {
        const auto normal = read_score_column(tau_path);
        j["tau"] = evalkit::calibrate_threshold(normal, cfg.at("eval").at("percentile").get<double>());
        j["tau_percentile"] = cfg.at("eval").at("percentile").get<double>();
    }
    json pts = json::array();
    for (const auto& p : curve.points) pts.push_back(json::array({p.fpr, p.tpr}));
    j["roc_points"] = std::move(pts);
    atomic_output(out_path, [&](const std::string& tmp) {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw ParseError(tmp + ": cannot create file");
        out << j.dump(2) << '\n';
    });
    if (!roc_path.empty()) {
        atomic_output(roc_path, [&](const std::string& tmp) {
            std::ofstream out(tmp, std::ios::trunc);
            if (!out) throw ParseError(tmp + ": cannot create file");
            out << "fpr,tpr\n";
            for (const auto& p : curve.points)
                out << format_double(p.fpr) << ',' << format_double(p.tpr) << '\n';
        });
    }
    write_manifest(out_path, "eval", cfg);
    return 0;
}

} // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"trajectory and motion normality toolkit"};
    app.require_subcommand(1);

    CommonOpts common;
    struct Paths {
        std::string spec, in, out, labels, model, sidecar, tracklets, codes, maps_dir, scores, roc,
            tcp_map, flow, tau_signal;
        bool upsample = false;
        bool negate = false;
    } paths;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", common.config_path, "JSON config file");
        cmd->add_option("--set", common.sets, "override config entries, key.path=value");
    };

    auto* c_sim = app.add_subcommand("simulate", "generate a synthetic scenario trajectory");
    add_common(c_sim);
    c_sim->add_option("--spec", paths.spec, "scenario spec JSON (defaults to the config's simulate section)");
    c_sim->add_option("--out", paths.out, "trajectory CSV")->required();
    c_sim->add_option("--labels", paths.labels, "anomaly label CSV");

    auto* c_lbtx = app.add_subcommand("lbt-extract", "tracklets to frame descriptors");
    add_common(c_lbtx);
    c_lbtx->add_option("--tracklets", paths.tracklets, "tracklet CSV")->required();
    c_lbtx->add_option("--out", paths.out, "descriptor CSV")->required();
    c_lbtx->add_option("--sidecar", paths.sidecar, "config sidecar JSON (default <out>.json)");

    auto* c_lbtt = app.add_subcommand("lbt-train", "train the one-class SVM on descriptors");
    add_common(c_lbtt);
    c_lbtt->add_option("--in", paths.in, "descriptor CSV")->required();
    c_lbtt->add_option("--out", paths.out, "model JSON")->required();

    auto* c_lbts = app.add_subcommand("lbt-score", "score descriptors under a trained model");
    add_common(c_lbts);
    c_lbts->add_option("--model", paths.model, "model JSON")->required();
    c_lbts->add_option("--in", paths.in, "descriptor CSV")->required();
    c_lbts->add_option("--out", paths.out, "score CSV")->required();

    auto* c_itqf = app.add_subcommand("itq-fit", "fit the binary quantizer on feature maps");
    add_common(c_itqf);
    c_itqf->add_option("--in", paths.in, "feature map file")->required();
    c_itqf->add_option("--out", paths.out, "model JSON")->required();

    auto* c_itqe = app.add_subcommand("itq-encode", "encode feature maps to binary codes");
    add_common(c_itqe);
    c_itqe->add_option("--model", paths.model, "model JSON")->required();
    c_itqe->add_option("--in", paths.in, "feature map file")->required();
    c_itqe->add_option("--out", paths.out, "codes file")->required();

    auto* c_tcp = app.add_subcommand("tcp", "block-histogram irregularity signal and maps");
    add_common(c_tcp);
    c_tcp->add_option("--codes", paths.codes, "codes file")->required();
    c_tcp->add_option("--out", paths.out, "per-frame signal CSV")->required();
    c_tcp->add_option("--maps-dir", paths.maps_dir, "directory for per-frame maps");

    auto* c_fuse = app.add_subcommand("fuse", "fuse a tcp map with flow magnitude");
    add_common(c_fuse);
    c_fuse->add_option("--tcp-map", paths.tcp_map, "tcp map (NVM1)")->required();
    c_fuse->add_option("--flow", paths.flow, "flow map (NVFL)")->required();
    c_fuse->add_option("--out", paths.out, "fused map (NVM1)")->required();
    c_fuse->add_flag("--upsample", paths.upsample, "upsample to flow resolution and motion-mask");

    auto* c_slt = app.add_subcommand("sl-train", "learn the shared-level switching model");
    add_common(c_slt);
    c_slt->add_option("--in", paths.in, "trajectory CSV")->required();
    c_slt->add_option("--out", paths.out, "model JSON")->required();

    auto* c_mjpf = app.add_subcommand("mjpf-run", "online abnormality signal over a trajectory");
    add_common(c_mjpf);
    c_mjpf->add_option("--model", paths.model, "shared-level model JSON")->required();
    c_mjpf->add_option("--in", paths.in, "trajectory CSV")->required();
    c_mjpf->add_option("--out", paths.out, "signal CSV")->required();

    auto* c_hb = app.add_subcommand("hier-build", "construct the predictor hierarchy");
    add_common(c_hb);
    c_hb->add_option("--in", paths.in, "trajectory CSV")->required();
    c_hb->add_option("--out", paths.out, "hierarchy manifest JSON")->required();

    auto* c_he = app.add_subcommand("hier-eval", "evaluate a trajectory under a hierarchy");
    add_common(c_he);
    c_he->add_option("--model", paths.model, "hierarchy manifest JSON")->required();
    c_he->add_option("--in", paths.in, "trajectory CSV")->required();
    c_he->add_option("--out", paths.out, "per-sample decisions CSV")->required();

    auto* c_eval = app.add_subcommand("eval", "ROC/AUC/EER over scores and labels");
    add_common(c_eval);
    c_eval->add_option("--scores", paths.scores, "score CSV (index,value)")->required();
    c_eval->add_option("--labels", paths.labels, "label CSV")->required();
    c_eval->add_option("--out", paths.out, "metrics JSON")->required();
    c_eval->add_option("--roc", paths.roc, "ROC table CSV");
    c_eval->add_option("--tau-signal", paths.tau_signal,
                       "normal-run score CSV; adds a calibrated threshold to the metrics");
    c_eval->add_flag("--negate", paths.negate, "treat larger scores as more normal");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            std::cout << app.help();
            return 0;
        }
        std::cerr << nlohmann::json{{"error", {{"kind", "config"}, {"message", e.what()}}}}.dump() << '\n';
        return 2;
    }

    try {
        const json cfg = load_config(common);
        if (c_sim->parsed()) return cmd_simulate(cfg, paths.spec, paths.out, paths.labels);
        if (c_lbtx->parsed()) return cmd_lbt_extract(cfg, paths.tracklets, paths.out, paths.sidecar);
        if (c_lbtt->parsed()) return cmd_lbt_train(cfg, paths.in, paths.out);
        if (c_lbts->parsed()) return cmd_lbt_score(cfg, paths.model, paths.in, paths.out);
        if (c_itqf->parsed()) return cmd_itq_fit(cfg, paths.in, paths.out);
        if (c_itqe->parsed()) return cmd_itq_encode(cfg, paths.model, paths.in, paths.out);
        if (c_tcp->parsed()) return cmd_tcp(cfg, paths.codes, paths.out, paths.maps_dir);
        if (c_fuse->parsed()) return cmd_fuse(cfg, paths.tcp_map, paths.flow, paths.out, paths.upsample);
        if (c_slt->parsed()) return cmd_sl_train(cfg, paths.in, paths.out);
        if (c_mjpf->parsed()) return cmd_mjpf_run(cfg, paths.model, paths.in, paths.out);
        if (c_hb->parsed()) return cmd_hier_build(cfg, paths.in, paths.out);
        if (c_he->parsed()) return cmd_hier_eval(cfg, paths.model, paths.in, paths.out);
        if (c_eval->parsed())
            return cmd_eval(cfg, paths.scores, paths.labels, paths.out, paths.roc, paths.tau_signal,
                            paths.negate);
        std::cerr << nlohmann::json{{"error", {{"kind", "config"}, {"message", "no subcommand"}}}}.dump()
                  << '\n';
        return 2;
    } catch (const Error& e) {
        const char* kind = e.kind() == ErrorKind::Config  ? "config"
                           : e.kind() == ErrorKind::Data  ? "data"
                                                          : "numeric";
        std::cerr << nlohmann::json{{"error", {{"kind", kind}, {"message", e.what()}}}}.dump() << '\n';
        return e.kind() == ErrorKind::Config ? 2 : e.kind() == ErrorKind::Data ? 3 : 4;
    } catch (const json::exception& e) {
        // config types are validated up front, so stray json errors come from data files
        std::cerr << nlohmann::json{{"error", {{"kind", "data"}, {"message", e.what()}}}}.dump() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << nlohmann::json{{"error", {{"kind", "internal"}, {"message", e.what()}}}}.dump() << '\n';
        return 1;
    }
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

} // namespace nvtk::cli
