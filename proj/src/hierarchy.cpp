#include "nvtk/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

namespace nvtk::hierarchy {

namespace {

constexpr double kInnovationWeight = 2.0; // emphasis of the innovation coordinate in clustering
constexpr double kZeroInnovation = 1e-12; // a perfectly predicted sample is never rejected

double percentile(std::vector<double> values, double pct) {
    if (values.empty()) throw ValidationError("hierarchy: percentile of empty set");
    std::sort(values.begin(), values.end());
    std::size_t rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * double(values.size())));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    return values[rank - 1];
}

// plain batch SOM over z-scored 5-d points with a linearly decaying radius
struct Som5 {
    std::vector<Eigen::VectorXd> neurons;
    std::vector<int> assignments;
    int rows = 0, cols = 0;
};

Som5 som5_train(const std::vector<Eigen::VectorXd>& points, int rows, int cols, int epochs,
                std::uint64_t seed) {
    if (points.empty()) throw ValidationError("hierarchy: no points to cluster");
    Som5 som;
    som.rows = rows;
    som.cols = cols;
    const int n_neurons = rows * cols;

    std::vector<std::size_t> idx(points.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = make_rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    som.neurons.reserve(std::size_t(n_neurons));
    for (int i = 0; i < n_neurons; ++i) som.neurons.push_back(points[idx[std::size_t(i) % idx.size()]]);

    const double sigma0 = std::max(1.0, 0.5 * double(std::max(rows, cols)));
    const double sigma_end = 0.5;
    std::vector<int> bmu(points.size(), 0);
    std::vector<Eigen::VectorXd> numer(static_cast<std::size_t>(n_neurons));
    std::vector<double> denom(static_cast<std::size_t>(n_neurons));

    auto best_unit = [&](const Eigen::VectorXd& x) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < som.neurons.size(); ++j) {
            const double d = (som.neurons[j] - x).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = int(j);
            }
        }
        return best;
    };

    for (int epoch = 0; epoch < epochs; ++epoch) {
        const double frac = epochs > 1 ? double(epoch) / double(epochs - 1) : 1.0;
        const double sigma = sigma0 + (sigma_end - sigma0) * frac;
        const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);

        for (std::size_t i = 0; i < points.size(); ++i) bmu[i] = best_unit(points[i]);
        for (int j = 0; j < n_neurons; ++j) {
            numer[std::size_t(j)] = Eigen::VectorXd::Zero(points.front().size());
            denom[std::size_t(j)] = 0.0;
        }
        for (std::size_t i = 0; i < points.size(); ++i) {
            const int br = bmu[i] / cols;
            const int bc = bmu[i] % cols;
            for (int j = 0; j < n_neurons; ++j) {
                const int r = j / cols;
                const int c = j % cols;
                const double gd2 = double((r - br) * (r - br) + (c - bc) * (c - bc));
                const double h = std::exp(-gd2 * inv_two_sigma2);
                numer[std::size_t(j)] += h * points[i];
                denom[std::size_t(j)] += h;
            }
        }
        for (int j = 0; j < n_neurons; ++j)
            if (denom[std::size_t(j)] > 1e-300) som.neurons[std::size_t(j)] = numer[std::size_t(j)] / denom[std::size_t(j)];
    }
    som.assignments.resize(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) som.assignments[i] = best_unit(points[i]);
    return som;
}

Eigen::VectorXd joint_point(const Eigen::Vector4d& state, double innovation) {
    Eigen::VectorXd p(5);
    p << state(0), state(1), state(2), state(3), innovation;
    return p;
}

std::vector<Eigen::VectorXd> zscore(const std::vector<Eigen::VectorXd>& raw, Eigen::VectorXd& mean,
                                    Eigen::VectorXd& scale, double innovation_weight) {
    const Eigen::Index d = raw.front().size();
    mean = Eigen::VectorXd::Zero(d);
    for (const auto& p : raw) mean += p;
    mean /= double(raw.size());
    Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
    for (const auto& p : raw) var += (p - mean).cwiseAbs2();
    var /= double(raw.size());
    scale = var.cwiseSqrt().cwiseMax(1e-12);
    // fold the coordinate weighting into the scale so evaluation reuses it
    scale(d - 1) /= innovation_weight;
    std::vector<Eigen::VectorXd> out;
    out.reserve(raw.size());
    for (const auto& p : raw) out.push_back((p - mean).cwiseQuotient(scale));
    return out;
}

LevelSom build_level_som(const std::vector<Sample>& corpus, const std::vector<std::size_t>& subset,
                         const Predictor& predictor, const HierarchyConfig& cfg, std::uint64_t seed) {
    std::vector<Eigen::VectorXd> raw;
    raw.reserve(subset.size());
    for (std::size_t i : subset) {
        const auto& s = corpus[i];
        raw.push_back(joint_point(s.state, predictor.innovate(s, predictor.predict(s))));
    }
    LevelSom lsom;
    const auto pts = zscore(raw, lsom.mean, lsom.scale, kInnovationWeight);
    const auto som = som5_train(pts, cfg.som_rows, cfg.som_cols, cfg.som_epochs, seed);
    lsom.rows = som.rows;
    lsom.cols = som.cols;
    lsom.neurons = som.neurons;
    lsom.empty.assign(som.neurons.size(), 1);
    for (int a : som.assignments) lsom.empty[std::size_t(a)] = 0;

    lsom.psi.assign(som.neurons.size(), 0.0);
    for (int j = 0; j < int(som.neurons.size()); ++j) {
        const int r = j / som.cols;
        const int c = j % som.cols;
        std::vector<double> d;
        const int dr[] = {-1, 1, 0, 0};
        const int dc[] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
            const int rr = r + dr[k];
            const int cc = c + dc[k];
            if (rr < 0 || rr >= som.rows || cc < 0 || cc >= som.cols) continue;
            d.push_back((som.neurons[std::size_t(j)] - som.neurons[std::size_t(rr * som.cols + cc)]).norm());
        }
        if (!d.empty()) {
            double mean = std::accumulate(d.begin(), d.end(), 0.0) / double(d.size());
            double var = 0.0;
            for (double v : d) var += (v - mean) * (v - mean);
            var /= double(d.size());
            lsom.psi[std::size_t(j)] = mean + 3.0 * std::sqrt(var);
        }
    }
    return lsom;
}

bool level_claims(const Level& level, const Sample& sample, double innovation) {
    if (innovation <= kZeroInnovation) return true;
    const auto& som = level.som;
    const Eigen::VectorXd p = (joint_point(sample.state, innovation) - som.mean).cwiseQuotient(som.scale);
    double best_d = std::numeric_limits<double>::infinity();
    double best_psi = 0.0;
    for (std::size_t j = 0; j < som.neurons.size(); ++j) {
        if (som.empty[j]) continue;
        const double d = (som.neurons[j] - p).norm();
        if (d < best_d) {
            best_d = d;
            best_psi = som.psi[j];
        }
    }
    return best_d <= best_psi;
}

} // namespace

void RidgePredictor::train(std::span<const Sample> subset) {
    if (subset.empty()) throw ValidationError("hierarchy: empty training subset");
    Eigen::Matrix<double, 5, 5> A = lambda_ * Eigen::Matrix<double, 5, 5>::Identity();
    Eigen::Matrix<double, 5, 4> b = Eigen::Matrix<double, 5, 4>::Zero();
    for (const auto& s : subset) {
        Eigen::Matrix<double, 5, 1> phi;
        phi << s.state(0), s.state(1), s.state(2), s.state(3), 1.0;
        A += phi * phi.transpose();
        b += phi * s.next.transpose();
    }
    W_ = A.ldlt().solve(b).transpose();
}

Eigen::Vector4d RidgePredictor::predict(const Sample& sample) const {
    Eigen::Matrix<double, 5, 1> phi;
    phi << sample.state(0), sample.state(1), sample.state(2), sample.state(3), 1.0;
    return W_ * phi;
}

double RidgePredictor::innovate(const Sample& sample, const Eigen::Vector4d& prediction) const {
    return (sample.next - prediction).norm();
}

HierarchyModel build(const std::vector<Sample>& corpus, const std::vector<std::size_t>& seed_subset,
                     const PredictorFactory& factory, const HierarchyConfig& cfg) {
    if (corpus.empty()) throw ValidationError("hierarchy: empty corpus");
    if (seed_subset.empty()) throw ValidationError("hierarchy: empty seed subset");
    for (std::size_t i : seed_subset)
        if (i >= corpus.size()) throw ValidationError("hierarchy: seed subset index out of range");
    if (cfg.max_levels < 1) throw ConfigError("hierarchy: max_levels must be >= 1");

    HierarchyModel model;
    model.max_levels = cfg.max_levels;
    std::vector<std::uint8_t> used(corpus.size(), 0);

    auto spawn_level = [&](const std::vector<std::size_t>& subset) {
        std::vector<Sample> rows;
        rows.reserve(subset.size());
        for (std::size_t i : subset) rows.push_back(corpus[i]);
        Level level;
        level.predictor = factory();
        level.predictor->train(rows);
        level.som = build_level_som(corpus, subset, *level.predictor, cfg,
                                    cfg.seed + 0x517cc1b7ull * (model.levels.size() + 1));
        model.levels.push_back(std::move(level));
        for (std::size_t i : subset) used[i] = 1;
    };

    spawn_level(seed_subset);

    if (cfg.theta >= 0.0) {
        model.theta = cfg.theta;
    } else {
        std::vector<double> base;
        base.reserve(seed_subset.size());
        const auto& p0 = *model.levels.front().predictor;
        for (std::size_t i : seed_subset) base.push_back(p0.innovate(corpus[i], p0.predict(corpus[i])));
        model.theta = percentile(base, 90.0);
    }

    while (int(model.levels.size()) < cfg.max_levels) {
        // score the corpus under the level-selecting rule
        std::vector<double> innov(corpus.size());
        for (std::size_t i = 0; i < corpus.size(); ++i) innov[i] = hierarchy_innovation(model, corpus[i]);

        std::vector<Eigen::VectorXd> raw;
        raw.reserve(corpus.size());
        for (std::size_t i = 0; i < corpus.size(); ++i) raw.push_back(joint_point(corpus[i].state, innov[i]));
        Eigen::VectorXd mean, scale;
        const auto pts = zscore(raw, mean, scale, kInnovationWeight);
        const auto som = som5_train(pts, cfg.som_rows, cfg.som_cols, cfg.som_epochs,
                                    cfg.seed + 0x2545f491ull * model.levels.size());

        const int n_clusters = cfg.som_rows * cfg.som_cols;
        std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(n_clusters));
        for (std::size_t i = 0; i < corpus.size(); ++i)
            members[std::size_t(som.assignments[i])].push_back(i);

        bool spawned = false;
        std::vector<std::size_t> merged;
        for (int c = 0; c < n_clusters; ++c) {
            const auto& mem = members[std::size_t(c)];
            if (mem.empty()) continue;
            double mu = 0.0;
            for (std::size_t i : mem) mu += innov[i];
            mu /= double(mem.size());
            if (mu < model.theta) continue;
            std::vector<std::size_t> fresh;
            for (std::size_t i : mem)
                if (!used[i]) fresh.push_back(i);
            if (fresh.empty()) continue;
            if (cfg.merge_spawns) {
                merged.insert(merged.end(), fresh.begin(), fresh.end());
            } else {
                spawn_level(fresh);
                spawned = true;
                break; // rescore before looking at further clusters
            }
        }
        if (cfg.merge_spawns && !merged.empty()) {
            std::sort(merged.begin(), merged.end());
            merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
            spawn_level(merged);
            spawned = true;
        }
        if (!spawned) break;
    }

    if (cfg.y_threshold >= 0.0) {
        model.y_threshold = cfg.y_threshold;
    } else {
        std::vector<double> ys;
        ys.reserve(corpus.size());
        for (const auto& s : corpus) {
            double sum = 0.0;
            for (const auto& level : model.levels)
                sum += level.predictor->innovate(s, level.predictor->predict(s));
            ys.push_back(sum / double(model.levels.size()));
        }
        model.y_threshold = percentile(ys, cfg.y_threshold_percentile);
    }
    return model;
}

Evaluation evaluate(const HierarchyModel& model, const Sample& sample) {
    Evaluation ev;
    ev.level_innovations.reserve(model.levels.size());
    double sum = 0.0;
    for (std::size_t l = 0; l < model.levels.size(); ++l) {
        const auto& level = model.levels[l];
        const double innovation = level.predictor->innovate(sample, level.predictor->predict(sample));
        ev.level_innovations.push_back(innovation);
        sum += innovation;
        if (ev.claimed_level < 0 && level_claims(level, sample, innovation)) ev.claimed_level = int(l);
    }
    ev.y = sum / double(model.levels.size());
    ev.abnormal = ev.claimed_level < 0 && ev.y > model.y_threshold;
    return ev;
}

double hierarchy_innovation(const HierarchyModel& model, const Sample& sample) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& level : model.levels)
        best = std::min(best, level.predictor->innovate(sample, level.predictor->predict(sample)));
    return best;
}

std::vector<Sample> samples_from_states(std::span<const Eigen::Vector4d> states) {
    if (states.size() < 2) throw ValidationError("hierarchy: need at least 2 states");
    std::vector<Sample> out;
    out.reserve(states.size() - 1);
    for (std::size_t i = 0; i + 1 < states.size(); ++i) out.push_back({states[i], states[i + 1]});
    return out;
}

// ---- serialization ---------------------------------------------------------------

namespace {

nlohmann::json vec_to_json(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vec_from_json(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), Eigen::Index(v.size()));
}

} // namespace

void save(const HierarchyModel& model, const std::string& manifest_path) {
    namespace fs = std::filesystem;
    const fs::path manifest(manifest_path);
    const std::string stem = manifest.stem().string();

    nlohmann::json j;
    j["format"] = "nvtk-hierarchy";
    j["version"] = 1;
    j["theta"] = model.theta;
    j["y_threshold"] = model.y_threshold;
    j["max_levels"] = model.max_levels;
    nlohmann::json files = nlohmann::json::array();
    for (std::size_t l = 0; l < model.levels.size(); ++l) {
        const auto* ridge = dynamic_cast<const RidgePredictor*>(model.levels[l].predictor.get());
        if (!ridge)
            throw ValidationError("hierarchy: only ridge predictors are serializable, level " +
                                  std::to_string(l) + " is \"" + model.levels[l].predictor->kind() + "\"");
        const std::string file = stem + ".level" + std::to_string(l) + ".json";
        nlohmann::json jl;
        jl["predictor"]["kind"] = "ridge";
        nlohmann::json wrows = nlohmann::json::array();
        for (int r = 0; r < 4; ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (int c = 0; c < 5; ++c) row.push_back(ridge->weights()(r, c));
            wrows.push_back(std::move(row));
        }
        jl["predictor"]["weights"] = std::move(wrows);
        const auto& som = model.levels[l].som;
        nlohmann::json neurons = nlohmann::json::array();
        for (const auto& n : som.neurons) neurons.push_back(vec_to_json(n));
        jl["som"]["neurons"] = std::move(neurons);
        jl["som"]["psi"] = som.psi;
        jl["som"]["empty"] = som.empty;
        jl["som"]["mean"] = vec_to_json(som.mean);
        jl["som"]["scale"] = vec_to_json(som.scale);
        jl["som"]["rows"] = som.rows;
        jl["som"]["cols"] = som.cols;

        std::ofstream out(manifest.parent_path() / file, std::ios::trunc);
        if (!out) throw ParseError((manifest.parent_path() / file).string() + ": cannot create file");
        out << jl.dump(2) << '\n';
        files.push_back(file);
    }
    j["levels"] = std::move(files);
    std::ofstream out(manifest_path, std::ios::trunc);
    if (!out) throw ParseError(manifest_path + ": cannot create file");
    out << j.dump(2) << '\n';
}

HierarchyModel load(const std::string& manifest_path) {
    namespace fs = std::filesystem;
    std::ifstream in(manifest_path);
    if (!in) throw ParseError(manifest_path + ": cannot open file");
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ParseError(manifest_path + ": invalid JSON");
    if (j.value("format", "") != "nvtk-hierarchy") throw ParseError(manifest_path + ": not a hierarchy manifest");
    if (j.value("version", 0) != 1) throw ParseError(manifest_path + ": unsupported version");

    HierarchyModel model;
    model.theta = j.at("theta").get<double>();
    model.y_threshold = j.at("y_threshold").get<double>();
    model.max_levels = j.at("max_levels").get<int>();
    const fs::path dir = fs::path(manifest_path).parent_path();
    for (const auto& file : j.at("levels")) {
        std::ifstream lin(dir / file.get<std::string>());
        if (!lin) throw ParseError((dir / file.get<std::string>()).string() + ": cannot open file");
        nlohmann::json jl = nlohmann::json::parse(lin, nullptr, false);
        if (jl.is_discarded()) throw ParseError("hierarchy: invalid level JSON");
        if (jl.at("predictor").at("kind").get<std::string>() != "ridge")
            throw ParseError("hierarchy: unsupported predictor kind");
        auto ridge = std::make_unique<RidgePredictor>();
        Eigen::Matrix<double, 4, 5> W;
        const auto rows = jl.at("predictor").at("weights").get<std::vector<std::vector<double>>>();
        if (rows.size() != 4 || rows[0].size() != 5) throw ParseError("hierarchy: bad weight shape");
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 5; ++c) W(r, c) = rows[std::size_t(r)][std::size_t(c)];
        ridge->set_weights(W);

        Level level;
        level.predictor = std::move(ridge);
        const auto& js = jl.at("som");
        for (const auto& n : js.at("neurons")) level.som.neurons.push_back(vec_from_json(n));
        level.som.psi = js.at("psi").get<std::vector<double>>();
        level.som.empty = js.at("empty").get<std::vector<std::uint8_t>>();
        level.som.mean = vec_from_json(js.at("mean"));
        level.som.scale = vec_from_json(js.at("scale"));
        level.som.rows = js.at("rows").get<int>();
        level.som.cols = js.at("cols").get<int>();
        model.levels.push_back(std::move(level));
    }
    if (model.levels.empty()) throw ValidationError("hierarchy: manifest lists no levels");
    return model;
}

} // namespace nvtk::hierarchy
