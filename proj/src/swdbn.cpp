#include "nvtk/swdbn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

namespace nvtk::swdbn {

LinearModel LinearModel::make(double dt, double process_noise, double observation_noise) {
    if (dt <= 0.0) throw ConfigError("swdbn: dt must be > 0");
    LinearModel m;
    m.dt = dt;
    m.A = Eigen::Matrix4d::Zero();
    m.A(0, 0) = 1.0;
    m.A(1, 1) = 1.0;
    m.B = Eigen::Matrix<double, 4, 2>::Zero();
    m.B(0, 0) = dt;
    m.B(1, 1) = dt;
    m.B(2, 0) = 1.0;
    m.B(3, 1) = 1.0;
    m.H = Eigen::Matrix<double, 2, 4>::Zero();
    m.H(0, 0) = 1.0;
    m.H(1, 1) = 1.0;
    m.Q = process_noise * Eigen::Matrix4d::Identity();
    m.R = observation_noise * Eigen::Matrix2d::Identity();
    return m;
}

std::vector<FilterStep> ukf_filter(std::span<const io::TrajectoryRecord> observations,
                                   const LinearModel& model) {
    if (observations.size() < 2) throw ValidationError("swdbn: need at least 2 observations");
    for (const auto& z : observations)
        if (!std::isfinite(z.x) || !std::isfinite(z.y))
            throw ValidationError("swdbn: non-finite observation at t=" + std::to_string(z.t));

    State x = State::Zero();
    x(0) = observations[0].x;
    x(1) = observations[0].y;
    Eigen::Matrix4d P = Eigen::Matrix4d::Identity();
    P.topLeftCorner<2, 2>() = model.R;

    std::vector<FilterStep> steps;
    steps.reserve(observations.size() - 1);
    for (std::size_t k = 1; k < observations.size(); ++k) {
        const State x_pred = model.A * x;
        Eigen::Matrix4d P_pred = model.A * P * model.A.transpose() + model.Q;

        const Eigen::Vector2d z(observations[k].x, observations[k].y);
        const Eigen::Vector2d innovation = z - model.H * x_pred;
        const Eigen::Matrix2d S = model.H * P_pred * model.H.transpose() + model.R;
        const Eigen::Matrix<double, 4, 2> K = P_pred * model.H.transpose() * S.inverse();
        x = x_pred + K * innovation;
        P = (Eigen::Matrix4d::Identity() - K * model.H) * P_pred;
        P = 0.5 * (P + P.transpose().eval()); // keep the covariance symmetric

        FilterStep step;
        step.estimate = x;
        step.covariance = P;
        step.innovation = innovation;
        step.velocity = innovation / model.dt;
        steps.push_back(step);
    }
    return steps;
}

std::vector<State> generalized_states(std::span<const FilterStep> steps) {
    std::vector<State> out;
    out.reserve(steps.size());
    for (const auto& s : steps) {
        State g;
        g(0) = s.estimate(0);
        g(1) = s.estimate(1);
        g(2) = s.velocity(0);
        g(3) = s.velocity(1);
        out.push_back(g);
    }
    return out;
}

double weighted_distance(const State& a, const State& b, const SomWeights& w) {
    const State d = a - b;
    return std::sqrt(w.beta * (d(0) * d(0) + d(1) * d(1)) + w.alpha * (d(2) * d(2) + d(3) * d(3)));
}

namespace {

void check_weights(const SomWeights& w) {
    if (std::abs(w.alpha + w.beta - 1.0) > 1e-12)
        throw ConfigError("swdbn: SOM weights must satisfy alpha + beta = 1");
    if (w.alpha <= w.beta) throw ConfigError("swdbn: SOM weights must satisfy alpha > beta");
    if (w.beta < 0.0) throw ConfigError("swdbn: SOM weights must be non-negative");
}

int best_matching_unit(const std::vector<State>& neurons, const State& x, const SomWeights& w) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < neurons.size(); ++i) {
        const double d = weighted_distance(neurons[i], x, w);
        if (d < best_d) {
            best_d = d;
            best = int(i);
        }
    }
    return best;
}

} // namespace

SomResult som_train(const std::vector<State>& states, const SomConfig& cfg) {
    check_weights(cfg.weights);
    if (cfg.rows < 1 || cfg.cols < 1) throw ConfigError("swdbn: SOM grid must be >= 1x1");
    if (cfg.epochs < 1) throw ConfigError("swdbn: SOM epochs must be >= 1");
    if (states.empty()) throw ValidationError("swdbn: no states to cluster");

    const int n_neurons = cfg.rows * cfg.cols;
    SomResult result;
    result.rows = cfg.rows;
    result.cols = cfg.cols;

    // initialize from a seeded sample of the data, cycling when short
    {
        std::vector<std::size_t> idx(states.size());
        std::iota(idx.begin(), idx.end(), 0);
        Rng rng = make_rng(cfg.seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        result.neurons.reserve(std::size_t(n_neurons));
        for (int i = 0; i < n_neurons; ++i) result.neurons.push_back(states[idx[std::size_t(i) % idx.size()]]);
    }

    const double sigma0 = std::max(1.0, 0.5 * double(std::max(cfg.rows, cfg.cols)));
    std::vector<int> bmu(states.size(), 0);
    std::vector<State> numer(static_cast<std::size_t>(n_neurons));
    std::vector<double> denom(static_cast<std::size_t>(n_neurons));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double frac = cfg.epochs > 1 ? double(epoch) / double(cfg.epochs - 1) : 1.0;
        const double sigma = sigma0 + (cfg.sigma_end - sigma0) * frac;
        const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);

        for (std::size_t i = 0; i < states.size(); ++i)
            bmu[i] = best_matching_unit(result.neurons, states[i], cfg.weights);

        for (int j = 0; j < n_neurons; ++j) {
            numer[std::size_t(j)].setZero();
            denom[std::size_t(j)] = 0.0;
        }
        for (std::size_t i = 0; i < states.size(); ++i) {
            const int br = bmu[i] / cfg.cols;
            const int bc = bmu[i] % cfg.cols;
            for (int j = 0; j < n_neurons; ++j) {
                const int r = j / cfg.cols;
                const int c = j % cfg.cols;
                const double gd2 = double((r - br) * (r - br) + (c - bc) * (c - bc));
                const double h = std::exp(-gd2 * inv_two_sigma2);
                numer[std::size_t(j)] += h * states[i];
                denom[std::size_t(j)] += h;
            }
        }
        for (int j = 0; j < n_neurons; ++j)
            if (denom[std::size_t(j)] > 1e-300) result.neurons[std::size_t(j)] = numer[std::size_t(j)] / denom[std::size_t(j)];

        double objective = 0.0;
        for (std::size_t i = 0; i < states.size(); ++i) {
            bmu[i] = best_matching_unit(result.neurons, states[i], cfg.weights);
            objective += weighted_distance(result.neurons[std::size_t(bmu[i])], states[i], cfg.weights);
        }
        result.epoch_objective.push_back(objective / double(states.size()));
    }

    result.assignments = bmu;
    return result;
}

std::vector<Superstate> build_vocabulary(const std::vector<State>& states,
                                         const std::vector<int>& assignments, const SomResult& som,
                                         const SomWeights& weights, PsiAdjacency adjacency) {
    if (states.size() != assignments.size())
        throw ValidationError("swdbn: assignment count does not match state count");
    const int n = int(som.neurons.size());

    std::vector<Superstate> vocab(static_cast<std::size_t>(n));
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        if (assignments[i] < 0 || assignments[i] >= n) throw ValidationError("swdbn: assignment out of range");
        members[std::size_t(assignments[i])].push_back(i);
    }

    std::vector<double> all_pair_distances;
    if (adjacency == PsiAdjacency::AllPairs) {
        for (int a = 0; a < n; ++a)
            for (int b = a + 1; b < n; ++b)
                all_pair_distances.push_back(
                    weighted_distance(som.neurons[std::size_t(a)], som.neurons[std::size_t(b)], weights));
    }

    auto psi_from = [](const std::vector<double>& d) {
        if (d.empty()) return 0.0;
        double mean = 0.0;
        for (double v : d) mean += v;
        mean /= double(d.size());
        double var = 0.0;
        for (double v : d) var += (v - mean) * (v - mean);
        var /= double(d.size());
        return mean + 3.0 * std::sqrt(var);
    };

    const double psi_global = adjacency == PsiAdjacency::AllPairs ? psi_from(all_pair_distances) : 0.0;

    for (int j = 0; j < n; ++j) {
        Superstate& s = vocab[std::size_t(j)];
        s.id = j;
        const auto& mem = members[std::size_t(j)];
        if (mem.empty()) {
            s.empty = true;
            s.xi = som.neurons[std::size_t(j)];
            s.control.setZero(); // dummy-style: no learned action
        } else {
            State mean = State::Zero();
            for (std::size_t i : mem) mean += states[i];
            mean /= double(mem.size());
            Eigen::Matrix4d cov = Eigen::Matrix4d::Zero();
            for (std::size_t i : mem) {
                const State d = states[i] - mean;
                cov += d * d.transpose();
            }
            cov /= double(mem.size());
            s.xi = mean;
            s.covariance = cov;
            s.control = mean.tail<2>();
        }

        if (adjacency == PsiAdjacency::AllPairs) {
            s.psi = psi_global;
        } else {
            const int r = j / som.cols;
            const int c = j % som.cols;
            std::vector<double> d;
            const int dr[] = {-1, 1, 0, 0};
            const int dc[] = {0, 0, -1, 1};
            for (int k = 0; k < 4; ++k) {
                const int rr = r + dr[k];
                const int cc = c + dc[k];
                if (rr < 0 || rr >= som.rows || cc < 0 || cc >= som.cols) continue;
                d.push_back(weighted_distance(som.neurons[std::size_t(j)],
                                              som.neurons[std::size_t(rr * som.cols + cc)], weights));
            }
            s.psi = psi_from(d);
        }
    }
    return vocab;
}

int TransitionModel::bin_of(int dwell) const {
    for (std::size_t i = 0; i < dwell_bin_upper.size(); ++i)
        if (dwell <= dwell_bin_upper[i]) return int(i);
    return int(dwell_bin_upper.size());
}

TransitionModel learn_transitions(const std::vector<int>& superstate_sequence, int n_states,
                                  const std::vector<int>& dwell_bin_upper, double smoothing) {
    if (superstate_sequence.size() < 2) throw ValidationError("swdbn: sequence too short for transitions");
    if (n_states < 1) throw ConfigError("swdbn: need at least one superstate");
    for (std::size_t i = 1; i < dwell_bin_upper.size(); ++i)
        if (dwell_bin_upper[i] <= dwell_bin_upper[i - 1])
            throw ConfigError("swdbn: dwell bin edges must be strictly increasing");
    if (smoothing < 0.0) throw ConfigError("swdbn: smoothing must be >= 0");

    TransitionModel model;
    model.dwell_bin_upper = dwell_bin_upper;
    model.n_states = n_states;
    const int bins = int(dwell_bin_upper.size()) + 1;
    const int dim = n_states + 1; // trailing dummy

    std::vector<Eigen::MatrixXd> counts(std::size_t(bins), Eigen::MatrixXd::Zero(dim, dim));
    std::vector<std::uint8_t> observed(std::size_t(n_states), 0);
    for (int s : superstate_sequence) {
        if (s < 0 || s >= n_states) throw ValidationError("swdbn: superstate id out of range");
        observed[std::size_t(s)] = 1;
    }

    // per-row successor support, pooled over all dwell bins
    std::vector<std::vector<int>> row_successors(static_cast<std::size_t>(n_states));
    int dwell = 1;
    for (std::size_t k = 1; k < superstate_sequence.size(); ++k) {
        const int from = superstate_sequence[k - 1];
        const int to = superstate_sequence[k];
        counts[std::size_t(model.bin_of(dwell))](from, to) += 1.0;
        auto& succ = row_successors[std::size_t(from)];
        if (std::find(succ.begin(), succ.end(), to) == succ.end()) succ.push_back(to);
        dwell = (to == from) ? dwell + 1 : 1;
    }

    std::vector<int> observed_states;
    for (int s = 0; s < n_states; ++s)
        if (observed[std::size_t(s)]) observed_states.push_back(s);

    model.matrices.assign(std::size_t(bins), Eigen::MatrixXd::Zero(dim, dim));
    for (int b = 0; b < bins; ++b) {
        Eigen::MatrixXd& P = model.matrices[std::size_t(b)];
        for (int from = 0; from < n_states; ++from) {
            const auto& succ = row_successors[std::size_t(from)];
            if (succ.empty()) {
                // never seen as a predecessor (e.g. final state): hold position
                P(from, from) = 1.0;
                continue;
            }
            const double total = counts[std::size_t(b)].row(from).sum();
            if (total == 0.0) {
                // no transitions in this dwell bin: fall back to the pooled successors
                for (int s : succ) P(from, s) = 1.0 / double(succ.size());
                continue;
            }
            const double denom = total + smoothing * double(succ.size());
            for (int to : succ) P(from, to) = (counts[std::size_t(b)](from, to) + smoothing) / denom;
        }
        // dummy re-acquires the learned states uniformly
        for (int s : observed_states) P(n_states, s) = 1.0 / double(observed_states.size());
    }
    return model;
}

SharedLevelModel train_shared_level(std::span<const io::TrajectoryRecord> trajectory,
                                    const SharedLevelConfig& cfg) {
    SharedLevelModel out;
    out.model = LinearModel::make(cfg.dt, cfg.mkf_process_noise, cfg.observation_noise);
    out.weights = cfg.som.weights;

    const auto reference = LinearModel::make(cfg.dt, cfg.ukf_process_noise, cfg.observation_noise);
    const auto steps = ukf_filter(trajectory, reference);
    const auto states = generalized_states(steps);
    const auto som = som_train(states, cfg.som);
    out.vocabulary = build_vocabulary(states, som.assignments, som, cfg.som.weights, cfg.adjacency);
    out.transitions = learn_transitions(som.assignments, int(som.neurons.size()), cfg.dwell_bin_upper,
                                        cfg.smoothing);
    return out;
}

int nearest_superstate(const SharedLevelModel& model, const State& x) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& s : model.vocabulary) {
        if (s.empty) continue;
        const double d = weighted_distance(s.xi, x, model.weights);
        if (d < best_d) {
            best_d = d;
            best = s.id;
        }
    }
    if (best < 0) throw ValidationError("swdbn: vocabulary has no non-empty superstates");
    return best;
}

// ---- serialization -------------------------------------------------------------

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    if (rows.empty()) throw ParseError("swdbn: empty matrix in model file");
    Eigen::MatrixXd m(Eigen::Index(rows.size()), Eigen::Index(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.front().size()) throw ParseError("swdbn: ragged matrix in model file");
        for (std::size_t jj = 0; jj < rows[i].size(); ++jj) m(Eigen::Index(i), Eigen::Index(jj)) = rows[i][jj];
    }
    return m;
}

} // namespace

std::string to_json(const SharedLevelModel& model) {
    nlohmann::json j;
    j["format"] = "nvtk-shared-level";
    j["version"] = 1;
    j["dt"] = model.model.dt;
    j["mkf_process_noise"] = model.model.Q(0, 0);
    j["observation_noise"] = model.model.R(0, 0);
    j["weights"] = {{"alpha", model.weights.alpha}, {"beta", model.weights.beta}};
    nlohmann::json vocab = nlohmann::json::array();
    for (const auto& s : model.vocabulary) {
        nlohmann::json js;
        js["id"] = s.id;
        js["xi"] = std::vector<double>{s.xi(0), s.xi(1), s.xi(2), s.xi(3)};
        js["covariance"] = matrix_to_json(s.covariance);
        js["control"] = std::vector<double>{s.control(0), s.control(1)};
        js["psi"] = s.psi;
        js["empty"] = s.empty;
        vocab.push_back(std::move(js));
    }
    j["vocabulary"] = std::move(vocab);
    j["transitions"]["dwell_bin_upper"] = model.transitions.dwell_bin_upper;
    j["transitions"]["n_states"] = model.transitions.n_states;
    nlohmann::json mats = nlohmann::json::array();
    for (const auto& m : model.transitions.matrices) mats.push_back(matrix_to_json(m));
    j["transitions"]["matrices"] = std::move(mats);
    return j.dump(2);
}

SharedLevelModel model_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ParseError("swdbn: invalid model JSON");
    if (j.value("format", "") != "nvtk-shared-level") throw ParseError("swdbn: not a shared-level model file");
    if (j.value("version", 0) != 1) throw ParseError("swdbn: unsupported model version");

    SharedLevelModel model;
    model.model = LinearModel::make(j.at("dt").get<double>(), j.at("mkf_process_noise").get<double>(),
                                    j.at("observation_noise").get<double>());
    model.weights.alpha = j.at("weights").at("alpha").get<double>();
    model.weights.beta = j.at("weights").at("beta").get<double>();
    for (const auto& js : j.at("vocabulary")) {
        Superstate s;
        s.id = js.at("id").get<int>();
        const auto xi = js.at("xi").get<std::vector<double>>();
        if (xi.size() != 4) throw ParseError("swdbn: superstate mean must have 4 entries");
        s.xi = State(xi[0], xi[1], xi[2], xi[3]);
        s.covariance = matrix_from_json(js.at("covariance"));
        const auto u = js.at("control").get<std::vector<double>>();
        if (u.size() != 2) throw ParseError("swdbn: control must have 2 entries");
        s.control = Eigen::Vector2d(u[0], u[1]);
        s.psi = js.at("psi").get<double>();
        s.empty = js.at("empty").get<bool>();
        model.vocabulary.push_back(std::move(s));
    }
    model.transitions.dwell_bin_upper = j.at("transitions").at("dwell_bin_upper").get<std::vector<int>>();
    model.transitions.n_states = j.at("transitions").at("n_states").get<int>();
    for (const auto& jm : j.at("transitions").at("matrices"))
        model.transitions.matrices.push_back(matrix_from_json(jm));
    if (model.transitions.matrices.size() != model.transitions.dwell_bin_upper.size() + 1)
        throw ValidationError("swdbn: transition matrix count does not match dwell bins");
    return model;
}

void save(const SharedLevelModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError(path + ": cannot create file");
    out << to_json(model) << '\n';
}

SharedLevelModel load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return model_from_json(text);
}

} // namespace nvtk::swdbn
