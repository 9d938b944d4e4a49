#include "nvtk/mjpf.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace nvtk::mjpf {

namespace {

// stationary distribution of the dwell-merged transition matrix
std::vector<double> stationary_distribution(const swdbn::TransitionModel& transitions) {
    const int n = transitions.n_states;
    Eigen::MatrixXd merged = Eigen::MatrixXd::Zero(n, n);
    for (const auto& m : transitions.matrices) merged += m.topLeftCorner(n, n);
    for (int i = 0; i < n; ++i) {
        const double s = merged.row(i).sum();
        if (s > 0.0)
            merged.row(i) /= s;
        else
            merged(i, i) = 1.0;
    }
    Eigen::VectorXd pi = Eigen::VectorXd::Constant(n, 1.0 / double(n));
    for (int it = 0; it < 500; ++it) {
        Eigen::VectorXd next = merged.transpose() * pi;
        const double s = next.sum();
        if (s <= 0.0) break;
        next /= s;
        if ((next - pi).lpNorm<Eigen::Infinity>() < 1e-14) {
            pi = next;
            break;
        }
        pi = next;
    }
    return std::vector<double>(pi.data(), pi.data() + n);
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + std::ptrdiff_t(mid), v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    std::nth_element(v.begin(), v.begin() + std::ptrdiff_t(mid - 1), v.end());
    return 0.5 * (v[mid - 1] + hi);
}

} // namespace

Mjpf::Mjpf(const swdbn::SharedLevelModel& model, const MjpfConfig& cfg)
    : model_(model), cfg_(cfg), rng_(make_rng(cfg.seed)) {
    if (cfg_.n_particles < 1) throw ConfigError("mjpf: n_particles must be >= 1");
    if (model_.vocabulary.empty()) throw ValidationError("mjpf: empty vocabulary");
    if (int(model_.vocabulary.size()) != model_.transitions.n_states)
        throw ValidationError("mjpf: vocabulary and transition model disagree on state count");

    // spread particles over superstates by the stationary distribution
    const auto pi = stationary_distribution(model_.transitions);
    std::vector<double> mass(pi);
    for (const auto& s : model_.vocabulary)
        if (s.empty) mass[std::size_t(s.id)] = 0.0;
    double total = std::accumulate(mass.begin(), mass.end(), 0.0);
    if (total <= 0.0) {
        for (const auto& s : model_.vocabulary)
            if (!s.empty) mass[std::size_t(s.id)] = 1.0;
        total = std::accumulate(mass.begin(), mass.end(), 0.0);
        if (total <= 0.0) throw ValidationError("mjpf: vocabulary has no non-empty superstates");
    }

    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double offset = uni(rng_) / double(cfg_.n_particles);
    particles_.resize(std::size_t(cfg_.n_particles));
    std::size_t idx = 0;
    double cum = mass[0] / total;
    for (int p = 0; p < cfg_.n_particles; ++p) {
        const double u = offset + double(p) / double(cfg_.n_particles);
        while (u > cum && idx + 1 < mass.size()) {
            ++idx;
            cum += mass[idx] / total;
        }
        Particle& part = particles_[std::size_t(p)];
        part.superstate = int(idx);
        part.dwell = 1;
        part.mean = model_.vocabulary[idx].xi;
        part.covariance = model_.vocabulary[idx].covariance + 1e-6 * Eigen::Matrix4d::Identity();
        part.weight = 1.0 / double(cfg_.n_particles);
    }
}

StepResult Mjpf::step(const Eigen::Vector2d& z) {
    if (!z.allFinite()) throw ValidationError("mjpf: non-finite observation");
    const auto& lm = model_.model;
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    StepResult result;
    result.particle_innovations.reserve(particles_.size());
    std::vector<double> log_weights(particles_.size());

    for (std::size_t p = 0; p < particles_.size(); ++p) {
        Particle& part = particles_[p];

        // 1) jump: sample the next superstate conditioned on dwell time
        const int bin = model_.transitions.bin_of(part.dwell);
        const Eigen::MatrixXd& P = model_.transitions.matrices[std::size_t(bin)];
        const int row = part.superstate == kDummy ? model_.transitions.dummy_index() : part.superstate;
        const double u = uni(rng_);
        int next = part.superstate == kDummy ? kDummy : part.superstate;
        double cum = 0.0;
        for (int s = 0; s < int(P.cols()); ++s) {
            cum += P(row, s);
            if (u <= cum) {
                next = s == model_.transitions.dummy_index() ? kDummy : s;
                break;
            }
        }
        part.dwell = (next == part.superstate) ? part.dwell + 1 : 1;
        part.superstate = next;

        // 2) predict with the superstate's quasi-constant-velocity filter
        Eigen::Vector2d control = Eigen::Vector2d::Zero();
        if (part.superstate != kDummy) control = model_.vocabulary[std::size_t(part.superstate)].control;
        swdbn::State x_pred = lm.A * part.mean + lm.B * control;
        Eigen::Matrix4d P_pred = lm.A * part.covariance * lm.A.transpose() + lm.Q;

        // validity test: outside psi the learned action does not apply
        if (part.superstate != kDummy) {
            const auto& ss = model_.vocabulary[std::size_t(part.superstate)];
            if (ss.empty || swdbn::weighted_distance(x_pred, ss.xi, model_.weights) > ss.psi) {
                part.superstate = kDummy;
                part.dwell = 1;
                x_pred = lm.A * part.mean; // zero-control random walk
            }
        }

        // 3) innovation and update
        const Eigen::Vector2d innovation = z - lm.H * x_pred;
        const Eigen::Matrix2d S = lm.H * P_pred * lm.H.transpose() + lm.R;
        const Eigen::Matrix2d S_inv = S.inverse();
        const Eigen::Matrix<double, 4, 2> K = P_pred * lm.H.transpose() * S_inv;
        part.mean = x_pred + K * innovation;
        part.covariance = (Eigen::Matrix4d::Identity() - K * lm.H) * P_pred;
        part.covariance = 0.5 * (part.covariance + part.covariance.transpose().eval());

        // 4) log observation likelihood
        const double maha2 = innovation.dot(S_inv * innovation);
        const double log_det = std::log(S.determinant());
        log_weights[p] = std::log(part.weight) - 0.5 * (maha2 + log_det);

        result.particle_innovations.push_back(cfg_.norm == AbnormalityNorm::Mahalanobis
                                                  ? std::sqrt(std::max(0.0, maha2))
                                                  : innovation.norm());
    }

    // normalize in log space
    const double max_lw = *std::max_element(log_weights.begin(), log_weights.end());
    double total = 0.0;
    for (std::size_t p = 0; p < particles_.size(); ++p) {
        particles_[p].weight = std::isfinite(max_lw) ? std::exp(log_weights[p] - max_lw) : 1.0;
        total += particles_[p].weight;
    }
    for (auto& part : particles_) part.weight /= total;

    result.abnormality = median(result.particle_innovations);

    // MAP superstate by total posterior mass
    {
        std::vector<double> mass(model_.vocabulary.size() + 1, 0.0);
        for (const auto& part : particles_) {
            const std::size_t idx =
                part.superstate == kDummy ? model_.vocabulary.size() : std::size_t(part.superstate);
            mass[idx] += part.weight;
        }
        std::size_t best = 0;
        for (std::size_t i = 1; i < mass.size(); ++i)
            if (mass[i] > mass[best]) best = i;
        result.map_superstate = best == model_.vocabulary.size() ? kDummy : int(best);
    }

    // 5) resample on effective-sample-size collapse
    resample_if_needed();
    return result;
}

void Mjpf::resample_if_needed() {
    if (cfg_.resample_threshold <= 0.0) return;
    double sum_sq = 0.0;
    for (const auto& p : particles_) sum_sq += p.weight * p.weight;
    const double ess = 1.0 / sum_sq;
    if (ess >= cfg_.resample_threshold * double(particles_.size())) return;

    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double offset = uni(rng_) / double(particles_.size());
    std::vector<Particle> next;
    next.reserve(particles_.size());
    double cum = particles_[0].weight;
    std::size_t idx = 0;
    for (std::size_t p = 0; p < particles_.size(); ++p) {
        const double u = offset + double(p) / double(particles_.size());
        while (u > cum && idx + 1 < particles_.size()) {
            ++idx;
            cum += particles_[idx].weight;
        }
        next.push_back(particles_[idx]);
        next.back().weight = 1.0 / double(particles_.size());
    }
    particles_ = std::move(next);
}

swdbn::State Mjpf::posterior_mean() const {
    swdbn::State mean = swdbn::State::Zero();
    for (const auto& p : particles_) mean += p.weight * p.mean;
    return mean;
}

AbnormalitySignal run(std::span<const io::TrajectoryRecord> observations,
                      const swdbn::SharedLevelModel& model, const MjpfConfig& cfg) {
    if (observations.empty()) throw ValidationError("mjpf: empty observation stream");
    Mjpf filter(model, cfg);
    AbnormalitySignal signal;
    signal.values.reserve(observations.size());
    signal.superstates.reserve(observations.size());
    for (std::size_t k = 0; k < observations.size(); ++k) {
        try {
            const auto step = filter.step(Eigen::Vector2d(observations[k].x, observations[k].y));
            signal.values.push_back(step.abnormality);
            signal.superstates.push_back(step.map_superstate);
        } catch (const Error& e) {
            throw Error(e.kind(), "mjpf: step " + std::to_string(k) + ": " + e.what());
        }
    }
    return signal;
}

void write_signal_csv(const std::string& path, const AbnormalitySignal& signal) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError(path + ": cannot create file");
    out << "k,Y,superstate\n";
    for (std::size_t k = 0; k < signal.values.size(); ++k)
        out << k << ',' << format_double(signal.values[k]) << ',' << signal.superstates[k] << '\n';
}

AbnormalitySignal read_signal_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");
    std::string header;
    if (!std::getline(in, header)) throw ParseError(path + ":1: missing header");
    if (!header.empty() && header.back() == '\r') header.pop_back();
    if (header != "k,Y,superstate") throw ParseError(path + ":1: bad header, expected \"k,Y,superstate\"");
    AbnormalitySignal signal;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const char* p = line.data();
        const char* end = p + line.size();
        std::int64_t k = 0;
        auto r1 = std::from_chars(p, end, k);
        if (r1.ec != std::errc() || r1.ptr == end || *r1.ptr != ',')
            throw ParseError(path + ":" + std::to_string(line_no) + ": bad row");
        p = r1.ptr + 1;
        double y = 0.0;
        auto r2 = std::from_chars(p, end, y);
        if (r2.ec != std::errc() || r2.ptr == end || *r2.ptr != ',')
            throw ParseError(path + ":" + std::to_string(line_no) + ": bad row");
        p = r2.ptr + 1;
        int s = 0;
        auto r3 = std::from_chars(p, end, s);
        if (r3.ec != std::errc() || r3.ptr != end)
            throw ParseError(path + ":" + std::to_string(line_no) + ": bad row");
        signal.values.push_back(y);
        signal.superstates.push_back(s);
    }
    return signal;
}

} // namespace nvtk::mjpf
