#include "nvtk/sim.hpp"

#include <cmath>
#include <random>

namespace nvtk::sim {

namespace {

double polygon_area(const std::array<std::array<double, 2>, 4>& c) {
    double a = 0.0;
    for (int i = 0; i < 4; ++i) {
        const auto& p = c[i];
        const auto& q = c[(i + 1) % 4];
        a += p[0] * q[1] - q[0] * p[1];
    }
    return 0.5 * a;
}

struct PerimeterWalk {
    std::array<std::array<double, 2>, 4> corners;
    std::array<double, 4> edge_len{};
    double total = 0.0;

    explicit PerimeterWalk(const std::array<std::array<double, 2>, 4>& c) : corners(c) {
        for (int i = 0; i < 4; ++i) {
            const auto& p = corners[i];
            const auto& q = corners[(i + 1) % 4];
            edge_len[i] = std::hypot(q[0] - p[0], q[1] - p[1]);
            total += edge_len[i];
        }
    }

    std::array<double, 2> at(double s) const {
        s = std::fmod(s, total);
        if (s < 0.0) s += total;
        for (int i = 0; i < 4; ++i) {
            if (s <= edge_len[i] || i == 3) {
                const auto& p = corners[i];
                const auto& q = corners[(i + 1) % 4];
                const double f = edge_len[i] > 0.0 ? s / edge_len[i] : 0.0;
                return {p[0] + f * (q[0] - p[0]), p[1] + f * (q[1] - p[1])};
            }
            s -= edge_len[i];
        }
        return corners[0];
    }
};

} // namespace

SimResult simulate(const ScenarioSpec& spec) {
    if (spec.speed <= 0.0) throw ConfigError("simulate: speed must be > 0");
    if (spec.laps < 1) throw ConfigError("simulate: laps must be >= 1");
    if (spec.noise_sigma < 0.0) throw ConfigError("simulate: noise_sigma must be >= 0");
    if (std::abs(polygon_area(spec.corners)) < 1e-12)
        throw ConfigError("simulate: degenerate rectangle (zero area)");
    if (spec.u_turn && spec.stop) throw ConfigError("simulate: at most one anomaly per scenario");

    const PerimeterWalk walk(spec.corners);
    const std::size_t base_samples = static_cast<std::size_t>(spec.laps * walk.total / spec.speed) + 1;
    std::size_t total_samples = base_samples;
    if (spec.stop) {
        if (spec.stop->duration < 1) throw ConfigError("simulate: stop duration must be >= 1");
        if (spec.stop->start_index < 1 || spec.stop->start_index >= base_samples)
            throw ConfigError("simulate: stop start_index out of range");
        total_samples += spec.stop->duration;
    }
    if (spec.u_turn && (spec.u_turn->trigger_index < 1 || spec.u_turn->trigger_index >= base_samples))
        throw ConfigError("simulate: u_turn trigger_index out of range");

    Rng rng = make_rng(spec.seed);
    std::normal_distribution<double> noise(0.0, 1.0);

    SimResult result;
    result.trajectory.reserve(total_samples);
    result.labels.assign(total_samples, 0);

    double s = 0.0;
    double dir = 1.0;
    for (std::size_t k = 0; k < total_samples; ++k) {
        bool hold = false;
        if (spec.stop && k >= spec.stop->start_index && k < spec.stop->start_index + spec.stop->duration) {
            hold = true;
            result.labels[k] = 1;
        }
        if (spec.u_turn && k >= spec.u_turn->trigger_index) {
            if (k == spec.u_turn->trigger_index) dir = -dir;
            result.labels[k] = 1;
        }
        if (k > 0 && !hold) s += dir * spec.speed;

        auto p = walk.at(s);
        if (spec.noise_sigma > 0.0) {
            p[0] += spec.noise_sigma * noise(rng);
            p[1] += spec.noise_sigma * noise(rng);
        }
        result.trajectory.push_back({static_cast<std::int64_t>(k), p[0], p[1]});
    }
    return result;
}

} // namespace nvtk::sim
