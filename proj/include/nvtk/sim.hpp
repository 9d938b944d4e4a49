#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "nvtk/io.hpp"

// Synthetic perimeter-monitoring scenarios: a vehicle loops a rectangle at
// constant speed; anomalies deform the path (direction reversal or a hold).

namespace nvtk::sim {

struct UTurnAnomaly {
    std::size_t trigger_index = 0; // traversal direction flips from this sample on
};

struct StopAnomaly {
    std::size_t start_index = 0;
    std::size_t duration = 1; // samples spent holding position
};

struct ScenarioSpec {
    std::array<std::array<double, 2>, 4> corners{{{0.0, 0.0}, {10.0, 0.0}, {10.0, 6.0}, {0.0, 6.0}}};
    double speed = 0.1;       // scene units per sample
    double noise_sigma = 0.0; // stddev of additive i.i.d. position noise
    std::uint64_t seed = 0;
    int laps = 1;
    std::optional<UTurnAnomaly> u_turn;
    std::optional<StopAnomaly> stop;
};

struct SimResult {
    std::vector<io::TrajectoryRecord> trajectory;
    std::vector<std::uint8_t> labels; // 1 inside anomaly windows
};

// Deterministic for a fixed spec (including seed). The nominal sample count is
// floor(laps * perimeter / speed) + 1; a stop anomaly adds `duration` samples.
SimResult simulate(const ScenarioSpec& spec);

} // namespace nvtk::sim
