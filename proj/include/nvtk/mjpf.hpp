#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nvtk/swdbn.hpp"

// Markov Jump Particle Filter: a discrete particle filter over superstates
// where every particle carries its own Kalman belief. The per-step
// abnormality is the median over particles of the innovation norm; particles
// whose prediction leaves their superstate's validity radius fall back to a
// dummy superstate with zero control.

namespace nvtk::mjpf {

constexpr int kDummy = -1;

struct Particle {
    int superstate = kDummy;
    int dwell = 1;
    swdbn::State mean = swdbn::State::Zero();
    Eigen::Matrix4d covariance = Eigen::Matrix4d::Identity();
    double weight = 0.0;
};

enum class AbnormalityNorm { Mahalanobis, Euclidean };

struct MjpfConfig {
    int n_particles = 200;
    double resample_threshold = 0.5; // resample when ESS < threshold * N; <= 0 disables
    std::uint64_t seed = 0;
    AbnormalityNorm norm = AbnormalityNorm::Mahalanobis;
};

struct StepResult {
    double abnormality = 0.0; // median innovation norm over particles
    int map_superstate = kDummy;
    std::vector<double> particle_innovations;
};

class Mjpf {
public:
    Mjpf(const swdbn::SharedLevelModel& model, const MjpfConfig& cfg);

    StepResult step(const Eigen::Vector2d& observation);

    const std::vector<Particle>& particles() const { return particles_; }

    // Weighted posterior mean of the continuous state.
    swdbn::State posterior_mean() const;

private:
    void resample_if_needed();

    const swdbn::SharedLevelModel& model_;
    MjpfConfig cfg_;
    std::vector<Particle> particles_;
    Rng rng_;
};

struct AbnormalitySignal {
    std::vector<double> values;   // one per observation, >= 0
    std::vector<int> superstates; // MAP superstate per step, kDummy allowed
};

AbnormalitySignal run(std::span<const io::TrajectoryRecord> observations,
                      const swdbn::SharedLevelModel& model, const MjpfConfig& cfg);

// CSV exchange: header "k,Y,superstate".
void write_signal_csv(const std::string& path, const AbnormalitySignal& signal);
AbnormalitySignal read_signal_csv(const std::string& path);

} // namespace nvtk::mjpf
