#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nvtk/io.hpp"

// Shared-level learning: a zero-force reference Kalman filter whose
// innovations estimate velocity, SOM clustering of the resulting
// position-velocity states into superstates (mean, covariance, expected
// velocity, validity radius), and dwell-time-conditioned transition matrices.

namespace nvtk::swdbn {

using State = Eigen::Vector4d; // [x y vx vy]

struct LinearModel {
    double dt = 1.0;
    Eigen::Matrix4d A;              // position preserved, velocity annihilated
    Eigen::Matrix<double, 4, 2> B;  // control map [dt*I2; I2]
    Eigen::Matrix<double, 2, 4> H;  // observes position
    Eigen::Matrix4d Q;              // process noise
    Eigen::Matrix2d R;              // observation noise

    static LinearModel make(double dt, double process_noise, double observation_noise);
};

struct FilterStep {
    State estimate;              // x_{k|k}
    Eigen::Matrix4d covariance;  // P_{k|k}, kept symmetric
    Eigen::Vector2d innovation;  // z_k - H x_{k|k-1}
    Eigen::Vector2d velocity;    // innovation / dt
};

// Reference filter over a position stream; emits one step per observation
// after the first (which initializes the belief).
std::vector<FilterStep> ukf_filter(std::span<const io::TrajectoryRecord> observations,
                                   const LinearModel& model);

// Position estimate paired with the innovation velocity.
std::vector<State> generalized_states(std::span<const FilterStep> steps);

struct SomWeights {
    double alpha = 0.75; // velocity weight
    double beta = 0.25;  // position weight; alpha + beta = 1, alpha > beta
};

// sqrt((x-y)' diag(beta,beta,alpha,alpha) (x-y))
double weighted_distance(const State& a, const State& b, const SomWeights& w);

struct SomConfig {
    int rows = 10;
    int cols = 12;
    int epochs = 30;
    double sigma_end = 0.5; // neighborhood radius decays linearly to this
    SomWeights weights;
    std::uint64_t seed = 0;
};

struct SomResult {
    std::vector<State> neurons; // rows*cols, grid row-major
    std::vector<int> assignments;
    std::vector<double> epoch_objective; // mean BMU distance after each epoch
    int rows = 0;
    int cols = 0;
};

// Batch SOM under the weighted distance; deterministic for a fixed seed.
SomResult som_train(const std::vector<State>& states, const SomConfig& cfg);

struct Superstate {
    int id = 0;
    State xi = State::Zero();                       // mean of assigned states
    Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero();
    Eigen::Vector2d control = Eigen::Vector2d::Zero(); // expected velocity U
    double psi = 0.0;                               // validity radius
    bool empty = false;                             // no training support; control is zero
};

enum class PsiAdjacency { Grid4, AllPairs };

std::vector<Superstate> build_vocabulary(const std::vector<State>& states,
                                         const std::vector<int>& assignments, const SomResult& som,
                                         const SomWeights& weights,
                                         PsiAdjacency adjacency = PsiAdjacency::Grid4);

// Dwell-binned row-stochastic transition matrices over superstates plus a
// trailing dummy state that redistributes uniformly over observed states.
struct TransitionModel {
    std::vector<int> dwell_bin_upper; // e.g. {5, 20}; final bin is open-ended
    int n_states = 0;                 // dummy has index n_states
    std::vector<Eigen::MatrixXd> matrices; // one (n+1)x(n+1) matrix per bin

    int bin_of(int dwell) const;
    int dummy_index() const { return n_states; }
};

TransitionModel learn_transitions(const std::vector<int>& superstate_sequence, int n_states,
                                  const std::vector<int>& dwell_bin_upper, double smoothing);

// Everything the online filter needs, serialized as one JSON file.
struct SharedLevelModel {
    LinearModel model;
    std::vector<Superstate> vocabulary;
    TransitionModel transitions;
    SomWeights weights;
};

struct SharedLevelConfig {
    SomConfig som;
    // the zero-force reference filter must trust observations (large Q)
    // or its innovation velocities lag the true motion
    double ukf_process_noise = 1e-2;
    // per-particle filters keep a tight innovation covariance
    double mkf_process_noise = 1e-4;
    double observation_noise = 1e-4;
    double dt = 1.0;
    std::vector<int> dwell_bin_upper = {1, 2, 3, 4, 5, 8, 12, 20};
    double smoothing = 1.0;
    PsiAdjacency adjacency = PsiAdjacency::Grid4;
};

SharedLevelModel train_shared_level(std::span<const io::TrajectoryRecord> trajectory,
                                    const SharedLevelConfig& cfg);

// Index of the best-matching non-empty superstate under the weighted distance.
int nearest_superstate(const SharedLevelModel& model, const State& x);

std::string to_json(const SharedLevelModel& model);
SharedLevelModel model_from_json(const std::string& text);
void save(const SharedLevelModel& model, const std::string& path);
SharedLevelModel load(const std::string& path);

} // namespace nvtk::swdbn
