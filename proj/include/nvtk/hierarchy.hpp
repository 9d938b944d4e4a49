#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nvtk/common.hpp"

// Incremental model hierarchy: train a base predictor on a seed subset,
// score the whole corpus, cluster (state, innovation) pairs, spawn a new
// level for each cluster whose mean innovation exceeds the threshold, and
// iterate until every cluster is explained. At test time a sample is
// abnormal only when every level rejects it and its mean innovation exceeds
// the calibrated threshold.

namespace nvtk::hierarchy {

// One-step transition sample of the generalized state.
struct Sample {
    Eigen::Vector4d state;
    Eigen::Vector4d next;
};

class Predictor {
public:
    virtual ~Predictor() = default;
    virtual void train(std::span<const Sample> subset) = 0;
    virtual Eigen::Vector4d predict(const Sample& sample) const = 0;
    // Non-negative innovation between the sample and its prediction.
    virtual double innovate(const Sample& sample, const Eigen::Vector4d& prediction) const = 0;
    virtual std::string kind() const = 0;
};

using PredictorFactory = std::function<std::unique_ptr<Predictor>()>;

// Ridge-regularized linear one-step predictor; innovation is the residual
// norm of the predicted next state.
class RidgePredictor final : public Predictor {
public:
    explicit RidgePredictor(double lambda = 1e-6) : lambda_(lambda) {}
    void train(std::span<const Sample> subset) override;
    Eigen::Vector4d predict(const Sample& sample) const override;
    double innovate(const Sample& sample, const Eigen::Vector4d& prediction) const override;
    std::string kind() const override { return "ridge"; }

    const Eigen::Matrix<double, 4, 5>& weights() const { return W_; }
    void set_weights(const Eigen::Matrix<double, 4, 5>& W) { W_ = W; }

private:
    double lambda_;
    Eigen::Matrix<double, 4, 5> W_ = Eigen::Matrix<double, 4, 5>::Zero();
};

// Validity regions of one level: a SOM over z-scored (state, innovation)
// pairs of the level's own training subset, with per-neuron radii.
struct LevelSom {
    std::vector<Eigen::VectorXd> neurons; // 5-dimensional
    std::vector<double> psi;
    std::vector<std::uint8_t> empty;
    Eigen::VectorXd mean;  // z-scoring of the 5 coordinates
    Eigen::VectorXd scale;
    int rows = 0;
    int cols = 0;
};

struct Level {
    std::unique_ptr<Predictor> predictor;
    LevelSom som;
};

struct HierarchyConfig {
    double theta = -1.0; // spawn threshold; < 0 derives the 90th percentile of base innovations on V0
    int max_levels = 8;
    bool merge_spawns = false; // union all qualifying clusters into one new level
    int som_rows = 3;
    int som_cols = 3;
    int som_epochs = 20;
    double y_threshold = -1.0;          // < 0 derives a percentile of training Y
    double y_threshold_percentile = 99.0;
    std::uint64_t seed = 0;
};

struct HierarchyModel {
    std::vector<Level> levels;
    double theta = 0.0;
    double y_threshold = 0.0;
    int max_levels = 0;
};

HierarchyModel build(const std::vector<Sample>& corpus, const std::vector<std::size_t>& seed_subset,
                     const PredictorFactory& factory, const HierarchyConfig& cfg);

struct Evaluation {
    std::vector<double> level_innovations;
    double y = 0.0; // mean innovation over levels
    bool abnormal = false;
    int claimed_level = -1; // first level accepting the sample, -1 if none
};

Evaluation evaluate(const HierarchyModel& model, const Sample& sample);

// Innovation under the level-selecting rule: minimum over levels.
double hierarchy_innovation(const HierarchyModel& model, const Sample& sample);

// Consecutive-state pairs from a generalized-state sequence.
std::vector<Sample> samples_from_states(std::span<const Eigen::Vector4d> states);

// Manifest JSON referencing one file per level (ridge predictors only).
void save(const HierarchyModel& model, const std::string& manifest_path);
HierarchyModel load(const std::string& manifest_path);

} // namespace nvtk::hierarchy
