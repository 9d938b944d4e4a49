#pragma once

#include <string>
#include <vector>

#include "nvtk/common.hpp"

// One-class SVM used as the normality model over frame descriptors. The dual
// is solved by pairwise coordinate ascent (maximal-violating-pair selection,
// no shrinking): minimize 1/2 a'Qa subject to 0 <= a_i <= 1/(nu*n) and
// sum(a) = 1. Features are standardized internally and the scaling is kept
// in the model.

namespace nvtk::ocsvm {

enum class KernelType { Linear, Rbf };

struct KernelConfig {
    KernelType type = KernelType::Rbf;
    double gamma = 0.0; // rbf only; 0 means 1/dim at training time
};

struct OcSvmConfig {
    double nu = 0.1; // upper bound on the training outlier fraction, in (0, 1]
    KernelConfig kernel;
    double tolerance = 1e-6; // KKT gap tolerance
    int max_iter = 200000;
};

struct OcSvmModel {
    std::vector<std::vector<double>> support_vectors; // standardized space
    std::vector<double> coefficients;                 // same order, in (0, 1/(nu*n)]
    double rho = 0.0;
    KernelConfig kernel;
    double nu = 0.0;
    std::vector<double> feature_mean;
    std::vector<double> feature_scale;

    std::size_t dim() const { return feature_mean.size(); }
};

OcSvmModel train(const std::vector<std::vector<double>>& X, const OcSvmConfig& cfg);

// Signed decision value; larger = more normal. Zero (within solver tolerance)
// on support vectors strictly inside the box.
double score(const OcSvmModel& model, const std::vector<double>& x);

// Normal iff score >= 0.
bool classify(const OcSvmModel& model, const std::vector<double>& x);

std::string to_json(const OcSvmModel& model);
OcSvmModel model_from_json(const std::string& text);
void save(const OcSvmModel& model, const std::string& path);
OcSvmModel load(const std::string& path);

} // namespace nvtk::ocsvm
