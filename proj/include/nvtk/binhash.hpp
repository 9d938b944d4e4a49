#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nvtk/common.hpp"

// Iterative quantization hashing: center, project onto the top-k principal
// directions, then alternate sign-quantization with orthogonal Procrustes
// rotation updates. Codes are the sign pattern of the rotated projection.

namespace nvtk::binhash {

struct BinaryCode {
    std::vector<std::uint8_t> bits; // length k
};

struct ItqModel {
    Eigen::VectorXd mean;
    Eigen::MatrixXd projection; // d x k, orthonormal columns, descending eigenvalue order
    Eigen::MatrixXd rotation;   // k x k orthogonal
    int bits = 0;
};

enum class RotationInit { RandomOrthogonal, Identity };

struct ItqOptions {
    int iterations = 50;
    std::uint64_t seed = 0;
    RotationInit init = RotationInit::RandomOrthogonal;
    // training rows are uniformly subsampled down to this cap (seeded)
    std::size_t max_train_rows = 50000;
};

struct ItqFit {
    ItqModel model;
    std::vector<double> losses;                // ||B - V R||^2 per iteration, non-increasing
    std::vector<double> rotation_orthogonality; // ||R'R - I||_inf per iteration
};

// Requires n > k and d >= k; fewer than k non-negligible principal values is
// an error naming the achievable k.
ItqFit fit(const Eigen::MatrixXd& X, int k, const ItqOptions& opts);

// bits_i = (R' P' (x - mean))_i > 0, strict.
BinaryCode encode(const ItqModel& model, const Eigen::VectorXd& x);

// Code index with bit i at weight 2^i; k <= 64.
std::uint64_t code_index(const BinaryCode& code);
std::string code_to_hex(const BinaryCode& code);
BinaryCode hex_to_code(const std::string& hex, int k);

std::string to_json(const ItqModel& model);
ItqModel model_from_json(const std::string& text);
void save(const ItqModel& model, const std::string& path);
ItqModel load(const std::string& path);

} // namespace nvtk::binhash
