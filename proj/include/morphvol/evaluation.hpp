// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
// Coefficient fitting oracle and the disentanglement / accuracy metrics.
#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "morphvol/embedder.hpp"
#include "morphvol/face_model.hpp"
#include "morphvol/types.hpp"

namespace morphvol {

struct FitResult {
    std::vector<double> alpha = std::vector<double>(kIdDim, 0.0);
    std::vector<double> beta = std::vector<double>(kExpDim, 0.0);
    std::vector<double> gamma = std::vector<double>(kGammaDim, 0.0);
    Pose pose;
    double landmark_residual = 0.0;  // ||fitted - observed|| over all landmark coordinates
    double color_residual = 0.0;     // ||fitted - observed|| over all lit colors, 0 without colors
    int iterations = 0;
    std::vector<std::string> flags;
};

struct FitOptions {
    /// Albedo coefficients assumed when solving for lighting (zeros = mean albedo).
    std::vector<double> delta = std::vector<double>(kAlbedoDim, 0.0);
    /// Ridge on (alpha, beta); 0 keeps the noiseless round trip exact.
    double ridge = 0.0;
    int max_iterations = 100;
    double tolerance = 1e-13;
};

/// Pose from a similarity Procrustes on the landmarks, then damped Gauss-Newton
/// on (alpha, beta, pose) over all landmark coordinates, then per-channel
/// linear least squares for gamma on the lit colors.
FitResult fit_coefficients(const Points& landmarks, const Points* lit_colors, const FaceBasis& basis,
                           const FitOptions& opt = {});

/// Divides each variance by its reference, then DS_i = prod_{j != i} s_i / s_j.
std::map<std::string, double> ds_score(const std::map<std::string, double>& variances,
                                       const std::map<std::string, double>& reference);

enum class Distance { l1, l2 };

struct ControlAccuracy {
    double aed = 0.0;  // expression
    double apd = 0.0;  // pose angles, radians
    double aid = 0.0;  // illumination
};

/// Per item: L1 = mean |difference| over the block, L2 = Euclidean norm of the
/// difference. Averaged over items.
ControlAccuracy control_accuracy(std::span<const ControlParams> inputs, std::span<const FitResult> fits,
                                 Distance metric = Distance::l1);

/// Cosine similarity of the embeddings; 0 when either embedding vanishes.
double identity_similarity(const Image& a, const Image& b, const FeatureEmbedder& e);

double variance(std::span<const double> xs);

}  // namespace morphvol
